//! Criterion benchmarks for the simulator live in `benches/`; this crate
//! exists only to anchor them in the workspace.
