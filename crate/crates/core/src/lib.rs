//! Decentralized simulation of emergent sign systems.
//!
//! A group of agents observes the same objects through private sensory
//! channels. Each agent fits its own Gaussian-categorical generative model,
//! and the group negotiates a shared assignment of discrete signs to objects
//! by playing a Metropolis-Hastings naming game: a speaker proposes the sign
//! its own model favors, and the listener accepts or rejects using only the
//! likelihood ratio under *its* model. No agent ever sees another agent's
//! observations or parameters; the only shared state is the sign table.
//!
//! The accepted-sign dynamics are a valid Metropolis-Hastings chain on the
//! posterior over sign assignments, which is what makes the whole system
//! interpretable as distributed Bayesian inference: individually rational
//! moves descend a collective variational free energy. The [`oracle`] module
//! provides an exact enumeration of that posterior on instances small enough
//! to enumerate, and the acceptance tests hold the decentralized chain to it.
//!
//! Module map:
//!
//! * [`prob`]: log-space probability kernels (Gaussian, Normal-Gamma,
//!   Dirichlet predictive, log-sum-exp, categorical sampling).
//! * [`world`]: synthetic world generation, environmental shifts, and the
//!   observation file format.
//! * [`agent`]: per-agent state and the five agent-side operations of the
//!   naming game.
//! * [`protocol`]: pairing schedules, game rounds, transcripts, and the
//!   training loop.
//! * [`free_energy`]: the collective free-energy decomposition.
//! * [`oracle`]: exact posterior enumeration, a centralized Gibbs sampler,
//!   and total-variation comparison.
//! * [`metrics`]: adjusted Rand index, inter-agent agreement, adaptation
//!   time.
//! * [`runner`]: experiment configs, seeded deterministic runs, artifacts,
//!   checkpoints, and the built-in validation suites.

pub mod agent;
pub mod error;
pub mod free_energy;
pub mod metrics;
pub mod oracle;
pub mod prob;
pub mod protocol;
pub mod runner;
pub mod world;

pub use agent::AgentState;
pub use error::{Error, Result};
pub use free_energy::FreeEnergyReport;
pub use metrics::{MetricRecord, MetricSeries, TargetMetric};
pub use oracle::{PosteriorTable, TinyInstance};
pub use prob::GaussCatHyper;
pub use protocol::{
    GameEvent, GameTranscript, Mode, SignAssignment, TrainingConfig, TrainingState, Variant,
};
pub use runner::{ExperimentConfig, ExperimentOutcome, RunArtifact};
pub use world::{ObservationSet, ShiftKind, ShiftSpec, WorldConfig};
