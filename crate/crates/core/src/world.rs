//! Synthetic worlds, environmental shifts, and the observation file format.
//!
//! Every agent observes the same objects through its own sensory channel:
//! the generator draws a separate set of category means per agent (or per
//! viewpoint when `num_viewpoints` is set), so feature vectors are never
//! comparable across agents. Observations are category mean plus isotropic
//! Gaussian noise. `category_separation` is the minimum pairwise distance
//! between an agent's category means in feature units; raw mean draws are
//! rescaled so the minimum is hit exactly.
//!
//! All randomness is derived from `WorldConfig.seed` through fixed,
//! documented stream ids, which makes [`generate_world`] a pure function of
//! its config and lets [`apply_shift`] regenerate observations with
//! bit-identical noise around transformed means.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of environmental shift applied mid-run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    /// Every category mean moves by `magnitude` along one random unit vector
    /// per mean-set. Object identities and ground truth are untouched; only
    /// appearances move.
    Translate,
    /// The object-to-category binding rotates by `round(magnitude)`
    /// positions: object `d` takes the true category previously held by
    /// object `(d + m) mod D`, and its observations are regenerated to
    /// match. Ground truth is updated accordingly. Magnitude 0 is the
    /// identity.
    Permute,
}

/// When and how the world changes. `round` is consumed by the training
/// schedule; `kind` and `magnitude` parameterize [`apply_shift`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub round: u32,
    pub kind: ShiftKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub num_objects: usize,
    pub num_true_categories: usize,
    pub num_agents: usize,
    pub feature_dim: usize,
    pub category_separation: f64,
    pub noise_scale: f64,
    /// Optional count of shared viewpoints. When set, agent `k` observes
    /// through viewpoint `k mod V` and agents sharing a viewpoint share
    /// category means; the viewpoint id is recorded as the observation
    /// context. When absent, every agent has private means and contexts are
    /// zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_viewpoints: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    // Last so the struct serializes to TOML directly (tables after values).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftSpec>,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_objects == 0 {
            return Err(Error::Validation {
                field: "num_objects",
                reason: "must be at least 1".into(),
            });
        }
        if self.num_true_categories == 0 {
            return Err(Error::Validation {
                field: "num_true_categories",
                reason: "must be at least 1".into(),
            });
        }
        if self.num_objects < self.num_true_categories {
            return Err(Error::Validation {
                field: "num_objects",
                reason: format!(
                    "need at least one object per category ({} < {})",
                    self.num_objects, self.num_true_categories
                ),
            });
        }
        if self.num_agents < 2 {
            return Err(Error::Validation {
                field: "num_agents",
                reason: format!("need at least 2 agents, got {}", self.num_agents),
            });
        }
        if self.feature_dim == 0 {
            return Err(Error::Validation {
                field: "feature_dim",
                reason: "must be at least 1".into(),
            });
        }
        if !self.category_separation.is_finite() || self.category_separation <= 0.0 {
            return Err(Error::Validation {
                field: "category_separation",
                reason: format!("must be positive, got {}", self.category_separation),
            });
        }
        if !self.noise_scale.is_finite() || self.noise_scale <= 0.0 {
            return Err(Error::Validation {
                field: "noise_scale",
                reason: format!("must be positive, got {}", self.noise_scale),
            });
        }
        if let Some(v) = self.num_viewpoints {
            if v == 0 {
                return Err(Error::Validation {
                    field: "num_viewpoints",
                    reason: "must be at least 1 when present".into(),
                });
            }
        }
        if let Some(shift) = &self.shift {
            if !shift.magnitude.is_finite() || shift.magnitude < 0.0 {
                return Err(Error::Validation {
                    field: "shift.magnitude",
                    reason: format!("must be a nonnegative real, got {}", shift.magnitude),
                });
            }
        }
        Ok(())
    }

    /// Number of distinct mean-sets: one per viewpoint if viewpoints are
    /// configured, otherwise one per agent.
    fn num_mean_sets(&self) -> usize {
        self.num_viewpoints.unwrap_or(self.num_agents)
    }

    fn mean_set_of_agent(&self, agent: usize) -> usize {
        match self.num_viewpoints {
            Some(v) => agent % v,
            None => agent,
        }
    }
}

/// Everything the agents can sense, plus optional ground truth for
/// evaluation. `features[k][d]` is agent `k`'s view of object `d`;
/// `contexts[k][d]` is a small exogenous integer (viewpoint id for generated
/// worlds). Ground truth is never exposed to inference code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    features: Vec<Vec<Vec<f64>>>,
    contexts: Vec<Vec<i64>>,
    ground_truth: Option<Vec<usize>>,
}

impl ObservationSet {
    pub fn new(
        features: Vec<Vec<Vec<f64>>>,
        contexts: Vec<Vec<i64>>,
        ground_truth: Option<Vec<usize>>,
    ) -> Result<Self> {
        if features.is_empty() || features[0].is_empty() {
            return Err(Error::InvalidArgument(
                "observation set needs at least one agent and one object".into(),
            ));
        }
        let num_objects = features[0].len();
        for (k, rows) in features.iter().enumerate() {
            if rows.len() != num_objects {
                return Err(Error::InvalidArgument(format!(
                    "agent {k} has {} objects, expected {num_objects}",
                    rows.len()
                )));
            }
            let dim = rows[0].len();
            if dim == 0 {
                return Err(Error::InvalidArgument(format!(
                    "agent {k} has zero-dimensional features"
                )));
            }
            for (d, row) in rows.iter().enumerate() {
                if row.len() != dim {
                    return Err(Error::InvalidArgument(format!(
                        "agent {k} object {d} has {} features, expected {dim}",
                        row.len()
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "agent {k} object {d} has non-finite features"
                    )));
                }
            }
        }
        if contexts.len() != features.len()
            || contexts.iter().any(|row| row.len() != num_objects)
        {
            return Err(Error::InvalidArgument(
                "context matrix shape must match features".into(),
            ));
        }
        if let Some(truth) = &ground_truth {
            if truth.len() != num_objects {
                return Err(Error::InvalidArgument(format!(
                    "ground truth has {} labels, expected {num_objects}",
                    truth.len()
                )));
            }
        }
        Ok(Self {
            features,
            contexts,
            ground_truth,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.features.len()
    }

    pub fn num_objects(&self) -> usize {
        self.features[0].len()
    }

    pub fn feature_dim(&self, agent: usize) -> usize {
        self.features[agent][0].len()
    }

    pub fn feature(&self, agent: usize, object: usize) -> &[f64] {
        &self.features[agent][object]
    }

    pub fn agent_features(&self, agent: usize) -> &[Vec<f64>] {
        &self.features[agent]
    }

    pub fn context(&self, agent: usize, object: usize) -> i64 {
        self.contexts[agent][object]
    }

    pub fn ground_truth(&self) -> Option<&[usize]> {
        self.ground_truth.as_deref()
    }
}

// Substream ids hung off the world seed. Fixed constants: changing them
// changes every generated world.
const STREAM_MEANS: u64 = 1;
const STREAM_TRUTH: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SHIFT: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Category means per mean-set, `means[set][category][feature]`.
fn draw_means(config: &WorldConfig) -> Vec<Vec<Vec<f64>>> {
    let mut rng = stream(config.seed, STREAM_MEANS);
    let sets = config.num_mean_sets();
    let c = config.num_true_categories;
    let m = config.feature_dim;
    let mut all = Vec::with_capacity(sets);
    for _ in 0..sets {
        let mut means: Vec<Vec<f64>> = (0..c)
            .map(|_| (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        if c >= 2 {
            let mut min_dist = f64::INFINITY;
            for i in 0..c {
                for j in (i + 1)..c {
                    let d2: f64 = means[i]
                        .iter()
                        .zip(&means[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    min_dist = min_dist.min(d2.sqrt());
                }
            }
            let scale = config.category_separation / min_dist;
            for mean in &mut means {
                for v in mean.iter_mut() {
                    *v *= scale;
                }
            }
        }
        all.push(means);
    }
    all
}

/// Balanced ground-truth labels: `d mod C`, shuffled.
fn draw_truth(config: &WorldConfig) -> Vec<usize> {
    let mut rng = stream(config.seed, STREAM_TRUTH);
    let mut truth: Vec<usize> = (0..config.num_objects)
        .map(|d| d % config.num_true_categories)
        .collect();
    // Fisher-Yates; explicit so the draw order is pinned by this code alone.
    for i in (1..truth.len()).rev() {
        let j = rng.gen_range(0..=i);
        truth.swap(i, j);
    }
    truth
}

/// Draws the noise stream and assembles observations around the given means
/// and truth labels. Used by both generation and shift so the noise is
/// bit-identical across the two.
fn assemble(
    config: &WorldConfig,
    means: &[Vec<Vec<f64>>],
    truth: &[usize],
) -> Result<ObservationSet> {
    let mut rng = stream(config.seed, STREAM_NOISE);
    let mut features = Vec::with_capacity(config.num_agents);
    let mut contexts = Vec::with_capacity(config.num_agents);
    for k in 0..config.num_agents {
        let set = config.mean_set_of_agent(k);
        let mut rows = Vec::with_capacity(config.num_objects);
        let mut ctx = Vec::with_capacity(config.num_objects);
        for &label in truth {
            let mean = &means[set][label];
            let row: Vec<f64> = mean
                .iter()
                .map(|&mu| mu + config.noise_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push(row);
            ctx.push(match config.num_viewpoints {
                Some(_) => set as i64,
                None => 0,
            });
        }
        features.push(rows);
        contexts.push(ctx);
    }
    ObservationSet::new(features, contexts, Some(truth.to_vec()))
}

/// Generates a world deterministically from its config. Calling twice with
/// the same config yields identical output.
pub fn generate_world(config: &WorldConfig) -> Result<ObservationSet> {
    config.validate()?;
    let means = draw_means(config);
    let truth = draw_truth(config);
    assemble(config, &means, &truth)
}

/// Applies the configured shift to a generated world, regenerating
/// observations with the same seed-derived noise stream so that only the
/// intended change (moved means or rebound categories) differs from the
/// input. Zero-magnitude shifts of either kind return the input unchanged.
pub fn apply_shift(observations: &ObservationSet, config: &WorldConfig) -> Result<ObservationSet> {
    config.validate()?;
    let spec = config.shift.as_ref().ok_or(Error::Validation {
        field: "shift",
        reason: "apply_shift requires a shift spec in the world config".into(),
    })?;
    if observations.num_agents() != config.num_agents
        || observations.num_objects() != config.num_objects
    {
        return Err(Error::InvalidArgument(format!(
            "observation set shape ({} agents, {} objects) does not match config ({}, {})",
            observations.num_agents(),
            observations.num_objects(),
            config.num_agents,
            config.num_objects
        )));
    }
    let mut means = draw_means(config);
    let mut truth = draw_truth(config);
    match spec.kind {
        ShiftKind::Translate => {
            let mut rng = stream(config.seed, STREAM_SHIFT);
            for set in means.iter_mut() {
                let raw: Vec<f64> = (0..config.feature_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                for mean in set.iter_mut() {
                    for (v, r) in mean.iter_mut().zip(&raw) {
                        *v += spec.magnitude * r / norm;
                    }
                }
            }
        }
        ShiftKind::Permute => {
            let d = config.num_objects;
            let offset = (spec.magnitude.round() as i64).rem_euclid(d as i64) as usize;
            truth = (0..d).map(|i| truth[(i + offset) % d]).collect();
        }
    }
    assemble(config, &means, &truth)
}

const BASE_COLUMNS: [&str; 3] = ["agent_id", "object_id", "context"];
const TRUTH_COLUMN: &str = "true_label";

/// Writes an observation set as delimiter-separated text, one row per
/// (agent, object) pair in agent-major order. Floats are written in Rust's
/// shortest round-trip representation, so [`load_observations`] restores
/// them exactly.
pub fn save_observations(observations: &ObservationSet, path: &Path) -> Result<()> {
    let dim = observations.feature_dim(0);
    for k in 0..observations.num_agents() {
        if observations.feature_dim(k) != dim {
            return Err(Error::InvalidArgument(
                "the file format requires a uniform feature dimension across agents".into(),
            ));
        }
    }
    let mut out = String::new();
    out.push_str(&BASE_COLUMNS.join(","));
    for i in 1..=dim {
        let _ = write!(out, ",f_{i}");
    }
    if observations.ground_truth().is_some() {
        out.push(',');
        out.push_str(TRUTH_COLUMN);
    }
    out.push('\n');
    for k in 0..observations.num_agents() {
        for d in 0..observations.num_objects() {
            let _ = write!(out, "{k},{d},{}", observations.context(k, d));
            for v in observations.feature(k, d) {
                let _ = write!(out, ",{v}");
            }
            if let Some(truth) = observations.ground_truth() {
                let _ = write!(out, ",{}", truth[d]);
            }
            out.push('\n');
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Loads an observation set from delimiter-separated text. The header is
/// required and fixes the feature dimension; `true_label` is optional but
/// must be consistent across agents for each object. Errors cite the 1-based
/// line number of the offending row.
pub fn load_observations(path: &Path) -> Result<ObservationSet> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file: header row is required"))?;
    let header = header?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < BASE_COLUMNS.len() + 1 {
        return Err(parse_err(
            path,
            1,
            format!(
                "header must be `agent_id,object_id,context,f_1,...` with at least one feature, got `{header}`"
            ),
        ));
    }
    for (i, expected) in BASE_COLUMNS.iter().enumerate() {
        if cols[i] != *expected {
            return Err(parse_err(
                path,
                1,
                format!("header column {} must be `{expected}`, got `{}`", i + 1, cols[i]),
            ));
        }
    }
    let has_truth = *cols.last().unwrap() == TRUTH_COLUMN;
    let feature_cols = &cols[BASE_COLUMNS.len()..cols.len() - usize::from(has_truth)];
    for (i, col) in feature_cols.iter().enumerate() {
        let expected = format!("f_{}", i + 1);
        if *col != expected {
            return Err(parse_err(
                path,
                1,
                format!("expected feature column `{expected}`, got `{col}`"),
            ));
        }
    }
    let dim = feature_cols.len();
    if dim == 0 {
        return Err(parse_err(path, 1, "at least one feature column is required"));
    }
    let expected_fields = BASE_COLUMNS.len() + dim + usize::from(has_truth);

    struct Row {
        context: i64,
        features: Vec<f64>,
        truth: Option<usize>,
        line: usize,
    }
    let mut rows: Vec<(usize, usize, Row)> = Vec::new();
    let mut max_agent = 0usize;
    let mut max_object = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != expected_fields {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {expected_fields} fields, got {}", fields.len()),
            ));
        }
        let agent: usize = fields[0]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad agent_id `{}`: {e}", fields[0])))?;
        let object: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad object_id `{}`: {e}", fields[1])))?;
        let context: i64 = fields[2]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad context `{}`: {e}", fields[2])))?;
        let mut features = Vec::with_capacity(dim);
        for (i, raw) in fields[3..3 + dim].iter().enumerate() {
            let v: f64 = raw.parse().map_err(|e| {
                parse_err(path, line_no, format!("bad value `{raw}` for f_{}: {e}", i + 1))
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("non-finite value `{raw}` for f_{}", i + 1),
                ));
            }
            features.push(v);
        }
        let truth = if has_truth {
            Some(fields[expected_fields - 1].parse::<usize>().map_err(|e| {
                parse_err(
                    path,
                    line_no,
                    format!("bad true_label `{}`: {e}", fields[expected_fields - 1]),
                )
            })?)
        } else {
            None
        };
        max_agent = max_agent.max(agent);
        max_object = max_object.max(object);
        rows.push((
            agent,
            object,
            Row {
                context,
                features,
                truth,
                line: line_no,
            },
        ));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    let num_agents = max_agent + 1;
    let num_objects = max_object + 1;
    let mut features = vec![vec![Vec::new(); num_objects]; num_agents];
    let mut contexts = vec![vec![0i64; num_objects]; num_agents];
    let mut seen = vec![vec![false; num_objects]; num_agents];
    let mut truth: Vec<Option<usize>> = vec![None; num_objects];
    for (agent, object, row) in rows {
        if seen[agent][object] {
            return Err(parse_err(
                path,
                row.line,
                format!("duplicate row for agent {agent}, object {object}"),
            ));
        }
        seen[agent][object] = true;
        contexts[agent][object] = row.context;
        if let Some(label) = row.truth {
            match truth[object] {
                Some(existing) if existing != label => {
                    return Err(parse_err(
                        path,
                        row.line,
                        format!(
                            "conflicting true_label for object {object}: {existing} vs {label}"
                        ),
                    ));
                }
                _ => truth[object] = Some(label),
            }
        }
        features[agent][object] = row.features;
    }
    for (k, agent_seen) in seen.iter().enumerate() {
        for (d, &ok) in agent_seen.iter().enumerate() {
            if !ok {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    reason: format!("missing row for agent {k}, object {d}"),
                });
            }
        }
    }
    let ground_truth = if has_truth {
        Some(
            truth
                .into_iter()
                .map(|t| t.expect("complete grid implies labels present"))
                .collect(),
        )
    } else {
        None
    };
    ObservationSet::new(features, contexts, ground_truth)
}
