//! From one config to a directory of artifacts: seed fan-out, per-round
//! evaluation, parallel execution, and summary statistics.
//!
//! A run is a pure function of (config, seed). The runner derives every
//! generator seed from the experiment seed, so two runs of the same pair
//! produce byte-identical artifacts, manifest timestamp aside, no matter
//! how many seeds execute in parallel around them.

mod artifact;
mod config;
mod seeding;
mod suites;

pub use artifact::{
    checkpoint_restore, read_metrics, read_transcript, replay_verify, CheckpointFile,
    MetricsLine, CHECKPOINT_FORMAT_VERSION,
};
pub use config::{ExperimentConfig, HyperSection};
pub use suites::{
    baseline_comparison, oracle_validation, plasticity, standard_experiment,
    CriterionResult, SuiteReport,
};

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::agent::AgentState;
use crate::error::Result;
use crate::free_energy::FreeEnergyReport;
use crate::metrics::{adjusted_rand_index, mean_pairwise_kappa, MetricRecord, MetricSeries};
use crate::protocol::{run_training, Mode, SignAssignment, TrainingState};
use crate::world::{generate_world, ObservationSet};

use artifact::ArtifactWriter;
use seeding::{agent_stream, derive_seed, STREAM_PROTOCOL};

/// Everything one seed leaves behind, in memory: where its files went plus
/// the full evaluation trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: MetricSeries,
    pub fe_series: Vec<FreeEnergyReport>,
    pub final_signs: Vec<usize>,
    pub sign_version: u64,
}

impl RunArtifact {
    pub fn final_record(&self) -> &MetricRecord {
        self.metrics.records().last().expect("runs have rounds")
    }
}

/// Quartiles of a sample, linearly interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Across-seed spread of the final round's metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub final_kappa: Quartiles,
    pub final_ari_signs: Option<Quartiles>,
    pub final_free_energy: Quartiles,
}

/// What [`run_experiment`] returns: per-seed artifacts (sorted by seed),
/// isolated failures, and the summary over whatever succeeded.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub artifacts: Vec<RunArtifact>,
    pub failures: Vec<(u64, String)>,
    pub summary: Option<ExperimentSummary>,
}

pub(crate) fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("metric values are not NaN"));
    let at = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    Some(Quartiles {
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
    })
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    quartiles(values).map(|q| q.median)
}

/// Scores one round: inter-agent agreement on MAP signs, sign and category
/// alignment with ground truth when it exists, and the free-energy total.
pub fn evaluate_round(
    agents: &[AgentState],
    signs: &SignAssignment,
    observations: &ObservationSet,
    mode: Mode,
    report: &FreeEnergyReport,
) -> Result<MetricRecord> {
    let mut map_vectors = Vec::with_capacity(agents.len());
    for agent in agents {
        let mut estimates = Vec::with_capacity(observations.num_objects());
        for object in 0..observations.num_objects() {
            estimates.push(agent.map_sign_estimate(object, mode, observations)?);
        }
        map_vectors.push(estimates);
    }
    let kappa = mean_pairwise_kappa(&map_vectors)?;
    let (ari_signs_vs_truth, ari_z_vs_truth) = match observations.ground_truth() {
        Some(truth) => {
            let signs_ari = adjusted_rand_index(signs.as_slice(), truth)?;
            let z_aris = agents
                .iter()
                .map(|agent| adjusted_rand_index(agent.assignments(), truth))
                .collect::<Result<Vec<_>>>()?;
            (Some(signs_ari), z_aris)
        }
        None => (None, Vec::new()),
    };
    Ok(MetricRecord {
        round: report.round,
        kappa,
        ari_signs_vs_truth,
        ari_z_vs_truth,
        free_energy_total: report.total,
    })
}

/// Runs one seed start to finish and writes its artifact directory.
pub fn run_single_seed(config: &ExperimentConfig, seed: u64) -> Result<RunArtifact> {
    let cfg = config.for_seed(seed);
    cfg.validate()?;
    let observations = generate_world(&cfg.world)?;
    let hyper = cfg.gauss_cat_hyper();
    let mut agents = Vec::with_capacity(cfg.world.num_agents);
    let mut agent_rngs = Vec::with_capacity(cfg.world.num_agents);
    for k in 0..cfg.world.num_agents {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, agent_stream(k)));
        agents.push(AgentState::init(k, hyper.clone(), &observations, &mut rng)?);
        agent_rngs.push(rng);
    }
    let protocol_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_PROTOCOL));
    let mut state = TrainingState::new(agents, observations, protocol_rng, agent_rngs, seed)?;
    let training = cfg.training_config();
    let dir = cfg.output_dir.join(format!("seed-{seed}"));
    let mut writer = ArtifactWriter::create(&dir, seed, &cfg)?;
    let mut series = MetricSeries::new();
    let mut events_seen = 0usize;
    run_training(&mut state, &training, training.rounds, |st, report| {
        let record = evaluate_round(&st.agents, &st.signs, &st.observations, training.mode, report)?;
        writer.append_round(&st.transcript.events[events_seen..], report, &record)?;
        events_seen = st.transcript.events.len();
        series.push(record)
    })?;
    let fe_series = state.fe_series.clone();
    let final_signs = state.signs.as_slice().to_vec();
    let sign_version = state.signs.version();
    writer.finish(&CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        seed,
        config: cfg,
        state,
    })?;
    Ok(RunArtifact {
        seed,
        dir,
        metrics: series,
        fe_series,
        final_signs,
        sign_version,
    })
}

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic with a non-string payload".to_string()
    }
}

fn summarize(artifacts: &[RunArtifact]) -> Option<ExperimentSummary> {
    let finals: Vec<&MetricRecord> = artifacts.iter().map(|a| a.final_record()).collect();
    let kappas: Vec<f64> = finals.iter().map(|r| r.kappa).collect();
    let energies: Vec<f64> = finals.iter().map(|r| r.free_energy_total).collect();
    let aris: Option<Vec<f64>> = finals.iter().map(|r| r.ari_signs_vs_truth).collect();
    Some(ExperimentSummary {
        final_kappa: quartiles(&kappas)?,
        final_ari_signs: aris.as_deref().and_then(quartiles),
        final_free_energy: quartiles(&energies)?,
    })
}

/// Runs every seed, in parallel. The output directory is created (and the
/// config echoed into it) before any computation, so an unwritable target
/// fails fast. A seed that errors or panics is reported in `failures`
/// without taking the others down.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::write(
        config.output_dir.join("config.toml"),
        config.to_toml_string()?,
    )?;
    let mut runs: Vec<(u64, std::result::Result<RunArtifact, String>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let outcome = catch_unwind(AssertUnwindSafe(|| run_single_seed(config, seed)));
            let flattened = match outcome {
                Ok(Ok(artifact)) => Ok(artifact),
                Ok(Err(error)) => Err(error.to_string()),
                Err(payload) => Err(panic_text(payload)),
            };
            (seed, flattened)
        })
        .collect();
    runs.sort_by_key(|(seed, _)| *seed);
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    for (seed, run) in runs {
        match run {
            Ok(artifact) => artifacts.push(artifact),
            Err(message) => failures.push((seed, message)),
        }
    }
    let summary = summarize(&artifacts);
    Ok(ExperimentOutcome {
        artifacts,
        failures,
        summary,
    })
}
