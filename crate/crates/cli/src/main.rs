//! `cpc`: run experiments, validation suites, and transcript replays from
//! the command line. Every invocation prints one JSON document to stdout
//! and exits zero exactly when the requested work succeeded, so the binary
//! can sit in a pipeline without log scraping.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpc_core::runner::{
    baseline_comparison, oracle_validation, plasticity, replay_verify, run_experiment,
};
use cpc_core::ExperimentConfig;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "cpc", version, about = "Decentralized simulator of emergent sign systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config.
    Run {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed list, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run a built-in validation suite and report its verdicts.
    Suite {
        /// One of: oracle-validation, baseline-comparison, plasticity.
        name: String,
        /// Keep suite artifacts here instead of a throwaway temp directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the final sign table from a transcript's events and verify
    /// it against the checkpoint stored beside it.
    Replay {
        /// Path to a run's transcript.jsonl.
        #[arg(long)]
        transcript: PathBuf,
    },
}

fn failure(stage: &str, error: impl std::fmt::Display) -> (Value, bool) {
    (
        json!({
            "status": "error",
            "stage": stage,
            "error": error.to_string(),
        }),
        false,
    )
}

fn run_command(config: &Path, out: Option<PathBuf>, seeds: Option<Vec<u64>>) -> (Value, bool) {
    let mut config = match ExperimentConfig::load(config) {
        Ok(config) => config,
        Err(e) => return failure("config", e),
    };
    if let Some(out) = out {
        config.output_dir = out;
    }
    if let Some(seeds) = seeds {
        config.seeds = seeds;
    }
    let outcome = match run_experiment(&config) {
        Ok(outcome) => outcome,
        Err(e) => return failure("run", e),
    };
    let ok = outcome.failures.is_empty();
    let runs: Vec<Value> = outcome
        .artifacts
        .iter()
        .map(|artifact| {
            let last = artifact.final_record();
            json!({
                "seed": artifact.seed,
                "dir": artifact.dir,
                "final_round": last.round,
                "final_kappa": last.kappa,
                "final_ari_signs": last.ari_signs_vs_truth,
                "final_free_energy": last.free_energy_total,
            })
        })
        .collect();
    let failures: Vec<Value> = outcome
        .failures
        .iter()
        .map(|(seed, error)| json!({ "seed": seed, "error": error }))
        .collect();
    (
        json!({
            "status": if ok { "ok" } else { "failed" },
            "output_dir": config.output_dir,
            "runs": runs,
            "failures": failures,
            "summary": outcome.summary,
        }),
        ok,
    )
}

fn suite_command(name: &str, out: Option<PathBuf>) -> (Value, bool) {
    let cleanup = out.is_none();
    let dir = out.unwrap_or_else(|| {
        std::env::temp_dir().join(format!("cpc-suite-{}-{}", name, std::process::id()))
    });
    let report = match name {
        "oracle-validation" => oracle_validation(),
        "baseline-comparison" => baseline_comparison(&dir),
        "plasticity" => plasticity(&dir),
        other => {
            return failure(
                "suite",
                format!(
                    "unknown suite '{other}': expected oracle-validation, \
                     baseline-comparison, or plasticity"
                ),
            )
        }
    };
    if cleanup {
        // Best effort: the run may not have created it (oracle-validation
        // writes nothing), and the verdict matters more than the litter.
        let _ = std::fs::remove_dir_all(&dir);
    }
    match report {
        Ok(report) => {
            let ok = report.passed();
            (
                json!({
                    "status": if ok { "ok" } else { "failed" },
                    "report": report,
                }),
                ok,
            )
        }
        Err(e) => failure("suite", e),
    }
}

fn replay_command(transcript: &Path) -> (Value, bool) {
    if transcript.file_name() != Some("transcript.jsonl".as_ref()) {
        return failure(
            "replay",
            format!(
                "{} is not a run transcript: expected a path ending in transcript.jsonl, \
                 with manifest.json and checkpoint.json beside it",
                transcript.display()
            ),
        );
    }
    let dir = match transcript.parent() {
        Some(dir) if dir != Path::new("") => dir.to_path_buf(),
        _ => PathBuf::from("."),
    };
    match replay_verify(&dir) {
        Ok(()) => (
            json!({
                "status": "ok",
                "verified": dir,
            }),
            true,
        ),
        Err(e) => failure("replay", e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (value, ok) = match cli.command {
        Command::Run { config, out, seeds } => run_command(&config, out, seeds),
        Command::Suite { name, out } => suite_command(&name, out),
        Command::Replay { transcript } => replay_command(&transcript),
    };
    println!("{}", serde_json::to_string_pretty(&value).expect("report serializes"));
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
