//! What a run leaves on disk, and how to get it back.
//!
//! Every seed writes one directory:
//!
//! * `config.toml`: the experiment narrowed to this seed,
//! * `transcript.jsonl`: a header line `{"rng_seed": N}`, then one game
//!   event per line,
//! * `metrics.jsonl`: two lines per round, a free-energy breakdown and an
//!   evaluation record, each tagged with a `type` field,
//! * `checkpoint.json`: the complete training state,
//! * `manifest.json`: SHA-256 digests of the four files above.
//!
//! Everything except the manifest's timestamp is a pure function of the
//! config, so re-running a seed must reproduce the other files byte for
//! byte. Restoring verifies digests first: a flipped byte anywhere surfaces
//! as [`Error::Corruption`] rather than as a quietly different resume.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::free_energy::FreeEnergyReport;
use crate::metrics::MetricRecord;
use crate::protocol::{GameEvent, GameTranscript, TrainingState};

use super::config::ExperimentConfig;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

const CONFIG_FILE: &str = "config.toml";
const TRANSCRIPT_FILE: &str = "transcript.jsonl";
const METRICS_FILE: &str = "metrics.jsonl";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const MANIFEST_FILE: &str = "manifest.json";

/// A finished (or interrupted) run, whole: enough to resume, replay, or
/// re-evaluate without recomputing anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub state: TrainingState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    format_version: u32,
    seed: u64,
    created_unix_ms: u64,
    files: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptHeader {
    rng_seed: u64,
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetricsLine {
    FreeEnergy {
        #[serde(flatten)]
        report: FreeEnergyReport,
    },
    Metrics {
        #[serde(flatten)]
        record: MetricRecord,
    },
}

fn sha256_hex(path: &Path) -> Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

fn now_unix_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Streams one run's files; [`ArtifactWriter::finish`] seals the directory
/// with the checkpoint and the manifest.
pub(crate) struct ArtifactWriter {
    dir: PathBuf,
    transcript: BufWriter<File>,
    metrics: BufWriter<File>,
}

impl ArtifactWriter {
    pub(crate) fn create(dir: &Path, seed: u64, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), config.to_toml_string()?)?;
        let mut transcript = BufWriter::new(File::create(dir.join(TRANSCRIPT_FILE))?);
        let header = serde_json::to_string(&TranscriptHeader { rng_seed: seed })?;
        writeln!(transcript, "{header}")?;
        let metrics = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
        Ok(Self {
            dir: dir.to_path_buf(),
            transcript,
            metrics,
        })
    }

    pub(crate) fn append_round(
        &mut self,
        events: &[GameEvent],
        report: &FreeEnergyReport,
        record: &MetricRecord,
    ) -> Result<()> {
        for event in events {
            writeln!(self.transcript, "{}", serde_json::to_string(event)?)?;
        }
        let fe_line = MetricsLine::FreeEnergy {
            report: report.clone(),
        };
        writeln!(self.metrics, "{}", serde_json::to_string(&fe_line)?)?;
        let metric_line = MetricsLine::Metrics {
            record: record.clone(),
        };
        writeln!(self.metrics, "{}", serde_json::to_string(&metric_line)?)?;
        Ok(())
    }

    pub(crate) fn finish(mut self, checkpoint: &CheckpointFile) -> Result<()> {
        self.transcript.flush()?;
        self.metrics.flush()?;
        drop(self.transcript);
        drop(self.metrics);
        let mut text = serde_json::to_string_pretty(checkpoint)?;
        text.push('\n');
        fs::write(self.dir.join(CHECKPOINT_FILE), text)?;
        let mut files = BTreeMap::new();
        for name in [CONFIG_FILE, TRANSCRIPT_FILE, METRICS_FILE, CHECKPOINT_FILE] {
            files.insert(name.to_string(), sha256_hex(&self.dir.join(name))?);
        }
        let manifest = ManifestFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed: checkpoint.seed,
            created_unix_ms: now_unix_ms(),
            files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

/// Loads a run directory back, digest-checking every manifest entry before
/// trusting any of it.
pub fn checkpoint_restore(dir: &Path) -> Result<CheckpointFile> {
    let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: ManifestFile = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::Corruption(format!("unreadable manifest: {e}")))?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    if !manifest.files.contains_key(CHECKPOINT_FILE) {
        return Err(Error::Corruption(
            "manifest does not cover the checkpoint".into(),
        ));
    }
    for (name, expected) in &manifest.files {
        let actual = sha256_hex(&dir.join(name))?;
        if actual != *expected {
            return Err(Error::Corruption(format!(
                "{name}: digest {actual} does not match the manifest"
            )));
        }
    }
    let text = fs::read_to_string(dir.join(CHECKPOINT_FILE))?;
    let checkpoint: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Corruption(format!("unreadable checkpoint: {e}")))?;
    if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Version {
            found: checkpoint.format_version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    if checkpoint.seed != manifest.seed {
        return Err(Error::Corruption(format!(
            "checkpoint seed {} does not match manifest seed {}",
            checkpoint.seed, manifest.seed
        )));
    }
    Ok(checkpoint)
}

/// Reads `transcript.jsonl`: a `{"rng_seed": N}` header, then events.
pub fn read_transcript(path: &Path) -> Result<GameTranscript> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty transcript".into()))??;
    let header: TranscriptHeader = serde_json::from_str(&header_line)
        .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    let mut transcript = GameTranscript::new(header.rng_seed);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: GameEvent =
            serde_json::from_str(&line).map_err(|e| parse_err(idx + 2, e.to_string()))?;
        transcript.events.push(event);
    }
    Ok(transcript)
}

/// Reads `metrics.jsonl` into its two per-round series.
pub fn read_metrics(path: &Path) -> Result<(Vec<FreeEnergyReport>, Vec<MetricRecord>)> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut reports = Vec::new();
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: MetricsLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        match parsed {
            MetricsLine::FreeEnergy { report } => reports.push(report),
            MetricsLine::Metrics { record } => records.push(record),
        }
    }
    Ok((reports, records))
}

/// Cross-checks a run directory: digests intact, the transcript on disk is
/// the one in the checkpoint, and replaying it reproduces the final sign
/// assignment, version included.
pub fn replay_verify(dir: &Path) -> Result<()> {
    let checkpoint = checkpoint_restore(dir)?;
    let transcript = read_transcript(&dir.join(TRANSCRIPT_FILE))?;
    if transcript != checkpoint.state.transcript {
        return Err(Error::Corruption(
            "transcript on disk differs from the checkpointed one".into(),
        ));
    }
    let replayed = transcript.replay(
        checkpoint.state.signs.len(),
        checkpoint.state.signs.num_signs(),
    )?;
    if replayed != checkpoint.state.signs {
        return Err(Error::Corruption(format!(
            "replay reaches version {} but the checkpoint holds version {}",
            replayed.version(),
            checkpoint.state.signs.version()
        )));
    }
    Ok(())
}
