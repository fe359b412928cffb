//! One TOML file describes a whole experiment: the world, the priors, the
//! protocol, the schedule, and which seeds to run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::seeding::{derive_seed, STREAM_WORLD};
use crate::error::{Error, Result};
use crate::prob::GaussCatHyper;
use crate::protocol::{Mode, TrainingConfig, Variant};
use crate::world::WorldConfig;

fn default_variant() -> Variant {
    Variant::Mh
}

fn default_mode() -> Mode {
    Mode::Sampled
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_alpha() -> f64 {
    1.0
}

fn default_kappa0() -> f64 {
    0.1
}

fn default_a0() -> f64 {
    2.0
}

/// Priors shared by every agent. `ng_mean0` and `ng_b0` come as a pair:
/// leave both out and each agent anchors location and scale on its own
/// data, at initialization and again after every parameter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    #[serde(default = "default_alpha")]
    pub dirichlet_alpha: f64,
    #[serde(default = "default_kappa0")]
    pub ng_kappa0: f64,
    #[serde(default = "default_a0")]
    pub ng_a0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ng_b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ng_mean0: Option<Vec<f64>>,
}

impl Default for HyperSection {
    fn default() -> Self {
        Self {
            dirichlet_alpha: default_alpha(),
            ng_kappa0: default_kappa0(),
            ng_a0: default_a0(),
            ng_b0: None,
            ng_mean0: None,
        }
    }
}

impl HyperSection {
    fn validate(&self, feature_dim: usize) -> Result<()> {
        for (field, value) in [
            ("dirichlet_alpha", self.dirichlet_alpha),
            ("ng_kappa0", self.ng_kappa0),
            ("ng_a0", self.ng_a0),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::Config(format!(
                    "hyper.{field} must be positive and finite, got {value}"
                )));
            }
        }
        match (&self.ng_b0, &self.ng_mean0) {
            (None, None) => {}
            (Some(b0), Some(mean0)) => {
                if !b0.is_finite() || *b0 <= 0.0 {
                    return Err(Error::Config(format!(
                        "hyper.ng_b0 must be positive and finite, got {b0}"
                    )));
                }
                if mean0.len() != feature_dim {
                    return Err(Error::Config(format!(
                        "hyper.ng_mean0 has {} entries for feature_dim {}",
                        mean0.len(),
                        feature_dim
                    )));
                }
                if mean0.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Config("hyper.ng_mean0 must be finite".into()));
                }
            }
            _ => {
                return Err(Error::Config(
                    "hyper.ng_b0 and hyper.ng_mean0 must be given together or not at all"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// A full experiment: run `seeds.len()` independent trainings of `rounds`
/// rounds each and write one artifact directory per seed under
/// `output_dir`. The `world.seed` field is ignored here; each run derives
/// its own world seed from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rounds: u32,
    #[serde(default = "default_variant")]
    pub protocol_variant: Variant,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Sign inventory size; defaults to the number of true categories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_signs: Option<usize>,
    /// Per-agent category count; defaults to the number of true categories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_categories: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_after: Option<u32>,
    /// Round at which the world shift fires. Redundant with
    /// `world.shift.round`; when both are present they must agree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_at: Option<u32>,
    #[serde(default)]
    pub randomize_object_order: bool,
    pub world: WorldConfig,
    #[serde(default)]
    pub hyper: HyperSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.hyper.validate(self.world.feature_dim)?;
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.world.num_agents < 2 {
            return Err(Error::Config(
                "the naming game needs at least two agents".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        // Both seeds land in emitted TOML, whose integers are signed.
        if let Some(big) = self.seeds.iter().find(|&&s| i64::try_from(s).is_err()) {
            return Err(Error::Config(format!(
                "seed {big} does not fit in a TOML integer (max {})",
                i64::MAX
            )));
        }
        if i64::try_from(self.world.seed).is_err() {
            return Err(Error::Config(format!(
                "world.seed {} does not fit in a TOML integer (max {})",
                self.world.seed,
                i64::MAX
            )));
        }
        if self.resolved_num_signs() < 2 {
            return Err(Error::Config(
                "num_signs must be at least 2 for the game to decide anything".into(),
            ));
        }
        if self.resolved_num_categories() == 0 {
            return Err(Error::Config("num_categories must be at least 1".into()));
        }
        if let Some(freeze_after) = self.freeze_after {
            if freeze_after >= self.rounds {
                return Err(Error::Config(format!(
                    "freeze_after {freeze_after} is past the last round {}",
                    self.rounds - 1
                )));
            }
        }
        match (self.shift_at, &self.world.shift) {
            (Some(at), Some(spec)) if at != spec.round => {
                return Err(Error::Config(format!(
                    "shift_at {at} disagrees with world.shift.round {}",
                    spec.round
                )));
            }
            (Some(_), None) => {
                return Err(Error::Config(
                    "shift_at without world.shift: no shift kind or magnitude to apply"
                        .into(),
                ));
            }
            _ => {}
        }
        if let Some(at) = self.resolved_shift_at() {
            if at >= self.rounds {
                return Err(Error::Config(format!(
                    "the shift at round {at} is past the last round {}",
                    self.rounds - 1
                )));
            }
        }
        Ok(())
    }

    pub fn resolved_num_signs(&self) -> usize {
        self.num_signs.unwrap_or(self.world.num_true_categories)
    }

    pub fn resolved_num_categories(&self) -> usize {
        self.num_categories.unwrap_or(self.world.num_true_categories)
    }

    pub fn resolved_shift_at(&self) -> Option<u32> {
        self.shift_at.or(self.world.shift.map(|s| s.round))
    }

    /// The agents' shared prior. Absent `ng_mean0`/`ng_b0` become the empty
    /// vector and a placeholder scale, which agents recognize as the cue to
    /// anchor both on their own data.
    pub fn gauss_cat_hyper(&self) -> GaussCatHyper {
        GaussCatHyper {
            dirichlet_alpha: self.hyper.dirichlet_alpha,
            ng_mean0: self.hyper.ng_mean0.clone().unwrap_or_default(),
            ng_kappa0: self.hyper.ng_kappa0,
            ng_a0: self.hyper.ng_a0,
            ng_b0: self.hyper.ng_b0.unwrap_or(1.0),
            num_signs: self.resolved_num_signs(),
            num_categories: self.resolved_num_categories(),
        }
    }

    /// The per-run schedule this experiment describes.
    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            rounds: self.rounds,
            variant: self.protocol_variant,
            mode: self.mode,
            freeze_after: self.freeze_after,
            shift_at: self.resolved_shift_at(),
            randomize_object_order: self.randomize_object_order,
            world: Some(self.world.clone()),
        }
    }

    /// This experiment narrowed to a single seed, with the world seed
    /// derived from it. Saved into the seed's artifact directory, the result
    /// reproduces that run on its own.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut config = self.clone();
        config.seeds = vec![seed];
        // TOML integers are signed, and this value is written back out in
        // the per-seed config.toml, so keep it to 63 bits.
        config.world.seed = derive_seed(seed, STREAM_WORLD) >> 1;
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ShiftKind;

    const MINIMAL: &str = r#"
        rounds = 50
        [world]
        num_objects = 10
        num_true_categories = 2
        num_agents = 2
        feature_dim = 3
        category_separation = 5.0
        noise_scale = 1.0
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(config.protocol_variant, Variant::Mh);
        assert_eq!(config.mode, Mode::Sampled);
        assert_eq!(config.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(config.output_dir, PathBuf::from("runs"));
        assert_eq!(config.resolved_num_signs(), 2);
        assert_eq!(config.resolved_num_categories(), 2);
        assert!(!config.randomize_object_order);
        let hyper = config.gauss_cat_hyper();
        assert!(hyper.ng_mean0.is_empty(), "defaults anchor on data");
        assert_eq!(hyper.num_signs, 2);
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let text = MINIMAL.replace("rounds", "rouds");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rouds"), "unhelpful error: {msg}");
    }

    #[test]
    fn toml_round_trips() {
        let mut config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        config.world.shift = Some(crate::world::ShiftSpec {
            round: 20,
            kind: ShiftKind::Translate,
            magnitude: 15.0,
        });
        config.freeze_after = Some(21);
        config.hyper.ng_b0 = Some(2.0);
        config.hyper.ng_mean0 = Some(vec![0.0, 0.0, 0.0]);
        let text = config.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn shift_round_duplication_must_agree() {
        let mut config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        config.world.shift = Some(crate::world::ShiftSpec {
            round: 20,
            kind: ShiftKind::Translate,
            magnitude: 15.0,
        });
        config.shift_at = Some(20);
        config.validate().unwrap();
        assert_eq!(config.resolved_shift_at(), Some(20));

        config.shift_at = Some(21);
        assert!(config.validate().is_err());

        config.shift_at = None;
        assert_eq!(config.resolved_shift_at(), Some(20));
        assert_eq!(config.training_config().shift_at, Some(20));

        config.world.shift = None;
        config.shift_at = Some(20);
        assert!(config.validate().is_err(), "shift_at alone has no shift kind");
    }

    #[test]
    fn prior_location_and_scale_come_as_a_pair() {
        let mut config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        config.hyper.ng_b0 = Some(2.0);
        assert!(config.validate().is_err());
        config.hyper.ng_mean0 = Some(vec![0.0, 0.0]);
        assert!(config.validate().is_err(), "wrong dimension");
        config.hyper.ng_mean0 = Some(vec![0.0, 0.0, 0.0]);
        config.validate().unwrap();
        assert_eq!(config.gauss_cat_hyper().ng_mean0, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn seeds_must_be_distinct_and_present() {
        let mut config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        config.seeds = vec![3, 4, 3];
        assert!(config.validate().is_err());
        config.seeds = Vec::new();
        assert!(config.validate().is_err());
    }

    #[test]
    fn schedule_rounds_stay_in_range() {
        let mut config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        config.freeze_after = Some(50);
        assert!(config.validate().is_err());
        config.freeze_after = Some(49);
        config.validate().unwrap();
    }

    #[test]
    fn per_seed_config_pins_the_derived_world_seed() {
        let config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let narrowed = config.for_seed(7);
        assert_eq!(narrowed.seeds, vec![7]);
        assert_eq!(narrowed.world.seed, derive_seed(7, STREAM_WORLD) >> 1);
        assert!(i64::try_from(narrowed.world.seed).is_ok());
        // Narrowing again changes nothing: the derivation only reads the
        // experiment seed.
        assert_eq!(narrowed.for_seed(7), narrowed);
    }
}
