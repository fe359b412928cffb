//! Prebuilt experiment batteries with pass/fail readouts: the tiny-instance
//! oracle check, the baseline comparison on a standard world, and the
//! plasticity study around a mid-run world shift.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, HyperSection};
use super::{median, run_experiment, ExperimentOutcome, RunArtifact};
use crate::error::{Error, Result};
use crate::metrics::{adaptation_time, TargetMetric};
use crate::oracle::{
    centralized_gibbs, decentralized_chain, empirical_joint, enumerate_posterior,
    total_variation_distance, TinyInstance,
};
use crate::protocol::{Mode, Variant};
use crate::world::{ShiftKind, ShiftSpec, WorldConfig};

/// One named check with its measured evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A suite's verdicts, one per criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub criteria: Vec<CriterionResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.criteria.is_empty() && self.criteria.iter().all(|c| c.passed)
    }
}

fn criterion(name: &str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// The reference setup for population studies: two agents, a hundred
/// objects in four well-separated categories, ten seeds.
pub fn standard_experiment(out_dir: &Path, variant: Variant) -> ExperimentConfig {
    ExperimentConfig {
        rounds: 200,
        protocol_variant: variant,
        mode: Mode::Sampled,
        num_signs: None,
        num_categories: None,
        seeds: (1..=10).collect(),
        output_dir: out_dir.to_path_buf(),
        freeze_after: None,
        shift_at: None,
        randomize_object_order: false,
        world: WorldConfig {
            num_objects: 100,
            num_true_categories: 4,
            num_agents: 2,
            feature_dim: 2,
            category_separation: 5.0,
            noise_scale: 1.0,
            num_viewpoints: None,
            seed: 0,
            shift: None,
        },
        hyper: HyperSection::default(),
    }
}

/// Long chains on the enumerable instance: the game as a sampler against
/// the exact posterior, and against a centralized Gibbs sampler that sees
/// every agent's likelihood at once.
pub fn oracle_validation() -> Result<SuiteReport> {
    // One fifth burns in, fifty thousand samples remain.
    const ROUNDS: usize = 62_500;
    let instance = TinyInstance::standard();
    let table = enumerate_posterior(&instance)?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let chain = decentralized_chain(&instance, Variant::Mh, Mode::Collapsed, ROUNDS, &mut rng)?;
    let chain_secs = started.elapsed().as_secs_f64();
    let joint = empirical_joint(&chain, instance.num_signs(), instance.num_objects())?;
    let joint_tv = total_variation_distance(&joint, table.joint())?;
    let mut worst_object_tv: f64 = 0.0;
    for object in 0..instance.num_objects() {
        let mut marginal = vec![0.0; instance.num_signs()];
        for sample in &chain {
            marginal[sample[object]] += 1.0;
        }
        for p in &mut marginal {
            *p /= chain.len() as f64;
        }
        let tv = total_variation_distance(&marginal, &table.per_object()[object])?;
        worst_object_tv = worst_object_tv.max(tv);
    }
    let mut criteria = vec![criterion(
        "chain_matches_enumeration",
        joint_tv <= 0.05 && worst_object_tv <= 0.05,
        format!(
            "joint TV {joint_tv:.4}, worst per-object TV {worst_object_tv:.4}, \
             {} samples in {chain_secs:.2} s",
            chain.len()
        ),
    )];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let gibbs = centralized_gibbs(&instance, ROUNDS, &mut rng)?;
    let gibbs_joint = empirical_joint(&gibbs, instance.num_signs(), instance.num_objects())?;
    let cross_tv = total_variation_distance(&joint, &gibbs_joint)?;
    criteria.push(criterion(
        "decentralized_matches_centralized",
        cross_tv <= 0.05,
        format!("TV between the two empirical joints {cross_tv:.4}"),
    ));
    Ok(SuiteReport {
        suite: "oracle_validation".into(),
        criteria,
    })
}

fn require_complete(
    label: &str,
    outcome: &ExperimentOutcome,
    criteria: &mut Vec<CriterionResult>,
) -> bool {
    if outcome.failures.is_empty() {
        return true;
    }
    let list: Vec<String> = outcome
        .failures
        .iter()
        .map(|(seed, msg)| format!("seed {seed}: {msg}"))
        .collect();
    criteria.push(criterion(
        "all_seeds_complete",
        false,
        format!("{label}: {}", list.join("; ")),
    ));
    false
}

fn final_values(
    outcome: &ExperimentOutcome,
    pick: impl Fn(&RunArtifact) -> Result<f64>,
) -> Result<Vec<f64>> {
    outcome.artifacts.iter().map(pick).collect()
}

/// Ten seeds of the standard world under the game versus under silence.
/// Agreement, grounding, and free energy must all favor the game, and free
/// energy must fall within each game run.
pub fn baseline_comparison(out_dir: &Path) -> Result<SuiteReport> {
    let started = Instant::now();
    let mh_config = standard_experiment(&out_dir.join("mh"), Variant::Mh);
    let never_config = standard_experiment(&out_dir.join("never"), Variant::Never);
    let mh = run_experiment(&mh_config)?;
    let never = run_experiment(&never_config)?;
    let mut criteria = Vec::new();
    if !require_complete("mh", &mh, &mut criteria)
        || !require_complete("never", &never, &mut criteria)
    {
        return Ok(SuiteReport {
            suite: "baseline_comparison".into(),
            criteria,
        });
    }
    let kappa_mh = median(&final_values(&mh, |a| Ok(a.final_record().kappa))?)
        .expect("ten artifacts");
    let kappa_never = median(&final_values(&never, |a| Ok(a.final_record().kappa))?)
        .expect("ten artifacts");
    criteria.push(criterion(
        "agreement_dominates_isolation",
        kappa_mh >= kappa_never,
        format!("median final kappa {kappa_mh:.4} (game) vs {kappa_never:.4} (silent)"),
    ));
    let ari = |a: &RunArtifact| {
        a.final_record()
            .ari_signs_vs_truth
            .ok_or(Error::MissingGroundTruth)
    };
    let ari_mh = median(&final_values(&mh, ari)?).expect("ten artifacts");
    let ari_never = median(&final_values(&never, ari)?).expect("ten artifacts");
    criteria.push(criterion(
        "grounding_dominates_isolation",
        ari_mh >= ari_never,
        format!("median final sign ARI {ari_mh:.4} (game) vs {ari_never:.4} (silent)"),
    ));
    let fe_mh = median(&final_values(&mh, |a| Ok(a.final_record().free_energy_total))?)
        .expect("ten artifacts");
    let fe_never = median(&final_values(&never, |a| {
        Ok(a.final_record().free_energy_total)
    })?)
    .expect("ten artifacts");
    criteria.push(criterion(
        "free_energy_dominates_isolation",
        fe_mh <= fe_never,
        format!("median final free energy {fe_mh:.2} (game) vs {fe_never:.2} (silent)"),
    ));
    let mut descending = 0usize;
    for artifact in &mh.artifacts {
        let records = artifact.metrics.records();
        let early: Vec<f64> = records[..20].iter().map(|r| r.free_energy_total).collect();
        let late: Vec<f64> = records[records.len() - 20..]
            .iter()
            .map(|r| r.free_energy_total)
            .collect();
        if median(&late).expect("window") < median(&early).expect("window") {
            descending += 1;
        }
    }
    criteria.push(criterion(
        "free_energy_descends_within_runs",
        descending >= 8,
        format!(
            "{descending}/{} seeds end their last 20-round window below their first",
            mh.artifacts.len()
        ),
    ));
    criteria.push(criterion(
        "wall_clock",
        true,
        format!("both experiments in {:.1} s", started.elapsed().as_secs_f64()),
    ));
    Ok(SuiteReport {
        suite: "baseline_comparison".into(),
        criteria,
    })
}

/// The standard world with its category means teleported at round 200,
/// run twice per seed: once free, once with language frozen right after
/// the shift. Free agents must re-ground at least as fast, and the frozen
/// population must pay for its rigidity in free energy.
pub fn plasticity(out_dir: &Path) -> Result<SuiteReport> {
    let shift_round = 200;
    let mut plastic_config = standard_experiment(&out_dir.join("plastic"), Variant::Mh);
    plastic_config.rounds = 400;
    plastic_config.world.shift = Some(ShiftSpec {
        round: shift_round,
        kind: ShiftKind::Translate,
        magnitude: 3.0 * plastic_config.world.category_separation,
    });
    let mut frozen_config = plastic_config.clone();
    frozen_config.output_dir = out_dir.join("frozen");
    frozen_config.freeze_after = Some(shift_round + 1);
    let plastic = run_experiment(&plastic_config)?;
    let frozen = run_experiment(&frozen_config)?;
    let mut criteria = Vec::new();
    if !require_complete("plastic", &plastic, &mut criteria)
        || !require_complete("frozen", &frozen, &mut criteria)
    {
        return Ok(SuiteReport {
            suite: "plasticity".into(),
            criteria,
        });
    }
    let recovery = |artifact: &RunArtifact| -> Result<u64> {
        let time = adaptation_time(
            &artifact.metrics,
            shift_round,
            TargetMetric::AriSignsVsTruth,
            0.9,
        )?;
        // A run that never recovers sorts after every finite time.
        Ok(time.map_or(u64::MAX, u64::from))
    };
    let mut no_slower = 0usize;
    let mut pairs = Vec::new();
    for (p, f) in plastic.artifacts.iter().zip(&frozen.artifacts) {
        debug_assert_eq!(p.seed, f.seed);
        let p_time = recovery(p)?;
        let f_time = recovery(f)?;
        if p_time <= f_time {
            no_slower += 1;
        }
        let show = |t: u64| {
            if t == u64::MAX {
                "never".to_string()
            } else {
                t.to_string()
            }
        };
        pairs.push(format!("seed {}: {} vs {}", p.seed, show(p_time), show(f_time)));
    }
    criteria.push(criterion(
        "plastic_adapts_no_slower",
        no_slower >= 8,
        format!(
            "{no_slower}/{} paired seeds (plastic vs frozen rounds to 0.9 of baseline: {})",
            plastic.artifacts.len(),
            pairs.join(", ")
        ),
    ));
    let plateau = |artifact: &RunArtifact| -> Result<f64> {
        let tail: Vec<f64> = artifact
            .metrics
            .records()
            .iter()
            .filter(|r| r.round >= 350)
            .map(|r| r.free_energy_total)
            .collect();
        median(&tail).ok_or_else(|| {
            Error::InvalidArgument("no records in the plateau window".into())
        })
    };
    let plastic_plateau =
        median(&final_values(&plastic, plateau)?).expect("ten artifacts");
    let frozen_plateau = median(&final_values(&frozen, plateau)?).expect("ten artifacts");
    criteria.push(criterion(
        "frozen_plateau_is_no_better",
        frozen_plateau >= plastic_plateau,
        format!(
            "post-shift free-energy plateau {frozen_plateau:.2} (frozen) vs \
             {plastic_plateau:.2} (plastic)"
        ),
    ));
    Ok(SuiteReport {
        suite: "plasticity".into(),
        criteria,
    })
}
