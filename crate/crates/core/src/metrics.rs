//! Agreement measures and the recovery clock.
//!
//! Two views of a run's progress: how well agents agree with each other
//! (chance-corrected sign agreement) and how well anything agrees with the
//! generating categories (adjusted Rand index, which is label-permutation
//! invariant, as it must be when sign identities are arbitrary).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn choose2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

fn check_pair(a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty label vectors".into()));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "label vectors of different length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Adjusted Rand index between two partitions, by pair counting:
///
/// ```text
/// ARI = (index - expected) / (max - expected)
/// ```
///
/// Labels are identifiers, not values; any relabeling of either side leaves
/// the result unchanged. When the correction denominator vanishes (both
/// sides all-singletons or both a single block) the partitions are
/// identical and the index is 1 by convention.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&n| choose2(n as f64)).sum();
    let row_pairs: f64 = rows.values().map(|&n| choose2(n as f64)).sum();
    let col_pairs: f64 = cols.values().map(|&n| choose2(n as f64)).sum();
    let total_pairs = choose2(a.len() as f64);
    if total_pairs == 0.0 {
        // A single element: both partitions are trivially identical.
        return Ok(1.0);
    }
    let expected = row_pairs * col_pairs / total_pairs;
    let max = 0.5 * (row_pairs + col_pairs);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Chance-corrected agreement between two labelings with pooled marginals:
///
/// ```text
/// kappa = (p_o - p_e) / (1 - p_e),   p_e = sum_s ((c_a(s) + c_b(s)) / 2n)^2
/// ```
///
/// Pooling treats both raters as draws from one shared labeling habit, so
/// two raters that each always say a different single word score -1, not 0.
/// Degenerate chance agreement (`p_e = 1`) forces `p_o = 1` and scores 1.
pub fn cohens_kappa(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut pooled: BTreeMap<usize, u64> = BTreeMap::new();
    for &x in a {
        *pooled.entry(x).or_default() += 1;
    }
    for &y in b {
        *pooled.entry(y).or_default() += 1;
    }
    let chance: f64 = pooled
        .values()
        .map(|&c| {
            let p = c as f64 / (2.0 * n);
            p * p
        })
        .sum();
    if (1.0 - chance).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((observed - chance) / (1.0 - chance))
}

/// Mean of [`cohens_kappa`] over all unordered pairs of labelings.
pub fn mean_pairwise_kappa(labelings: &[Vec<usize>]) -> Result<f64> {
    if labelings.len() < 2 {
        return Err(Error::InvalidArgument(
            "pairwise agreement needs at least two labelings".into(),
        ));
    }
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..labelings.len() {
        for j in (i + 1)..labelings.len() {
            total += cohens_kappa(&labelings[i], &labelings[j])?;
            pairs += 1.0;
        }
    }
    Ok(total / pairs)
}

/// Per-round evaluation snapshot. `ari_signs_vs_truth` is absent when the
/// observations carry no ground truth; `ari_z_vs_truth` holds one entry per
/// agent (its private categories against the truth) and is empty in the
/// same case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub round: u32,
    pub kappa: f64,
    pub ari_signs_vs_truth: Option<f64>,
    pub ari_z_vs_truth: Vec<f64>,
    pub free_energy_total: f64,
}

/// Append-only series of per-round records; rounds must strictly increase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    records: Vec<MetricRecord>,
}

impl MetricSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: MetricRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.round <= last.round {
                return Err(Error::InvalidArgument(format!(
                    "round {} does not follow round {}",
                    record.round, last.round
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }
}

/// Which series [`adaptation_time`] should track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    Kappa,
    AriSignsVsTruth,
}

fn metric_value(record: &MetricRecord, target: TargetMetric) -> Result<f64> {
    match target {
        TargetMetric::Kappa => Ok(record.kappa),
        TargetMetric::AriSignsVsTruth => {
            record.ari_signs_vs_truth.ok_or(Error::MissingGroundTruth)
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|x, y| x.partial_cmp(y).expect("metric values are not NaN"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Rounds until a metric recovers after a disturbance: the smallest `n >= 0`
/// such that the record at `shift_round + n` reaches `threshold` times the
/// pre-shift baseline (the median of the last ten records before the
/// shift). `None` means the series never recovers; an empty baseline window
/// is an error.
pub fn adaptation_time(
    series: &MetricSeries,
    shift_round: u32,
    target: TargetMetric,
    threshold: f64,
) -> Result<Option<u32>> {
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let mut baseline_window: Vec<f64> = series
        .records()
        .iter()
        .filter(|r| r.round < shift_round)
        .map(|r| metric_value(r, target))
        .collect::<Result<Vec<_>>>()?;
    let keep = baseline_window.len().saturating_sub(10);
    baseline_window.drain(..keep);
    if baseline_window.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no records before round {shift_round} to form a baseline"
        )));
    }
    let goal = threshold * median(&mut baseline_window);
    for record in series.records().iter().filter(|r| r.round >= shift_round) {
        if metric_value(record, target)? >= goal {
            return Ok(Some(record.round - shift_round));
        }
    }
    Ok(None)
}
