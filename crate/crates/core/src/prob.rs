//! Log-space probability kernels shared by the inference code.
//!
//! Everything in this module is closed form. Density evaluations and weight
//! arithmetic stay in log space until a caller needs a normalized probability
//! vector, so likelihood ratios survive observations hundreds of standard
//! deviations out in the tails.
//!
//! The emission model used throughout the crate is a diagonal Gaussian per
//! category with an independent Normal-Gamma prior per feature:
//!
//! ```text
//! tau_i   ~ Gamma(a0, b0)              (precision of feature i)
//! mu_i    ~ Normal(m0_i, 1/(kappa0 tau_i))
//! x_i     ~ Normal(mu_i, 1/tau_i)
//! ```
//!
//! Sign-to-category tables use symmetric Dirichlet smoothing, and the prior
//! over signs itself is uniform (the mean of any symmetric Dirichlet).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Hyperparameters of the Gaussian-categorical agent model.
///
/// `dirichlet_alpha` smooths both the per-sign category tables and the
/// uniform sign prior; the `ng_*` fields are the Normal-Gamma prior for the
/// per-feature emission parameters. `num_signs` and `num_categories` fix the
/// sizes of the shared sign inventory and the private category inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussCatHyper {
    pub dirichlet_alpha: f64,
    /// Prior mean per feature. Length must equal the feature dimension of
    /// the data the agent sees.
    pub ng_mean0: Vec<f64>,
    pub ng_kappa0: f64,
    pub ng_a0: f64,
    pub ng_b0: f64,
    pub num_signs: usize,
    pub num_categories: usize,
}

impl GaussCatHyper {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dirichlet_alpha", self.dirichlet_alpha),
            ("ng_kappa0", self.ng_kappa0),
            ("ng_a0", self.ng_a0),
            ("ng_b0", self.ng_b0),
        ];
        for (field, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::Validation {
                    field,
                    reason: format!("must be a positive finite real, got {value}"),
                });
            }
        }
        if self.ng_mean0.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation {
                field: "ng_mean0",
                reason: "entries must be finite".into(),
            });
        }
        if self.num_signs == 0 {
            return Err(Error::Validation {
                field: "num_signs",
                reason: "must be at least 1".into(),
            });
        }
        if self.num_categories == 0 {
            return Err(Error::Validation {
                field: "num_categories",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Log density of a diagonal Gaussian, parameterized by per-feature
/// precision:
///
/// ```text
/// sum_i [ 0.5 ln(prec_i) - 0.5 ln(2 pi) - 0.5 prec_i (x_i - mean_i)^2 ]
/// ```
pub fn log_gaussian_diag(x: &[f64], mean: &[f64], precision: &[f64]) -> Result<f64> {
    if x.len() != mean.len() || x.len() != precision.len() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: x has {}, mean has {}, precision has {}",
            x.len(),
            mean.len(),
            precision.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..x.len() {
        let p = precision[i];
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "precision[{i}] must be positive and finite, got {p}"
            )));
        }
        let r = x[i] - mean[i];
        total += 0.5 * p.ln() - 0.5 * LN_2PI - 0.5 * p * r * r;
    }
    Ok(total)
}

/// Posterior of a Normal-Gamma prior after observing one feature's data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalGammaPosterior {
    pub mean: f64,
    pub kappa: f64,
    pub shape: f64,
    pub rate: f64,
}

impl NormalGammaPosterior {
    /// Posterior mean of the precision, `shape / rate`.
    pub fn precision_mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Conjugate Normal-Gamma update for scalar Gaussian data with unknown mean
/// and precision:
///
/// ```text
/// kappa_n = kappa0 + n
/// m_n     = (kappa0 m0 + n xbar) / kappa_n
/// a_n     = a0 + n/2
/// b_n     = b0 + 0.5 sum_i (x_i - xbar)^2 + 0.5 kappa0 n (xbar - m0)^2 / kappa_n
/// ```
///
/// Empty `data` returns the prior unchanged.
pub fn normal_gamma_update(
    mean0: f64,
    kappa0: f64,
    shape0: f64,
    rate0: f64,
    data: &[f64],
) -> Result<NormalGammaPosterior> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "normal_gamma_update: data must be finite".into(),
        ));
    }
    if data.is_empty() {
        return Ok(NormalGammaPosterior {
            mean: mean0,
            kappa: kappa0,
            shape: shape0,
            rate: rate0,
        });
    }
    let n = data.len() as f64;
    let xbar = data.iter().sum::<f64>() / n;
    let ss: f64 = data.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let kappa_n = kappa0 + n;
    let mean_n = (kappa0 * mean0 + n * xbar) / kappa_n;
    let shape_n = shape0 + 0.5 * n;
    let rate_n = rate0 + 0.5 * ss + 0.5 * kappa0 * n * (xbar - mean0) * (xbar - mean0) / kappa_n;
    Ok(NormalGammaPosterior {
        mean: mean_n,
        kappa: kappa_n,
        shape: shape_n,
        rate: rate_n,
    })
}

/// Log posterior-predictive density of a Normal-Gamma posterior at `x`: a
/// Student-t with `2 shape` degrees of freedom, location `mean`, and scale
/// `rate (kappa + 1) / (shape kappa)`.
pub fn normal_gamma_predictive_logpdf(post: &NormalGammaPosterior, x: f64) -> f64 {
    let df = 2.0 * post.shape;
    let scale2 = post.rate * (post.kappa + 1.0) / (post.shape * post.kappa);
    let z2 = (x - post.mean) * (x - post.mean) / scale2;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI * scale2).ln()
        - 0.5 * (df + 1.0) * (1.0 + z2 / df).ln()
}

/// Lanczos approximation of `ln Gamma(x)` for positive `x` (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Posterior predictive of a symmetric Dirichlet over counts:
/// `(counts_i + alpha) / (sum_j counts_j + K alpha)`.
pub fn dirichlet_predictive(counts: &[u64], alpha: f64) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::InvalidArgument(
            "dirichlet_predictive: counts must be non-empty".into(),
        ));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "dirichlet_predictive: alpha must be positive, got {alpha}"
        )));
    }
    let total: f64 = counts.iter().map(|&c| c as f64).sum::<f64>() + counts.len() as f64 * alpha;
    Ok(counts.iter().map(|&c| (c as f64 + alpha) / total).collect())
}

/// Numerically stable `ln sum_i exp(v_i)`. `-inf` entries are allowed and
/// contribute zero mass; an empty slice is an error.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "log_sum_exp: empty input".into(),
        ));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max.is_nan() {
        return Err(Error::InvalidArgument("log_sum_exp: NaN input".into()));
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Exponentiates and normalizes log weights into a probability vector.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let total = log_sum_exp(log_weights)?;
    if total == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(
            "normalize_log_weights: all weights are zero".into(),
        ));
    }
    Ok(log_weights.iter().map(|w| (w - total).exp()).collect())
}

/// Draws one index from the categorical distribution given by unnormalized
/// log weights. Consumes exactly one uniform draw from `rng` regardless of
/// the weight vector. Errors if every weight is zero.
pub fn categorical_sample(log_weights: &[f64], rng: &mut ChaCha8Rng) -> Result<usize> {
    let probs = normalize_log_weights(log_weights)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding can leave acc marginally below 1; fall back to the last
    // index that carries mass.
    Ok(last_positive)
}

/// `KL(p || q) = sum_i p_i ln(p_i / q_i)` for probability vectors of equal
/// length. Terms with `p_i = 0` contribute zero; `q_i = 0` with `p_i > 0`
/// yields infinity.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "kl_divergence: length mismatch ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gaussian_standard_normal_at_zero() {
        let lp = log_gaussian_diag(&[0.0], &[0.0], &[1.0]).unwrap();
        assert!((lp - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_two_dims_at_mean() {
        let lp = log_gaussian_diag(&[1.0, 1.0], &[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert!((lp - (-1.144_729_885_849_400_2)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_three_sigma() {
        let lp = log_gaussian_diag(&[3.0], &[0.0], &[1.0]).unwrap();
        assert!((lp - (-5.418_938_533_204_673)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rejects_bad_inputs() {
        assert!(log_gaussian_diag(&[0.0], &[0.0, 1.0], &[1.0]).is_err());
        assert!(log_gaussian_diag(&[0.0], &[0.0], &[0.0]).is_err());
        assert!(log_gaussian_diag(&[0.0], &[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn normal_gamma_single_point() {
        let post = normal_gamma_update(0.0, 1.0, 1.0, 1.0, &[2.0]).unwrap();
        assert_eq!(post.mean, 1.0);
        assert_eq!(post.kappa, 2.0);
        assert_eq!(post.shape, 1.5);
        assert_eq!(post.rate, 2.0);
    }

    #[test]
    fn normal_gamma_empty_returns_prior() {
        let post = normal_gamma_update(0.3, 0.7, 2.0, 1.5, &[]).unwrap();
        assert_eq!(
            post,
            NormalGammaPosterior {
                mean: 0.3,
                kappa: 0.7,
                shape: 2.0,
                rate: 1.5
            }
        );
    }

    #[test]
    fn normal_gamma_recovers_tight_data() {
        // Many samples concentrated at 5 with tiny spread: posterior mean of
        // the mean approaches 5 and the precision mean grows large.
        let data: Vec<f64> = (0..200).map(|i| 5.0 + 1e-3 * ((i % 7) as f64 - 3.0)).collect();
        let post = normal_gamma_update(0.0, 1e-3, 1.0, 1.0, &data).unwrap();
        assert!((post.mean - 5.0).abs() < 1e-3);
        assert!(post.precision_mean() > 50.0);
    }

    #[test]
    fn dirichlet_predictive_matches_hand_values() {
        let p = dirichlet_predictive(&[2, 0, 1], 1.0).unwrap();
        let expect = [3.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dirichlet_predictive_zero_counts_uniform() {
        let p = dirichlet_predictive(&[0, 0, 0, 0], 0.5).unwrap();
        for v in &p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn dirichlet_predictive_sums_to_one() {
        let p = dirichlet_predictive(&[17, 3, 0, 41, 5], 0.37).unwrap();
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_extreme_values() {
        // exp(-1000) underflows, but the shifted sum must not.
        let v = [-1000.0, -1000.0];
        let lse = log_sum_exp(&v).unwrap();
        assert!((lse - (-1000.0 + 2.0_f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn log_sum_exp_shift_invariance() {
        let v = [-3.0, 0.5, 2.0, -7.5];
        let base = log_sum_exp(&v).unwrap();
        for shift in [-500.0, -1.0, 0.25, 300.0] {
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let lse = log_sum_exp(&shifted).unwrap();
            assert!((lse - (base + shift)).abs() < 1e-10);
        }
    }

    #[test]
    fn categorical_rejects_all_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = categorical_sample(&[f64::NEG_INFINITY, f64::NEG_INFINITY], &mut rng);
        assert!(err.is_err());
    }

    #[test]
    fn categorical_consumes_one_draw() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let _ = categorical_sample(&[0.0, 0.0, 0.0], &mut a).unwrap();
        let _: f64 = b.gen();
        // Both generators must now be in the same position.
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn categorical_uniform_frequencies_within_three_sigma() {
        let k = 10;
        let n = 100_000usize;
        let weights = vec![0.0; k];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = vec![0usize; k];
        for _ in 0..n {
            counts[categorical_sample(&weights, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / k as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - n as f64 * p).abs() < 3.0 * sigma,
                "count {c} outside 3 sigma of {}",
                n as f64 * p
            );
        }
    }

    #[test]
    fn categorical_two_point_frequencies() {
        // Weights ln(0.9), ln(0.1): empirical frequency of index 0 should
        // land inside a generous binomial interval around 0.9.
        let weights = [0.9_f64.ln(), 0.1_f64.ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000usize;
        let mut hits = 0usize;
        for _ in 0..n {
            if categorical_sample(&weights, &mut rng).unwrap() == 0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((0.885..=0.915).contains(&freq), "freq {freq}");
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = [0.2, 0.5, 0.3];
        assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn kl_hand_value() {
        let kl = kl_divergence(&[0.7, 0.3], &[0.5, 0.5]).unwrap();
        let expect = 0.7 * (1.4_f64).ln() + 0.3 * (0.6_f64).ln();
        assert!((kl - expect).abs() < 1e-15);
        assert!((kl - 0.082_28).abs() < 1e-4);
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        // Gamma(1) = Gamma(2) = 1, Gamma(5) = 24, Gamma(0.5) = sqrt(pi).
        assert!(ln_gamma(1.0).abs() < 1e-10);
        assert!(ln_gamma(2.0).abs() < 1e-10);
        assert!((ln_gamma(5.0) - 24.0_f64.ln()).abs() < 1e-10);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-10);
    }

    #[test]
    fn hyper_validation_rejects_nonpositive() {
        let good = GaussCatHyper {
            dirichlet_alpha: 1.0,
            ng_mean0: vec![0.0],
            ng_kappa0: 0.1,
            ng_a0: 2.0,
            ng_b0: 2.0,
            num_signs: 4,
            num_categories: 4,
        };
        assert!(good.validate().is_ok());
        let mut bad = good.clone();
        bad.dirichlet_alpha = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.ng_b0 = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = good;
        bad.num_categories = 0;
        assert!(bad.validate().is_err());
    }
}
