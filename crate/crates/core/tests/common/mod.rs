//! Numerical oracle for the Normal-Gamma posterior predictive, shared by the
//! integration tests. Everything here is derived independently of the
//! library: the posterior is built by sequential one-point conjugate
//! updates (the library updates in batch from sufficient statistics), and
//! the predictive density is evaluated by direct quadrature of the mixing
//! integral instead of the closed-form Student-t.

#![allow(dead_code)]

/// Posterior hyperparameters in the same (mean, kappa, shape, rate)
/// convention as the library, but owned by the tests.
#[derive(Debug, Clone, Copy)]
pub struct NgParams {
    pub mean: f64,
    pub kappa: f64,
    pub shape: f64,
    pub rate: f64,
}

/// Conjugate update applied one observation at a time. For a single point
/// x the Normal-Gamma posterior moves as
///
///   kappa' = kappa + 1
///   mean'  = (kappa mean + x) / kappa'
///   shape' = shape + 1/2
///   rate'  = rate + kappa (x - mean)^2 / (2 kappa')
///
/// and conjugacy makes the order irrelevant, so folding the dataset through
/// this recurrence must land on the same posterior as any batch formula.
pub fn sequential_posterior(mean0: f64, kappa0: f64, shape0: f64, rate0: f64, data: &[f64]) -> NgParams {
    let mut p = NgParams {
        mean: mean0,
        kappa: kappa0,
        shape: shape0,
        rate: rate0,
    };
    for &x in data {
        let kappa_next = p.kappa + 1.0;
        let delta = x - p.mean;
        p.rate += p.kappa * delta * delta / (2.0 * kappa_next);
        p.mean = (p.kappa * p.mean + x) / kappa_next;
        p.kappa = kappa_next;
        p.shape += 0.5;
    }
    p
}

/// `ln of integral exp(s u - t e^u) du` over the real line, by composite
/// Simpson around the peak u* = ln(s/t). This is the Gamma-type integral
/// `integral lambda^(s-1) exp(-t lambda) dlambda` after lambda = e^u; doing
/// it in log space keeps the integrand bounded and the grid uniform.
///
/// The left tail decays like exp(s (u - u*)) and the right tail doubly
/// exponentially, so [u* - 30, u* + 8] truncates below 1e-26 of the peak
/// for s >= 1. Simpson on 5601 points holds the relative error near 1e-9.
fn log_exp_integral(s: f64, t: f64) -> f64 {
    assert!(s >= 1.0 && t > 0.0, "integral parameters out of range: s={s}, t={t}");
    let u_star = (s / t).ln();
    let lo = u_star - 30.0;
    let hi = u_star + 8.0;
    let n = 5600usize; // interval count, even for Simpson
    let h = (hi - lo) / n as f64;
    let g = |u: f64| s * u - t * u.exp();
    let g_max = g(u_star);
    let mut acc = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * (g(lo + i as f64 * h) - g_max).exp();
    }
    g_max + (acc * h / 3.0).ln()
}

/// Predictive density at `x` by quadrature. Integrating the mean out of
/// Normal(x | mu, 1/lambda) against Normal(mu | m, 1/(kappa lambda)) leaves
/// Normal(x | m, c/lambda) with c = (kappa + 1)/kappa, so
///
///   p(x) = integral sqrt(lambda/(2 pi c)) exp(-lambda (x-m)^2/(2c))
///            Gamma(lambda | a, b) dlambda
///
/// and writing the Gamma normalizer b^a/Gamma(a) as the reciprocal of
/// `integral lambda^(a-1) exp(-b lambda) dlambda` gives a ratio of two
/// integrals of the same shape, with no Gamma function anywhere:
///
///   p(x) = I(a + 1/2, b + (x-m)^2/(2c)) / (sqrt(2 pi c) I(a, b))
pub fn predictive_pdf(p: &NgParams, x: f64) -> f64 {
    let c = (p.kappa + 1.0) / p.kappa;
    let t = p.rate + (x - p.mean) * (x - p.mean) / (2.0 * c);
    let log_num = log_exp_integral(p.shape + 0.5, t);
    let log_den = 0.5 * (2.0 * std::f64::consts::PI * c).ln() + log_exp_integral(p.shape, p.rate);
    (log_num - log_den).exp()
}

/// Outcome of comparing a log-density implementation against the oracle on
/// a common grid.
#[derive(Debug, Clone, Copy)]
pub struct DensityComparison {
    /// `0.5 integral |p_impl - p_oracle| dx`.
    pub tv: f64,
    /// `integral p_impl dx`, which must be 1 for a density.
    pub impl_mass: f64,
    /// `integral p_oracle dx`, a self-check on the quadrature itself.
    pub oracle_mass: f64,
}

/// Simpson weights for a panel of `n + 1` points (`n` even), scaled by h/3.
fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2 && n % 2 == 0);
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Integrates both densities over a three-panel grid centered on the
/// posterior mean: a fine panel within 25 scale units and coarse panels out
/// to 400, where the t tails (degrees of freedom >= 2 shape) have dropped
/// below 1e-9 of the total mass.
pub fn compare_density(p: &NgParams, impl_logpdf: impl Fn(f64) -> f64) -> DensityComparison {
    let scale = (p.rate * (p.kappa + 1.0) / (p.shape * p.kappa)).sqrt();
    let panels: [(f64, f64, usize); 3] = [
        (p.mean - 400.0 * scale, p.mean - 25.0 * scale, 1600),
        (p.mean - 25.0 * scale, p.mean + 25.0 * scale, 4000),
        (p.mean + 25.0 * scale, p.mean + 400.0 * scale, 1600),
    ];
    let mut tv = 0.0;
    let mut impl_mass = 0.0;
    let mut oracle_mass = 0.0;
    for (lo, hi, n) in panels {
        let h = (hi - lo) / n as f64;
        let weights = simpson_weights(n, h);
        for (i, w) in weights.iter().enumerate() {
            let x = lo + i as f64 * h;
            let pi = impl_logpdf(x).exp();
            let po = predictive_pdf(p, x);
            tv += w * (pi - po).abs();
            impl_mass += w * pi;
            oracle_mass += w * po;
        }
    }
    DensityComparison {
        tv: 0.5 * tv,
        impl_mass,
        oracle_mass,
    }
}
