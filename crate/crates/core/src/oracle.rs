//! Exact ground truth for the naming game on instances small enough to
//! enumerate.
//!
//! A [`TinyInstance`] pins every parameter (emission Gaussians, count
//! tables, observations), so the sign posterior
//!
//! ```text
//! p(w | o) ∝ p(w) prod_k sum_z p(o_k | theta_kz) p(z | w, phi_k)
//! ```
//!
//! factorizes over objects and can be tabulated exactly. Three estimators of
//! the same distribution are then comparable in total variation: the exact
//! table, a centralized collapsed Gibbs sampler that sees every agent's
//! parameters at once, and the decentralized naming game, which sees one
//! pairwise message per object per round. The game matching the table is
//! the point: the protocol is a sampler for a posterior that no single
//! agent can write down.
//!
//! Parameters stay fixed throughout; these chains isolate the sign kernel
//! from learning dynamics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::AgentState;
use crate::error::{Error, Result};
use crate::prob::{log_gaussian_diag, log_sum_exp, normalize_log_weights, GaussCatHyper};
use crate::protocol::{run_round, Mode, SignAssignment, Variant};
use crate::world::ObservationSet;

const MAX_JOINT_STATES: usize = 256;

/// A fully pinned instance: `num_agents` observers of `num_objects`
/// objects, each with explicit per-category Gaussians and sign-category
/// counts. Sizes are capped so the joint sign space stays enumerable.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    /// `theta[k][z] = (mean, precision)` per feature.
    thetas: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
    /// `phis[k][w][z]` co-occurrence counts.
    phis: Vec<Vec<Vec<u64>>>,
    /// `observations[k][d]` feature vectors.
    observations: Vec<Vec<Vec<f64>>>,
    alpha: f64,
    num_signs: usize,
    num_categories: usize,
}

impl TinyInstance {
    pub fn new(
        thetas: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
        phis: Vec<Vec<Vec<u64>>>,
        observations: Vec<Vec<Vec<f64>>>,
        alpha: f64,
        num_signs: usize,
        num_categories: usize,
    ) -> Result<Self> {
        let num_agents = thetas.len();
        if !(2..=3).contains(&num_agents) {
            return Err(Error::InvalidArgument(
                "tiny instances support two or three agents".into(),
            ));
        }
        if phis.len() != num_agents || observations.len() != num_agents {
            return Err(Error::InvalidArgument(
                "per-agent containers must agree on the agent count".into(),
            ));
        }
        if num_signs == 0 || num_signs > 4 || num_categories == 0 || num_categories > 4 {
            return Err(Error::InvalidArgument(
                "sign and category inventories are capped at 4".into(),
            ));
        }
        let num_objects = observations[0].len();
        if num_objects == 0 || num_objects > 4 {
            return Err(Error::InvalidArgument(
                "tiny instances support one to four objects".into(),
            ));
        }
        if num_signs.pow(num_objects as u32) > MAX_JOINT_STATES {
            return Err(Error::InvalidArgument(format!(
                "joint sign space exceeds {MAX_JOINT_STATES} states"
            )));
        }
        let dim = thetas[0][0].0.len();
        for k in 0..num_agents {
            if thetas[k].len() != num_categories {
                return Err(Error::InvalidArgument(format!(
                    "agent {k}: need {num_categories} categories of parameters"
                )));
            }
            for (z, (mean, prec)) in thetas[k].iter().enumerate() {
                if mean.len() != dim || prec.len() != dim {
                    return Err(Error::InvalidArgument(format!(
                        "agent {k} category {z}: inconsistent feature dimension"
                    )));
                }
            }
            if phis[k].len() != num_signs
                || phis[k].iter().any(|row| row.len() != num_categories)
            {
                return Err(Error::InvalidArgument(format!(
                    "agent {k}: phi must be {num_signs} x {num_categories}"
                )));
            }
            if observations[k].len() != num_objects
                || observations[k].iter().any(|o| o.len() != dim)
            {
                return Err(Error::InvalidArgument(format!(
                    "agent {k}: observations must be {num_objects} x {dim}"
                )));
            }
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            thetas,
            phis,
            observations,
            alpha,
            num_signs,
            num_categories,
        })
    }

    /// The reference instance used across the validation suite: two agents,
    /// two objects, two signs, two categories, one feature. The agents'
    /// count tables deliberately disagree in sharpness so neither agent's
    /// private posterior matches the product posterior.
    pub fn standard() -> Self {
        Self::new(
            vec![
                vec![
                    (vec![-1.0], vec![1.0]),
                    (vec![1.0], vec![1.0]),
                ],
                vec![
                    (vec![-2.0], vec![0.5]),
                    (vec![2.0], vec![0.5]),
                ],
            ],
            vec![
                vec![vec![4, 1], vec![1, 3]],
                vec![vec![2, 0], vec![0, 2]],
            ],
            vec![
                vec![vec![-0.8], vec![0.7]],
                vec![vec![-1.5], vec![2.5]],
            ],
            1.0,
            2,
            2,
        )
        .expect("reference instance is well formed")
    }

    pub fn num_agents(&self) -> usize {
        self.thetas.len()
    }

    pub fn num_objects(&self) -> usize {
        self.observations[0].len()
    }

    pub fn num_signs(&self) -> usize {
        self.num_signs
    }

    /// The instance's observations in the shape the protocol consumes.
    pub fn observation_set(&self) -> ObservationSet {
        let contexts = vec![vec![0; self.num_objects()]; self.num_agents()];
        ObservationSet::new(self.observations.clone(), contexts, None)
            .expect("validated at construction")
    }

    /// Live agents carrying exactly this instance's parameters. Initial
    /// category assignments are all zero; parameter updates are never run
    /// on oracle chains, so the Normal-Gamma block of the prior is inert.
    pub fn agents(&self) -> Vec<AgentState> {
        let dim = self.thetas[0][0].0.len();
        (0..self.num_agents())
            .map(|k| {
                let hyper = GaussCatHyper {
                    dirichlet_alpha: self.alpha,
                    ng_mean0: vec![0.0; dim],
                    ng_kappa0: 1.0,
                    ng_a0: 1.0,
                    ng_b0: 1.0,
                    num_signs: self.num_signs,
                    num_categories: self.num_categories,
                };
                let (means, precisions) = self.thetas[k].iter().cloned().unzip();
                AgentState::from_parameters(
                    k,
                    hyper,
                    vec![0; self.num_objects()],
                    means,
                    precisions,
                    self.phis[k].clone(),
                )
                .expect("validated at construction")
            })
            .collect()
    }

    /// `ln p(w) + sum_k ln sum_z p(o_kd | theta_kz) p(z | w, phi_k)` for one
    /// object; the unnormalized per-object log posterior.
    fn object_log_weight(&self, object: usize, sign: usize) -> Result<f64> {
        let mut total = -(self.num_signs as f64).ln();
        for k in 0..self.num_agents() {
            let x = &self.observations[k][object];
            let row = &self.phis[k][sign];
            let row_total: f64 =
                row.iter().map(|&c| c as f64).sum::<f64>() + self.num_categories as f64 * self.alpha;
            let mut terms = Vec::with_capacity(self.num_categories);
            for (z, &count) in row.iter().enumerate() {
                let (mean, prec) = &self.thetas[k][z];
                let pred = ((count as f64 + self.alpha) / row_total).ln();
                terms.push(log_gaussian_diag(x, mean, prec)? + pred);
            }
            total += log_sum_exp(&terms)?;
        }
        Ok(total)
    }
}

/// The exact sign posterior of a [`TinyInstance`]: normalized per-object
/// tables and their product over objects, indexed little-endian (object 0
/// is the lowest digit).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    per_object: Vec<Vec<f64>>,
    joint: Vec<f64>,
    num_signs: usize,
}

impl PosteriorTable {
    pub fn per_object(&self) -> &[Vec<f64>] {
        &self.per_object
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn num_signs(&self) -> usize {
        self.num_signs
    }

    /// Flat index of a full sign vector.
    pub fn joint_index(&self, signs: &[usize]) -> usize {
        signs
            .iter()
            .rev()
            .fold(0, |acc, &w| acc * self.num_signs + w)
    }
}

/// Tabulates the exact posterior by direct summation.
pub fn enumerate_posterior(instance: &TinyInstance) -> Result<PosteriorTable> {
    let num_objects = instance.num_objects();
    let num_signs = instance.num_signs();
    let mut per_object = Vec::with_capacity(num_objects);
    for d in 0..num_objects {
        let weights: Vec<f64> = (0..num_signs)
            .map(|w| instance.object_log_weight(d, w))
            .collect::<Result<_>>()?;
        per_object.push(normalize_log_weights(&weights)?);
    }
    let states = num_signs.pow(num_objects as u32);
    let mut joint = Vec::with_capacity(states);
    for idx in 0..states {
        let mut p = 1.0;
        let mut rest = idx;
        for row in &per_object {
            p *= row[rest % num_signs];
            rest /= num_signs;
        }
        joint.push(p);
    }
    Ok(PosteriorTable {
        per_object,
        joint,
        num_signs,
    })
}

/// Centralized collapsed Gibbs over the sign vector: every site update
/// reads all agents' parameters at once, which no agent in the game can do.
/// Starts from all zeros, drops the first fifth as burn-in, returns the
/// kept sign vectors.
pub fn centralized_gibbs(
    instance: &TinyInstance,
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("need at least one iteration".into()));
    }
    let num_objects = instance.num_objects();
    let num_signs = instance.num_signs();
    let mut state = vec![0usize; num_objects];
    let burn_in = iterations / 5;
    let mut kept = Vec::with_capacity(iterations - burn_in);
    for it in 0..iterations {
        for (d, slot) in state.iter_mut().enumerate() {
            let weights: Vec<f64> = (0..num_signs)
                .map(|w| instance.object_log_weight(d, w))
                .collect::<Result<_>>()?;
            *slot = crate::prob::categorical_sample(&weights, rng)?;
        }
        if it >= burn_in {
            kept.push(state.clone());
        }
    }
    Ok(kept)
}

/// Runs the naming game on a tiny instance with parameters held fixed:
/// agents perceive (in sampled mode) and play rounds, but never update. The
/// recorded sign vectors, after a one-fifth burn-in, are samples from
/// whatever distribution the chosen variant actually targets.
pub fn decentralized_chain(
    instance: &TinyInstance,
    variant: Variant,
    mode: Mode,
    rounds: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("need at least one round".into()));
    }
    let mut agents = instance.agents();
    let observations = instance.observation_set();
    let mut signs = SignAssignment::new(instance.num_objects(), instance.num_signs())?;
    let burn_in = rounds / 5;
    let mut kept = Vec::with_capacity(rounds - burn_in);
    for round in 0..rounds {
        if mode == Mode::Sampled {
            for agent in &mut agents {
                agent.perceive(&observations, signs.as_slice(), rng)?;
            }
        }
        run_round(
            &agents,
            &mut signs,
            &observations,
            variant,
            mode,
            round as u32,
            rng,
        )?;
        if round >= burn_in {
            kept.push(signs.as_slice().to_vec());
        }
    }
    Ok(kept)
}

/// Empirical distribution of a chain over the joint sign space,
/// little-endian indexed like [`PosteriorTable::joint`].
pub fn empirical_joint(
    chain: &[Vec<usize>],
    num_signs: usize,
    num_objects: usize,
) -> Result<Vec<f64>> {
    if chain.is_empty() {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    let states = num_signs.pow(num_objects as u32);
    let mut counts = vec![0u64; states];
    for sample in chain {
        if sample.len() != num_objects {
            return Err(Error::InvalidArgument(format!(
                "sample of length {}, expected {num_objects}",
                sample.len()
            )));
        }
        let mut idx = 0;
        for &w in sample.iter().rev() {
            if w >= num_signs {
                return Err(Error::InvalidArgument(format!(
                    "sign {w} out of range {num_signs}"
                )));
            }
            idx = idx * num_signs + w;
        }
        counts[idx] += 1;
    }
    let n = chain.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// `0.5 sum_i |p_i - q_i|` over distributions of equal length.
pub fn total_variation_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "distributions of different or zero length: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Convenience: seeded chain-vs-table distances for the standard instance.
pub fn standard_chain_tv(
    variant: Variant,
    mode: Mode,
    rounds: usize,
    seed: u64,
) -> Result<f64> {
    let instance = TinyInstance::standard();
    let table = enumerate_posterior(&instance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = decentralized_chain(&instance, variant, mode, rounds, &mut rng)?;
    let empirical = empirical_joint(&chain, instance.num_signs(), instance.num_objects())?;
    total_variation_distance(&empirical, table.joint())
}
