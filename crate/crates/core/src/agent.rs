//! A single agent: a private Gaussian mixture over categories coupled to a
//! shared sign inventory through a co-occurrence table.
//!
//! Each agent owns
//!
//! * `theta`: one diagonal Gaussian per category, fit to the agent's own
//!   sensory channel (point estimates under a per-feature Normal-Gamma
//!   prior),
//! * `phi`: sign-by-category counts, read through symmetric Dirichlet
//!   smoothing,
//! * `assignments`: the agent's current category guess per object.
//!
//! The naming protocol drives agents only through five operations:
//! [`AgentState::perceive`], [`AgentState::propose_sign`],
//! [`AgentState::acceptance_probability`], [`AgentState::decide`], and
//! [`AgentState::update_parameters`]. A speaker proposes a sign from its own
//! posterior; a listener accepts with the ratio of its own marginal
//! likelihoods for the proposed and current signs. Because the proposal does
//! not depend on the current sign, the proposal density cancels against the
//! speaker's factor of the joint posterior and the exchange is a valid
//! Metropolis-Hastings move on the shared sign, even though neither side
//! ever reads the other's parameters.
//!
//! Everything else on this type is read-only state for evaluation,
//! checkpointing, and tests.
//!
//! Freezing (`set_frozen`) stops language change only: a frozen agent still
//! perceives and refits `theta`, but [`AgentState::decide`] rejects every
//! proposal without consuming randomness and `phi` stops updating.
//!
//! When constructed with an empty `ng_mean0`, the agent anchors its
//! Normal-Gamma prior empirically: on every parameter update, `ng_mean0`
//! becomes the per-feature grand mean of its current observations and
//! `ng_b0` becomes `ng_a0` times their pooled variance. Categories that lose
//! all members therefore fall back to a broad distribution centered on the
//! data instead of a stale location, which is what lets the population
//! recruit them again after the world changes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{
    categorical_sample, dirichlet_predictive, log_gaussian_diag, log_sum_exp,
    normal_gamma_update, GaussCatHyper,
};
use crate::protocol::Mode;
use crate::world::ObservationSet;

/// Emission parameters of one category, in point-estimate form: posterior
/// mean of the mean and posterior mean of the precision, per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Category {
    mean: Vec<f64>,
    precision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    agent_id: usize,
    assignments: Vec<usize>,
    theta: Vec<Category>,
    /// `phi[w][z]` counts objects currently named `w` and categorized `z`.
    phi: Vec<Vec<u64>>,
    hyper: GaussCatHyper,
    frozen_language: bool,
    data_anchored: bool,
}

impl AgentState {
    /// Initializes an agent from the prior. Category guesses are uniform
    /// (one draw per object, in object order), `theta` is drawn from the
    /// Normal-Gamma prior (per category, per feature: precision, then mean
    /// with standard deviation `sqrt(ng_b0 / ng_a0)`), and `phi` starts at
    /// zero.
    ///
    /// An empty `hyper.ng_mean0` requests empirical anchoring; the incoming
    /// `ng_b0` is then a placeholder and both fields are computed from the
    /// observations before anything is drawn.
    pub fn init(
        agent_id: usize,
        hyper: GaussCatHyper,
        observations: &ObservationSet,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        hyper.validate()?;
        let data_anchored = hyper.ng_mean0.is_empty();
        let num_signs = hyper.num_signs;
        let num_categories = hyper.num_categories;
        let mut state = Self {
            agent_id,
            assignments: Vec::new(),
            theta: Vec::new(),
            phi: vec![vec![0; num_categories]; num_signs],
            hyper,
            frozen_language: false,
            data_anchored,
        };
        if data_anchored {
            state.refresh_anchor(observations)?;
        }
        let feats = state.features_of(observations)?;
        let num_objects = feats.len();

        let uniform = vec![0.0; num_categories];
        for _ in 0..num_objects {
            state.assignments.push(categorical_sample(&uniform, rng)?);
        }

        let dim = state.hyper.ng_mean0.len();
        let precision_prior = Gamma::new(state.hyper.ng_a0, 1.0 / state.hyper.ng_b0)
            .map_err(|e| Error::InvalidArgument(format!("precision prior: {e}")))?;
        let mean_sd = (state.hyper.ng_b0 / state.hyper.ng_a0).sqrt();
        for _ in 0..num_categories {
            let mut mean = Vec::with_capacity(dim);
            let mut precision = Vec::with_capacity(dim);
            for i in 0..dim {
                precision.push(rng.sample(precision_prior));
                let loc = Normal::new(state.hyper.ng_mean0[i], mean_sd)
                    .map_err(|e| Error::InvalidArgument(format!("mean prior: {e}")))?;
                mean.push(rng.sample(loc));
            }
            state.theta.push(Category { mean, precision });
        }
        Ok(state)
    }

    /// Builds an agent with explicit parameters. No randomness; hyper must
    /// carry a concrete (non-empty) `ng_mean0`.
    pub fn from_parameters(
        agent_id: usize,
        hyper: GaussCatHyper,
        assignments: Vec<usize>,
        means: Vec<Vec<f64>>,
        precisions: Vec<Vec<f64>>,
        phi: Vec<Vec<u64>>,
    ) -> Result<Self> {
        hyper.validate()?;
        let dim = hyper.ng_mean0.len();
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "from_parameters requires a concrete ng_mean0".into(),
            ));
        }
        if means.len() != hyper.num_categories || precisions.len() != hyper.num_categories {
            return Err(Error::InvalidArgument(format!(
                "need {} categories of parameters, got {} means and {} precisions",
                hyper.num_categories,
                means.len(),
                precisions.len()
            )));
        }
        for (z, (m, p)) in means.iter().zip(&precisions).enumerate() {
            if m.len() != dim || p.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "category {z}: parameter dimension must be {dim}"
                )));
            }
            if p.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "category {z}: precisions must be positive and finite"
                )));
            }
        }
        if phi.len() != hyper.num_signs
            || phi.iter().any(|row| row.len() != hyper.num_categories)
        {
            return Err(Error::InvalidArgument(format!(
                "phi must be {} x {}",
                hyper.num_signs, hyper.num_categories
            )));
        }
        if assignments.iter().any(|&z| z >= hyper.num_categories) {
            return Err(Error::InvalidArgument(
                "assignment out of category range".into(),
            ));
        }
        let theta = means
            .into_iter()
            .zip(precisions)
            .map(|(mean, precision)| Category { mean, precision })
            .collect();
        Ok(Self {
            agent_id,
            assignments,
            theta,
            phi,
            hyper,
            frozen_language: false,
            data_anchored: false,
        })
    }

    /// Resamples every category assignment from its conditional
    /// `q(z_d) ∝ p(o_d | theta_z) p(z | w_d, phi)`, sweeping objects in
    /// order. Consumes exactly one draw per object.
    pub fn perceive(
        &mut self,
        observations: &ObservationSet,
        signs: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let feats = self.features_of(observations)?;
        self.check_signs(signs, feats.len())?;
        let mut next = Vec::with_capacity(feats.len());
        for (d, x) in feats.iter().enumerate() {
            let mut weights = self.log_likelihoods(x)?;
            let pred = self.phi_log_predictive(signs[d])?;
            for (wz, lp) in weights.iter_mut().zip(&pred) {
                *wz += lp;
            }
            next.push(categorical_sample(&weights, rng)?);
        }
        self.assignments = next;
        Ok(())
    }

    /// Draws a sign proposal for one object from the agent's own posterior
    /// under a uniform sign prior. Consumes exactly one draw.
    pub fn propose_sign(
        &self,
        object: usize,
        mode: Mode,
        observations: &ObservationSet,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        let weights = self.sign_log_weights(object, mode, observations)?;
        categorical_sample(&weights, rng)
    }

    /// The listener-side correction: the probability of adopting `proposed`
    /// over `current` for `object`, `min(1, L(proposed) / L(current))` with
    /// `L` the agent's own marginal likelihood of a sign. Consumes no
    /// randomness.
    pub fn acceptance_probability(
        &self,
        object: usize,
        proposed: usize,
        current: usize,
        mode: Mode,
        observations: &ObservationSet,
    ) -> Result<f64> {
        let num = self.sign_log_likelihood(object, proposed, mode, observations)?;
        let den = self.sign_log_likelihood(object, current, mode, observations)?;
        // A current sign of zero likelihood always loses; zero over zero
        // also accepts so the chain cannot wedge on an impossible state.
        if den == f64::NEG_INFINITY {
            return Ok(1.0);
        }
        if num == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        Ok((num - den).exp().min(1.0))
    }

    /// Turns an acceptance probability into a decision. Frozen agents
    /// refuse without touching the generator; otherwise consumes exactly one
    /// draw.
    pub fn decide(&self, acceptance: f64, rng: &mut ChaCha8Rng) -> bool {
        if self.frozen_language {
            return false;
        }
        rng.gen::<f64>() < acceptance
    }

    /// Refits `theta` to the current assignments by conjugate update and
    /// recounts `phi` from the current (sign, category) pairs. A frozen
    /// agent keeps its `phi`. Data-anchored agents first recompute the
    /// Normal-Gamma anchor from the observations.
    pub fn update_parameters(
        &mut self,
        observations: &ObservationSet,
        signs: &[usize],
    ) -> Result<()> {
        if self.data_anchored {
            self.refresh_anchor(observations)?;
        }
        let feats = self.features_of(observations)?;
        self.check_signs(signs, feats.len())?;
        let dim = self.hyper.ng_mean0.len();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.hyper.num_categories];
        for (d, &z) in self.assignments.iter().enumerate() {
            members[z].push(d);
        }
        for (z, ds) in members.iter().enumerate() {
            let mut column = Vec::with_capacity(ds.len());
            // Features are row-major; fitting is per dimension.
            #[allow(clippy::needless_range_loop)]
            for i in 0..dim {
                column.clear();
                column.extend(ds.iter().map(|&d| feats[d][i]));
                let post = normal_gamma_update(
                    self.hyper.ng_mean0[i],
                    self.hyper.ng_kappa0,
                    self.hyper.ng_a0,
                    self.hyper.ng_b0,
                    &column,
                )?;
                self.theta[z].mean[i] = post.mean;
                self.theta[z].precision[i] = post.precision_mean();
            }
        }
        if !self.frozen_language {
            for row in &mut self.phi {
                row.fill(0);
            }
            for (d, &w) in signs.iter().enumerate() {
                self.phi[w][self.assignments[d]] += 1;
            }
        }
        Ok(())
    }

    /// The agent's best sign for an object: the mode of its proposal
    /// distribution, lowest index on ties. Evaluation only; consumes no
    /// randomness.
    pub fn map_sign_estimate(
        &self,
        object: usize,
        mode: Mode,
        observations: &ObservationSet,
    ) -> Result<usize> {
        let weights = self.sign_log_weights(object, mode, observations)?;
        let mut best = 0;
        let mut best_weight = f64::NEG_INFINITY;
        for (w, &value) in weights.iter().enumerate() {
            if value > best_weight {
                best = w;
                best_weight = value;
            }
        }
        Ok(best)
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn num_categories(&self) -> usize {
        self.hyper.num_categories
    }

    pub fn num_signs(&self) -> usize {
        self.hyper.num_signs
    }

    pub fn hyper(&self) -> &GaussCatHyper {
        &self.hyper
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen_language
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen_language = frozen;
    }

    pub fn category_mean(&self, category: usize) -> &[f64] {
        &self.theta[category].mean
    }

    pub fn category_precision(&self, category: usize) -> &[f64] {
        &self.theta[category].precision
    }

    pub fn phi_counts(&self) -> &[Vec<u64>] {
        &self.phi
    }

    /// Smoothed `p(z | w)` row for one sign.
    pub fn phi_predictive(&self, sign: usize) -> Result<Vec<f64>> {
        if sign >= self.hyper.num_signs {
            return Err(Error::InvalidArgument(format!(
                "sign {sign} out of range {}",
                self.hyper.num_signs
            )));
        }
        dirichlet_predictive(&self.phi[sign], self.hyper.dirichlet_alpha)
    }

    /// Per-category log likelihood of one object's features. Evaluation
    /// readout; also the likelihood factor inside perception.
    pub fn likelihood_log_weights(
        &self,
        object: usize,
        observations: &ObservationSet,
    ) -> Result<Vec<f64>> {
        let feats = self.features_of(observations)?;
        let x = feats.get(object).ok_or_else(|| {
            Error::InvalidArgument(format!("object {object} out of range {}", feats.len()))
        })?;
        self.log_likelihoods(x)
    }

    fn log_likelihoods(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.theta
            .iter()
            .map(|cat| log_gaussian_diag(x, &cat.mean, &cat.precision))
            .collect()
    }

    fn phi_log_predictive(&self, sign: usize) -> Result<Vec<f64>> {
        Ok(self
            .phi_predictive(sign)?
            .into_iter()
            .map(f64::ln)
            .collect())
    }

    /// Unnormalized log posterior over signs for one object: uniform prior
    /// times the agent's marginal likelihood of each sign.
    fn sign_log_weights(
        &self,
        object: usize,
        mode: Mode,
        observations: &ObservationSet,
    ) -> Result<Vec<f64>> {
        let ln_prior = -(self.hyper.num_signs as f64).ln();
        (0..self.hyper.num_signs)
            .map(|w| {
                Ok(ln_prior + self.sign_log_likelihood(object, w, mode, observations)?)
            })
            .collect()
    }

    /// Log of the agent's marginal likelihood of naming `object` with
    /// `sign`: in sampled mode conditioned on the current assignment, in
    /// collapsed mode with the category summed out.
    fn sign_log_likelihood(
        &self,
        object: usize,
        sign: usize,
        mode: Mode,
        observations: &ObservationSet,
    ) -> Result<f64> {
        let feats = self.features_of(observations)?;
        if object >= feats.len() {
            return Err(Error::InvalidArgument(format!(
                "object {object} out of range {}",
                feats.len()
            )));
        }
        let pred = self.phi_log_predictive(sign)?;
        match mode {
            Mode::Sampled => Ok(pred[self.assignments[object]]),
            Mode::Collapsed => {
                let ll = self.log_likelihoods(&feats[object])?;
                let joint: Vec<f64> = ll.iter().zip(&pred).map(|(a, b)| a + b).collect();
                log_sum_exp(&joint)
            }
        }
    }

    fn refresh_anchor(&mut self, observations: &ObservationSet) -> Result<()> {
        if self.agent_id >= observations.num_agents() {
            return Err(Error::InvalidArgument(format!(
                "agent {} not present in observation set of {} agents",
                self.agent_id,
                observations.num_agents()
            )));
        }
        let feats = observations.agent_features(self.agent_id);
        let dim = feats[0].len();
        let n = feats.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in feats {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut pooled = 0.0;
        for row in feats {
            for (m, v) in mean.iter().zip(row) {
                pooled += (v - m) * (v - m);
            }
        }
        // Floor keeps degenerate (constant) data from producing an infinite
        // precision prior.
        pooled = (pooled / (n * dim as f64)).max(1e-9);
        self.hyper.ng_mean0 = mean;
        self.hyper.ng_b0 = self.hyper.ng_a0 * pooled;
        Ok(())
    }

    fn features_of<'a>(&self, observations: &'a ObservationSet) -> Result<&'a [Vec<f64>]> {
        if self.agent_id >= observations.num_agents() {
            return Err(Error::InvalidArgument(format!(
                "agent {} not present in observation set of {} agents",
                self.agent_id,
                observations.num_agents()
            )));
        }
        let feats = observations.agent_features(self.agent_id);
        if feats[0].len() != self.hyper.ng_mean0.len() {
            return Err(Error::InvalidArgument(format!(
                "feature dimension {} does not match agent prior dimension {}",
                feats[0].len(),
                self.hyper.ng_mean0.len()
            )));
        }
        if !self.assignments.is_empty() && feats.len() != self.assignments.len() {
            return Err(Error::InvalidArgument(format!(
                "observation set has {} objects, agent tracks {}",
                feats.len(),
                self.assignments.len()
            )));
        }
        Ok(feats)
    }

    fn check_signs(&self, signs: &[usize], num_objects: usize) -> Result<()> {
        if signs.len() != num_objects {
            return Err(Error::InvalidArgument(format!(
                "{} signs for {num_objects} objects",
                signs.len()
            )));
        }
        if signs.iter().any(|&w| w >= self.hyper.num_signs) {
            return Err(Error::InvalidArgument(
                "sign value out of inventory range".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::LN_2PI;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn hyper_1d() -> GaussCatHyper {
        GaussCatHyper {
            dirichlet_alpha: 1.0,
            ng_mean0: vec![0.0],
            ng_kappa0: 0.1,
            ng_a0: 2.0,
            ng_b0: 2.0,
            num_signs: 2,
            num_categories: 2,
        }
    }

    fn obs_1d(features: Vec<Vec<f64>>) -> ObservationSet {
        let rows: Vec<Vec<Vec<f64>>> = vec![features.clone(), features];
        let contexts = vec![vec![0; rows[0].len()]; 2];
        ObservationSet::new(rows, contexts, None).unwrap()
    }

    /// Two well-separated categories, uninformative phi.
    fn separated_agent(assignments: Vec<usize>) -> AgentState {
        AgentState::from_parameters(
            0,
            hyper_1d(),
            assignments,
            vec![vec![-5.0], vec![5.0]],
            vec![vec![4.0], vec![4.0]],
            vec![vec![0, 0], vec![0, 0]],
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let obs = obs_1d(vec![vec![-2.0], vec![2.0], vec![0.5]]);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let s1 = AgentState::init(0, hyper_1d(), &obs, &mut a).unwrap();
        let s2 = AgentState::init(0, hyper_1d(), &obs, &mut b).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn init_anchors_on_request() {
        let obs = obs_1d(vec![vec![-2.0], vec![2.0]]);
        let mut hyper = hyper_1d();
        hyper.ng_mean0 = Vec::new();
        hyper.ng_b0 = 1.0; // placeholder, must be replaced
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let agent = AgentState::init(0, hyper, &obs, &mut rng).unwrap();
        assert!((agent.hyper().ng_mean0[0] - 0.0).abs() < 1e-12);
        // pooled variance of {-2, 2} is 4, so b0 = a0 * 4 = 8
        assert!((agent.hyper().ng_b0 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn perceive_follows_likelihood_when_phi_is_flat() {
        let obs = obs_1d(vec![vec![-5.0], vec![5.0], vec![-5.2], vec![4.8]]);
        let mut agent = separated_agent(vec![0, 0, 0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Likelihood gaps of ~200 nats make the sweep deterministic.
        agent.perceive(&obs, &[0, 0, 0, 0], &mut rng).unwrap();
        assert_eq!(agent.assignments(), &[0, 1, 0, 1]);
    }

    #[test]
    fn perceive_consumes_one_draw_per_object() {
        let obs = obs_1d(vec![vec![-5.0], vec![5.0], vec![0.3]]);
        let mut agent = separated_agent(vec![0, 0, 0]);
        let mut a = ChaCha8Rng::seed_from_u64(12);
        let mut b = ChaCha8Rng::seed_from_u64(12);
        agent.perceive(&obs, &[1, 0, 1], &mut a).unwrap();
        for _ in 0..3 {
            let _: f64 = b.gen();
        }
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn perceive_listens_to_the_sign_channel() {
        // Identical categories: only phi can break the tie.
        let agent_template = AgentState::from_parameters(
            0,
            hyper_1d(),
            vec![0],
            vec![vec![0.0], vec![0.0]],
            vec![vec![1.0], vec![1.0]],
            vec![vec![999, 1], vec![1, 999]],
        )
        .unwrap();
        let obs = obs_1d(vec![vec![0.1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = 0;
        for _ in 0..1000 {
            let mut agent = agent_template.clone();
            agent.perceive(&obs, &[0], &mut rng).unwrap();
            if agent.assignments()[0] == 0 {
                hits += 1;
            }
        }
        // p(z = 0 | w = 0) = 1000/1002; seeing fewer than 975 would be
        // wildly out of distribution.
        assert!(hits >= 975, "only {hits}/1000 followed the sign channel");
    }

    #[test]
    fn propose_sampled_matches_predictive_ratio() {
        let agent = AgentState::from_parameters(
            0,
            hyper_1d(),
            vec![0],
            vec![vec![-5.0], vec![5.0]],
            vec![vec![4.0], vec![4.0]],
            vec![vec![9, 0], vec![0, 1]],
        )
        .unwrap();
        let obs = obs_1d(vec![vec![-5.0]]);
        // p(w = 0) = (10/11) / (10/11 + 1/3) = 30/41
        let expect = 30.0 / 41.0;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let mut hits = 0;
        for _ in 0..n {
            if agent
                .propose_sign(0, Mode::Sampled, &obs, &mut rng)
                .unwrap()
                == 0
            {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - expect).abs() < 0.005, "freq {freq}, expect {expect}");
    }

    #[test]
    fn acceptance_sampled_hand_values() {
        let agent = AgentState::from_parameters(
            0,
            hyper_1d(),
            vec![0],
            vec![vec![-5.0], vec![5.0]],
            vec![vec![4.0], vec![4.0]],
            vec![vec![9, 0], vec![0, 1]],
        )
        .unwrap();
        let obs = obs_1d(vec![vec![-5.0]]);
        // phi predictive for z = 0: 10/11 under w = 0, 1/3 under w = 1.
        let down = agent
            .acceptance_probability(0, 1, 0, Mode::Sampled, &obs)
            .unwrap();
        assert!((down - (1.0 / 3.0) / (10.0 / 11.0)).abs() < 1e-12);
        let up = agent
            .acceptance_probability(0, 0, 1, Mode::Sampled, &obs)
            .unwrap();
        assert_eq!(up, 1.0);
    }

    #[test]
    fn acceptance_collapsed_hand_value() {
        let agent = AgentState::from_parameters(
            0,
            hyper_1d(),
            vec![0],
            vec![vec![0.0], vec![4.0]],
            vec![vec![1.0], vec![1.0]],
            vec![vec![2, 0], vec![0, 2]],
        )
        .unwrap();
        let obs = obs_1d(vec![vec![1.0]]);
        // Marginal likelihoods by direct arithmetic.
        let l0 = (-0.5 * LN_2PI - 0.5f64).exp(); // N(1; 0, 1)
        let l1 = (-0.5 * LN_2PI - 4.5f64).exp(); // N(1; 4, 1)
        let lik_w0 = 0.75 * l0 + 0.25 * l1;
        let lik_w1 = 0.25 * l0 + 0.75 * l1;
        let r = agent
            .acceptance_probability(0, 1, 0, Mode::Collapsed, &obs)
            .unwrap();
        assert!((r - lik_w1 / lik_w0).abs() < 1e-12);
    }

    #[test]
    fn decide_frozen_rejects_without_randomness() {
        let mut agent = separated_agent(vec![0]);
        agent.set_frozen(true);
        let mut a = ChaCha8Rng::seed_from_u64(2);
        let mut b = ChaCha8Rng::seed_from_u64(2);
        assert!(!agent.decide(1.0, &mut a));
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        agent.set_frozen(false);
        assert!(agent.decide(1.0, &mut a));
    }

    #[test]
    fn update_matches_conjugate_posterior() {
        let obs = obs_1d(vec![vec![1.0], vec![3.0]]);
        let mut agent = separated_agent(vec![0, 0]);
        agent.update_parameters(&obs, &[0, 1]).unwrap();
        // Scalar Normal-Gamma update of m0=0, k0=0.1, a0=2, b0=2 with
        // data {1, 3}: xbar=2, ss=2, kn=2.1, mn=4/2.1, an=3,
        // bn = 2 + 1 + 0.5*0.1*2*4/2.1.
        let mn = 4.0 / 2.1;
        let bn = 3.0 + 0.4 / 2.1;
        assert!((agent.category_mean(0)[0] - mn).abs() < 1e-12);
        assert!((agent.category_precision(0)[0] - 3.0 / bn).abs() < 1e-12);
        // Empty category falls back to the prior point estimates.
        assert_eq!(agent.category_mean(1)[0], 0.0);
        assert!((agent.category_precision(1)[0] - 1.0).abs() < 1e-12);
        // phi recount: object 0 named 0, object 1 named 1, both category 0.
        assert_eq!(agent.phi_counts(), &[vec![1, 0], vec![1, 0]]);
    }

    #[test]
    fn frozen_update_keeps_phi_but_refits_theta() {
        let obs = obs_1d(vec![vec![1.0], vec![3.0]]);
        let mut agent = separated_agent(vec![0, 0]);
        agent.update_parameters(&obs, &[0, 1]).unwrap();
        let phi_before = agent.phi_counts().to_vec();
        agent.set_frozen(true);
        let obs2 = obs_1d(vec![vec![10.0], vec![12.0]]);
        agent.update_parameters(&obs2, &[1, 1]).unwrap();
        assert_eq!(agent.phi_counts(), &phi_before[..]);
        assert!(agent.category_mean(0)[0] > 5.0);
    }

    #[test]
    fn anchor_refresh_tracks_shifted_data() {
        let obs = obs_1d(vec![vec![-2.0], vec![2.0]]);
        let mut hyper = hyper_1d();
        hyper.ng_mean0 = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = AgentState::init(0, hyper, &obs, &mut rng).unwrap();
        let obs2 = obs_1d(vec![vec![8.0], vec![12.0]]);
        agent.update_parameters(&obs2, &[0, 0]).unwrap();
        assert!((agent.hyper().ng_mean0[0] - 10.0).abs() < 1e-12);
        assert!((agent.hyper().ng_b0 - 2.0 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn map_sign_breaks_ties_low() {
        let agent = separated_agent(vec![0]);
        let obs = obs_1d(vec![vec![-5.0]]);
        // Zero counts make every sign equally likely in both modes.
        assert_eq!(agent.map_sign_estimate(0, Mode::Sampled, &obs).unwrap(), 0);
        assert_eq!(
            agent.map_sign_estimate(0, Mode::Collapsed, &obs).unwrap(),
            0
        );
    }

    #[test]
    fn map_sign_prefers_the_dominant_row() {
        let agent = AgentState::from_parameters(
            0,
            hyper_1d(),
            vec![0],
            vec![vec![-5.0], vec![5.0]],
            vec![vec![4.0], vec![4.0]],
            vec![vec![0, 5], vec![7, 0]],
        )
        .unwrap();
        let obs = obs_1d(vec![vec![-5.0]]);
        // Observation sits in category 0 territory; sign 1 owns category 0.
        assert_eq!(
            agent.map_sign_estimate(0, Mode::Collapsed, &obs).unwrap(),
            1
        );
    }

    #[test]
    fn serde_round_trip_preserves_state() {
        let obs = obs_1d(vec![vec![-2.0], vec![2.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let agent = AgentState::init(1, hyper_1d(), &obs, &mut rng).unwrap();
        let json = serde_json::to_string(&agent).unwrap();
        let back: AgentState = serde_json::from_str(&json).unwrap();
        assert_eq!(agent, back);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let obs = ObservationSet::new(
            vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            vec![vec![0], vec![0]],
            None,
        )
        .unwrap();
        let mut agent = separated_agent(vec![0]);
        assert!(agent.perceive(&obs, &[0], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    proptest! {
        #[test]
        fn acceptance_stays_in_unit_interval(
            c00 in 0u64..20, c01 in 0u64..20,
            c10 in 0u64..20, c11 in 0u64..20,
            x in -10.0f64..10.0,
            proposed in 0usize..2, current in 0usize..2,
            sampled in proptest::bool::ANY,
        ) {
            let agent = AgentState::from_parameters(
                0,
                hyper_1d(),
                vec![0],
                vec![vec![-5.0], vec![5.0]],
                vec![vec![4.0], vec![4.0]],
                vec![vec![c00, c01], vec![c10, c11]],
            )
            .unwrap();
            let obs = obs_1d(vec![vec![x]]);
            let mode = if sampled { Mode::Sampled } else { Mode::Collapsed };
            let r = agent
                .acceptance_probability(0, proposed, current, mode, &obs)
                .unwrap();
            prop_assert!((0.0..=1.0).contains(&r), "r = {r}");
        }
    }
}
