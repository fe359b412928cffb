//! The population-level objective the naming game descends.
//!
//! For a sign vector `w`, per-agent category posteriors `q_k`, and agent
//! parameters `theta_k, phi_k`, the estimate decomposes per round into
//!
//! * collective regularization: for each object, the Kullback-Leibler
//!   divergence between the sign posterior implied by all agents' current
//!   categories and the uniform sign prior. Zero when the population has
//!   learned nothing shareable; grows as the lexicon sharpens.
//! * individual prediction error, per agent: the expected negative log
//!   likelihood of the agent's observations under its category posterior
//!   (conditioned on the current signs). Falls as `theta` fits the data.
//! * individual regularization, per agent: the divergence between the
//!   agent's data-driven category beliefs and the sign-conditional prior its
//!   own lexicon supplies. Falls as the agent's lexicon and percepts agree.
//!
//! The total is an evaluation readout, not a training signal: nothing in the
//! protocol reads it back. All functions are pure.

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::error::{Error, Result};
use crate::prob::{kl_divergence, normalize_log_weights};
use crate::world::ObservationSet;

/// One round's free-energy estimate, with per-agent terms kept separate so
/// plateaus can be attributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub round: u32,
    pub collective_regularization: f64,
    pub individual_prediction_error: Vec<f64>,
    pub individual_regularization: Vec<f64>,
    pub total: f64,
}

/// Sum over objects of `KL(q_d || uniform)` where
/// `q_d(w) ∝ prod_k p(z_kd | w, phi_k)` is the sign posterior implied by
/// every agent's current category for the object.
pub fn collective_regularization(agents: &[AgentState]) -> Result<f64> {
    let first = agents.first().ok_or_else(|| {
        Error::InvalidArgument("collective term needs at least one agent".into())
    })?;
    let num_signs = first.num_signs();
    let num_objects = first.assignments().len();
    for agent in agents {
        if agent.num_signs() != num_signs || agent.assignments().len() != num_objects {
            return Err(Error::InvalidArgument(
                "agents disagree on inventory or object count".into(),
            ));
        }
    }
    let uniform = vec![1.0 / num_signs as f64; num_signs];
    // ln p(z | w) per agent and sign, reused across objects.
    let mut log_rows: Vec<Vec<Vec<f64>>> = Vec::with_capacity(agents.len());
    for agent in agents {
        let mut rows = Vec::with_capacity(num_signs);
        for w in 0..num_signs {
            rows.push(
                agent
                    .phi_predictive(w)?
                    .into_iter()
                    .map(f64::ln)
                    .collect(),
            );
        }
        log_rows.push(rows);
    }
    let mut total = 0.0;
    for d in 0..num_objects {
        let mut log_q = vec![0.0; num_signs];
        for (k, agent) in agents.iter().enumerate() {
            let z = agent.assignments()[d];
            for (w, lq) in log_q.iter_mut().enumerate() {
                *lq += log_rows[k][w][z];
            }
        }
        let q = normalize_log_weights(&log_q)?;
        total += kl_divergence(&q, &uniform)?;
    }
    Ok(total)
}

/// Expected negative log likelihood of the agent's observations under its
/// category posterior `q(z | o_d, w_d) ∝ p(o_d | theta_z) p(z | w_d, phi)`.
pub fn individual_prediction_error(
    agent: &AgentState,
    observations: &ObservationSet,
    signs: &[usize],
) -> Result<f64> {
    check_signs(agent, observations, signs)?;
    let mut total = 0.0;
    for (d, &sign) in signs.iter().enumerate() {
        let ll = agent.likelihood_log_weights(d, observations)?;
        let prior: Vec<f64> = agent
            .phi_predictive(sign)?
            .into_iter()
            .map(f64::ln)
            .collect();
        let joint: Vec<f64> = ll.iter().zip(&prior).map(|(a, b)| a + b).collect();
        let q = normalize_log_weights(&joint)?;
        total += q.iter().zip(&ll).map(|(qi, li)| -qi * li).sum::<f64>();
    }
    Ok(total)
}

/// Divergence between the agent's likelihood-driven category beliefs and
/// the sign-conditional prior its own lexicon assigns, summed over objects.
pub fn individual_regularization(
    agent: &AgentState,
    observations: &ObservationSet,
    signs: &[usize],
) -> Result<f64> {
    check_signs(agent, observations, signs)?;
    let mut total = 0.0;
    for (d, &sign) in signs.iter().enumerate() {
        let ll = agent.likelihood_log_weights(d, observations)?;
        let q = normalize_log_weights(&ll)?;
        let prior = agent.phi_predictive(sign)?;
        total += kl_divergence(&q, &prior)?;
    }
    Ok(total)
}

/// Full per-round report. Pure: reads state, never advances it.
pub fn estimate_total(
    agents: &[AgentState],
    signs: &[usize],
    observations: &ObservationSet,
    round: u32,
) -> Result<FreeEnergyReport> {
    let collective = collective_regularization(agents)?;
    let mut prediction = Vec::with_capacity(agents.len());
    let mut regularization = Vec::with_capacity(agents.len());
    for agent in agents {
        prediction.push(individual_prediction_error(agent, observations, signs)?);
        regularization.push(individual_regularization(agent, observations, signs)?);
    }
    let total = collective
        + prediction.iter().sum::<f64>()
        + regularization.iter().sum::<f64>();
    Ok(FreeEnergyReport {
        round,
        collective_regularization: collective,
        individual_prediction_error: prediction,
        individual_regularization: regularization,
        total,
    })
}

fn check_signs(
    agent: &AgentState,
    observations: &ObservationSet,
    signs: &[usize],
) -> Result<()> {
    if signs.len() != observations.num_objects() {
        return Err(Error::InvalidArgument(format!(
            "{} signs for {} objects",
            signs.len(),
            observations.num_objects()
        )));
    }
    if signs.iter().any(|&w| w >= agent.num_signs()) {
        return Err(Error::InvalidArgument(
            "sign value out of inventory range".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::GaussCatHyper;

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

    fn agent_with(phi: Vec<Vec<u64>>, assignments: Vec<usize>, means: [f64; 2]) -> AgentState {
        AgentState::from_parameters(
            0,
            hyper_1d(),
            assignments,
            vec![vec![means[0]], vec![means[1]]],
            vec![vec![1.0], vec![1.0]],
            phi,
        )
        .unwrap()
    }

    fn single_object_obs(x: f64) -> ObservationSet {
        ObservationSet::new(
            vec![vec![vec![x]], vec![vec![x]]],
            vec![vec![0], vec![0]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn collective_term_matches_hand_computation() {
        // Both agents: counts [2,0] under sign 0 and [0,2] under sign 1,
        // both currently category 0, one object. With alpha = 1 each
        // predictive is 3/4 vs 1/4, so q ∝ [9/16, 1/16] = [0.9, 0.1].
        let a0 = agent_with(vec![vec![2, 0], vec![0, 2]], vec![0], [-1.0, 1.0]);
        let a1 = agent_with(vec![vec![2, 0], vec![0, 2]], vec![0], [-1.0, 1.0]);
        let got = collective_regularization(&[a0, a1]).unwrap();
        let expect = 0.9 * (1.8f64).ln() + 0.1 * (0.2f64).ln();
        assert!((got - expect).abs() < 1e-12, "got {got}, expect {expect}");
    }

    #[test]
    fn collective_term_is_zero_for_fresh_lexicons() {
        // Zero counts: every sign predicts every category uniformly.
        let a0 = agent_with(vec![vec![0, 0], vec![0, 0]], vec![0], [-1.0, 1.0]);
        let a1 = agent_with(vec![vec![0, 0], vec![0, 0]], vec![1], [-1.0, 1.0]);
        let got = collective_regularization(&[a0, a1]).unwrap();
        assert!(got.abs() < 1e-12);
    }

    #[test]
    fn individual_regularization_matches_hand_kl() {
        // Means 0 and 1, precision 1. Likelihood odds exp(0.5 - x); at
        // x = 0.5 - ln(7/3) the posterior is exactly [0.7, 0.3]. Flat phi
        // gives a uniform sign-conditional prior.
        let x = 0.5 - (7.0f64 / 3.0).ln();
        let agent = agent_with(vec![vec![0, 0], vec![0, 0]], vec![0], [0.0, 1.0]);
        let obs = single_object_obs(x);
        let got = individual_regularization(&agent, &obs, &[0]).unwrap();
        let expect = 0.7 * (1.4f64).ln() + 0.3 * (0.6f64).ln();
        assert!((got - expect).abs() < 1e-12, "got {got}, expect {expect}");
    }

    #[test]
    fn prediction_error_matches_hand_computation() {
        let agent = agent_with(vec![vec![2, 0], vec![0, 2]], vec![0], [0.0, 1.0]);
        let x = 0.25;
        let obs = single_object_obs(x);
        // Inline recomputation with explicit densities.
        let ll0 = -0.5 * crate::prob::LN_2PI - 0.5 * x * x;
        let ll1 = -0.5 * crate::prob::LN_2PI - 0.5 * (x - 1.0) * (x - 1.0);
        let j0 = ll0.exp() * 0.75;
        let j1 = ll1.exp() * 0.25;
        let q0 = j0 / (j0 + j1);
        let expect = -(q0 * ll0 + (1.0 - q0) * ll1);
        let got = individual_prediction_error(&agent, &obs, &[0]).unwrap();
        assert!((got - expect).abs() < 1e-12, "got {got}, expect {expect}");
    }

    #[test]
    fn divergence_terms_are_nonnegative() {
        for counts in [
            vec![vec![0, 0], vec![0, 0]],
            vec![vec![5, 1], vec![2, 7]],
            vec![vec![40, 0], vec![0, 40]],
        ] {
            let agent = agent_with(counts, vec![0], [-2.0, 2.0]);
            let obs = single_object_obs(0.7);
            assert!(individual_regularization(&agent, &obs, &[1]).unwrap() >= 0.0);
            let a2 = agent.clone();
            assert!(collective_regularization(&[agent, a2]).unwrap() >= 0.0);
        }
    }

    #[test]
    fn report_total_is_the_sum_of_its_parts() {
        let a0 = agent_with(vec![vec![3, 1], vec![0, 2]], vec![0], [-1.0, 1.0]);
        let a1 = agent_with(vec![vec![1, 1], vec![4, 0]], vec![1], [-1.5, 0.5]);
        let obs = single_object_obs(-0.3);
        let report = estimate_total(&[a0, a1], &[1], &obs, 7).unwrap();
        let sum = report.collective_regularization
            + report.individual_prediction_error.iter().sum::<f64>()
            + report.individual_regularization.iter().sum::<f64>();
        assert_eq!(report.total, sum);
        assert_eq!(report.round, 7);
        assert_eq!(report.individual_prediction_error.len(), 2);
    }

    #[test]
    fn sign_bounds_are_checked() {
        let agent = agent_with(vec![vec![0, 0], vec![0, 0]], vec![0], [0.0, 1.0]);
        let obs = single_object_obs(0.0);
        assert!(individual_prediction_error(&agent, &obs, &[2]).is_err());
        assert!(individual_regularization(&agent, &obs, &[0, 1]).is_err());
    }
}
