//! The naming game: how a population negotiates one sign per object.
//!
//! Each round pairs agents off. For every object, the speaker draws a sign
//! from its own posterior and the listener gates it: under [`Variant::Mh`]
//! with its own likelihood ratio, under [`Variant::Always`] unconditionally,
//! under [`Variant::Never`] not at all (the two baselines bracket the
//! protocol from above and below). Accepted signs overwrite the shared
//! assignment immediately, so later objects in the same round already see
//! the change through the listener's tables on the next update.
//!
//! No gradient, no teacher, no shared parameters: every message is a single
//! integer, every acceptance a single coin flip, and the population still
//! descends the collective objective because speaker proposal and listener
//! gate compose into a Metropolis-Hastings move on the sign posterior.
//!
//! [`run_training`] owns the per-round ordering: world shift, freeze flags,
//! perception, one game round, parameter updates, then the free-energy
//! readout handed to the observer. Randomness is split by role: each agent
//! perceives from its own generator, while proposals, pairings, and
//! acceptance coins come from a dedicated protocol generator. Replaying a
//! transcript against the same seeds therefore reproduces a run exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::error::{Error, Result};
use crate::free_energy::{estimate_total, FreeEnergyReport};
use crate::world::{apply_shift, ObservationSet, WorldConfig};

/// Listener policy for incoming proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Accept with the listener's own likelihood ratio.
    Mh,
    /// Accept everything: naming by decree of whoever speaks.
    Always,
    /// Accept nothing: agents learn alone, the lexicon never moves.
    Never,
}

/// How both sides score a sign for an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Condition on the agent's current category sample.
    Sampled,
    /// Sum the category out of the score.
    Collapsed,
}

/// The shared per-object sign vector. `version` counts committed changes
/// (not confirmations), which makes replay verification cheap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignAssignment {
    signs: Vec<usize>,
    num_signs: usize,
    version: u64,
}

impl SignAssignment {
    /// All objects start on sign zero: a maximally ambiguous lexicon.
    pub fn new(num_objects: usize, num_signs: usize) -> Result<Self> {
        if num_objects == 0 {
            return Err(Error::InvalidArgument("need at least one object".into()));
        }
        if num_signs == 0 {
            return Err(Error::InvalidArgument("need at least one sign".into()));
        }
        Ok(Self {
            signs: vec![0; num_objects],
            num_signs,
            version: 0,
        })
    }

    pub fn sign(&self, object: usize) -> usize {
        self.signs[object]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn num_signs(&self) -> usize {
        self.num_signs
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Overwrites one object's sign; bumps `version` only on an actual
    /// change.
    pub fn commit(&mut self, object: usize, sign: usize) -> Result<()> {
        if object >= self.signs.len() {
            return Err(Error::InvalidArgument(format!(
                "object {object} out of range {}",
                self.signs.len()
            )));
        }
        if sign >= self.num_signs {
            return Err(Error::InvalidArgument(format!(
                "sign {sign} out of range {}",
                self.num_signs
            )));
        }
        if self.signs[object] != sign {
            self.signs[object] = sign;
            self.version += 1;
        }
        Ok(())
    }
}

/// One utterance: who said what about which object, and whether it stuck.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameEvent {
    pub round: u32,
    pub speaker: u32,
    pub listener: u32,
    pub object: u32,
    pub sign: u32,
    pub accepted: bool,
}

/// Complete record of a run's exchanges, sufficient to reconstruct the
/// final sign assignment without touching any agent state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub rng_seed: u64,
    pub events: Vec<GameEvent>,
}

impl GameTranscript {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            rng_seed,
            events: Vec::new(),
        }
    }

    /// Reapplies every accepted event to a fresh assignment. The result
    /// must match the live assignment of the run that produced the
    /// transcript, version included.
    pub fn replay(&self, num_objects: usize, num_signs: usize) -> Result<SignAssignment> {
        let mut signs = SignAssignment::new(num_objects, num_signs)?;
        for event in &self.events {
            if event.accepted {
                signs.commit(event.object as usize, event.sign as usize)?;
            }
        }
        Ok(signs)
    }
}

/// Speaker-listener pairs for one round. Two agents alternate roles by
/// round parity without consuming randomness; larger populations are
/// shuffled and paired off, with one agent idle when the count is odd.
pub fn pairing_schedule(
    num_agents: usize,
    round: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    if num_agents < 2 {
        return Vec::new();
    }
    if num_agents == 2 {
        return if round % 2 == 0 {
            vec![(0, 1)]
        } else {
            vec![(1, 0)]
        };
    }
    let mut order: Vec<usize> = (0..num_agents).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

/// Plays one full round: every pair negotiates every object in id order.
/// Every exchange is recorded, rejected ones included. All randomness comes
/// from `rng`; agent state is read but never written.
pub fn run_round(
    agents: &[AgentState],
    signs: &mut SignAssignment,
    observations: &ObservationSet,
    variant: Variant,
    mode: Mode,
    round: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GameEvent>> {
    run_round_ordered(
        agents,
        signs,
        observations,
        variant,
        mode,
        round,
        false,
        rng,
    )
}

/// `run_round` with the object order optionally reshuffled per pair. The
/// default id order makes rounds cheap to eyeball; shuffling removes any
/// ordering artifact at the cost of extra draws, so it is opt-in.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_round_ordered(
    agents: &[AgentState],
    signs: &mut SignAssignment,
    observations: &ObservationSet,
    variant: Variant,
    mode: Mode,
    round: u32,
    shuffle_objects: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GameEvent>> {
    if agents.len() < 2 {
        return Err(Error::InvalidArgument(
            "a round needs at least two agents".into(),
        ));
    }
    if signs.len() != observations.num_objects() {
        return Err(Error::InvalidArgument(format!(
            "{} signs for {} objects",
            signs.len(),
            observations.num_objects()
        )));
    }
    let pairs = pairing_schedule(agents.len(), round, rng);
    let mut events = Vec::with_capacity(pairs.len() * signs.len());
    let mut order: Vec<usize> = (0..signs.len()).collect();
    for (speaker, listener) in pairs {
        if shuffle_objects {
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
        }
        for &object in &order {
            let proposed = agents[speaker].propose_sign(object, mode, observations, rng)?;
            let current = signs.sign(object);
            let accepted = match variant {
                Variant::Always => !agents[listener].is_frozen(),
                Variant::Never => false,
                Variant::Mh => {
                    let ratio = agents[listener].acceptance_probability(
                        object,
                        proposed,
                        current,
                        mode,
                        observations,
                    )?;
                    agents[listener].decide(ratio, rng)
                }
            };
            if accepted {
                signs.commit(object, proposed)?;
            }
            events.push(GameEvent {
                round,
                speaker: speaker as u32,
                listener: listener as u32,
                object: object as u32,
                sign: proposed as u32,
                accepted,
            });
        }
    }
    Ok(events)
}

/// Schedule and policy for a training run. `world` is only needed when a
/// mid-run shift is scheduled; `freeze_after` locks every agent's lexicon
/// from the given round onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub rounds: u32,
    pub variant: Variant,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_after: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_at: Option<u32>,
    /// Reshuffle the per-pair object order each round instead of walking
    /// objects by id.
    #[serde(default)]
    pub randomize_object_order: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldConfig>,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Validation {
                field: "rounds",
                reason: "must be at least 1".into(),
            });
        }
        if let Some(shift_at) = self.shift_at {
            if shift_at >= self.rounds {
                return Err(Error::Validation {
                    field: "shift_at",
                    reason: format!("round {shift_at} is past the last round"),
                });
            }
            match &self.world {
                Some(world) if world.shift.is_some() => {}
                _ => {
                    return Err(Error::Validation {
                        field: "shift_at",
                        reason: "a scheduled shift needs a world config with a shift spec"
                            .into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Everything a run carries between rounds. Serializable as a whole, so a
/// checkpoint is just this struct; resuming from it reproduces the original
/// run bit for bit because the generators are part of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub agents: Vec<AgentState>,
    pub signs: SignAssignment,
    pub observations: ObservationSet,
    pub protocol_rng: ChaCha8Rng,
    pub agent_rngs: Vec<ChaCha8Rng>,
    pub next_round: u32,
    pub transcript: GameTranscript,
    pub fe_series: Vec<FreeEnergyReport>,
}

impl TrainingState {
    pub fn new(
        agents: Vec<AgentState>,
        observations: ObservationSet,
        protocol_rng: ChaCha8Rng,
        agent_rngs: Vec<ChaCha8Rng>,
        rng_seed: u64,
    ) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::InvalidArgument(
                "training needs at least two agents".into(),
            ));
        }
        if agents.len() != observations.num_agents() {
            return Err(Error::InvalidArgument(format!(
                "{} agents but observations for {}",
                agents.len(),
                observations.num_agents()
            )));
        }
        if agent_rngs.len() != agents.len() {
            return Err(Error::InvalidArgument(
                "one generator per agent is required".into(),
            ));
        }
        let num_signs = agents[0].num_signs();
        for (k, agent) in agents.iter().enumerate() {
            if agent.agent_id() != k {
                return Err(Error::InvalidArgument(format!(
                    "agent at position {k} has id {}",
                    agent.agent_id()
                )));
            }
            if agent.num_signs() != num_signs {
                return Err(Error::InvalidArgument(
                    "agents disagree on the sign inventory size".into(),
                ));
            }
        }
        let signs = SignAssignment::new(observations.num_objects(), num_signs)?;
        Ok(Self {
            agents,
            signs,
            observations,
            protocol_rng,
            agent_rngs,
            next_round: 0,
            transcript: GameTranscript::new(rng_seed),
            fe_series: Vec::new(),
        })
    }
}

/// Advances a run to `min(until, config.rounds)`, invoking `observer` after
/// every completed round. The per-round order is fixed: shift the world if
/// scheduled, set freeze flags, perceive, play one round, update
/// parameters, estimate free energy.
pub fn run_training(
    state: &mut TrainingState,
    config: &TrainingConfig,
    until: u32,
    mut observer: impl FnMut(&TrainingState, &FreeEnergyReport) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    let stop = until.min(config.rounds);
    while state.next_round < stop {
        let round = state.next_round;
        if config.shift_at == Some(round) {
            let world = config.world.as_ref().expect("validated above");
            state.observations = apply_shift(&state.observations, world)?;
        }
        if let Some(freeze_after) = config.freeze_after {
            let frozen = round >= freeze_after;
            for agent in &mut state.agents {
                agent.set_frozen(frozen);
            }
        }
        for (agent, rng) in state.agents.iter_mut().zip(&mut state.agent_rngs) {
            agent.perceive(&state.observations, state.signs.as_slice(), rng)?;
        }
        let events = run_round_ordered(
            &state.agents,
            &mut state.signs,
            &state.observations,
            config.variant,
            config.mode,
            round,
            config.randomize_object_order,
            &mut state.protocol_rng,
        )?;
        state.transcript.events.extend(events);
        for agent in &mut state.agents {
            agent.update_parameters(&state.observations, state.signs.as_slice())?;
        }
        let report = estimate_total(
            &state.agents,
            state.signs.as_slice(),
            &state.observations,
            round,
        )?;
        state.fe_series.push(report);
        state.next_round += 1;
        let report = state.fe_series.last().expect("just pushed");
        observer(state, report)?;
    }
    Ok(())
}
