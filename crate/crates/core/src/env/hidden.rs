use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::machine::{MealyRewardMachine, NodeId};
use crate::mdp::{ActionId, Alphabet, LabelingFunction, Nrmdp, StateId};

/// What an agent sees of a world: the model and labels it is given, its
/// current state, and the reward after each action.
pub trait Environment {
    fn model(&self) -> &Nrmdp;
    fn labels(&self) -> &LabelingFunction;
    fn state(&self) -> StateId;
    /// Reward paid on steps that observe nothing.
    fn null_reward(&self) -> f64;
    fn reset_cost(&self) -> f64;
    /// Back to the initial state; returns the reset cost.
    fn reset(&mut self) -> f64;
    fn step(&mut self, a: ActionId) -> Result<(StateId, f64)>;

    fn alphabet(&self) -> &Alphabet {
        self.labels().alphabet()
    }

    /// Hook for episode bookkeeping; does nothing by default.
    fn end_episode(&mut self) {}
}

/// Simulated world whose rewards come from a hidden reward machine.
#[derive(Debug, Clone)]
pub struct HiddenEnvironment {
    model: Nrmdp,
    labels: LabelingFunction,
    truth: MealyRewardMachine,
    reset_cost: f64,
    rng: ChaCha8Rng,
    state: StateId,
    node: NodeId,
    steps: u64,
}

impl HiddenEnvironment {
    pub fn new(
        model: Nrmdp,
        labels: LabelingFunction,
        truth: MealyRewardMachine,
        reset_cost: f64,
        seed: u64,
    ) -> Result<Self> {
        if labels.alphabet() != truth.alphabet() {
            return Err(Error::AlphabetMismatch(
                "labels and truth machine differ".into(),
            ));
        }
        if labels.num_states() != model.num_states() || labels.num_actions() != model.num_actions()
        {
            return Err(Error::invalid("labeling function does not match the model"));
        }
        let state = model.initial();
        let node = truth.start();
        Ok(Self {
            model,
            labels,
            truth,
            reset_cost,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state,
            node,
            steps: 0,
        })
    }

    /// For test harnesses only; agents must not read it.
    pub fn ground_truth(&self) -> &MealyRewardMachine {
        &self.truth
    }

    /// Hidden machine node, for test harnesses.
    pub fn node(&self) -> NodeId {
        self.node
    }

    /// Actions and resets taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

impl Environment for HiddenEnvironment {
    fn model(&self) -> &Nrmdp {
        &self.model
    }

    fn labels(&self) -> &LabelingFunction {
        &self.labels
    }

    fn state(&self) -> StateId {
        self.state
    }

    fn null_reward(&self) -> f64 {
        self.truth.default_reward()
    }

    fn reset_cost(&self) -> f64 {
        self.reset_cost
    }

    fn reset(&mut self) -> f64 {
        self.state = self.model.initial();
        self.node = self.truth.start();
        self.steps += 1;
        self.reset_cost
    }

    fn step(&mut self, a: ActionId) -> Result<(StateId, f64)> {
        let next = self.model.sample_transition(self.state, a, &mut self.rng)?;
        let (node, reward) = self.truth.transition(self.node, self.labels.label(a, next));
        self.state = next;
        self.node = node;
        self.steps += 1;
        Ok((next, reward))
    }
}
