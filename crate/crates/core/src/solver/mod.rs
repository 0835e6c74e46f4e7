//! Explicit-state probabilistic model checking: bottom SCCs, maximal
//! reachability, minimal expected steps, optimal mean payoff and evaluation
//! of memoryless strategies.

mod graph;
mod mean_payoff;
mod reach;
mod ssp;

pub use graph::{bsccs, is_strongly_connected, strongly_connected_components};
pub use mean_payoff::{chain_gain, evaluate_strategy, optimal_mean_payoff};
pub use reach::{max_reachability, prob0_states, prob1_states};
pub use ssp::{min_expected_cost, min_expected_steps};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, Row, StateId, PROBABILITY_TOLERANCE};

/// Immediate-reward MDP over dense indices. Every action is enabled everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    /// `[s * |A| + a]`.
    rows: Vec<Row>,
    rewards: Vec<f64>,
}

impl Mdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        rows: Vec<Row>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        let n = num_states * num_actions;
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidModel("empty state or action set".into()));
        }
        if rows.len() != n || rewards.len() != n {
            return Err(Error::InvalidModel(format!(
                "expected {n} rows and rewards"
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE
                || row.iter().any(|&(t, p)| {
                    t >= num_states || !(0.0..=1.0 + PROBABILITY_TOLERANCE).contains(&p)
                })
            {
                return Err(Error::InvalidModel(format!(
                    "row (s{}, a{}) is not a distribution over {} states",
                    i / num_actions,
                    i % num_actions,
                    num_states
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            rows,
            rewards,
        })
    }

    /// Same as [`Mdp::new`] with all rewards zero.
    pub fn without_rewards(num_states: usize, num_actions: usize, rows: Vec<Row>) -> Result<Self> {
        let n = rows.len();
        Self::new(num_states, num_actions, rows, vec![0.0; n])
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, s: StateId, a: ActionId) -> &[(StateId, f64)] {
        &self.rows[s * self.num_actions + a]
    }

    #[inline]
    pub fn reward(&self, s: StateId, a: ActionId) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    pub fn with_rewards(mut self, rewards: Vec<f64>) -> Result<Self> {
        if rewards.len() != self.rows.len() {
            return Err(Error::InvalidModel(
                "reward vector has the wrong length".into(),
            ));
        }
        self.rewards = rewards;
        Ok(self)
    }

    /// Successor lists of the union graph over all actions (positive mass only).
    pub fn successor_graph(&self) -> Vec<Vec<StateId>> {
        (0..self.num_states)
            .map(|s| {
                let mut succ: Vec<StateId> = (0..self.num_actions)
                    .flat_map(|a| {
                        self.row(s, a)
                            .iter()
                            .filter(|(_, p)| *p > 0.0)
                            .map(|(t, _)| *t)
                    })
                    .collect();
                succ.sort_unstable();
                succ.dedup();
                succ
            })
            .collect()
    }

    /// Predecessor lists of the union graph.
    pub(crate) fn predecessor_graph(&self) -> Vec<Vec<StateId>> {
        let mut pred = vec![Vec::new(); self.num_states];
        for (s, succ) in self.successor_graph().into_iter().enumerate() {
            for t in succ {
                pred[t].push(s);
            }
        }
        pred
    }

    /// States reachable from `from` in the union graph, ascending.
    pub fn reachable_from(&self, from: StateId) -> Vec<StateId> {
        let succ = self.successor_graph();
        let mut seen = vec![false; self.num_states];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(s) = stack.pop() {
            for &t in &succ[s] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        (0..self.num_states).filter(|&s| seen[s]).collect()
    }

    /// Sub-MDP on `keep` (ascending, closed under every action), with states
    /// renumbered by position in `keep`.
    pub fn restrict(&self, keep: &[StateId]) -> Result<Mdp> {
        let mut pos = vec![usize::MAX; self.num_states];
        for (i, &s) in keep.iter().enumerate() {
            if s >= self.num_states {
                return Err(Error::StateOutOfRange {
                    state: s,
                    num_states: self.num_states,
                });
            }
            pos[s] = i;
        }
        let mut rows = Vec::with_capacity(keep.len() * self.num_actions);
        let mut rewards = Vec::with_capacity(keep.len() * self.num_actions);
        for &s in keep {
            for a in 0..self.num_actions {
                let mut row = Vec::with_capacity(self.row(s, a).len());
                for &(t, p) in self.row(s, a) {
                    if pos[t] == usize::MAX {
                        return Err(Error::invalid(format!(
                            "state set is not closed: {s} -> {t}"
                        )));
                    }
                    row.push((pos[t], p));
                }
                rows.push(row);
                rewards.push(self.reward(s, a));
            }
        }
        Mdp::new(keep.len(), self.num_actions, rows, rewards)
    }

    /// The Markov chain induced by a memoryless deterministic strategy.
    pub fn induced_chain(&self, choice: &[ActionId]) -> Result<MarkovChain> {
        if choice.len() != self.num_states {
            return Err(Error::invalid(
                "strategy must choose an action in every state",
            ));
        }
        if let Some(&a) = choice.iter().find(|&&a| a >= self.num_actions) {
            return Err(Error::ActionOutOfRange {
                action: a,
                num_actions: self.num_actions,
            });
        }
        let rows = choice
            .iter()
            .enumerate()
            .map(|(s, &a)| self.row(s, a).to_vec())
            .collect();
        let rewards = choice
            .iter()
            .enumerate()
            .map(|(s, &a)| self.reward(s, a))
            .collect();
        Ok(MarkovChain { rows, rewards })
    }

    /// The Markov chain induced by playing every action with equal probability.
    pub fn uniform_chain(&self) -> MarkovChain {
        let w = 1.0 / self.num_actions as f64;
        let mut rows = Vec::with_capacity(self.num_states);
        let mut rewards = Vec::with_capacity(self.num_states);
        for s in 0..self.num_states {
            let mut acc: Vec<(StateId, f64)> = Vec::new();
            for a in 0..self.num_actions {
                acc.extend(self.row(s, a).iter().map(|&(t, p)| (t, p * w)));
            }
            rows.push(merge_row(acc));
            rewards.push((0..self.num_actions).map(|a| self.reward(s, a) * w).sum());
        }
        MarkovChain { rows, rewards }
    }
}

/// Sorts by target and sums duplicate targets.
pub(crate) fn merge_row(mut row: Vec<(StateId, f64)>) -> Row {
    row.sort_by_key(|(t, _)| *t);
    let mut out: Row = Vec::with_capacity(row.len());
    for (t, p) in row {
        match out.last_mut() {
            Some((last, q)) if *last == t => *q += p,
            _ => out.push((t, p)),
        }
    }
    out
}

/// Discrete-time Markov chain with a reward per state (the expected reward of
/// the step taken from it).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    pub rows: Vec<Row>,
    pub rewards: Vec<f64>,
}

impl MarkovChain {
    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn successor_graph(&self) -> Vec<Vec<StateId>> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|(t, _)| *t)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    MaxReach,
    MinSteps,
    MeanPayoff,
}

/// Memoryless deterministic strategy with the per-state value the producing
/// analysis computed for it: a probability, an expected step count, or a gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub choice: Vec<ActionId>,
    pub value: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Strategy {
    pub fn action(&self, s: StateId) -> ActionId {
        self.choice[s]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveParams {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Self-loop weight `1 - τ` of the aperiodicity transform uses `τ = damping`.
    pub damping: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 1_000_000,
            damping: 0.5,
        }
    }
}

impl SolveParams {
    pub(crate) fn check(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::invalid("damping must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Window within which two action values count as tied.
    pub(crate) fn tie_window(&self) -> f64 {
        (self.tolerance * 1e3).max(1e-12)
    }
}

pub(crate) fn goal_mask(num_states: usize, goal: &[StateId]) -> Result<Vec<bool>> {
    if goal.is_empty() {
        return Err(Error::invalid("goal set must be nonempty"));
    }
    let mut mask = vec![false; num_states];
    for &g in goal {
        if g >= num_states {
            return Err(Error::StateOutOfRange {
                state: g,
                num_states,
            });
        }
        mask[g] = true;
    }
    Ok(mask)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;

    /// Random MDP whose union graph is strongly connected: a Hamiltonian cycle
    /// through action 0 guarantees it.
    pub(crate) fn random_strongly_connected<R: Rng>(
        rng: &mut R,
        max_states: usize,
        max_actions: usize,
    ) -> Mdp {
        let n = rng.gen_range(1..=max_states);
        let k = rng.gen_range(1..=max_actions);
        let mut rows = Vec::new();
        let mut rewards = Vec::new();
        for s in 0..n {
            for a in 0..k {
                let mut row: Vec<(StateId, f64)> = Vec::new();
                let fanout = rng.gen_range(1..=n.min(3));
                let mut weights = Vec::new();
                for _ in 0..fanout {
                    row.push((rng.gen_range(0..n), 0.0));
                    weights.push(rng.gen_range(0.1..1.0));
                }
                if a == 0 {
                    row.push(((s + 1) % n, 0.0));
                    weights.push(rng.gen_range(0.1..1.0));
                }
                let total: f64 = weights.iter().sum();
                for (e, w) in row.iter_mut().zip(&weights) {
                    e.1 = w / total;
                }
                rows.push(merge_row(row));
                rewards.push(rng.gen_range(-1.0..1.0));
            }
        }
        Mdp::new(n, k, rows, rewards).unwrap()
    }
}
