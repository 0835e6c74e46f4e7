//! Synchronized products of an environment MDP with reward machines.

use crate::error::{Error, Result};
use crate::machine::{rewards_equal, MealyRewardMachine, NodeId};
use crate::mdp::{ActionId, LabelingFunction, Nrmdp, Observation, StateId};
use crate::solver::{merge_row, optimal_mean_payoff, Mdp, SolveParams, Strategy};

fn check_alphabets(
    labels: &LabelingFunction,
    machines: &[&MealyRewardMachine],
    m: &Nrmdp,
) -> Result<()> {
    for h in machines {
        if labels.alphabet() != h.alphabet() {
            return Err(Error::AlphabetMismatch(format!(
                "labels use {:?}, machine uses {:?}",
                labels.alphabet().names(),
                h.alphabet().names()
            )));
        }
    }
    if labels.num_states() != m.num_states() || labels.num_actions() != m.num_actions() {
        return Err(Error::invalid(
            "labeling function does not match the MDP dimensions",
        ));
    }
    Ok(())
}

/// MDP over `S × U` with the environment actions plus a trailing reset action.
/// The reward of `((s, u), a)` is the expected machine output over successors.
#[derive(Debug, Clone)]
pub struct ProductMdp {
    mdp: Mdp,
    num_model_states: usize,
    num_nodes: usize,
    initial: StateId,
    reset_cost: f64,
}

impl ProductMdp {
    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_model_states(&self) -> usize {
        self.num_model_states
    }

    /// Index of the reset action, one past the environment actions.
    pub fn reset_action(&self) -> ActionId {
        self.mdp.num_actions() - 1
    }

    pub fn reset_cost(&self) -> f64 {
        self.reset_cost
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn index(&self, s: StateId, u: NodeId) -> StateId {
        s * self.num_nodes + u
    }

    pub fn decode(&self, x: StateId) -> (StateId, NodeId) {
        (x / self.num_nodes, x % self.num_nodes)
    }
}

/// Dense resettable product of `m` and `h` under `labels`.
pub fn build_product_with_reset(
    m: &Nrmdp,
    labels: &LabelingFunction,
    h: &MealyRewardMachine,
    reset_cost: f64,
) -> Result<ProductMdp> {
    check_alphabets(labels, &[h], m)?;
    let ns = m.num_states();
    let nu = h.num_nodes();
    let na = m.num_actions();
    let initial = m.initial() * nu + h.start();
    let mut rows = Vec::with_capacity(ns * nu * (na + 1));
    let mut rewards = Vec::with_capacity(ns * nu * (na + 1));
    for s in 0..ns {
        for u in 0..nu {
            for a in 0..na {
                let mut row = Vec::with_capacity(m.row(s, a).len());
                let mut expected = 0.0;
                for &(t, p) in m.row(s, a) {
                    let (v, r) = h.transition(u, labels.label(a, t));
                    row.push((t * nu + v, p));
                    expected += p * r;
                }
                rows.push(row);
                rewards.push(expected);
            }
            rows.push(vec![(initial, 1.0)]);
            rewards.push(reset_cost);
        }
    }
    let mdp = Mdp::new(ns * nu, na + 1, rows, rewards)?;
    Ok(ProductMdp {
        mdp,
        num_model_states: ns,
        num_nodes: nu,
        initial,
        reset_cost,
    })
}

/// Optimal mean-payoff strategy of a product.
///
/// Pairs `(s, u)` that cannot occur from the initial state are cut away
/// before solving; the remaining part is closed and strongly connected
/// through the reset action. Cut-away states get the reset action, so the
/// returned strategy earns `gain` from every state.
pub fn solve_product(p: &ProductMdp, params: &SolveParams) -> Result<Strategy> {
    let keep = p.mdp.reachable_from(p.initial);
    let sub = p.mdp.restrict(&keep)?;
    let st = optimal_mean_payoff(&sub, params)?;
    let gain = st.value[0];
    let mut choice = vec![p.reset_action(); p.num_states()];
    for (i, &x) in keep.iter().enumerate() {
        choice[x] = st.choice[i];
    }
    Ok(Strategy {
        choice,
        value: vec![gain; p.num_states()],
        ..st
    })
}

/// Product of the environment with a truth machine and a hypothesis, where
/// any step on which their outputs differ falls into an absorbing
/// counterexample state.
#[derive(Debug, Clone)]
pub struct TripleProduct {
    mdp: Mdp,
    truth_nodes: usize,
    hyp_nodes: usize,
    initial: StateId,
}

impl TripleProduct {
    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn ce_state(&self) -> StateId {
        self.mdp.num_states() - 1
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn reset_action(&self) -> ActionId {
        self.mdp.num_actions() - 1
    }

    pub fn index(&self, s: StateId, ur: NodeId, uh: NodeId) -> StateId {
        (s * self.truth_nodes + ur) * self.hyp_nodes + uh
    }

    /// `None` for the counterexample state.
    pub fn decode(&self, x: StateId) -> Option<(StateId, NodeId, NodeId)> {
        if x == self.ce_state() {
            return None;
        }
        let uh = x % self.hyp_nodes;
        let rest = x / self.hyp_nodes;
        Some((rest / self.truth_nodes, rest % self.truth_nodes, uh))
    }
}

/// Rewards are the truth machine's expected outputs; the counterexample state
/// pays 0.
pub fn build_triple_product(
    m: &Nrmdp,
    labels: &LabelingFunction,
    truth: &MealyRewardMachine,
    h: &MealyRewardMachine,
    reset_cost: f64,
) -> Result<TripleProduct> {
    check_alphabets(labels, &[truth, h], m)?;
    let (nr, nh) = (truth.num_nodes(), h.num_nodes());
    let ns = m.num_states();
    let na = m.num_actions();
    let n = ns * nr * nh + 1;
    let ce = n - 1;
    let idx = |s: StateId, ur: NodeId, uh: NodeId| (s * nr + ur) * nh + uh;
    let initial = idx(m.initial(), truth.start(), h.start());
    let mut rows = Vec::with_capacity(n * (na + 1));
    let mut rewards = Vec::with_capacity(n * (na + 1));
    for s in 0..ns {
        for ur in 0..nr {
            for uh in 0..nh {
                for a in 0..na {
                    let mut row = Vec::new();
                    let mut expected = 0.0;
                    for &(t, p) in m.row(s, a) {
                        let z = labels.label(a, t);
                        let (vr, rr) = truth.transition(ur, z);
                        let (vh, rh) = h.transition(uh, z);
                        expected += p * rr;
                        if matches!(z, Observation::Null) || rewards_equal(rr, rh) {
                            row.push((idx(t, vr, vh), p));
                        } else {
                            row.push((ce, p));
                        }
                    }
                    rows.push(merge_row(row));
                    rewards.push(expected);
                }
                rows.push(vec![(initial, 1.0)]);
                rewards.push(reset_cost);
            }
        }
    }
    for _ in 0..=na {
        rows.push(vec![(ce, 1.0)]);
        rewards.push(0.0);
    }
    let mdp = Mdp::new(n, na + 1, rows, rewards)?;
    Ok(TripleProduct {
        mdp,
        truth_nodes: nr,
        hyp_nodes: nh,
        initial,
    })
}
