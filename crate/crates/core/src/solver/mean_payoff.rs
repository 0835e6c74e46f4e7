use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateId};

use super::graph::{bsccs, strongly_connected_components};
use super::{MarkovChain, Mdp, SolveParams, Strategy, StrategyKind};

/// Optimal long-run average reward of a strongly connected MDP, with a greedy
/// memoryless strategy attaining it. The value vector is constant.
///
/// Relative value iteration runs on the aperiodic transform
/// `P' = τP + (1 - τ)I`, `r' = τr` and stops once the bounds
/// `min(Th - h) ≤ τg ≤ max(Th - h)` are closer than the tolerance in `g`.
pub fn optimal_mean_payoff(mdp: &Mdp, params: &SolveParams) -> Result<Strategy> {
    params.check()?;
    let components = strongly_connected_components(&mdp.successor_graph()).len();
    if components != 1 {
        return Err(Error::NotStronglyConnected { components });
    }
    let n = mdp.num_states();
    let k = mdp.num_actions();
    let tau = params.damping;
    let q = |h: &[f64], s: StateId, a: ActionId| -> f64 {
        mdp.reward(s, a) + mdp.row(s, a).iter().map(|&(t, p)| p * h[t]).sum::<f64>()
    };

    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut gain = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        iterations += 1;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..n {
            let best = (0..k)
                .map(|a| q(&h, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            let diff = tau * (best - h[s]);
            lo = lo.min(diff);
            hi = hi.max(diff);
            next[s] = h[s] + diff;
        }
        gain = 0.5 * (lo + hi) / tau;
        let anchor = next[0];
        for (dst, src) in h.iter_mut().zip(&next) {
            *dst = src - anchor;
        }
        if (hi - lo) / tau < params.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("optimal_mean_payoff stopped after {iterations} iterations without converging");
    }

    let window = params.tie_window();
    let choice = (0..n)
        .map(|s| super::reach::argmax(k, |a| q(&h, s, a), window))
        .collect();
    Ok(Strategy {
        kind: StrategyKind::MeanPayoff,
        choice,
        value: vec![gain; n],
        iterations,
        converged,
    })
}

/// Long-run average reward of the chain induced by `choice`, per start state.
pub fn evaluate_strategy(mdp: &Mdp, choice: &[ActionId]) -> Result<Vec<f64>> {
    chain_gain(&mdp.induced_chain(choice)?)
}

/// Per-state gain of a Markov chain: the stationary average inside each bottom
/// component, and the absorption-weighted average of those for transient states.
pub fn chain_gain(chain: &MarkovChain) -> Result<Vec<f64>> {
    let n = chain.num_states();
    let mut gain = vec![0.0; n];
    let mut recurrent = vec![false; n];
    for comp in bsccs(chain) {
        let g = component_gain(chain, &comp)?;
        for &s in &comp {
            gain[s] = g;
            recurrent[s] = true;
        }
    }

    let transient: Vec<StateId> = (0..n).filter(|&s| !recurrent[s]).collect();
    if transient.is_empty() {
        return Ok(gain);
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &s) in transient.iter().enumerate() {
        pos[s] = i;
    }
    // (I - Q) x = R g_rec
    let m = transient.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (i, &s) in transient.iter().enumerate() {
        for &(t, p) in &chain.rows[s] {
            if recurrent[t] {
                b[i] += p * gain[t];
            } else {
                a[(i, pos[t])] -= p;
            }
        }
    }
    let x = a.lu().solve(&b).ok_or_else(|| Error::SingularSystem {
        component: transient.clone(),
    })?;
    for (i, &s) in transient.iter().enumerate() {
        gain[s] = x[i];
    }
    Ok(gain)
}

fn component_gain(chain: &MarkovChain, comp: &[StateId]) -> Result<f64> {
    let m = comp.len();
    if m == 1 {
        return Ok(chain.rewards[comp[0]]);
    }
    let mut pos = std::collections::BTreeMap::new();
    for (i, &s) in comp.iter().enumerate() {
        pos.insert(s, i);
    }
    // πᵀ(P - I) = 0 with the last balance equation replaced by Σπ = 1
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &s) in comp.iter().enumerate() {
        a[(i, i)] -= 1.0;
        for &(t, p) in &chain.rows[s] {
            let j = pos[&t];
            a[(j, i)] += p;
        }
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or_else(|| Error::SingularSystem {
        component: comp.to_vec(),
    })?;
    Ok(comp
        .iter()
        .enumerate()
        .map(|(i, &s)| pi[i] * chain.rewards[s])
        .sum())
}
