use crate::error::{Error, Result};
use crate::mdp::StateId;

use super::reach::{gauss_seidel, prob1_states};
use super::{goal_mask, Mdp, SolveParams, Strategy, StrategyKind};

/// Minimal expected number of transitions to reach `goal`. States that cannot
/// reach it almost surely get `f64::INFINITY`.
pub fn min_expected_steps(mdp: &Mdp, goal: &[StateId], params: &SolveParams) -> Result<Strategy> {
    let costs = vec![1.0; mdp.num_states() * mdp.num_actions()];
    min_expected_cost(mdp, goal, &costs, params)
}

/// Stochastic shortest path with positive per-`(s, a)` costs, indexed
/// `[s * |A| + a]`.
///
/// Value iteration from zero over the states that reach `goal` with
/// probability one, restricted to actions that never leave that set. The
/// returned values have Bellman residual below `params.tolerance`.
pub fn min_expected_cost(
    mdp: &Mdp,
    goal: &[StateId],
    costs: &[f64],
    params: &SolveParams,
) -> Result<Strategy> {
    params.check()?;
    let n = mdp.num_states();
    let k = mdp.num_actions();
    if costs.len() != n * k || costs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(Error::invalid(
            "costs must be positive and finite for every (s, a)",
        ));
    }
    let goal = goal_mask(n, goal)?;
    let proper = prob1_states(mdp, &goal);
    let allowed: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            if goal[s] || !proper[s] {
                return Vec::new();
            }
            (0..k)
                .filter(|&a| mdp.row(s, a).iter().all(|&(t, p)| p == 0.0 || proper[t]))
                .collect()
        })
        .collect();
    let active: Vec<StateId> = (0..n).filter(|&s| !allowed[s].is_empty()).collect();

    let q = |v: &[f64], s: StateId, a: usize| -> f64 {
        costs[s * k + a] + mdp.row(s, a).iter().map(|&(t, p)| p * v[t]).sum::<f64>()
    };
    let mut v: Vec<f64> = (0..n)
        .map(|s| if proper[s] { 0.0 } else { f64::INFINITY })
        .collect();
    let bellman = |v: &[f64], s: StateId| {
        allowed[s]
            .iter()
            .map(|&a| q(v, s, a))
            .fold(f64::INFINITY, f64::min)
    };
    let (iterations, converged) = gauss_seidel(&mut v, &active, bellman, params);
    if !converged {
        log::warn!("min_expected_cost stopped after {iterations} iterations without converging");
    }

    let window = params.tie_window();
    let mut choice = vec![0usize; n];
    for &s in &active {
        let vals: Vec<(usize, f64)> = allowed[s].iter().map(|&a| (a, q(&v, s, a))).collect();
        let best = vals.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        choice[s] = vals
            .iter()
            .find(|x| x.1 <= best + window)
            .map(|x| x.0)
            .unwrap_or(0);
    }
    Ok(Strategy {
        kind: StrategyKind::MinSteps,
        choice,
        value: v,
        iterations,
        converged,
    })
}
