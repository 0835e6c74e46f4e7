use std::collections::VecDeque;

use crate::error::Result;
use crate::mdp::StateId;

use super::{goal_mask, Mdp, SolveParams, Strategy, StrategyKind};

/// States from which no strategy reaches `goal` (graph analysis).
pub fn prob0_states(mdp: &Mdp, goal: &[bool]) -> Vec<bool> {
    let pred = mdp.predecessor_graph();
    let mut can_reach = goal.to_vec();
    let mut queue: VecDeque<StateId> = (0..mdp.num_states()).filter(|&s| goal[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &pred[t] {
            if !can_reach[s] {
                can_reach[s] = true;
                queue.push_back(s);
            }
        }
    }
    can_reach.into_iter().map(|r| !r).collect()
}

/// States from which some strategy reaches `goal` with probability one.
///
/// Greatest fixpoint over `U`: keep the states that can reach `goal` using
/// only actions whose every successor stays inside `U`.
pub fn prob1_states(mdp: &Mdp, goal: &[bool]) -> Vec<bool> {
    let n = mdp.num_states();
    let mut inside = vec![true; n];
    loop {
        let safe = |s: StateId, a: usize, inside: &[bool]| {
            mdp.row(s, a).iter().all(|&(t, p)| p == 0.0 || inside[t])
        };
        let mut reach = goal.to_vec();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if reach[s] || !inside[s] {
                    continue;
                }
                let ok = (0..mdp.num_actions()).any(|a| {
                    safe(s, a, &inside) && mdp.row(s, a).iter().any(|&(t, p)| p > 0.0 && reach[t])
                });
                if ok {
                    reach[s] = true;
                    changed = true;
                }
            }
        }
        if reach == inside {
            return inside;
        }
        inside = reach;
    }
}

/// Maximal probability of eventually reaching `goal`, with a strategy
/// attaining it.
///
/// Values come from value iteration started below the fixpoint after the
/// qualitative prob-0 / prob-1 precomputation. Goal states and prob-0 states
/// keep action 0. Elsewhere the strategy picks, among value-optimal actions,
/// one that moves closer to the goal in the optimal-action subgraph, so that
/// end components cannot trap it; ties go to the lowest action index.
pub fn max_reachability(mdp: &Mdp, goal: &[StateId], params: &SolveParams) -> Result<Strategy> {
    params.check()?;
    let n = mdp.num_states();
    let k = mdp.num_actions();
    let goal = goal_mask(n, goal)?;
    let zero = prob0_states(mdp, &goal);
    let one = prob1_states(mdp, &goal);
    let maybe: Vec<StateId> = (0..n).filter(|&s| !zero[s] && !one[s]).collect();

    let mut v: Vec<f64> = (0..n).map(|s| if one[s] { 1.0 } else { 0.0 }).collect();
    let q = |v: &[f64], s: StateId, a: usize| -> f64 {
        mdp.row(s, a).iter().map(|&(t, p)| p * v[t]).sum()
    };

    let bellman = |v: &[f64], s: StateId| (0..k).map(|a| q(v, s, a)).fold(0.0, f64::max);
    let (iterations, converged) = gauss_seidel(&mut v, &maybe, bellman, params);
    if !converged {
        log::warn!("max_reachability stopped after {iterations} iterations without converging");
    }

    // attractor over value-optimal actions
    let window = params.tie_window();
    let optimal: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            if goal[s] || zero[s] {
                return Vec::new();
            }
            (0..k).filter(|&a| q(&v, s, a) >= v[s] - window).collect()
        })
        .collect();
    let mut choice = vec![0usize; n];
    let mut ranked = goal.clone();
    let mut frontier: Vec<StateId> = (0..n).filter(|&s| goal[s]).collect();
    let pred = mdp.predecessor_graph();
    while !frontier.is_empty() {
        let mut layer = Vec::new();
        let mut candidates: Vec<StateId> = frontier
            .iter()
            .flat_map(|&t| pred[t].iter().copied())
            .filter(|&s| !ranked[s])
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        for s in candidates {
            let hit = optimal[s]
                .iter()
                .copied()
                .find(|&a| mdp.row(s, a).iter().any(|&(t, p)| p > 0.0 && ranked[t]));
            if let Some(a) = hit {
                choice[s] = a;
                layer.push(s);
            }
        }
        for &s in &layer {
            ranked[s] = true;
        }
        frontier = layer;
    }
    for s in 0..n {
        if !ranked[s] && !zero[s] && !goal[s] {
            // numerically stranded: plain greedy
            choice[s] = argmax(k, |a| q(&v, s, a), window);
        }
    }

    Ok(Strategy {
        kind: StrategyKind::MaxReach,
        choice,
        value: v,
        iterations,
        converged,
    })
}

/// In-place sweeps over `active` until a sweep moves no value by more than
/// the tolerance and the Bellman residual of the result, measured without
/// updating, is below it too.
pub(crate) fn gauss_seidel(
    v: &mut [f64],
    active: &[StateId],
    bellman: impl Fn(&[f64], StateId) -> f64,
    params: &SolveParams,
) -> (usize, bool) {
    if active.is_empty() {
        return (0, true);
    }
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for &s in active {
            let x = bellman(v, s);
            delta = delta.max((x - v[s]).abs());
            v[s] = x;
        }
        if delta < params.tolerance {
            let residual = active
                .iter()
                .map(|&s| (bellman(v, s) - v[s]).abs())
                .fold(0.0, f64::max);
            if residual < params.tolerance {
                return (iterations, true);
            }
        }
    }
    (iterations, false)
}

/// Lowest action whose value is within `window` of the best.
pub(crate) fn argmax(k: usize, value: impl Fn(usize) -> f64, window: f64) -> usize {
    let vals: Vec<f64> = (0..k).map(&value).collect();
    let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    vals.iter().position(|&x| x >= best - window).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SolveParams {
        SolveParams::default()
    }

    #[test]
    fn goal_states_have_value_one() {
        let m = Mdp::without_rewards(2, 1, vec![vec![(1, 1.0)], vec![(1, 1.0)]]).unwrap();
        let st = max_reachability(&m, &[1], &params()).unwrap();
        assert_eq!(st.value, vec![1.0, 1.0]);
    }

    #[test]
    fn unreachable_goal_has_value_zero() {
        let m = Mdp::without_rewards(2, 1, vec![vec![(0, 1.0)], vec![(1, 1.0)]]).unwrap();
        assert_eq!(max_reachability(&m, &[1], &params()).unwrap().value[0], 0.0);
    }

    #[test]
    fn one_step_gamble() {
        // 0 --(0.7)--> goal 1, --(0.3)--> sink 2
        let m = Mdp::without_rewards(
            3,
            1,
            vec![vec![(1, 0.7), (2, 0.3)], vec![(1, 1.0)], vec![(2, 1.0)]],
        )
        .unwrap();
        let st = max_reachability(&m, &[1], &params()).unwrap();
        assert!((st.value[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn retry_loop_with_stay_action_still_progresses() {
        // action 0 stays put (a self-loop tie), action 1 moves on with 0.5
        let m = Mdp::without_rewards(
            2,
            2,
            vec![
                vec![(0, 1.0)],
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
            ],
        )
        .unwrap();
        let st = max_reachability(&m, &[1], &params()).unwrap();
        assert_eq!(st.value[0], 1.0);
        assert_eq!(st.choice[0], 1);
    }

    #[test]
    fn picks_better_of_two_gambles() {
        // state 0: action 0 -> goal w.p. 0.3, action 1 -> goal w.p. 0.6; failure is a sink
        let m = Mdp::without_rewards(
            3,
            2,
            vec![
                vec![(1, 0.3), (2, 0.7)],
                vec![(1, 0.6), (2, 0.4)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
                vec![(2, 1.0)],
                vec![(2, 1.0)],
            ],
        )
        .unwrap();
        let st = max_reachability(&m, &[1], &params()).unwrap();
        assert!((st.value[0] - 0.6).abs() < 1e-12);
        assert_eq!(st.choice[0], 1);
    }

    proptest::proptest! {
        #[test]
        fn values_in_unit_interval_and_monotone_under_extra_goal_mass(seed in 0u64..500) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = super::super::testing::random_strongly_connected(&mut rng, 5, 3);
            let n = m.num_states();
            // make the last state absorbing to get nontrivial probabilities
            let mut rows = Vec::new();
            for s in 0..n {
                for a in 0..m.num_actions() {
                    rows.push(if s + 1 == n && n > 1 { vec![(s, 1.0)] } else { m.row(s, a).to_vec() });
                }
            }
            let base = Mdp::without_rewards(n, m.num_actions(), rows.clone()).unwrap();
            let goal = [0];
            let v1 = max_reachability(&base, &goal, &params()).unwrap().value;
            for &x in &v1 {
                proptest::prop_assert!((-1e-12..=1.0 + 1e-12).contains(&x));
            }
            // redirect half of every row of the absorbing state into the goal
            if n > 1 {
                let last = n - 1;
                for a in 0..m.num_actions() {
                    rows[last * m.num_actions() + a] = vec![(0, 0.5), (last, 0.5)];
                }
                let more = Mdp::without_rewards(n, m.num_actions(), rows).unwrap();
                let v2 = max_reachability(&more, &goal, &params()).unwrap().value;
                for (a, b) in v1.iter().zip(&v2) {
                    proptest::prop_assert!(*b >= a - 1e-9);
                }
            }
        }
    }
}
