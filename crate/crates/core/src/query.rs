//! Planning and running membership queries: how to make the environment
//! produce a given observation word so that its rewards can be read off.

use std::fmt;
use std::str::FromStr;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::mdp::{ActionId, Alphabet, LabelingFunction, Nrmdp, Observation, StateId, SymbolId};
use crate::solver::{max_reachability, min_expected_cost, Mdp, SolveParams, Strategy};

pub const DEFAULT_QUERY_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryMode {
    /// Maximise the probability of seeing the word in one attempt.
    Max,
    /// Minimise the expected number of steps, resets included.
    #[default]
    Min,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::Max => "max",
            QueryMode::Min => "min",
        })
    }
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(QueryMode::Max),
            "min" => Ok(QueryMode::Min),
            _ => Err(Error::invalid(format!(
                "unknown query mode {s}; expected min or max"
            ))),
        }
    }
}

/// MDP over pairs `(s, i)`, `i` the number of query symbols seen so far, with
/// the environment actions plus a trailing reset action.
///
/// A step observing nothing keeps `i`, observing the next query symbol
/// advances it, and observing anything else sends the agent back to
/// `(s0, 0)` (the environment is reset as part of that step). States with
/// `i = k` are the absorbing goal.
#[derive(Debug, Clone)]
pub struct QueryMdp {
    mdp: Mdp,
    word: Vec<SymbolId>,
    num_model_states: usize,
    initial: StateId,
    /// Probability that `(x, a)` observes a wrong symbol, `[x * |A'| + a]`.
    deviation: Vec<f64>,
}

impl QueryMdp {
    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn word(&self) -> &[SymbolId] {
        &self.word
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    pub fn index(&self, s: StateId, i: usize) -> StateId {
        s * (self.word.len() + 1) + i
    }

    pub fn decode(&self, x: StateId) -> (StateId, usize) {
        (x / (self.word.len() + 1), x % (self.word.len() + 1))
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn reset_action(&self) -> ActionId {
        self.mdp.num_actions() - 1
    }

    pub fn goal_states(&self) -> Vec<StateId> {
        (0..self.num_model_states)
            .map(|s| self.index(s, self.word.len()))
            .collect()
    }

    pub fn deviation_probability(&self, x: StateId, a: ActionId) -> f64 {
        self.deviation[x * self.mdp.num_actions() + a]
    }
}

pub fn build_query_mdp(
    m: &Nrmdp,
    labels: &LabelingFunction,
    word: &[SymbolId],
) -> Result<QueryMdp> {
    if word.is_empty() {
        return Err(Error::invalid("membership query must be nonempty"));
    }
    let z = labels.alphabet().len();
    if let Some(&bad) = word.iter().find(|&&s| s >= z) {
        return Err(Error::UnknownSymbol(format!(
            "symbol index {bad} outside an alphabet of {z}"
        )));
    }
    let k = word.len();
    let ns = m.num_states();
    let na = m.num_actions();
    let idx = |s: StateId, i: usize| s * (k + 1) + i;
    let initial = idx(m.initial(), 0);
    let mut rows = Vec::with_capacity(ns * (k + 1) * (na + 1));
    let mut deviation = Vec::with_capacity(rows.capacity());
    for s in 0..ns {
        for i in 0..=k {
            let x = idx(s, i);
            for a in 0..na {
                if i == k {
                    rows.push(vec![(x, 1.0)]);
                    deviation.push(0.0);
                    continue;
                }
                let mut row = Vec::with_capacity(m.row(s, a).len());
                let mut dev = 0.0;
                for &(t, p) in m.row(s, a) {
                    match labels.label(a, t) {
                        Observation::Null => row.push((idx(t, i), p)),
                        Observation::Symbol(sym) if sym == word[i] => row.push((idx(t, i + 1), p)),
                        Observation::Symbol(_) => {
                            row.push((initial, p));
                            dev += p;
                        }
                    }
                }
                rows.push(crate::solver::merge_row(row));
                deviation.push(dev);
            }
            rows.push(if i == k {
                vec![(x, 1.0)]
            } else {
                vec![(initial, 1.0)]
            });
            deviation.push(0.0);
        }
    }
    let mdp = Mdp::without_rewards(ns * (k + 1), na + 1, rows)?;
    Ok(QueryMdp {
        mdp,
        word: word.to_vec(),
        num_model_states: ns,
        initial,
        deviation,
    })
}

/// A strategy over the query MDP together with what the planner promises.
#[derive(Debug, Clone)]
pub struct QueryPlan {
    pub query: QueryMdp,
    pub mode: QueryMode,
    pub strategy: Strategy,
    /// Success probability of one attempt (MAX) or expected steps (MIN) from
    /// the initial state.
    pub value: f64,
}

impl QueryPlan {
    pub fn action(&self, s: StateId, i: usize) -> ActionId {
        self.strategy.choice[self.query.index(s, i)]
    }
}

/// MAX plans a single attempt: wrong symbols and the reset action count as
/// failure, and states where the word can no longer be completed choose
/// reset. MIN charges one step per action plus one for every automatic
/// reset caused by a wrong symbol.
pub fn plan(
    query: QueryMdp,
    mode: QueryMode,
    params: &SolveParams,
    alphabet: &Alphabet,
) -> Result<QueryPlan> {
    let unrealizable = || Error::UnrealizableQuery {
        word: alphabet.format_word(&query.word),
    };
    let goal = query.goal_states();
    let reset = query.reset_action();
    match mode {
        QueryMode::Max => {
            let attempt = single_attempt(&query)?;
            let mut strategy = max_reachability(&attempt, &goal, params)?;
            strategy.value.truncate(query.mdp.num_states());
            strategy.choice.truncate(query.mdp.num_states());
            let value = strategy.value[query.initial];
            if value <= 0.0 {
                return Err(unrealizable());
            }
            let (ns, k) = (query.num_model_states, query.len());
            for s in 0..ns {
                for i in 0..k {
                    let x = query.index(s, i);
                    if strategy.value[x] <= 0.0 {
                        strategy.choice[x] = reset;
                    }
                }
            }
            Ok(QueryPlan {
                query,
                mode,
                strategy,
                value,
            })
        }
        QueryMode::Min => {
            let na = query.mdp.num_actions();
            let costs: Vec<f64> = (0..query.mdp.num_states() * na)
                .map(|j| 1.0 + query.deviation[j])
                .collect();
            let strategy = min_expected_cost(&query.mdp, &goal, &costs, params)?;
            let value = strategy.value[query.initial];
            if !value.is_finite() {
                return Err(unrealizable());
            }
            Ok(QueryPlan {
                query,
                mode,
                strategy,
                value,
            })
        }
    }
}

/// The query MDP with an extra absorbing failure state that receives every
/// deviation and every reset.
fn single_attempt(query: &QueryMdp) -> Result<Mdp> {
    let q = &query.mdp;
    let n = q.num_states();
    let fail = n;
    let na = q.num_actions();
    let reset = na - 1;
    let k = query.len();
    let mut rows = Vec::with_capacity((n + 1) * na);
    for x in 0..n {
        let at_goal = x % (k + 1) == k;
        for a in 0..na {
            if at_goal {
                rows.push(q.row(x, a).to_vec());
            } else if a == reset {
                rows.push(vec![(fail, 1.0)]);
            } else {
                let dev = query.deviation_probability(x, a);
                let mut row: Vec<(StateId, f64)> = Vec::new();
                for &(t, p) in q.row(x, a) {
                    if t == query.initial && dev > 0.0 {
                        // the deviation share of the mass on (s0, 0)
                        let keep = p - dev;
                        if keep > 1e-15 {
                            row.push((t, keep));
                        }
                    } else {
                        row.push((t, p));
                    }
                }
                if dev > 0.0 {
                    row.push((fail, dev));
                }
                rows.push(crate::solver::merge_row(row));
            }
        }
    }
    for _ in 0..na {
        rows.push(vec![(fail, 1.0)]);
    }
    Mdp::without_rewards(n + 1, na, rows)
}

/// Result of running a planned query against an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    /// Rewards at the index-advancing steps, one per query symbol.
    pub rewards: Vec<f64>,
    /// Actions and resets taken, automatic resets included.
    pub steps: u64,
    pub attempts: u64,
}

/// Plays the plan from the environment's current state, which must be its
/// initial state, until the word has been observed.
pub fn execute_membership_query<E: Environment + ?Sized>(
    env: &mut E,
    plan: &QueryPlan,
    step_budget: u64,
) -> Result<QueryOutcome> {
    let word = plan.query.word();
    let k = word.len();
    let reset = plan.query.reset_action();
    let s0 = env.model().initial();
    let mut s = env.state();
    if s != s0 {
        return Err(Error::invalid(
            "membership queries start from the initial state",
        ));
    }
    let mut i = 0;
    let mut rewards = Vec::with_capacity(k);
    let mut steps = 0u64;
    let mut attempts = 1u64;
    let exhausted = |steps: u64| Error::BudgetExhausted {
        budget: step_budget,
        steps,
        context: format!("membership query {}", env_word(plan, word)),
    };
    loop {
        if steps >= step_budget {
            return Err(exhausted(steps));
        }
        let a = plan.action(s, i);
        if a == reset {
            env.reset();
            steps += 1;
            s = s0;
            i = 0;
            rewards.clear();
            attempts += 1;
            continue;
        }
        let (next, r) = env.step(a)?;
        steps += 1;
        match env.labels().label(a, next) {
            Observation::Null => s = next,
            Observation::Symbol(z) if z == word[i] => {
                rewards.push(r);
                i += 1;
                s = next;
                if i == k {
                    return Ok(QueryOutcome {
                        rewards,
                        steps,
                        attempts,
                    });
                }
            }
            Observation::Symbol(_) => {
                if steps >= step_budget {
                    return Err(exhausted(steps));
                }
                env.reset();
                steps += 1;
                s = s0;
                i = 0;
                rewards.clear();
                attempts += 1;
            }
        }
    }
}

fn env_word(plan: &QueryPlan, word: &[SymbolId]) -> String {
    format!("{word:?} ({} mode)", plan.mode)
}
