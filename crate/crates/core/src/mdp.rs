//! Non-rewarding MDPs, labeling functions and interaction traces.
//!
//! States, actions and observation symbols are dense `usize` indices. Human
//! readable names live in side tables and are only used at the file-format
//! boundary.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateId = usize;
pub type ActionId = usize;
pub type SymbolId = usize;

/// A word over the observation alphabet. Never contains `Null`.
pub type ObservationTrace = Vec<SymbolId>;
pub type RewardTrace = Vec<f64>;

/// Sparse distribution over successor states, targets sorted ascending.
pub type Row = Vec<(StateId, f64)>;

pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Finite ordered set of observation symbol names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    names: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::invalid("empty observation symbol name"));
            }
            if names[..i].contains(n) {
                return Err(Error::invalid(format!(
                    "duplicate observation symbol `{n}`"
                )));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, z: SymbolId) -> &str {
        &self.names[z]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<SymbolId> {
        self.names.iter().position(|n| n == name)
    }

    /// Parses a word written as comma or whitespace separated symbol names.
    pub fn parse_word(&self, text: &str) -> Result<ObservationTrace> {
        text.split(|c: char| c == ',' || c == '·' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                self.index_of(t)
                    .ok_or_else(|| Error::UnknownSymbol(t.to_string()))
            })
            .collect()
    }

    pub fn format_word(&self, word: &[SymbolId]) -> String {
        if word.is_empty() {
            return "ε".to_string();
        }
        word.iter()
            .map(|&z| self.name(z))
            .collect::<Vec<_>>()
            .join("·")
    }
}

/// What the agent perceives after an action: a symbol of `Z`, or nothing of note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Observation {
    Null,
    Symbol(SymbolId),
}

impl Observation {
    pub fn symbol(self) -> Option<SymbolId> {
        match self {
            Observation::Null => None,
            Observation::Symbol(z) => Some(z),
        }
    }

    pub fn is_null(self) -> bool {
        matches!(self, Observation::Null)
    }
}

/// A violated `Nrmdp` invariant. Produced by [`Nrmdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape {
        expected_rows: usize,
        found_rows: usize,
    },
    NoStates,
    NoActions,
    InitialOutOfRange {
        initial: StateId,
        num_states: usize,
    },
    RowSum {
        state: StateId,
        action: ActionId,
        sum: f64,
    },
    ProbabilityOutOfRange {
        state: StateId,
        action: ActionId,
        target: StateId,
        probability: f64,
    },
    TargetOutOfRange {
        state: StateId,
        action: ActionId,
        target: StateId,
    },
    UnsortedRow {
        state: StateId,
        action: ActionId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape {
                expected_rows,
                found_rows,
            } => {
                write!(
                    f,
                    "expected {expected_rows} transition rows, found {found_rows}"
                )
            }
            Violation::NoStates => write!(f, "model has no states"),
            Violation::NoActions => write!(f, "model has no actions"),
            Violation::InitialOutOfRange {
                initial,
                num_states,
            } => {
                write!(
                    f,
                    "initial state {initial} out of range (|S| = {num_states})"
                )
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "row (s{state}, a{action}) sums to {sum}")
            }
            Violation::ProbabilityOutOfRange {
                state,
                action,
                target,
                probability,
            } => write!(
                f,
                "probability {probability} of (s{state}, a{action}) -> s{target} outside [0,1]"
            ),
            Violation::TargetOutOfRange {
                state,
                action,
                target,
            } => {
                write!(
                    f,
                    "row (s{state}, a{action}) targets unknown state {target}"
                )
            }
            Violation::UnsortedRow { state, action } => {
                write!(
                    f,
                    "row (s{state}, a{action}) targets are not strictly ascending"
                )
            }
        }
    }
}

/// Non-rewarding MDP `⟨S, A, T, s0⟩`. Every action is enabled in every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nrmdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    /// Flattened `[s * |A| + a]`.
    rows: Vec<Row>,
    initial: StateId,
}

impl Nrmdp {
    /// Builds a model, rejecting it if any invariant is violated.
    pub fn new(
        state_names: Vec<String>,
        action_names: Vec<String>,
        rows: Vec<Row>,
        initial: StateId,
    ) -> Result<Self> {
        let m = Self::from_parts_unchecked(state_names, action_names, rows, initial);
        let violations = m.validate();
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidModel(
                violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    /// Builds a model without checking it. Use [`Nrmdp::validate`] afterwards.
    pub fn from_parts_unchecked(
        state_names: Vec<String>,
        action_names: Vec<String>,
        rows: Vec<Row>,
        initial: StateId,
    ) -> Self {
        Self {
            state_names,
            action_names,
            rows,
            initial,
        }
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a]
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.action_names.iter().position(|n| n == name)
    }

    pub fn row(&self, s: StateId, a: ActionId) -> &[(StateId, f64)] {
        &self.rows[s * self.num_actions() + a]
    }

    pub fn check_state(&self, s: StateId) -> Result<()> {
        if s < self.num_states() {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                state: s,
                num_states: self.num_states(),
            })
        }
    }

    pub fn check_action(&self, a: ActionId) -> Result<()> {
        if a < self.num_actions() {
            Ok(())
        } else {
            Err(Error::ActionOutOfRange {
                action: a,
                num_actions: self.num_actions(),
            })
        }
    }

    /// Lists every violated invariant. Empty iff the model is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (ns, na) = (self.num_states(), self.num_actions());
        if ns == 0 {
            out.push(Violation::NoStates);
        }
        if na == 0 {
            out.push(Violation::NoActions);
        }
        if self.initial >= ns {
            out.push(Violation::InitialOutOfRange {
                initial: self.initial,
                num_states: ns,
            });
        }
        if self.rows.len() != ns * na {
            out.push(Violation::Shape {
                expected_rows: ns * na,
                found_rows: self.rows.len(),
            });
            return out;
        }
        for s in 0..ns {
            for a in 0..na {
                let row = self.row(s, a);
                let mut sum = 0.0;
                for &(t, p) in row {
                    if t >= ns {
                        out.push(Violation::TargetOutOfRange {
                            state: s,
                            action: a,
                            target: t,
                        });
                    }
                    if !(0.0..=1.0).contains(&p) || p.is_nan() {
                        out.push(Violation::ProbabilityOutOfRange {
                            state: s,
                            action: a,
                            target: t,
                            probability: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                    out.push(Violation::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                if row.windows(2).any(|w| w[0].0 >= w[1].0) {
                    out.push(Violation::UnsortedRow {
                        state: s,
                        action: a,
                    });
                }
            }
        }
        out
    }

    /// Draws a successor of `(s, a)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        s: StateId,
        a: ActionId,
        rng: &mut R,
    ) -> Result<StateId> {
        self.check_state(s)?;
        self.check_action(a)?;
        Ok(sample_row(self.row(s, a), rng))
    }
}

/// Inverse-CDF sampling over a sparse row. Falls back to the last target when
/// rounding leaves the draw just above the accumulated mass.
pub fn sample_row<R: Rng + ?Sized>(row: &[(StateId, f64)], rng: &mut R) -> StateId {
    if let [(only, _)] = row {
        return *only;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(t, p) in row {
        acc += p;
        if u < acc {
            return t;
        }
    }
    row.iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|(t, _)| *t)
        .unwrap_or(row[row.len() - 1].0)
}

/// `λ : A × S → Z ⊎ {null}`, keyed on the action and the state it reaches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingFunction {
    alphabet: Alphabet,
    num_states: usize,
    /// Flattened `[a * |S| + s]`.
    table: Vec<Observation>,
}

impl LabelingFunction {
    /// All-null labeling over the given dimensions.
    pub fn new(alphabet: Alphabet, num_actions: usize, num_states: usize) -> Self {
        Self {
            alphabet,
            num_states,
            table: vec![Observation::Null; num_actions * num_states],
        }
    }

    pub fn set(&mut self, a: ActionId, s: StateId, obs: Observation) -> Result<()> {
        if let Observation::Symbol(z) = obs {
            if z >= self.alphabet.len() {
                return Err(Error::UnknownSymbol(format!("#{z}")));
            }
        }
        let i = a * self.num_states + s;
        match self.table.get_mut(i) {
            Some(slot) => {
                *slot = obs;
                Ok(())
            }
            None => Err(Error::invalid(format!(
                "label index (a{a}, s{s}) out of range"
            ))),
        }
    }

    pub fn label(&self, a: ActionId, s: StateId) -> Observation {
        self.table[a * self.num_states + s]
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.table.len().checked_div(self.num_states).unwrap_or(0)
    }

    /// Symbols of `Z` that no `(a, s)` pair emits.
    pub fn unused_symbols(&self) -> Vec<SymbolId> {
        let mut seen = vec![false; self.alphabet.len()];
        for obs in &self.table {
            if let Observation::Symbol(z) = obs {
                seen[*z] = true;
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(z, _)| z)
            .collect()
    }

    /// `(a, s')` pairs that emit `z`.
    pub fn emitters(&self, z: SymbolId) -> impl Iterator<Item = (ActionId, StateId)> + '_ {
        self.table.iter().enumerate().filter_map(move |(i, o)| {
            (*o == Observation::Symbol(z)).then_some((i / self.num_states, i % self.num_states))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub action: ActionId,
    pub reward: f64,
    pub state: StateId,
}

/// `s0 a0 r1 s1 a1 r2 … s_k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionTrace {
    pub initial: StateId,
    pub steps: Vec<TraceStep>,
}

/// `s0 a0 s1 a1 … s_k`: the state-action skeleton of an interaction trace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub initial: StateId,
    pub steps: Vec<(ActionId, StateId)>,
}

impl InteractionTrace {
    pub fn new(initial: StateId) -> Self {
        Self {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, action: ActionId, reward: f64, state: StateId) {
        self.steps.push(TraceStep {
            action,
            reward,
            state,
        });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn history(&self) -> History {
        History {
            initial: self.initial,
            steps: self.steps.iter().map(|st| (st.action, st.state)).collect(),
        }
    }

    /// Checks every index against the model dimensions.
    pub fn validate(&self, m: &Nrmdp) -> Result<()> {
        m.check_state(self.initial)?;
        for st in &self.steps {
            m.check_action(st.action)?;
            m.check_state(st.state)?;
        }
        Ok(())
    }
}

/// Applies `λ(a_i, s_{i+1})` stepwise and keeps only non-null symbols.
pub fn extract_observation_trace(
    t: &InteractionTrace,
    labels: &LabelingFunction,
) -> ObservationTrace {
    t.steps
        .iter()
        .filter_map(|st| labels.label(st.action, st.state).symbol())
        .collect()
}

/// The rewards at the positions retained by [`extract_observation_trace`].
pub fn extract_reward_trace(t: &InteractionTrace, labels: &LabelingFunction) -> RewardTrace {
    t.steps
        .iter()
        .filter(|st| !labels.label(st.action, st.state).is_null())
        .map(|st| st.reward)
        .collect()
}
