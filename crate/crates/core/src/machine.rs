//! Mealy reward machines: deterministic transducers from observation words to
//! reward words.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Alphabet, History, LabelingFunction, Observation, RewardTrace, SymbolId};

pub type NodeId = usize;

/// Rewards closer than this are the same reward.
pub const REWARD_TOLERANCE: f64 = 1e-9;

pub fn rewards_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= REWARD_TOLERANCE
}

pub fn reward_traces_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| rewards_equal(*x, *y))
}

/// `⟨U, u0, Z, δu, δr, c⟩`.
///
/// Both tables are total over `U × Z`. `Null` is never stored: stepping on it
/// stays put and pays `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MealyRewardMachine {
    num_nodes: usize,
    start: NodeId,
    alphabet: Alphabet,
    /// `[u * |Z| + z]`.
    next: Vec<NodeId>,
    output: Vec<f64>,
    default_reward: f64,
}

/// Outcome of [`check_equivalence`].
#[derive(Debug, Clone, PartialEq)]
pub enum Equivalence {
    Equivalent,
    /// A shortest word on which the two machines answer differently.
    Counterexample(Vec<SymbolId>),
}

impl MealyRewardMachine {
    pub fn new(
        num_nodes: usize,
        start: NodeId,
        alphabet: Alphabet,
        next: Vec<NodeId>,
        output: Vec<f64>,
        default_reward: f64,
    ) -> Result<Self> {
        let cells = num_nodes * alphabet.len();
        if num_nodes == 0 {
            return Err(Error::invalid("machine needs at least one node"));
        }
        if start >= num_nodes {
            return Err(Error::NodeOutOfRange {
                node: start,
                num_nodes,
            });
        }
        if next.len() != cells || output.len() != cells {
            return Err(Error::invalid(format!(
                "transition tables must have |U|·|Z| = {cells} entries"
            )));
        }
        if let Some(&bad) = next.iter().find(|&&t| t >= num_nodes) {
            return Err(Error::NodeOutOfRange {
                node: bad,
                num_nodes,
            });
        }
        if output
            .iter()
            .chain([&default_reward])
            .any(|r| !r.is_finite())
        {
            return Err(Error::invalid("rewards must be finite"));
        }
        Ok(Self {
            num_nodes,
            start,
            alphabet,
            next,
            output,
            default_reward,
        })
    }

    /// Machine where every `(u, z)` is a self-loop paying `reward`, to be
    /// overwritten edge by edge with [`MealyRewardMachine::set_edge`].
    pub fn self_loops(
        num_nodes: usize,
        start: NodeId,
        alphabet: Alphabet,
        default_reward: f64,
        reward: f64,
    ) -> Result<Self> {
        let k = alphabet.len();
        let next = (0..num_nodes * k).map(|i| i / k).collect();
        Self::new(
            num_nodes,
            start,
            alphabet,
            next,
            vec![reward; num_nodes * k],
            default_reward,
        )
    }

    pub fn set_edge(&mut self, from: NodeId, z: SymbolId, to: NodeId, reward: f64) -> Result<()> {
        self.check_node(from)?;
        self.check_node(to)?;
        self.check_symbol(z)?;
        let i = from * self.alphabet.len() + z;
        self.next[i] = to;
        self.output[i] = reward;
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn default_reward(&self) -> f64 {
        self.default_reward
    }

    /// `δu(u, z)`; indices must be valid.
    pub fn next(&self, u: NodeId, z: SymbolId) -> NodeId {
        self.next[u * self.alphabet.len() + z]
    }

    /// `δr(u, z)`; indices must be valid.
    pub fn output(&self, u: NodeId, z: SymbolId) -> f64 {
        self.output[u * self.alphabet.len() + z]
    }

    /// Unchecked step used on hot simulation paths.
    #[inline]
    pub fn transition(&self, u: NodeId, obs: Observation) -> (NodeId, f64) {
        match obs {
            Observation::Null => (u, self.default_reward),
            Observation::Symbol(z) => {
                let i = u * self.alphabet.len() + z;
                (self.next[i], self.output[i])
            }
        }
    }

    pub fn step(&self, u: NodeId, obs: Observation) -> Result<(NodeId, f64)> {
        self.check_node(u)?;
        if let Observation::Symbol(z) = obs {
            self.check_symbol(z)?;
        }
        Ok(self.transition(u, obs))
    }

    /// The node reached from `u0` by `word`.
    pub fn node_after(&self, word: &[SymbolId]) -> Result<NodeId> {
        let mut u = self.start;
        for &z in word {
            self.check_symbol(z)?;
            u = self.next(u, z);
        }
        Ok(u)
    }

    pub fn run_observations(&self, word: &[SymbolId]) -> Result<RewardTrace> {
        let mut u = self.start;
        let mut out = Vec::with_capacity(word.len());
        for &z in word {
            self.check_symbol(z)?;
            let (v, r) = self.transition(u, Observation::Symbol(z));
            out.push(r);
            u = v;
        }
        Ok(out)
    }

    /// `δ*r(u0, σh)`: one reward per history step, `c` at null positions.
    pub fn run_history(&self, history: &History, labels: &LabelingFunction) -> Result<RewardTrace> {
        if labels.alphabet() != &self.alphabet {
            return Err(Error::AlphabetMismatch(
                "labeling function and machine use different alphabets".into(),
            ));
        }
        let mut u = self.start;
        let mut out = Vec::with_capacity(history.steps.len());
        for &(a, s) in &history.steps {
            if a >= labels.num_actions() || s >= labels.num_states() {
                return Err(Error::invalid(format!(
                    "history step (a{a}, s{s}) out of range"
                )));
            }
            let (v, r) = self.transition(u, labels.label(a, s));
            out.push(r);
            u = v;
        }
        Ok(out)
    }

    fn check_node(&self, u: NodeId) -> Result<()> {
        if u < self.num_nodes {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node: u,
                num_nodes: self.num_nodes,
            })
        }
    }

    fn check_symbol(&self, z: SymbolId) -> Result<()> {
        if z < self.alphabet.len() {
            Ok(())
        } else {
            Err(Error::UnknownSymbol(format!("#{z}")))
        }
    }

    /// Graphviz rendering with edges labeled `z|r`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph mrm {\n  rankdir=LR;\n  node [shape=circle];\n");
        out.push_str("  init [shape=point];\n");
        let _ = writeln!(out, "  init -> {};", self.start);
        for u in 0..self.num_nodes {
            for z in 0..self.alphabet.len() {
                let _ = writeln!(
                    out,
                    "  {} -> {} [label=\"{}|{}\"];",
                    u,
                    self.next(u, z),
                    self.alphabet.name(z),
                    self.output(u, z)
                );
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        let file = MachineFile {
            nodes: self.num_nodes,
            start: self.start,
            alphabet: self.alphabet.names().to_vec(),
            default_reward: self.default_reward,
            implicit_self_loop_reward: None,
            edges: (0..self.num_nodes)
                .flat_map(|u| (0..self.alphabet.len()).map(move |z| (u, z)))
                .map(|(u, z)| EdgeRecord {
                    from: u,
                    input: self.alphabet.name(z).to_string(),
                    to: self.next(u, z),
                    reward: self.output(u, z),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("machine serializes");
        s.push('\n');
        s
    }

    /// Parses the JSON machine format. Edges missing from the file are an error
    /// unless `implicit_self_loop_reward` is given, in which case they become
    /// self-loops paying that reward.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MachineFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let alphabet = Alphabet::new(file.alphabet)?;
        let k = alphabet.len();
        let mut seen = vec![false; file.nodes * k];
        let mut m = Self::self_loops(
            file.nodes,
            file.start,
            alphabet,
            file.default_reward,
            file.implicit_self_loop_reward.unwrap_or(0.0),
        )?;
        for e in &file.edges {
            let z = m
                .alphabet
                .index_of(&e.input)
                .ok_or_else(|| Error::UnknownSymbol(e.input.clone()))?;
            m.set_edge(e.from, z, e.to, e.reward)?;
            let i = e.from * k + z;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!(
                    "duplicate edge ({}, {})",
                    e.from, e.input
                )));
            }
        }
        if file.implicit_self_loop_reward.is_none() {
            if let Some(i) = seen.iter().position(|s| !s) {
                return Err(Error::invalid(format!(
                    "missing edge ({}, {}) and no implicit_self_loop_reward",
                    i / k,
                    m.alphabet.name(i % k)
                )));
            }
        }
        if !m.default_reward.is_finite() || m.output.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("rewards must be finite"));
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MachineFile {
    nodes: usize,
    start: NodeId,
    alphabet: Vec<String>,
    default_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    implicit_self_loop_reward: Option<f64>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    from: NodeId,
    input: String,
    to: NodeId,
    reward: f64,
}

/// Breadth-first search over the synchronous pair graph. Returns a shortest
/// distinguishing word, or `Equivalent` when every reachable pair of edges
/// pays the same.
pub fn check_equivalence(r: &MealyRewardMachine, h: &MealyRewardMachine) -> Result<Equivalence> {
    if r.alphabet != h.alphabet {
        return Err(Error::AlphabetMismatch(format!(
            "{:?} vs {:?}",
            r.alphabet.names(),
            h.alphabet.names()
        )));
    }
    if !rewards_equal(r.default_reward, h.default_reward) {
        return Err(Error::AlphabetMismatch(format!(
            "default rewards differ: {} vs {}",
            r.default_reward, h.default_reward
        )));
    }
    let k = r.alphabet.len();
    let idx = |a: NodeId, b: NodeId| a * h.num_nodes + b;
    // parent[pair] = (previous pair, symbol)
    let mut parent: Vec<Option<(usize, SymbolId)>> = vec![None; r.num_nodes * h.num_nodes];
    let mut visited = vec![false; r.num_nodes * h.num_nodes];
    let root = idx(r.start, h.start);
    visited[root] = true;
    let mut queue = VecDeque::from([root]);
    let word_to = |mut at: usize, parent: &[Option<(usize, SymbolId)>]| {
        let mut w = Vec::new();
        while let Some((p, z)) = parent[at] {
            w.push(z);
            at = p;
        }
        w.reverse();
        w
    };
    while let Some(pair) = queue.pop_front() {
        let (a, b) = (pair / h.num_nodes, pair % h.num_nodes);
        for z in 0..k {
            if !rewards_equal(r.output(a, z), h.output(b, z)) {
                let mut w = word_to(pair, &parent);
                w.push(z);
                return Ok(Equivalence::Counterexample(w));
            }
            let succ = idx(r.next(a, z), h.next(b, z));
            if !visited[succ] {
                visited[succ] = true;
                parent[succ] = Some((pair, z));
                queue.push_back(succ);
            }
        }
    }
    Ok(Equivalence::Equivalent)
}
