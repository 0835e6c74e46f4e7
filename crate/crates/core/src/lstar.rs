//! Angluin-style learning of Mealy reward machines. The table never talks to
//! the environment itself: callers fetch [`ObservationTable::pending_queries`],
//! answer them however they like and feed the answers back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::machine::{reward_traces_equal, rewards_equal, MealyRewardMachine};
use crate::mdp::{Alphabet, SymbolId};

pub type Word = Vec<SymbolId>;

/// Sequence number of a built hypothesis, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HypothesisId(pub usize);

impl fmt::Display for HypothesisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H{}", self.0)
    }
}

/// Outcome of the closedness / consistency check.
#[derive(Debug, Clone, PartialEq)]
pub enum Completeness {
    Complete,
    /// A boundary row matching no prefix row.
    Unclosed(Word),
    /// Two prefixes with equal rows whose extensions by `symbol` differ in
    /// column `suffix`.
    Inconsistent {
        first: Word,
        second: Word,
        symbol: SymbolId,
        suffix: Word,
    },
}

#[derive(Debug, Clone)]
pub struct ObservationTable {
    alphabet: Alphabet,
    default_reward: f64,
    prefixes: Vec<Word>,
    prefix_set: BTreeSet<Word>,
    suffixes: Vec<Word>,
    /// Every answered word together with all of its prefixes.
    cache: BTreeMap<Word, Vec<f64>>,
    hypotheses: usize,
    hypothesis: Option<MealyRewardMachine>,
}

impl ObservationTable {
    pub fn new(alphabet: Alphabet, default_reward: f64) -> Self {
        let suffixes = (0..alphabet.len()).map(|z| vec![z]).collect();
        let mut cache = BTreeMap::new();
        cache.insert(Vec::new(), Vec::new());
        Self {
            alphabet,
            default_reward,
            prefixes: vec![Vec::new()],
            prefix_set: BTreeSet::from([Vec::new()]),
            suffixes,
            cache,
            hypotheses: 0,
            hypothesis: None,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn prefixes(&self) -> &[Word] {
        &self.prefixes
    }

    pub fn suffixes(&self) -> &[Word] {
        &self.suffixes
    }

    /// Number of cached words (prefixes of answers included, ε excluded).
    pub fn cache_len(&self) -> usize {
        self.cache.len() - 1
    }

    pub fn cached(&self, word: &[SymbolId]) -> Option<&[f64]> {
        self.cache.get(word).map(Vec::as_slice)
    }

    pub fn hypothesis_count(&self) -> usize {
        self.hypotheses
    }

    pub fn current_hypothesis(&self) -> Option<(HypothesisId, &MealyRewardMachine)> {
        self.hypothesis
            .as_ref()
            .map(|h| (HypothesisId(self.hypotheses), h))
    }

    /// S·Z words outside S, in table order.
    pub fn boundary(&self) -> Vec<Word> {
        let mut out = Vec::new();
        for p in &self.prefixes {
            for z in 0..self.alphabet.len() {
                let w = concat(p, &[z]);
                if !self.prefix_set.contains(&w) {
                    out.push(w);
                }
            }
        }
        out
    }

    /// Words still needed to fill every cell, deduplicated, shortest first and
    /// then lexicographic by symbol index.
    pub fn pending_queries(&self) -> Vec<Word> {
        let mut pending = BTreeSet::new();
        for p in self.prefixes.iter().cloned().chain(self.boundary()) {
            for e in &self.suffixes {
                let w = concat(&p, e);
                if !self.cache.contains_key(&w) {
                    pending.insert(w);
                }
            }
        }
        let mut out: Vec<Word> = pending.into_iter().collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }

    /// Records the answer to a membership query.
    pub fn resolve_query(&mut self, word: &[SymbolId], rewards: &[f64]) -> Result<()> {
        if word.len() != rewards.len() {
            return Err(Error::LengthMismatch {
                word: word.len(),
                rewards: rewards.len(),
            });
        }
        if let Some(&z) = word.iter().find(|&&z| z >= self.alphabet.len()) {
            return Err(Error::UnknownSymbol(format!("symbol index {z}")));
        }
        for k in 1..=word.len() {
            if let Some(old) = self.cache.get(&word[..k]) {
                if !reward_traces_equal(old, &rewards[..k]) {
                    return Err(Error::Contradiction {
                        word: self.alphabet.format_word(&word[..k]),
                        cached: old.clone(),
                        answered: rewards[..k].to_vec(),
                    });
                }
            }
        }
        for k in 1..=word.len() {
            self.cache
                .entry(word[..k].to_vec())
                .or_insert_with(|| rewards[..k].to_vec());
        }
        Ok(())
    }

    fn cell(&self, p: &[SymbolId], e: &[SymbolId]) -> Option<&[f64]> {
        self.cache.get(&concat(p, e)).map(|r| &r[p.len()..])
    }

    fn row(&self, p: &[SymbolId]) -> Result<Vec<f64>> {
        let mut row = Vec::new();
        for e in &self.suffixes {
            let cell = self
                .cell(p, e)
                .ok_or(Error::UnfilledTable(self.pending_queries().len()))?;
            row.extend_from_slice(cell);
        }
        Ok(row)
    }

    /// Closedness and consistency certificate without modifying the table.
    pub fn completeness(&self) -> Result<Completeness> {
        let pending = self.pending_queries().len();
        if pending > 0 {
            return Err(Error::UnfilledTable(pending));
        }
        let rows: Vec<Vec<f64>> = self
            .prefixes
            .iter()
            .map(|p| self.row(p))
            .collect::<Result<_>>()?;
        for w in self.boundary() {
            let r = self.row(&w)?;
            if !rows.iter().any(|s| reward_traces_equal(s, &r)) {
                return Ok(Completeness::Unclosed(w));
            }
        }
        for i in 0..self.prefixes.len() {
            for j in i + 1..self.prefixes.len() {
                if !reward_traces_equal(&rows[i], &rows[j]) {
                    continue;
                }
                for z in 0..self.alphabet.len() {
                    let a = concat(&self.prefixes[i], &[z]);
                    let b = concat(&self.prefixes[j], &[z]);
                    for e in &self.suffixes {
                        let (ca, cb) = (self.cell(&a, e).unwrap(), self.cell(&b, e).unwrap());
                        if !reward_traces_equal(ca, cb) {
                            return Ok(Completeness::Inconsistent {
                                first: self.prefixes[i].clone(),
                                second: self.prefixes[j].clone(),
                                symbol: z,
                                suffix: e.clone(),
                            });
                        }
                    }
                }
            }
        }
        Ok(Completeness::Complete)
    }

    /// True iff complete. Otherwise applies the L* fix for the reported defect:
    /// promote the unclosed row, or add the column `symbol·suffix`.
    pub fn is_complete(&mut self) -> Result<bool> {
        match self.completeness()? {
            Completeness::Complete => Ok(true),
            Completeness::Unclosed(w) => {
                self.add_prefix(w);
                Ok(false)
            }
            Completeness::Inconsistent { symbol, suffix, .. } => {
                let column = concat(&[symbol], &suffix);
                if !self.suffixes.contains(&column) {
                    self.suffixes.push(column);
                }
                Ok(false)
            }
        }
    }

    fn add_prefix(&mut self, w: Word) {
        if self.prefix_set.insert(w.clone()) {
            self.prefixes.push(w);
        }
    }

    /// Builds the hypothesis of a complete table: one node per distinct prefix
    /// row, starting at the class of ε.
    pub fn build_hypothesis(&mut self) -> Result<MealyRewardMachine> {
        if self.completeness()? != Completeness::Complete {
            return Err(Error::IncompleteTable);
        }
        let mut reps: Vec<Vec<f64>> = Vec::new();
        let mut rep_word: Vec<&Word> = Vec::new();
        for p in &self.prefixes {
            let r = self.row(p)?;
            if !reps.iter().any(|x| reward_traces_equal(x, &r)) {
                reps.push(r);
                rep_word.push(p);
            }
        }
        let class_of = |row: &[f64]| {
            reps.iter()
                .position(|x| reward_traces_equal(x, row))
                .unwrap()
        };
        let k = self.alphabet.len();
        let mut next = Vec::with_capacity(reps.len() * k);
        let mut output = Vec::with_capacity(reps.len() * k);
        for p in &rep_word {
            for z in 0..k {
                let pz = concat(p, &[z]);
                next.push(class_of(&self.row(&pz)?));
                output.push(self.cell(p, &[z]).unwrap()[0]);
            }
        }
        let machine = MealyRewardMachine::new(
            reps.len(),
            0,
            self.alphabet.clone(),
            next,
            output,
            self.default_reward,
        )?;
        self.hypotheses += 1;
        log::debug!(
            "built hypothesis {} with {} nodes",
            self.hypotheses,
            machine.num_nodes()
        );
        self.hypothesis = Some(machine.clone());
        Ok(machine)
    }

    /// Feeds back a word on which the current hypothesis is wrong. The answer
    /// is cached and every prefix of the word joins S.
    pub fn add_counterexample(&mut self, word: &[SymbolId], rewards: &[f64]) -> Result<()> {
        if word.len() != rewards.len() {
            return Err(Error::LengthMismatch {
                word: word.len(),
                rewards: rewards.len(),
            });
        }
        let h = self
            .hypothesis
            .as_ref()
            .ok_or_else(|| Error::invalid("no hypothesis has been built yet"))?;
        let predicted = h.run_observations(word)?;
        if reward_traces_equal(&predicted, rewards) {
            return Err(Error::NotACounterexample(self.alphabet.format_word(word)));
        }
        self.resolve_query(word, rewards)?;
        for k in 1..=word.len() {
            self.add_prefix(word[..k].to_vec());
        }
        Ok(())
    }

    /// Human-readable table: one line per row, cells separated by `|`.
    pub fn dump(&self) -> String {
        let fmt_cell = |c: Option<&[f64]>| match c {
            Some(r) => r
                .iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(","),
            None => "?".into(),
        };
        let mut out = String::new();
        let header: Vec<String> = self
            .suffixes
            .iter()
            .map(|e| self.alphabet.format_word(e))
            .collect();
        let _ = writeln!(out, "{:>16} | {}", "", header.join(" | "));
        for (section, rows) in [("S", self.prefixes.clone()), ("S·Z", self.boundary())] {
            let _ = writeln!(out, "-- {section}");
            for p in rows {
                let cells: Vec<String> = self
                    .suffixes
                    .iter()
                    .map(|e| fmt_cell(self.cell(&p, e)))
                    .collect();
                let _ = writeln!(
                    out,
                    "{:>16} | {}",
                    self.alphabet.format_word(&p),
                    cells.join(" | ")
                );
            }
        }
        out
    }
}

fn concat(a: &[SymbolId], b: &[SymbolId]) -> Word {
    let mut w = Vec::with_capacity(a.len() + b.len());
    w.extend_from_slice(a);
    w.extend_from_slice(b);
    w
}

/// Drives the table to completeness with an oracle answering every query.
pub fn fill_and_close<F>(table: &mut ObservationTable, mut answer: F) -> Result<()>
where
    F: FnMut(&[SymbolId]) -> Result<Vec<f64>>,
{
    loop {
        for q in table.pending_queries() {
            let r = answer(&q)?;
            table.resolve_query(&q, &r)?;
        }
        if table.is_complete()? {
            return Ok(());
        }
    }
}

/// `true` iff `h` reproduces every answer cached in the table.
pub fn agrees_with_cache(table: &ObservationTable, h: &MealyRewardMachine) -> bool {
    table.cache.iter().all(|(w, r)| {
        h.run_observations(w)
            .map(|out| out.iter().zip(r).all(|(a, b)| rewards_equal(*a, *b)))
            .unwrap_or(false)
    })
}
