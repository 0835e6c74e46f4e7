//! The learning loop: fill the observation table through planned
//! membership queries, build a hypothesis, solve its product, then either
//! exploit the resulting strategy or explore uniformly, and restart learning
//! whenever a reward contradicts the hypothesis.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::lstar::ObservationTable;
use crate::machine::{rewards_equal, MealyRewardMachine};
use crate::mdp::{ActionId, LabelingFunction, Nrmdp, Observation, StateId, SymbolId};
use crate::product::{build_product_with_reset, solve_product, ProductMdp};
use crate::query::{
    build_query_mdp, execute_membership_query, plan, QueryMode, DEFAULT_QUERY_BUDGET,
};
use crate::solver::{SolveParams, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    pub expert_value: f64,
    pub episode_length: u64,
    pub total_step_budget: u64,
    pub query_budget: u64,
    pub mode: QueryMode,
    pub seed: u64,
    pub solve: SolveParams,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            expert_value: 0.0,
            episode_length: 100,
            total_step_budget: 1_000_000,
            query_budget: DEFAULT_QUERY_BUDGET,
            mode: QueryMode::Min,
            seed: 0,
            solve: SolveParams::default(),
        }
    }
}

impl DriverConfig {
    pub fn for_builtin(b: &crate::env::Builtin) -> Self {
        Self {
            expert_value: b.expert_value,
            episode_length: b.episode_length as u64,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.episode_length == 0 || self.total_step_budget == 0 || self.query_budget == 0 {
            return Err(Error::invalid(
                "episode length and budgets must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Learn,
    Explore,
    Exploit,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Learn => "learn",
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub phase: Phase,
    /// 0 before the first hypothesis.
    pub hypothesis: usize,
    pub steps: u64,
    pub ret: f64,
    pub mq_count: u64,
    pub ce_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisRecord {
    pub id: usize,
    pub nodes: usize,
    pub gain: f64,
    /// Steps spent when the hypothesis was built.
    pub built_at: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub episodes: Vec<EpisodeRecord>,
    pub hypotheses: Vec<HypothesisRecord>,
    pub learned: Option<MealyRewardMachine>,
    pub mq_count: u64,
    pub ce_count: u64,
    pub total_steps: u64,
}

impl RunLog {
    pub fn final_gain(&self) -> Option<f64> {
        self.hypotheses.last().map(|h| h.gain)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,phase,hypothesis,steps,return,mq_count,ce_count\n");
        for e in &self.episodes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.episode, e.phase, e.hypothesis, e.steps, e.ret, e.mq_count, e.ce_count
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let hypotheses: Vec<serde_json::Value> = self
            .hypotheses
            .iter()
            .map(|h| serde_json::json!({"id": h.id, "nodes": h.nodes, "gain": h.gain, "built_at": h.built_at}))
            .collect();
        let summary = serde_json::json!({
            "final_gain": self.final_gain(),
            "mq_count": self.mq_count,
            "ce_count": self.ce_count,
            "hypothesis_count": self.hypotheses.len(),
            "learned_nodes": self.learned.as_ref().map(MealyRewardMachine::num_nodes),
            "total_steps": self.total_steps,
            "episodes": self.episodes.len(),
            "hypotheses": hypotheses,
        });
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"
    }

    /// Writes `run.csv`, `summary.json` and, if a machine was learned,
    /// `learned.json` and `learned.dot`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("run.csv"), self.to_csv())?;
        fs::write(dir.join("summary.json"), self.summary_json())?;
        if let Some(m) = &self.learned {
            fs::write(dir.join("learned.json"), m.to_json())?;
            fs::write(dir.join("learned.dot"), m.to_dot())?;
        }
        Ok(())
    }
}

/// Episode bookkeeping. Learning and exploration are cut into windows of
/// `episode_length` steps; exploitation episodes are delimited explicitly.
#[derive(Debug)]
struct Tracker {
    episode_length: u64,
    phase: Phase,
    hypothesis: usize,
    steps: u64,
    ret: f64,
    total_steps: u64,
    mq_count: u64,
    ce_count: u64,
    episodes: Vec<EpisodeRecord>,
}

impl Tracker {
    fn record(&mut self, reward: f64) {
        self.steps += 1;
        self.total_steps += 1;
        self.ret += reward;
        if self.phase != Phase::Exploit && self.steps >= self.episode_length {
            self.close();
        }
    }

    fn close(&mut self) {
        if self.steps == 0 {
            return;
        }
        self.episodes.push(EpisodeRecord {
            episode: self.episodes.len() as u64,
            phase: self.phase,
            hypothesis: self.hypothesis,
            steps: self.steps,
            ret: self.ret,
            mq_count: self.mq_count,
            ce_count: self.ce_count,
        });
        self.steps = 0;
        self.ret = 0.0;
    }

    fn enter(&mut self, phase: Phase) {
        self.close();
        self.phase = phase;
    }
}

/// Environment wrapper feeding every step and reset into the tracker.
struct Recording<'a, E: ?Sized> {
    env: &'a mut E,
    tracker: &'a mut Tracker,
}

impl<E: Environment + ?Sized> Environment for Recording<'_, E> {
    fn model(&self) -> &Nrmdp {
        self.env.model()
    }

    fn labels(&self) -> &LabelingFunction {
        self.env.labels()
    }

    fn state(&self) -> StateId {
        self.env.state()
    }

    fn null_reward(&self) -> f64 {
        self.env.null_reward()
    }

    fn reset_cost(&self) -> f64 {
        self.env.reset_cost()
    }

    fn reset(&mut self) -> f64 {
        let r = self.env.reset();
        self.tracker.record(r);
        r
    }

    fn step(&mut self, a: ActionId) -> Result<(StateId, f64)> {
        let out = self.env.step(a)?;
        self.tracker.record(out.1);
        Ok(out)
    }

    fn end_episode(&mut self) {
        self.tracker.close();
    }
}

/// A word on which the hypothesis mispredicted the last reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub word: Vec<SymbolId>,
    pub rewards: Vec<f64>,
    /// Steps taken by the phase that found it.
    pub steps: u64,
}

/// Follows the environment alongside the hypothesis and reports the first
/// reward the hypothesis gets wrong.
struct Monitor<'h> {
    h: &'h MealyRewardMachine,
    node: usize,
    word: Vec<SymbolId>,
    rewards: Vec<f64>,
}

impl<'h> Monitor<'h> {
    fn new(h: &'h MealyRewardMachine) -> Self {
        Self {
            h,
            node: h.start(),
            word: Vec::new(),
            rewards: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.node = self.h.start();
        self.word.clear();
        self.rewards.clear();
    }

    /// `Some` with the Null-filtered trace up to the mismatch.
    fn observe(
        &mut self,
        z: Observation,
        reward: f64,
        steps: u64,
    ) -> Result<Option<Counterexample>> {
        let (next, predicted) = self.h.transition(self.node, z);
        self.node = next;
        let Observation::Symbol(sym) = z else {
            if !rewards_equal(predicted, reward) {
                return Err(Error::invalid(format!(
                    "environment paid {reward} on a step observing nothing; expected {predicted}"
                )));
            }
            return Ok(None);
        };
        self.word.push(sym);
        self.rewards.push(reward);
        if rewards_equal(predicted, reward) {
            return Ok(None);
        }
        Ok(Some(Counterexample {
            word: self.word.clone(),
            rewards: self.rewards.clone(),
            steps,
        }))
    }
}

fn exhausted(budget: u64, steps: u64, context: &str) -> Error {
    Error::BudgetExhausted {
        budget,
        steps,
        context: context.into(),
    }
}

/// Plays actions and reset uniformly at random until a reward contradicts
/// `h`. Starts with a reset.
pub fn explore_uniform_until_ce<E: Environment + ?Sized, R: Rng>(
    env: &mut E,
    h: &MealyRewardMachine,
    budget: u64,
    rng: &mut R,
) -> Result<Counterexample> {
    let reset_action = env.model().num_actions();
    let mut monitor = Monitor::new(h);
    if budget == 0 {
        return Err(exhausted(budget, 0, "uniform exploration"));
    }
    env.reset();
    let mut steps = 1;
    while steps < budget {
        let a = rng.gen_range(0..=reset_action);
        steps += 1;
        if a == reset_action {
            env.reset();
            monitor.reset();
            continue;
        }
        let (next, reward) = env.step(a)?;
        if let Some(ce) = monitor.observe(env.labels().label(a, next), reward, steps)? {
            return Ok(ce);
        }
    }
    Err(exhausted(budget, steps, "uniform exploration"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploitOutcome {
    pub counterexample: Option<Counterexample>,
    pub steps: u64,
    pub total_reward: f64,
}

/// Runs episodes of a reset followed by `episode_length` actions chosen by
/// `strategy` on the product of the environment with `h`. Stops at the first
/// counterexample or when `budget` steps are spent.
pub fn exploit_until_ce<E: Environment + ?Sized>(
    env: &mut E,
    h: &MealyRewardMachine,
    product: &ProductMdp,
    strategy: &Strategy,
    episode_length: u64,
    budget: u64,
) -> Result<ExploitOutcome> {
    let reset_action = product.reset_action();
    let mut monitor = Monitor::new(h);
    let mut steps = 0u64;
    let mut total_reward = 0.0;
    'episodes: while steps < budget {
        total_reward += env.reset();
        steps += 1;
        monitor.reset();
        for _ in 0..episode_length {
            if steps >= budget {
                break 'episodes;
            }
            let x = product.index(env.state(), monitor.node);
            let a = strategy.choice[x];
            steps += 1;
            if a == reset_action {
                total_reward += env.reset();
                monitor.reset();
                continue;
            }
            let (next, reward) = env.step(a)?;
            total_reward += reward;
            if let Some(ce) = monitor.observe(env.labels().label(a, next), reward, steps)? {
                env.end_episode();
                return Ok(ExploitOutcome {
                    counterexample: Some(ce),
                    steps,
                    total_reward,
                });
            }
        }
        env.end_episode();
    }
    env.end_episode();
    Ok(ExploitOutcome {
        counterexample: None,
        steps,
        total_reward,
    })
}

pub fn empirical_mean_payoff(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::invalid("mean payoff of an empty trace"));
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// Learns a reward machine while acting in `env`, which must be fresh.
///
/// The run ends when the total step budget is spent. Running out of budget
/// before the first hypothesis exists, or within a single membership query,
/// is an error.
pub fn run_active_learning<E: Environment + ?Sized>(
    env: &mut E,
    config: &DriverConfig,
) -> Result<RunLog> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let model = env.model().clone();
    let labels = env.labels().clone();
    let alphabet = labels.alphabet().clone();
    let reset_cost = env.reset_cost();
    let mut table = ObservationTable::new(alphabet.clone(), env.null_reward());
    let mut tracker = Tracker {
        episode_length: config.episode_length,
        phase: Phase::Learn,
        hypothesis: 0,
        steps: 0,
        ret: 0.0,
        total_steps: 0,
        mq_count: 0,
        ce_count: 0,
        episodes: Vec::new(),
    };
    let mut log = RunLog::default();

    'alive: loop {
        // learning
        tracker.enter(Phase::Learn);
        loop {
            for q in table.pending_queries() {
                if table.cached(&q).is_some() {
                    continue;
                }
                let left = config.total_step_budget - tracker.total_steps;
                if left == 0 {
                    if log.hypotheses.is_empty() {
                        return Err(exhausted(
                            config.total_step_budget,
                            tracker.total_steps,
                            "learning",
                        ));
                    }
                    break 'alive;
                }
                let query_plan = plan(
                    build_query_mdp(&model, &labels, &q)?,
                    config.mode,
                    &config.solve,
                    &alphabet,
                )?;
                let mut rec = Recording {
                    env: &mut *env,
                    tracker: &mut tracker,
                };
                rec.reset();
                let limit = config.query_budget.min(left - 1);
                match execute_membership_query(&mut rec, &query_plan, limit) {
                    Ok(out) => {
                        tracker.mq_count += 1;
                        table.resolve_query(&q, &out.rewards)?;
                    }
                    Err(Error::BudgetExhausted { steps, .. })
                        if limit < config.query_budget && !log.hypotheses.is_empty() =>
                    {
                        log::info!("step budget spent during membership query after {steps} steps");
                        break 'alive;
                    }
                    Err(Error::BudgetExhausted { steps, .. }) => {
                        return Err(exhausted(
                            limit,
                            steps,
                            &format!("membership query {}", alphabet.format_word(&q)),
                        ))
                    }
                    Err(e) => return Err(e),
                }
            }
            if table.is_complete()? {
                break;
            }
        }

        let h = table.build_hypothesis()?;
        let product = build_product_with_reset(&model, &labels, &h, reset_cost)?;
        let strategy = solve_product(&product, &config.solve)?;
        let gain = strategy.value[product.initial()];
        tracker.hypothesis = table.hypothesis_count();
        log.hypotheses.push(HypothesisRecord {
            id: tracker.hypothesis,
            nodes: h.num_nodes(),
            gain,
            built_at: tracker.total_steps,
        });
        log::info!(
            "hypothesis {} with {} nodes, gain {gain}",
            tracker.hypothesis,
            h.num_nodes()
        );
        log.learned = Some(h.clone());

        let left = config.total_step_budget - tracker.total_steps;
        if left == 0 {
            break;
        }
        let ce = if gain < config.expert_value {
            tracker.enter(Phase::Explore);
            let mut rec = Recording {
                env: &mut *env,
                tracker: &mut tracker,
            };
            match explore_uniform_until_ce(&mut rec, &h, left, &mut rng) {
                Ok(ce) => Some(ce),
                Err(Error::BudgetExhausted { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            tracker.enter(Phase::Exploit);
            let mut rec = Recording {
                env: &mut *env,
                tracker: &mut tracker,
            };
            exploit_until_ce(
                &mut rec,
                &h,
                &product,
                &strategy,
                config.episode_length,
                left,
            )?
            .counterexample
        };
        match ce {
            Some(ce) => {
                tracker.ce_count += 1;
                log::debug!(
                    "counterexample {} / {:?}",
                    alphabet.format_word(&ce.word),
                    ce.rewards
                );
                table.add_counterexample(&ce.word, &ce.rewards)?;
            }
            None => break,
        }
    }
    tracker.close();
    log.episodes = tracker.episodes;
    log.mq_count = tracker.mq_count;
    log.ce_count = tracker.ce_count;
    log.total_steps = tracker.total_steps;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{builtin, Domain, HiddenEnvironment};
    use crate::machine::{check_equivalence, Equivalence};
    use crate::mdp::Alphabet;

    #[test]
    fn mean_payoff_of_traces() {
        assert_eq!(empirical_mean_payoff(&[2.0, 2.0, 2.0]).unwrap(), 2.0);
        assert_eq!(
            empirical_mean_payoff(&[10.0, 70.0, 95.0, 180.0]).unwrap(),
            88.75
        );
        assert_eq!(empirical_mean_payoff(&[0.0]).unwrap(), 0.0);
        assert!(empirical_mean_payoff(&[]).is_err());
    }

    #[test]
    fn cube_run_learns_minimal_machine() {
        let b = builtin(Domain::Cube).unwrap();
        let mut env = b.environment(1).unwrap();
        let config = DriverConfig {
            total_step_budget: 200_000,
            ..DriverConfig::for_builtin(&b)
        };
        let log = run_active_learning(&mut env, &config).unwrap();
        let learned = log.learned.as_ref().unwrap();
        assert_eq!(
            check_equivalence(&b.truth, learned).unwrap(),
            Equivalence::Equivalent
        );
        assert_eq!(learned.num_nodes(), 6);
        assert!(log.hypotheses.len() <= 6);
        assert_eq!(log.total_steps, 200_000);
        assert_eq!(
            log.episodes.iter().map(|e| e.steps).sum::<u64>(),
            log.total_steps
        );
        for w in log.episodes.windows(2) {
            assert!(w[0].mq_count <= w[1].mq_count && w[0].ce_count <= w[1].ce_count);
        }
    }

    #[test]
    fn one_node_truth_needs_no_counterexample() {
        let b = builtin(Domain::Cube).unwrap();
        let (m, l) = b.compile().unwrap();
        let truth = MealyRewardMachine::self_loops(1, 0, l.alphabet().clone(), 0.0, 0.5).unwrap();
        let mut env = HiddenEnvironment::new(m, l, truth, -1.0, 2).unwrap();
        let config = DriverConfig {
            expert_value: 0.1,
            episode_length: 50,
            total_step_budget: 5_000,
            ..Default::default()
        };
        let log = run_active_learning(&mut env, &config).unwrap();
        assert_eq!(log.hypotheses.len(), 1);
        assert_eq!(log.ce_count, 0);
        assert!((log.final_gain().unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn tiny_budget_is_an_error() {
        let b = builtin(Domain::Treasure).unwrap();
        let mut env = b.environment(1).unwrap();
        let config = DriverConfig {
            total_step_budget: 3,
            ..DriverConfig::for_builtin(&b)
        };
        assert!(matches!(
            run_active_learning(&mut env, &config),
            Err(Error::BudgetExhausted { .. })
        ));
    }

    #[test]
    fn exploit_with_episode_length_one_alternates_resets() {
        let b = builtin(Domain::Cube).unwrap();
        let (m, l) = b.compile().unwrap();
        let p = build_product_with_reset(&m, &l, &b.truth, -1.0).unwrap();
        let st = solve_product(&p, &SolveParams::default()).unwrap();
        let mut env = b.environment(3).unwrap();
        let out = exploit_until_ce(&mut env, &b.truth, &p, &st, 1, 10).unwrap();
        assert_eq!(out.steps, 10);
        assert!(out.counterexample.is_none());
        // five resets at -1 each; one move from the start never observes anything
        assert_eq!(out.total_reward, -5.0);
    }

    #[test]
    fn exploit_finds_mispriced_first_edge() {
        let b = builtin(Domain::Treasure).unwrap();
        let (m, l) = b.compile().unwrap();
        let mut h = b.truth.clone();
        let mz = h.alphabet().index_of("m").unwrap();
        h.set_edge(0, mz, 1, 11.0).unwrap();
        let p = build_product_with_reset(&m, &l, &h, -10.0).unwrap();
        let st = solve_product(&p, &SolveParams::default()).unwrap();
        let mut env = b.environment(5).unwrap();
        let out = exploit_until_ce(&mut env, &h, &p, &st, 507, 507).unwrap();
        let ce = out.counterexample.unwrap();
        assert_eq!(ce.word, vec![mz]);
        assert_eq!(ce.rewards, vec![10.0]);
    }

    #[test]
    fn explore_reports_genuine_counterexamples() {
        let b = builtin(Domain::Cube).unwrap();
        let h = MealyRewardMachine::self_loops(1, 0, Alphabet::new(["a", "b"]).unwrap(), 0.0, 0.0)
            .unwrap();
        let mut env = b.environment(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ce = explore_uniform_until_ce(&mut env, &h, 100_000, &mut rng).unwrap();
        assert_ne!(h.run_observations(&ce.word).unwrap(), ce.rewards);
        assert_eq!(b.truth.run_observations(&ce.word).unwrap(), ce.rewards);
        let mut env = b.environment(9).unwrap();
        assert!(matches!(
            explore_uniform_until_ce(&mut env, &b.truth, 2_000, &mut rng),
            Err(Error::BudgetExhausted { .. })
        ));
    }

    #[test]
    fn csv_has_fixed_header() {
        let log = RunLog::default();
        assert_eq!(
            log.to_csv(),
            "episode,phase,hypothesis,steps,return,mq_count,ce_count\n"
        );
    }
}
