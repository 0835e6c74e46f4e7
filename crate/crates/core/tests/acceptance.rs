//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewardlearn::driver::{
    exploit_until_ce, explore_uniform_until_ce, run_active_learning, DriverConfig,
};
use rewardlearn::env::{builtin, Builtin, Domain, Environment};
use rewardlearn::lstar::{fill_and_close, ObservationTable};
use rewardlearn::product::{build_product_with_reset, solve_product};
use rewardlearn::query::{build_query_mdp, execute_membership_query, plan, QueryMode};
use rewardlearn::solver::{evaluate_strategy, optimal_mean_payoff, Mdp, SolveParams};
use rewardlearn::{check_equivalence, Equivalence, Error, MealyRewardMachine, Observation};

const ORACLE_TIME_LIMIT: Duration = Duration::from_secs(1);
const SOLVER_CASES: u64 = 250;
const SOLVER_MAX_STATES: usize = 5;
const SOLVER_MAX_ACTIONS: usize = 3;
const SOLVER_TOLERANCE: f64 = 1e-6;
const SOLVER_TIME_LIMIT: Duration = Duration::from_secs(60);
const QUERIES_PER_DOMAIN: usize = 12;
const CALIBRATION_SAMPLES: u64 = 10_000;
const CALIBRATION_SE: f64 = 3.0;
const EXPLOIT_STEPS: u64 = 100_000;
const EXPLOIT_RELATIVE: f64 = 0.05;
const SEARCH_RUNS: u64 = 100;
const SEARCH_BUDGET: u64 = 100_000;
const EXPERT_FRACTION: f64 = 0.9;
const RUN_BUDGET: u64 = 1_000_000;
const RUN_TIME_LIMIT: Duration = Duration::from_secs(300);

/// Optima reported for the original domains, for reference only.
fn published_gain(d: Domain) -> f64 {
    match d {
        Domain::Treasure => 9.884,
        Domain::Office => 0.383,
        Domain::Cube => 0.1624,
    }
}

fn minimal_nodes(d: Domain) -> usize {
    match d {
        Domain::Treasure => 5,
        Domain::Office => 7,
        Domain::Cube => 6,
    }
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn learn_with_teacher(
    target: &MealyRewardMachine,
) -> rewardlearn::Result<(MealyRewardMachine, usize)> {
    let mut t = ObservationTable::new(target.alphabet().clone(), target.default_reward());
    loop {
        fill_and_close(&mut t, |w| target.run_observations(w))?;
        let h = t.build_hypothesis()?;
        match check_equivalence(target, &h)? {
            Equivalence::Equivalent => return Ok((h, t.hypothesis_count())),
            Equivalence::Counterexample(w) => {
                let r = target.run_observations(&w)?;
                t.add_counterexample(&w, &r)?;
            }
        }
    }
}

fn oracle_teacher() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for d in Domain::ALL {
        let b = builtin(d).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let (h, _) = learn_with_teacher(&b.truth).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let equivalent =
            check_equivalence(&b.truth, &h).map_err(|e| e.to_string())? == Equivalence::Equivalent;
        let size_ok = h.num_nodes() == minimal_nodes(d);
        ok &= equivalent && size_ok && elapsed < ORACLE_TIME_LIMIT;
        parts.push(format!(
            "{d}: {} -> {} nodes in {:.1} ms",
            b.truth.num_nodes(),
            h.num_nodes(),
            elapsed.as_secs_f64() * 1e3
        ));
    }
    check(ok, parts.join("; "))
}

/// Strongly connected by construction: action 0 follows a cycle through
/// every state with at least half of its mass.
fn random_mdp(rng: &mut ChaCha8Rng) -> Mdp {
    let n = rng.gen_range(1..=SOLVER_MAX_STATES);
    let k = rng.gen_range(1..=SOLVER_MAX_ACTIONS);
    let mut rows = Vec::new();
    let mut rewards = Vec::new();
    for s in 0..n {
        for a in 0..k {
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut mass = 1.0;
            if a == 0 {
                let p = rng.gen_range(0.5..=1.0);
                row.push(((s + 1) % n, p));
                mass -= p;
            }
            let extra = rng.gen_range(1..=n);
            let weights: Vec<f64> = (0..extra).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for w in weights {
                row.push((rng.gen_range(0..n), mass * w / total));
            }
            let mut merged: Vec<(usize, f64)> = Vec::new();
            row.sort_by_key(|&(t, _)| t);
            for (t, p) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == t => last.1 += p,
                    _ => merged.push((t, p)),
                }
            }
            rows.push(merged);
            rewards.push(rng.gen_range(-1.0..=1.0));
        }
    }
    Mdp::new(n, k, rows, rewards).expect("generated rows are distributions")
}

fn best_memoryless_gain(mdp: &Mdp) -> rewardlearn::Result<f64> {
    let (n, k) = (mdp.num_states(), mdp.num_actions());
    let mut choice = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        best = best.max(evaluate_strategy(mdp, &choice)?[0]);
        let mut i = 0;
        while i < n {
            choice[i] += 1;
            if choice[i] < k {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == n {
            return Ok(best);
        }
    }
}

fn solver_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..SOLVER_CASES {
        let mdp = random_mdp(&mut rng);
        let st = optimal_mean_payoff(&mdp, &SolveParams::default()).map_err(|e| e.to_string())?;
        let oracle = best_memoryless_gain(&mdp).map_err(|e| e.to_string())?;
        worst = worst.max((st.value[0] - oracle).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= SOLVER_TOLERANCE && elapsed < SOLVER_TIME_LIMIT,
        format!(
            "{SOLVER_CASES} MDPs, max |gain - enumeration| = {worst:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn shortlex_words(alphabet_len: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| (0..alphabet_len).map(move |z| [w.as_slice(), &[z]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn calibrate_domain(b: &Builtin) -> rewardlearn::Result<(usize, f64, Vec<String>)> {
    let (m, l) = b.compile()?;
    let alphabet = l.alphabet().clone();
    let params = SolveParams::default();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (qi, w) in shortlex_words(alphabet.len(), 3).into_iter().enumerate() {
        if checked == QUERIES_PER_DOMAIN {
            break;
        }
        let max_plan = match plan(
            build_query_mdp(&m, &l, &w)?,
            QueryMode::Max,
            &params,
            &alphabet,
        ) {
            Ok(p) => p,
            Err(Error::UnrealizableQuery { .. }) => continue,
            Err(e) => return Err(e),
        };
        let min_plan = plan(
            build_query_mdp(&m, &l, &w)?,
            QueryMode::Min,
            &params,
            &alphabet,
        )?;
        checked += 1;
        let name = alphabet.format_word(&w);

        let mut env = b.environment(1_000 + qi as u64)?;
        let (mut successes, mut attempts) = (0u64, 0u64);
        while attempts < CALIBRATION_SAMPLES {
            env.reset();
            let out = execute_membership_query(&mut env, &max_plan, u64::MAX)?;
            successes += 1;
            attempts += out.attempts;
        }
        let alpha = max_plan.value;
        let freq = successes as f64 / attempts as f64;
        let se = (alpha * (1.0 - alpha) / attempts as f64).sqrt();
        let z = if se > 0.0 {
            (freq - alpha).abs() / se
        } else if (freq - alpha).abs() < 1e-9 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
        if z > CALIBRATION_SE {
            failures.push(format!("MAX {name}: alpha {alpha:.4} observed {freq:.4}"));
        }

        let mut env = b.environment(2_000 + qi as u64)?;
        let steps: Vec<f64> = (0..CALIBRATION_SAMPLES)
            .map(|_| {
                env.reset();
                execute_membership_query(&mut env, &min_plan, u64::MAX).map(|o| o.steps as f64)
            })
            .collect::<rewardlearn::Result<_>>()?;
        let n = steps.len() as f64;
        let mean = steps.iter().sum::<f64>() / n;
        let var = steps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let expected = min_plan.value;
        let z = if se > 0.0 {
            (mean - expected).abs() / se
        } else if (mean - expected).abs() < 1e-9 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
        if z > CALIBRATION_SE {
            failures.push(format!(
                "MIN {name}: expected {expected:.3} observed {mean:.3}"
            ));
        }
    }
    Ok((checked, worst, failures))
}

fn planner_calibration() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for d in Domain::ALL {
        let b = builtin(d).map_err(|e| e.to_string())?;
        let (checked, worst, failures) = calibrate_domain(&b).map_err(|e| e.to_string())?;
        ok &= checked >= 10 && failures.is_empty();
        parts.push(format!("{d}: {checked} queries, worst |z| {worst:.2}"));
        parts.extend(failures);
    }
    check(ok, parts.join("; "))
}

fn exploitation_matches_gain() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for d in Domain::ALL {
        let b = builtin(d).map_err(|e| e.to_string())?;
        let (m, l) = b.compile().map_err(|e| e.to_string())?;
        let p = build_product_with_reset(&m, &l, &b.truth, b.spec.reset_cost)
            .map_err(|e| e.to_string())?;
        let st = solve_product(&p, &SolveParams::default()).map_err(|e| e.to_string())?;
        let gain = st.value[p.initial()];
        let mut env = b.environment(77).map_err(|e| e.to_string())?;
        let out = exploit_until_ce(&mut env, &b.truth, &p, &st, EXPLOIT_STEPS, EXPLOIT_STEPS)
            .map_err(|e| e.to_string())?;
        let empirical = out.total_reward / out.steps as f64;
        let rel = (empirical - gain).abs() / gain.abs();
        ok &= out.counterexample.is_none() && rel <= EXPLOIT_RELATIVE;
        parts.push(format!(
            "{d}: solver {gain:.4}, empirical {empirical:.4} ({:.1}%), published {}",
            rel * 100.0,
            published_gain(d)
        ));
    }
    check(ok, parts.join("; "))
}

/// The truth with the reward of the first edge on `symbol` raised by one.
fn mispriced(truth: &MealyRewardMachine, symbol: &str) -> MealyRewardMachine {
    let mut h = truth.clone();
    let z = h.alphabet().index_of(symbol).expect("symbol in alphabet");
    let (next, r) = truth.transition(truth.start(), Observation::Symbol(z));
    h.set_edge(truth.start(), z, next, r + 1.0)
        .expect("valid edge");
    h
}

fn counterexample_search() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (d, symbol) in [
        (Domain::Treasure, "m"),
        (Domain::Office, "mrA"),
        (Domain::Cube, "a"),
    ] {
        let b = builtin(d).map_err(|e| e.to_string())?;
        let wrong = mispriced(&b.truth, symbol);
        let (mut found_wrong, mut found_truth, mut genuine) = (0, 0, true);
        let mut longest = 0u64;
        for seed in 0..SEARCH_RUNS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut env = b.environment(seed).map_err(|e| e.to_string())?;
            if let Ok(ce) = explore_uniform_until_ce(&mut env, &wrong, SEARCH_BUDGET, &mut rng) {
                found_wrong += 1;
                longest = longest.max(ce.steps);
                genuine &= b.truth.run_observations(&ce.word).ok() == Some(ce.rewards.clone())
                    && wrong.run_observations(&ce.word).ok() != Some(ce.rewards.clone());
            }
            let mut env = b.environment(seed).map_err(|e| e.to_string())?;
            match explore_uniform_until_ce(&mut env, &b.truth, SEARCH_BUDGET, &mut rng) {
                Ok(_) => found_truth += 1,
                Err(Error::BudgetExhausted { .. }) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
        ok &= found_wrong == SEARCH_RUNS && found_truth == 0 && genuine;
        parts.push(format!(
            "{d}: wrong {found_wrong}/{SEARCH_RUNS} (slowest {longest} steps), truth {found_truth}/{SEARCH_RUNS}"
        ));
    }
    check(ok, parts.join("; "))
}

fn reconstructed_optimum(b: &Builtin) -> rewardlearn::Result<f64> {
    let (m, l) = b.compile()?;
    let p = build_product_with_reset(&m, &l, &b.truth, b.spec.reset_cost)?;
    Ok(solve_product(&p, &SolveParams::default())?.value[p.initial()])
}

fn full_runs() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for d in Domain::ALL {
        let b = builtin(d).map_err(|e| e.to_string())?;
        let optimum = reconstructed_optimum(&b).map_err(|e| e.to_string())?;
        let config = DriverConfig {
            expert_value: EXPERT_FRACTION * optimum,
            total_step_budget: RUN_BUDGET,
            seed: 11,
            ..DriverConfig::for_builtin(&b)
        };
        let mut env = b.environment(11).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let log = run_active_learning(&mut env, &config).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let gain = log.final_gain().unwrap_or(f64::NEG_INFINITY);
        let count = log.hypotheses.len();
        ok &= gain >= config.expert_value && count <= minimal_nodes(d) && elapsed < RUN_TIME_LIMIT;
        parts.push(format!(
            "{d}: gain {gain:.4} >= {:.4}, {count} hypotheses <= {}, {} MQs, {} CEs, {:.1} s",
            config.expert_value,
            minimal_nodes(d),
            log.mq_count,
            log.ce_count,
            elapsed.as_secs_f64()
        ));
    }
    check(ok, parts.join("; "))
}

fn determinism() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for d in Domain::ALL {
        let b = builtin(d).map_err(|e| e.to_string())?;
        let config = DriverConfig {
            total_step_budget: 200_000,
            seed: 5,
            ..DriverConfig::for_builtin(&b)
        };
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let mut env = b.environment(5).map_err(|e| e.to_string())?;
            let log = run_active_learning(&mut env, &config).map_err(|e| e.to_string())?;
            log.write(dir.path()).map_err(|e| e.to_string())?;
            let csv = fs::read(dir.path().join("run.csv")).map_err(|e| e.to_string())?;
            let json = fs::read(dir.path().join("learned.json")).map_err(|e| e.to_string())?;
            outputs.push((csv, json));
        }
        let same = outputs[0] == outputs[1];
        ok &= same;
        parts.push(format!(
            "{d}: {}",
            if same { "identical" } else { "differ" }
        ));
    }
    check(ok, parts.join("; "))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("oracle-teacher learning", oracle_teacher),
        ("solver vs strategy enumeration", solver_oracle),
        ("query planner calibration", planner_calibration),
        (
            "exploitation reaches solver gain",
            exploitation_matches_gain,
        ),
        ("counterexample search", counterexample_search),
        ("full learning runs", full_runs),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
