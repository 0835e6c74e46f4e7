use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rewardlearn::driver::{run_active_learning, DriverConfig};
use rewardlearn::env::{builtin, compile, load_grid, Domain, HiddenEnvironment};
use rewardlearn::product::{build_product_with_reset, solve_product};
use rewardlearn::query::{
    build_query_mdp, execute_membership_query, plan, QueryMode, DEFAULT_QUERY_BUDGET,
};
use rewardlearn::solver::SolveParams;
use rewardlearn::{check_equivalence, Equivalence, LabelingFunction, MealyRewardMachine, Nrmdp};

#[derive(Parser)]
#[command(
    name = "rewardlearn",
    version,
    about = "Learn reward machines by planned experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the learning loop against a simulated environment.
    Learn {
        #[command(flatten)]
        world: World,
        /// Expert value; defaults to the domain's documented value.
        #[arg(long)]
        expert: Option<f64>,
        #[arg(long = "episode-len")]
        episode_len: Option<u64>,
        /// Total step budget.
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        #[arg(long, default_value_t = QueryMode::Min)]
        mode: QueryMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the optimal gain and strategy of the product with a machine.
    Solve {
        #[command(flatten)]
        world: World,
        /// Print the action for every reachable product state.
        #[arg(long)]
        strategy: bool,
    },
    /// Plan one membership query and optionally execute it.
    Query {
        #[command(flatten)]
        world: World,
        /// Comma separated observation symbols.
        #[arg(long)]
        word: String,
        #[arg(long, default_value_t = QueryMode::Min)]
        mode: QueryMode,
        #[arg(long)]
        execute: bool,
        #[arg(long, default_value_t = DEFAULT_QUERY_BUDGET)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decide whether two machines are equivalent.
    Equiv { a: PathBuf, b: PathBuf },
    /// Write a builtin domain's grid and machine files.
    Export {
        #[arg(long)]
        domain: Domain,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct World {
    #[arg(long, conflicts_with_all = ["grid", "machine"])]
    domain: Option<Domain>,
    #[arg(long, requires = "machine")]
    grid: Option<PathBuf>,
    #[arg(long, requires = "grid")]
    machine: Option<PathBuf>,
}

struct Loaded {
    model: Nrmdp,
    labels: LabelingFunction,
    truth: MealyRewardMachine,
    reset_cost: f64,
    expert: Option<f64>,
    episode_length: Option<u64>,
}

impl World {
    fn load(&self) -> Result<Loaded> {
        if let Some(d) = self.domain {
            let b = builtin(d)?;
            let (model, labels) = b.compile()?;
            return Ok(Loaded {
                model,
                labels,
                truth: b.truth.clone(),
                reset_cost: b.spec.reset_cost,
                expert: Some(b.expert_value),
                episode_length: Some(b.episode_length as u64),
            });
        }
        let (Some(grid), Some(machine)) = (&self.grid, &self.machine) else {
            bail!("give either --domain or both --grid and --machine");
        };
        let text =
            fs::read_to_string(grid).with_context(|| format!("reading {}", grid.display()))?;
        let spec = load_grid(&text).with_context(|| format!("parsing {}", grid.display()))?;
        let (model, labels) = compile(&spec)?;
        let truth = read_machine(machine)?;
        Ok(Loaded {
            model,
            labels,
            truth,
            reset_cost: spec.reset_cost,
            expert: None,
            episode_length: None,
        })
    }
}

fn read_machine(path: &PathBuf) -> Result<MealyRewardMachine> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MealyRewardMachine::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let params = SolveParams::default();
    match Cli::parse().command {
        Command::Learn {
            world,
            expert,
            episode_len,
            budget,
            mode,
            seed,
            out,
        } => {
            let w = world.load()?;
            let Some(expert_value) = expert.or(w.expert) else {
                bail!("--expert is required for custom worlds");
            };
            let config = DriverConfig {
                expert_value,
                episode_length: episode_len.or(w.episode_length).unwrap_or(100),
                total_step_budget: budget,
                mode,
                seed,
                ..DriverConfig::default()
            };
            let mut env =
                HiddenEnvironment::new(w.model, w.labels, w.truth.clone(), w.reset_cost, seed)?;
            let log = run_active_learning(&mut env, &config)?;
            log.write(&out)?;
            let learned = log
                .learned
                .as_ref()
                .expect("a finished run has a hypothesis");
            let verdict = match check_equivalence(&w.truth, learned)? {
                Equivalence::Equivalent => "equivalent to the hidden machine".to_string(),
                Equivalence::Counterexample(word) => {
                    format!(
                        "differs from the hidden machine on {}",
                        learned.alphabet().format_word(&word)
                    )
                }
            };
            println!(
                "hypotheses {}  membership queries {}  counterexamples {}  steps {}",
                log.hypotheses.len(),
                log.mq_count,
                log.ce_count,
                log.total_steps
            );
            println!(
                "final gain {:.6} (expert {expert_value})",
                log.final_gain().unwrap_or(f64::NAN)
            );
            println!("learned {} nodes, {verdict}", learned.num_nodes());
            println!("wrote {}", out.display());
        }
        Command::Solve { world, strategy } => {
            let w = world.load()?;
            let product = build_product_with_reset(&w.model, &w.labels, &w.truth, w.reset_cost)?;
            let st = solve_product(&product, &params)?;
            println!("product states {}", product.num_states());
            println!("optimal gain {:.6}", st.value[product.initial()]);
            if strategy {
                let reachable = product.mdp().reachable_from(product.initial());
                for x in reachable {
                    let (s, u) = product.decode(x);
                    let a = st.choice[x];
                    let name = if a == product.reset_action() {
                        "reset"
                    } else {
                        w.model.action_name(a)
                    };
                    println!("{}\tu{}\t{}", w.model.state_name(s), u, name);
                }
            }
        }
        Command::Query {
            world,
            word,
            mode,
            execute,
            budget,
            seed,
        } => {
            let w = world.load()?;
            let alphabet = w.labels.alphabet().clone();
            let word = alphabet.parse_word(&word)?;
            let query = build_query_mdp(&w.model, &w.labels, &word)?;
            let p = plan(query, mode, &params, &alphabet)?;
            match mode {
                QueryMode::Max => println!("success probability per attempt {:.6}", p.value),
                QueryMode::Min => println!("expected steps {:.6}", p.value),
            }
            if execute {
                let mut env =
                    HiddenEnvironment::new(w.model, w.labels, w.truth, w.reset_cost, seed)?;
                let out = execute_membership_query(&mut env, &p, budget)?;
                println!(
                    "rewards {:?} after {} steps in {} attempts",
                    out.rewards, out.steps, out.attempts
                );
            }
        }
        Command::Equiv { a, b } => {
            let (ma, mb) = (read_machine(&a)?, read_machine(&b)?);
            match check_equivalence(&ma, &mb)? {
                Equivalence::Equivalent => println!("equivalent"),
                Equivalence::Counterexample(word) => {
                    let ra = ma.run_observations(&word)?;
                    let rb = mb.run_observations(&word)?;
                    println!("counterexample {}", ma.alphabet().format_word(&word));
                    println!("  {}: {ra:?}", a.display());
                    println!("  {}: {rb:?}", b.display());
                    std::process::exit(1);
                }
            }
        }
        Command::Export { domain, out } => {
            let b = builtin(domain)?;
            fs::create_dir_all(&out)?;
            let grid = out.join(format!("{}.grid", domain.name()));
            let machine = out.join(format!("{}.json", domain.name()));
            fs::write(&grid, b.grid_text)?;
            fs::write(&machine, b.machine_text)?;
            println!("wrote {} and {}", grid.display(), machine.display());
        }
    }
    Ok(())
}
