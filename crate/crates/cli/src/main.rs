use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use cutplan::baselines::{greedy_plan, oracle_min_sections, random_plan};
use cutplan::config::RunConfig;
use cutplan::explore::noise_stats;
use cutplan::io::{read_order, OrderFormat, PlanArtifact};
use cutplan::neuro::{Checkpoint, NetDims};
use cutplan::plan::{fabric_used, validate_plan, waste};
use cutplan::train::{evaluate, gradient_check, train};
use cutplan::{CutPlan, Error, Order};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "cutplan", version, about = "Cut order planning: greedy, exact and learned sectioning")]
struct Cli {
    /// Order file (JSON or CSV); the bundled reference order when omitted.
    #[arg(long, global = true)]
    order: Option<PathBuf>,
    /// Order file format; guessed from the extension when omitted.
    #[arg(long, global = true)]
    format: Option<OrderFormat>,
    /// Board length for CSV orders.
    #[arg(long, global = true)]
    board_len: Option<f64>,
    /// Config file (`key = value` lines); falls back to $CUTPLAN_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    episodes: Option<u32>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Planner {
    Greedy,
    Agent,
    Oracle,
    Random,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the policy; writes metrics.csv and checkpoints to --out.
    Train,
    /// Build a plan and print the allocation table.
    Plan {
        #[arg(long, value_enum, default_value = "greedy")]
        planner: Planner,
    },
    /// Greedy rollouts of a trained checkpoint.
    Evaluate {
        /// Number of rollouts (default from config).
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Run every available planner on one order.
    Compare,
    /// Finite-difference check of the policy gradient.
    Gradcheck {
        #[arg(long, default_value_t = 200)]
        probes: usize,
    },
    /// Empirical Ornstein-Uhlenbeck moments against their closed forms.
    NoiseStats {
        /// Steps per lane.
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        lanes: usize,
    },
    /// Print the effective configuration.
    Config,
}

/// Exit codes: 0 ok, 1 domain or check failure, 2 usage, 3 numeric failure.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Numeric(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cutplan: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn effective_config(cli: &Cli) -> cutplan::Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(p) = &cli.order {
        cfg.order = Some(p.clone());
    }
    if let Some(f) = cli.format {
        cfg.format = Some(f);
    }
    if let Some(b) = cli.board_len {
        cfg.board_len = Some(b);
    }
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = cli.episodes {
        cfg.train.episodes = n;
    }
    if let Some(c) = &cli.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn load_order(cfg: &RunConfig) -> cutplan::Result<Order> {
    match &cfg.order {
        Some(p) => read_order(p, cfg.format, cfg.board_len),
        None => Ok(Order::reference()),
    }
}

fn load_policy(cfg: &RunConfig, order: &Order) -> cutplan::Result<Checkpoint> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --checkpoint".into()))?;
    Checkpoint::load_expecting(path, NetDims::for_sizes(order.n_sizes()))
}

fn write_out(dir: &Path, name: &str, text: &str) -> cutplan::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn run(cli: &Cli) -> cutplan::Result<bool> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Config => {
            print!("{}", cfg.to_text());
            Ok(true)
        }
        Command::Train => cmd_train(cli, &cfg),
        Command::Plan { planner } => cmd_plan(cli, &cfg, *planner),
        Command::Evaluate { rollouts } => cmd_evaluate(cli, &cfg, *rollouts),
        Command::Compare => cmd_compare(cli, &cfg),
        Command::Gradcheck { probes } => cmd_gradcheck(cli, &cfg, *probes),
        Command::NoiseStats { n, lanes } => cmd_noise_stats(cli, &cfg, *n, *lanes),
    }
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    episodes: u32,
    first_100_mean_reward: f64,
    last_100_mean_reward: f64,
    best_episode: u32,
    best_total_reward: Option<f64>,
    final_epsilon: f64,
    out: PathBuf,
}

fn cmd_train(cli: &Cli, cfg: &RunConfig) -> cutplan::Result<bool> {
    let order = load_order(cfg)?;
    let outcome = train(&order, &cfg.train)?;
    write_out(&cfg.out, "metrics.csv", &outcome.metrics.to_csv())?;
    outcome.best.save(cfg.out.join("checkpoint_best.json"))?;
    outcome.last.save(cfg.out.join("checkpoint_final.json"))?;
    write_out(&cfg.out, "config.txt", &cfg.to_text())?;

    let n = outcome.metrics.len();
    let head = n.min(100);
    let summary = TrainSummary {
        seed: cfg.train.seed,
        episodes: cfg.train.episodes,
        first_100_mean_reward: outcome.metrics.reward_stats(0..head).0,
        last_100_mean_reward: outcome.metrics.reward_stats(n - head..n).0,
        best_episode: outcome.best.episode,
        best_total_reward: outcome.best.total_reward,
        final_epsilon: outcome.metrics.records.last().map_or(0.0, |r| r.epsilon),
        out: cfg.out.clone(),
    };
    if cli.json {
        print!("{}", to_json(&summary));
    } else {
        println!("trained {} episodes (seed {})", summary.episodes, summary.seed);
        println!("mean reward, first {head}: {:.4}", summary.first_100_mean_reward);
        println!("mean reward, last {head}:  {:.4}", summary.last_100_mean_reward);
        if let Some(r) = summary.best_total_reward {
            println!("best episode {} with reward {r:.4}", summary.best_episode);
        }
        println!("final epsilon {}", summary.final_epsilon);
        println!("wrote {}", cfg.out.display());
    }
    Ok(true)
}

fn agent_plan(cfg: &RunConfig, order: &Order) -> cutplan::Result<CutPlan> {
    let ck = load_policy(cfg, order)?;
    let report = evaluate(
        &ck.params,
        order,
        &cfg.train.env,
        1,
        cfg.train.explore.amplitude_enabled,
        cfg.train.seed,
    )?;
    Ok(report.rollouts.into_iter().next().expect("one rollout").plan)
}

fn build_plan(cfg: &RunConfig, order: &Order, planner: Planner) -> cutplan::Result<CutPlan> {
    Ok(match planner {
        Planner::Greedy => greedy_plan(order),
        Planner::Oracle => oracle_min_sections(order, &cfg.oracle)?.witness,
        Planner::Random => random_plan(order, cfg.train.seed).plan,
        Planner::Agent => agent_plan(cfg, order)?,
    })
}

fn planner_name(p: Planner) -> &'static str {
    match p {
        Planner::Greedy => "greedy",
        Planner::Agent => "agent",
        Planner::Oracle => "oracle",
        Planner::Random => "random",
    }
}

fn cmd_plan(cli: &Cli, cfg: &RunConfig, planner: Planner) -> cutplan::Result<bool> {
    let order = load_order(cfg)?;
    let plan = build_plan(cfg, &order, planner)?;
    let artifact = PlanArtifact::new(planner_name(planner), &plan, &order)?;
    if cli.out.is_some() {
        write_out(&cfg.out, "plan.json", &artifact.to_json())?;
    }
    if cli.json {
        print!("{}", artifact.to_json());
    } else {
        print!("{}", artifact.to_table());
    }
    Ok(artifact.feasible_exact)
}

fn cmd_evaluate(cli: &Cli, cfg: &RunConfig, rollouts: Option<usize>) -> cutplan::Result<bool> {
    let order = load_order(cfg)?;
    let ck = load_policy(cfg, &order)?;
    let report = evaluate(
        &ck.params,
        &order,
        &cfg.train.env,
        rollouts.unwrap_or(cfg.eval_episodes),
        cfg.train.explore.amplitude_enabled,
        cfg.train.seed,
    )?;
    if cli.out.is_some() {
        write_out(&cfg.out, "evaluation.json", &to_json(&report))?;
    }
    let s = &report.summary;
    if cli.json {
        print!("{}", to_json(&report));
    } else {
        println!("rollouts:            {}", s.episodes);
        println!("feasible-exact rate: {}", s.feasible_exact_rate);
        println!("sections:            mean {:.3}, min {}, max {}", s.mean_sections, s.min_sections, s.max_sections);
        println!("mean waste:          {}", s.mean_waste);
        println!("mean reward:         {:.4}", s.mean_reward);
    }
    Ok(s.feasible_exact_rate == 1.0)
}

#[derive(Serialize)]
struct CompareRow {
    planner: Planner,
    seed: Option<u64>,
    sections: Option<usize>,
    fabric_used: Option<f64>,
    waste: Option<f64>,
    feasible_exact: Option<bool>,
    /// Why the planner produced no plan.
    skipped: Option<String>,
    #[serde(skip)]
    runtime_ms: f64,
}

fn compare_row(cfg: &RunConfig, order: &Order, planner: Planner, seed: Option<u64>) -> cutplan::Result<CompareRow> {
    let start = Instant::now();
    let result = match (planner, seed) {
        (Planner::Random, Some(s)) => Ok(random_plan(order, s).plan),
        _ => build_plan(cfg, order, planner),
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut row = CompareRow {
        planner,
        seed,
        sections: None,
        fabric_used: None,
        waste: None,
        feasible_exact: None,
        skipped: None,
        runtime_ms,
    };
    match result {
        Ok(plan) => {
            row.sections = Some(plan.len());
            row.fabric_used = Some(fabric_used(&plan, order)?);
            row.waste = Some(waste(&plan, order)?);
            row.feasible_exact = Some(validate_plan(&plan, order).feasible_exact);
        }
        Err(e @ Error::BudgetExceeded(_)) => row.skipped = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(row)
}

fn cmd_compare(cli: &Cli, cfg: &RunConfig) -> cutplan::Result<bool> {
    let order = load_order(cfg)?;
    let mut jobs: Vec<(Planner, Option<u64>)> = vec![(Planner::Greedy, None), (Planner::Oracle, None)];
    jobs.extend(cfg.compare_seeds.iter().map(|&s| (Planner::Random, Some(s))));
    if cfg.checkpoint.is_some() {
        jobs.push((Planner::Agent, None));
    }
    let rows: Vec<CompareRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(p, s)| {
                let order = &order;
                scope.spawn(move || compare_row(cfg, order, p, s))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("planner thread panicked"))
            .collect::<cutplan::Result<_>>()
    })?;

    if cli.out.is_some() {
        write_out(&cfg.out, "compare.json", &to_json(&rows))?;
    }
    if cli.json {
        print!("{}", to_json(&rows));
    } else {
        println!(
            "{:<8} {:>5} {:>9} {:>12} {:>8} {:>9} {:>11}",
            "planner", "seed", "sections", "fabric_used", "waste", "feasible", "runtime_ms"
        );
        for r in &rows {
            let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
            println!(
                "{:<8} {:>5} {:>9} {:>12} {:>8} {:>9} {:>11.3}",
                planner_name(r.planner),
                opt(r.seed.map(|s| s.to_string())),
                opt(r.sections.map(|s| s.to_string())),
                opt(r.fabric_used.map(|f| format!("{f:.2}"))),
                opt(r.waste.map(|w| format!("{w:.2}"))),
                opt(r.feasible_exact.map(|f| f.to_string())),
                r.runtime_ms
            );
            if let Some(why) = &r.skipped {
                println!("  {} skipped: {why}", planner_name(r.planner));
            }
        }
    }
    Ok(true)
}

fn cmd_gradcheck(cli: &Cli, cfg: &RunConfig, probes: usize) -> cutplan::Result<bool> {
    let report = gradient_check(cfg.train.seed, probes)?;
    if !report.max_rel_error.is_finite() {
        return Err(Error::Numeric(format!("gradient check produced {}", report.max_rel_error)));
    }
    let pass = report.max_rel_error < 1e-4;
    if cli.json {
        print!("{}", to_json(&report));
    } else {
        println!("probes:             {}", report.probes);
        println!("max relative error: {:e}", report.max_rel_error);
        println!(
            "worst coordinate:   {} (analytic {:e}, numeric {:e})",
            report.worst_index, report.worst_analytic, report.worst_numeric
        );
        println!("{}", if pass { "PASS (< 1e-4)" } else { "FAIL (>= 1e-4)" });
    }
    Ok(pass)
}

fn cmd_noise_stats(cli: &Cli, cfg: &RunConfig, n: usize, lanes: usize) -> cutplan::Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let stats = noise_stats(cfg.train.explore.ou, lanes, n, &mut rng)?;
    let pass = stats.within_tolerance();
    if cli.json {
        print!("{}", to_json(&stats));
    } else {
        println!("steps {} x lanes {}", stats.steps, stats.lanes);
        println!("{:<6} {:>12} {:>12} {:>12}", "", "empirical", "expected", "error");
        println!("{:<6} {:>12.6} {:>12.6} {:>12.6}", "mean", stats.mean, stats.expected_mean, stats.mean_error());
        println!("{:<6} {:>12.6} {:>12.6} {:>11.3}%", "std", stats.std, stats.expected_std, 100.0 * stats.std_rel_error());
        println!("{:<6} {:>12.6} {:>12.6} {:>12.6}", "lag1", stats.lag1, stats.expected_lag1, stats.lag1_error());
        println!("{}", if pass { "PASS" } else { "FAIL" });
    }
    Ok(pass)
}
