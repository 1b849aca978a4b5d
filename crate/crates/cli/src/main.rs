use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coplan::mdp::EnvironmentSpec;
use coplan::planner::{theorem_parameters, Algorithm, EvalMode, PolicySnapshot, TheoremVariant};
use coplan::uncertainty::CheckKind;
use coplan_cli::{
    evaluate_policy, parse_environment, parse_eval, parse_seeds, run_experiment, summarize, CliError, CliResult,
    ExperimentConfig, ExperimentPaths, Variant,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "coplan", version, about = "Planning with large product action spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment matrix and write results.csv, summary.json and runs.json.
    Run(RunArgs),
    /// Evaluate a policy snapshot (JSON) at the initial state.
    Value(ValueArgs),
    /// Print the theorem-scale parameters and their inequality chain.
    Params(ParamsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// grid4, coordination, chain:<length> or product:<factors>:<length>.
    #[arg(long, value_parser = parse_environment)]
    env: Option<EnvironmentSpec>,
    /// Comma-separated algorithms (lspi, politex), crossed with --check.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
    /// Comma-separated checks (naive, egss, dav, kernel-dav), crossed with --algo.
    #[arg(long, value_delimiter = ',')]
    check: Vec<String>,
    /// Comma-separated algorithm:check pairs; overrides --algo and --check.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,
    /// Comma-separated rollout counts.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Seeds as a list or ranges, e.g. 1,2,5-9.
    #[arg(long)]
    seeds: Option<String>,
    /// dp-exact, monte-carlo or monte-carlo:<episodes>:<horizon>.
    #[arg(long, value_parser = parse_eval)]
    eval: Option<EvalMode>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ValueArgs {
    /// Policy snapshot JSON file.
    policy: PathBuf,
    #[arg(long, value_parser = parse_environment, default_value = "grid4")]
    env: EnvironmentSpec,
    #[arg(long, default_value_t = 0.8)]
    gamma: f64,
    #[arg(long, value_parser = parse_eval, default_value = "dp-exact")]
    eval: EvalMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ParamsArgs {
    /// lspi-egss, lspi-dav, politex-egss, politex-dav, kernel-lspi-dav or kernel-politex-dav.
    #[arg(long, default_value = "lspi-dav")]
    variant: String,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    delta: f64,
    /// Bound on the weight norm.
    #[arg(long)]
    b: f64,
    #[arg(long)]
    gamma: f64,
    /// Feature dimension, or the critical information gain for kernel variants.
    #[arg(long)]
    dim: f64,
    #[arg(long)]
    agents: usize,
    /// Misspecification error.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Largest per-agent action count.
    #[arg(long, default_value_t = 2)]
    max_actions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn config_error(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

fn resolve(args: RunArgs) -> CliResult<(ExperimentConfig, bool)> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(env) = args.env {
        cfg.environment = env;
    }
    if !args.variants.is_empty() {
        cfg.variants = args.variants;
    } else if !args.algo.is_empty() || !args.check.is_empty() {
        let algos: Vec<Algorithm> = if args.algo.is_empty() {
            cfg.variants.iter().map(|v| v.algorithm).collect()
        } else {
            args.algo.iter().map(|a| Algorithm::parse(a).ok_or_else(|| config_error(format!("unknown algorithm {a:?}")))).collect::<CliResult<_>>()?
        };
        let checks: Vec<CheckKind> = if args.check.is_empty() {
            cfg.variants.iter().map(|v| v.check).collect()
        } else {
            args.check.iter().map(|c| CheckKind::parse(c).ok_or_else(|| config_error(format!("unknown check {c:?}")))).collect::<CliResult<_>>()?
        };
        let mut variants = Vec::new();
        for &algorithm in &algos {
            for &check in &checks {
                let v = Variant { algorithm, check };
                if !variants.contains(&v) {
                    variants.push(v);
                }
            }
        }
        cfg.variants = variants;
    }
    if !args.n.is_empty() {
        cfg.n = args.n;
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),*) => { $(if let Some(v) = $arg { cfg.$field = v; })* };
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s).map_err(config_error)?;
    }
    set!(iterations <- args.iters, horizon <- args.horizon, gamma <- args.gamma, lambda <- args.lambda,
         tau <- args.tau, alpha <- args.alpha, eval <- args.eval, out <- args.out);
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.validate()?;
    Ok((cfg, args.dry_run))
}

fn to_json(value: &impl serde::Serialize) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Run(args) => {
            let (cfg, dry_run) = resolve(args)?;
            if dry_run {
                println!("{}", to_json(&cfg)?);
                return Ok(());
            }
            let results = run_experiment(&cfg)?;
            let paths = ExperimentPaths::new(&cfg.out);
            for (cell, s) in summarize(&results) {
                println!("{cell}: final {:.6} ± {:.6} over {} seeds", s.final_mean, s.final_std, s.seeds);
            }
            eprintln!("wrote {}", paths.csv.display());
        }
        Command::Value(args) => {
            let text = std::fs::read_to_string(&args.policy).map_err(|e| config_error(format!("{}: {e}", args.policy.display())))?;
            let snapshot: PolicySnapshot = serde_json::from_str(&text).map_err(config_error)?;
            let v = evaluate_policy(&snapshot, &args.env, args.gamma, args.eval, args.seed)?;
            println!("{v}");
        }
        Command::Params(args) => {
            let variant: TheoremVariant = serde_json::from_value(json!(args.variant)).map_err(config_error)?;
            let p = theorem_parameters(
                variant, args.kappa, args.delta, args.b, args.gamma, args.dim, args.agents, args.epsilon, args.max_actions,
            )
            .map_err(config_error)?;
            let chain: Vec<_> = p
                .chain()
                .iter()
                .map(|c| json!({"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "holds": c.holds()}))
                .collect();
            let out = json!({"parameters": p, "chain": chain, "planner": p.config(args.seed)});
            println!("{}", to_json(&out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
