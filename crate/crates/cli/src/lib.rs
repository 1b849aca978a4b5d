//! Experiment runner: expands a config into (variant, n, seed) cells, runs
//! the planner on each, evaluates the per-iteration policies and writes the
//! learning-curve CSV plus a JSON summary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use coplan::features::AdditiveFeatureMap;
use coplan::mdp::{Environment, EnvironmentSpec};
use coplan::planner::{
    plan, policy_value, returned_value, Algorithm, EvalMode, InsertionRecord, KernelSpec, LinearScorer, Mixture,
    PlanOutput, PlannerConfig, Policy, PolicySnapshot, ReturnedPolicy, RunStats,
};
use coplan::uncertainty::CheckKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: [&str; 9] =
    ["seed", "variant", "check", "n", "iteration", "restarts", "coreset_size", "queries", "policy_value"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<coplan::Error> for CliError {
    fn from(e: coplan::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// An (algorithm, check) pair written as `lspi:dav`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub algorithm: Algorithm,
    pub check: CheckKind,
}

impl Variant {
    pub fn all() -> Vec<Variant> {
        let mut out = Vec::new();
        for algorithm in [Algorithm::Lspi, Algorithm::Politex] {
            for check in [CheckKind::Naive, CheckKind::Egss, CheckKind::Dav] {
                out.push(Variant { algorithm, check });
            }
        }
        out
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.algorithm.name(), self.check.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, c) = s.split_once(':').ok_or_else(|| format!("variant {s:?} is not of the form algorithm:check"))?;
        let algorithm = Algorithm::parse(a).ok_or_else(|| format!("unknown algorithm {a:?}"))?;
        let check = CheckKind::parse(c).ok_or_else(|| format!("unknown check {c:?}"))?;
        Ok(Variant { algorithm, check })
    }
}

impl TryFrom<String> for Variant {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

fn default_variants() -> Vec<Variant> {
    Variant::all()
}

fn default_n() -> Vec<usize> {
    vec![10, 50]
}

fn default_seeds() -> Vec<u64> {
    (1..=25).collect()
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// Every field defaults to the four-agent grid experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "EnvironmentSpec::grid4")]
    pub environment: EnvironmentSpec,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    #[serde(default = "defaults::horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub resets: bool,
    #[serde(default)]
    pub abar: Option<Vec<usize>>,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub cmax: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub eval: EvalMode,
    /// Directory receiving `results.csv`, `summary.json` and `runs.json`.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; all available cores if unset.
    #[serde(default)]
    pub threads: Option<usize>,
}

mod defaults {
    pub fn iterations() -> usize {
        50
    }
    pub fn horizon() -> usize {
        15
    }
    pub fn gamma() -> f64 {
        0.8
    }
    pub fn lambda() -> f64 {
        1e-5
    }
    pub fn tau() -> f64 {
        1.0
    }
    pub fn alpha() -> f64 {
        1.0
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn planner_config(&self, variant: Variant, n: usize, seed: u64) -> PlannerConfig {
        PlannerConfig {
            algorithm: variant.algorithm,
            check: variant.check,
            iterations: self.iterations,
            rollouts: n,
            horizon: self.horizon,
            tau: self.tau,
            lambda: self.lambda,
            gamma: self.gamma,
            alpha: self.alpha,
            abar: self.abar.clone(),
            seed,
            resets: self.resets,
            kernel: self.kernel.clone(),
            cmax: self.cmax,
        }
    }

    /// Cells in key order: variant, then n, then seed.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            for &n in &self.n {
                for &seed in &self.seeds {
                    out.push(CellKey { variant, n, seed });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.variants.is_empty() || self.n.is_empty() || self.seeds.is_empty() {
            return bad("variants, n and seeds must be non-empty");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        if let EvalMode::MonteCarlo { episodes, horizon } = self.eval {
            if episodes == 0 || horizon == 0 {
                return bad("monte-carlo episodes and horizon must be positive");
            }
        }
        for key in self.cells() {
            self.planner_config(key.variant, key.n, key.seed).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.environment.build().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellKey {
    pub variant: Variant,
    pub n: usize,
    pub seed: u64,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub seed: u64,
    pub variant: &'static str,
    pub check: &'static str,
    pub n: usize,
    pub iteration: usize,
    pub restarts: usize,
    pub coreset_size: usize,
    pub queries: u64,
    pub policy_value: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub rows: Vec<Row>,
    pub stats: RunStats,
    pub insertions: Vec<InsertionRecord>,
}

impl CellResult {
    pub fn final_value(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.policy_value)
    }
}

/// Runs one cell and evaluates the policy reported after every iteration:
/// `π_{k−1}` for LSPI and the uniform mixture of `π_0, …, π_{k−1}` for Politex.
pub fn run_cell(cfg: &ExperimentConfig, env: &Environment, key: CellKey) -> CliResult<CellResult> {
    let config = cfg.planner_config(key.variant, key.n, key.seed);
    let out = plan(env, &config)?;
    let values = iteration_values(env, &out, cfg.eval)?;
    let rows = out
        .iterations
        .iter()
        .zip(&values)
        .map(|(rec, &v)| Row {
            seed: key.seed,
            variant: key.variant.algorithm.name(),
            check: key.variant.check.name(),
            n: key.n,
            iteration: rec.iteration,
            restarts: rec.restarts,
            coreset_size: rec.coreset_size,
            queries: rec.queries,
            policy_value: v,
        })
        .collect();
    let mut stats = out.stats.clone();
    stats.policy_values = Some(values);
    Ok(CellResult { key, rows, stats, insertions: out.insertions })
}

fn iteration_values(env: &Environment, out: &PlanOutput, mode: EvalMode) -> CliResult<Vec<f64>> {
    let gamma = out.config.gamma;
    let seed = out.config.seed;
    let k_max = out.config.iterations;
    let mut values = Vec::with_capacity(k_max);
    match (out.config.algorithm, mode) {
        (Algorithm::Lspi, _) | (Algorithm::Politex, EvalMode::DpExact) => {
            // Each π_k is evaluated once; a mixture's value is the running mean.
            let mut total = 0.0;
            for k in 1..=k_max {
                let v = policy_value(env, &out.policies[k - 1], gamma, mode, seed)?;
                total += v;
                values.push(match out.config.algorithm {
                    Algorithm::Lspi => v,
                    Algorithm::Politex => total / k as f64,
                });
            }
        }
        (Algorithm::Politex, EvalMode::MonteCarlo { .. }) => {
            for k in 1..=k_max {
                values.push(returned_value(env, &out.returned_after(k), gamma, mode, seed)?);
            }
        }
    }
    Ok(values)
}

fn pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    builder.build().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Runs every cell on a worker pool and returns results in cell-key order.
pub fn run_cells(cfg: &ExperimentConfig) -> CliResult<Vec<CellResult>> {
    cfg.validate()?;
    let env = cfg.environment.build()?;
    let keys = cfg.cells();
    pool(cfg.threads)?.install(|| keys.par_iter().map(|&key| run_cell(cfg, &env, key)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub seeds: usize,
    /// Per-iteration mean over seeds.
    pub mean: Vec<f64>,
    /// Per-iteration sample standard deviation over seeds.
    pub std: Vec<f64>,
    pub final_mean: f64,
    pub final_std: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Groups results by `variant/n=<n>` and aggregates over seeds.
pub fn summarize(results: &[CellResult]) -> BTreeMap<String, CellSummary> {
    let mut groups: BTreeMap<String, Vec<&CellResult>> = BTreeMap::new();
    for r in results {
        groups.entry(format!("{}/n={}", r.key.variant, r.key.n)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(name, cells)| {
            let k = cells.iter().map(|c| c.rows.len()).min().unwrap_or(0);
            let (mean, std): (Vec<f64>, Vec<f64>) = (0..k)
                .map(|i| mean_std(&cells.iter().map(|c| c.rows[i].policy_value).collect::<Vec<_>>()))
                .unzip();
            let (final_mean, final_std) = mean_std(&cells.iter().map(|c| c.final_value()).collect::<Vec<_>>());
            (name, CellSummary { seeds: cells.len(), mean, std, final_mean, final_std })
        })
        .collect()
}

pub fn write_csv<W: Write>(results: &[CellResult], out: W) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in results {
        for row in &r.rows {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    #[serde(flatten)]
    key: &'a CellKey,
    stats: &'a RunStats,
}

pub struct ExperimentPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub runs: PathBuf,
}

impl ExperimentPaths {
    pub fn new(dir: &Path) -> Self {
        Self { csv: dir.join("results.csv"), summary: dir.join("summary.json"), runs: dir.join("runs.json") }
    }
}

/// Runs the matrix and writes the CSV, the summary and per-run statistics.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Vec<CellResult>> {
    let results = run_cells(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let paths = ExperimentPaths::new(&cfg.out);
    write_csv(&results, fs::File::create(&paths.csv)?)?;
    let summary = serde_json::to_string_pretty(&summarize(&results)).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&paths.summary, summary + "\n")?;
    let runs: Vec<RunRecord> = results.iter().map(|r| RunRecord { key: &r.key, stats: &r.stats }).collect();
    let runs = serde_json::to_string_pretty(&runs).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&paths.runs, runs + "\n")?;
    Ok(results)
}

fn linear_policy(map: &Arc<dyn AdditiveFeatureMap>, w: Vec<f64>) -> CliResult<Arc<LinearScorer>> {
    if w.len() != map.dim() {
        return Err(coplan::Error::Dimension { expected: map.dim(), got: w.len() }.into());
    }
    Ok(Arc::new(LinearScorer { map: map.clone(), w }))
}

/// Rebuilds the policy a snapshot describes on `env`.
pub fn snapshot_policy(env: &Environment, snapshot: &PolicySnapshot) -> CliResult<ReturnedPolicy> {
    let counts = env.features.action_counts().to_vec();
    Ok(match snapshot {
        PolicySnapshot::Lspi { weights: None } => ReturnedPolicy::Single(Policy::Uniform { counts }),
        PolicySnapshot::Lspi { weights: Some(w) } => {
            ReturnedPolicy::Single(Policy::Greedy { scorer: linear_policy(&env.features, w.clone())?, counts })
        }
        PolicySnapshot::Politex { weights, alpha } => {
            let mut components = vec![Policy::Uniform { counts: counts.clone() }];
            let mut sum = vec![0.0; env.features.dim()];
            for w in weights {
                let scorer = linear_policy(&env.features, w.clone())?;
                sum.iter_mut().zip(&scorer.w).for_each(|(s, x)| *s += x);
                components.push(Policy::Softmax {
                    scorer: linear_policy(&env.features, sum.clone())?,
                    alpha: *alpha,
                    counts: counts.clone(),
                });
            }
            ReturnedPolicy::Mixture(Mixture { components })
        }
    })
}

/// `V_π(ρ)` of a snapshot.
pub fn evaluate_policy(
    snapshot: &PolicySnapshot,
    spec: &EnvironmentSpec,
    gamma: f64,
    mode: EvalMode,
    seed: u64,
) -> CliResult<f64> {
    let env = spec.build()?;
    let policy = snapshot_policy(&env, snapshot)?;
    Ok(returned_value(&env, &policy, gamma, mode, seed)?)
}

/// Parses `grid4`, `coordination`, `chain:<length>` or
/// `product:<factors>:<length>`.
pub fn parse_environment(s: &str) -> Result<EnvironmentSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.parse::<usize>().map_err(|_| format!("bad number {x:?} in environment {s:?}"));
    match parts.as_slice() {
        ["grid4"] => Ok(EnvironmentSpec::grid4()),
        ["coordination"] => Ok(EnvironmentSpec::Coordination),
        ["chain", l] => Ok(EnvironmentSpec::Chain { length: num(l)?, slip: 0.1 }),
        ["product", f, l] => Ok(EnvironmentSpec::Product { factors: num(f)?, length: num(l)?, slip: 0.1 }),
        _ => Err(format!("unknown environment {s:?}")),
    }
}

/// Parses `dp-exact`, `monte-carlo` or `monte-carlo:<episodes>:<horizon>`.
pub fn parse_eval(s: &str) -> Result<EvalMode, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.parse::<usize>().map_err(|_| format!("bad number {x:?} in eval mode {s:?}"));
    match parts.as_slice() {
        ["dp-exact"] => Ok(EvalMode::DpExact),
        ["monte-carlo"] => Ok(EvalMode::monte_carlo()),
        ["monte-carlo", e, h] => Ok(EvalMode::MonteCarlo { episodes: num(e)?, horizon: num(h)? }),
        _ => Err(format!("unknown eval mode {s:?}")),
    }
}

/// Parses a comma-separated list of seeds or inclusive ranges `a-b`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let num = |x: &str| x.parse::<u64>().map_err(|_| format!("bad seed {x:?}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty seed range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_grid_experiment() {
        let c = ExperimentConfig::default();
        assert_eq!(c.environment, EnvironmentSpec::grid4());
        assert_eq!(c.variants.len(), 6);
        assert_eq!(c.n, vec![10, 50]);
        assert_eq!(c.seeds.len(), 25);
        assert_eq!((c.iterations, c.horizon), (50, 15));
        assert_eq!((c.gamma, c.lambda, c.tau, c.alpha), (0.8, 1e-5, 1.0, 1.0));
        assert_eq!(c.eval, EvalMode::DpExact);
        assert_eq!(c.cells().len(), 300);
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        assert!(ExperimentConfig::from_json(r#"{"gama": 0.9}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"variants": ["politex:egss"], "eval": {"mode": "monte-carlo", "episodes": 10, "horizon": 5}}"#).unwrap();
        assert_eq!(c.variants, vec![Variant { algorithm: Algorithm::Politex, check: CheckKind::Egss }]);
        assert_eq!(c.eval, EvalMode::MonteCarlo { episodes: 10, horizon: 5 });
    }

    #[test]
    fn parsers() {
        assert_eq!(parse_seeds("1,3-5").unwrap(), vec![1, 3, 4, 5]);
        assert!(parse_seeds("5-3").is_err());
        assert_eq!("lspi:dav".parse::<Variant>().unwrap().to_string(), "lspi:dav");
        assert!("lspi".parse::<Variant>().is_err());
        assert_eq!(parse_environment("product:2:3").unwrap(), EnvironmentSpec::Product { factors: 2, length: 3, slip: 0.1 });
        assert_eq!(parse_eval("monte-carlo").unwrap(), EvalMode::monte_carlo());
        assert!(parse_eval("exact").is_err());
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        let c = ExperimentConfig { gamma: 1.0, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        let c = ExperimentConfig { seeds: vec![], ..Default::default() };
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
