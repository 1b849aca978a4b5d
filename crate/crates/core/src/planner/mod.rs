//! Confident Monte-Carlo LSPI and Politex with local-access rollouts.

mod evaluation;
mod model;
mod params;
mod policy;

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use evaluation::{monte_carlo_value, policy_value, returned_value, EvalMode};
pub use model::{FiniteModel, KernelModel, Model};
pub use params::{query_budget, theorem_parameters, ChainCheck, TheoremParameters, TheoremVariant};
pub use policy::{
    politex_sample, sample_index, softmax, ActionScorer, KernelScorer, LinearScorer, Mixture, Policy, Prepared,
};

use crate::coreset::{cmax_bound, CoreElement};
use crate::kernel::{AdditiveSeKernel, KernelFn, LinearKernel};
use crate::mdp::{validate_action, ActionVector, Environment, LocalAccessSimulator, StateHandle};
use crate::rng::{stream, Stream};
use crate::uncertainty::{CheckKind, CheckOutcome};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lspi,
    Politex,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lspi => "lspi",
            Algorithm::Politex => "politex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Algorithm::Lspi, Algorithm::Politex].into_iter().find(|a| a.name() == s)
    }
}

/// Kernel used by the `kernel-dav` check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Inner product of the environment's features.
    #[default]
    Linear,
    /// Sum over agents of squared-exponential kernels on agent features.
    AdditiveSe { length_scale: f64 },
}

impl KernelSpec {
    pub fn build(&self, env: &Environment) -> Result<Arc<dyn KernelFn>> {
        Ok(match *self {
            KernelSpec::Linear => Arc::new(LinearKernel(env.features.clone())),
            KernelSpec::AdditiveSe { length_scale } => {
                let m = env.features.action_counts().len();
                Arc::new(AdditiveSeKernel::new(env.features.clone(), vec![length_scale; m])?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub algorithm: Algorithm,
    pub check: CheckKind,
    /// `K`.
    pub iterations: usize,
    /// `n`.
    pub rollouts: usize,
    /// `H`; each rollout collects `H + 1` rewards.
    pub horizon: usize,
    pub tau: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Politex step size.
    pub alpha: f64,
    /// Default action for DAV checks and the seed element; zeros if unset.
    #[serde(default)]
    pub abar: Option<ActionVector>,
    pub seed: u64,
    /// Restart policy iteration from scratch after every insertion.
    pub resets: bool,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Core-set size cap used for the restart limit and query budget. Finite
    /// models default to `cmax_bound(d, τ, λ)`; kernel models have no cap
    /// unless one is given.
    #[serde(default)]
    pub cmax: Option<f64>,
}

impl PlannerConfig {
    /// The four-agent grid experiment: `K = 50`, `H = 15`, `γ = 0.8`,
    /// `λ = 1e-5`, `τ = 1`, `α = 1`, no resets.
    pub fn experiment(algorithm: Algorithm, check: CheckKind, rollouts: usize, seed: u64) -> Self {
        Self {
            algorithm,
            check,
            iterations: 50,
            rollouts,
            horizon: 15,
            tau: 1.0,
            lambda: 1e-5,
            gamma: 0.8,
            alpha: 1.0,
            abar: None,
            seed,
            resets: false,
            kernel: KernelSpec::Linear,
            cmax: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.iterations == 0 || self.rollouts == 0 || self.horizon == 0 {
            return bad("iterations, rollouts and horizon must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return bad(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        if let Some(c) = self.cmax {
            if !(c >= 1.0) || !c.is_finite() {
                return bad(format!("cmax must be at least 1, got {c}"));
            }
        }
        Ok(())
    }
}

/// Serializable form of a learned policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum PolicySnapshot {
    /// Greedy in `weights`; uniform when no iteration has been fitted yet.
    Lspi { weights: Option<Vec<f64>> },
    /// Softmax of `α Σ_k w_kᵀφ`.
    Politex { weights: Vec<Vec<f64>>, alpha: f64 },
}

/// What a run returns: one policy for LSPI, a uniform mixture for Politex.
#[derive(Debug, Clone)]
pub enum ReturnedPolicy {
    Single(Policy),
    Mixture(Mixture),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// `k` in `1..=K`.
    pub iteration: usize,
    pub restarts: usize,
    pub coreset_size: usize,
    pub queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InsertionRecord {
    pub size: usize,
    /// Uncertainty of the element just before insertion.
    pub uncertainty: f64,
    /// `log det(I + K/λ)` after insertion.
    pub info_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub queries: u64,
    pub restarts: usize,
    /// Core-set size at the start of every policy-iteration pass.
    pub coreset_sizes: Vec<usize>,
    pub final_coreset_size: usize,
    pub cmax: Option<f64>,
    pub budget: Option<u64>,
    /// Filled in by an evaluator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub config: PlannerConfig,
    /// `π_0, …, π_K`: the uniform policy followed by one policy per iteration.
    pub policies: Vec<Policy>,
    /// Coefficients fitted at iterations `1..=K`.
    pub weights: Vec<Vec<f64>>,
    pub iterations: Vec<IterationRecord>,
    pub insertions: Vec<InsertionRecord>,
    pub stats: RunStats,
}

impl PlanOutput {
    /// `π_{K−1}` for LSPI, `Unif{π_0, …, π_{K−1}}` for Politex.
    pub fn returned(&self) -> ReturnedPolicy {
        self.returned_after(self.config.iterations)
    }

    /// The policy a learning curve reports after iteration `k`: `π_{k−1}`
    /// for LSPI and `Unif{π_0, …, π_{k−1}}` for Politex.
    pub fn returned_after(&self, k: usize) -> ReturnedPolicy {
        match self.config.algorithm {
            Algorithm::Lspi => ReturnedPolicy::Single(self.policies[k - 1].clone()),
            Algorithm::Politex => ReturnedPolicy::Mixture(Mixture { components: self.policies[..k].to_vec() }),
        }
    }

    /// Snapshot of the returned policy. Kernel runs have `β` coefficients in
    /// place of feature weights.
    pub fn snapshot(&self) -> PolicySnapshot {
        let k = self.config.iterations;
        match self.config.algorithm {
            Algorithm::Lspi => PolicySnapshot::Lspi { weights: (k >= 2).then(|| self.weights[k - 2].clone()) },
            Algorithm::Politex => {
                PolicySnapshot::Politex { weights: self.weights[..k - 1].to_vec(), alpha: self.config.alpha }
            }
        }
    }
}

pub enum RolloutResult {
    Done(f64),
    Uncertain(CoreElement),
}

/// Rollout state shared across a run: the simulator, the policy RNG and a
/// memo of states already found certain under the current core set.
pub struct Roller<'a> {
    pub sim: &'a mut LocalAccessSimulator,
    pub rng: &'a mut dyn RngCore,
    pub gamma: f64,
    pub rollouts: usize,
    pub horizon: usize,
    certain: Vec<u64>,
    prepared: Vec<Option<Prepared>>,
    budget: Option<u64>,
}

impl<'a> Roller<'a> {
    pub fn new(sim: &'a mut LocalAccessSimulator, rng: &'a mut dyn RngCore, gamma: f64, rollouts: usize, horizon: usize) -> Self {
        Self { sim, rng, gamma, rollouts, horizon, certain: Vec::new(), prepared: Vec::new(), budget: None }
    }

    /// Forgets cached policy actions; call whenever the rollout policy changes.
    pub fn set_policy(&mut self) {
        self.prepared.iter_mut().for_each(|p| *p = None);
    }

    fn is_certain(&mut self, model: &dyn Model, h: StateHandle) -> Result<Option<CoreElement>> {
        let i = h.index();
        if self.certain.len() <= i {
            self.certain.resize(i + 1, 0);
        }
        // Versions start at 1 once the core set is seeded; 0 means unknown.
        let known = self.certain[i];
        if known == model.version() || (known > 0 && model.monotone_check()) {
            return Ok(None);
        }
        match model.check(h, self.sim.state(h)?)? {
            CheckOutcome::Certain => {
                self.certain[i] = model.version();
                Ok(None)
            }
            CheckOutcome::Uncertain(e) => Ok(Some(e)),
        }
    }

    fn act(&mut self, policy: &Policy, h: StateHandle, out: &mut ActionVector) -> Result<()> {
        let i = h.index();
        if self.prepared.len() <= i {
            self.prepared.resize(i + 1, None);
        }
        if self.prepared[i].is_none() {
            self.prepared[i] = Some(policy.prepare(self.sim.state(h)?)?);
        }
        self.prepared[i].as_ref().unwrap().sample_into(self.rng, out);
        Ok(())
    }

    /// `n` rollouts of length `H + 1` from `(z_s, z_a)` following `policy`
    /// after the first step. Stops at the first state that fails the check.
    pub fn rollout(&mut self, model: &dyn Model, policy: &Policy, z_state: StateHandle, z_action: &[usize]) -> Result<RolloutResult> {
        let mut total = 0.0;
        let mut a = Vec::with_capacity(z_action.len());
        for _ in 0..self.rollouts {
            let mut s = z_state;
            a.clear();
            a.extend_from_slice(z_action);
            let mut ret = 0.0;
            let mut discount = 1.0;
            for t in 0..=self.horizon {
                if t > 0 {
                    if let Some(e) = self.is_certain(model, s)? {
                        return Ok(RolloutResult::Uncertain(e));
                    }
                    self.act(policy, s, &mut a)?;
                }
                let tr = self.sim.step(s, &a)?;
                ret += discount * tr.reward;
                discount *= self.gamma;
                s = tr.next;
            }
            total += ret;
        }
        if let Some(budget) = self.budget {
            if self.sim.queries() > budget {
                return Err(Error::BudgetExceeded { budget });
            }
        }
        Ok(RolloutResult::Done(total / self.rollouts as f64))
    }
}

/// Confident MC-LSPI: returns the greedy policy of iteration `K − 1`.
pub fn lspi_plan(env: &Environment, config: &PlannerConfig) -> Result<PlanOutput> {
    let mut c = config.clone();
    c.algorithm = Algorithm::Lspi;
    plan(env, &c)
}

/// Confident MC-Politex: returns the uniform mixture of `π_0, …, π_{K−1}`.
pub fn politex_plan(env: &Environment, config: &PlannerConfig) -> Result<PlanOutput> {
    let mut c = config.clone();
    c.algorithm = Algorithm::Politex;
    plan(env, &c)
}

/// Runs the configured algorithm on a fresh simulator of `env`.
pub fn plan(env: &Environment, config: &PlannerConfig) -> Result<PlanOutput> {
    config.validate()?;
    let counts = env.features.action_counts().to_vec();
    let abar = config.abar.clone().unwrap_or_else(|| vec![0; counts.len()]);
    validate_action(&counts, &abar)?;
    let mut sim = env.simulator(config.seed);
    let rho = sim.reset();
    let rho_state = sim.state(rho)?.to_vec();
    let (mut model, cmax): (Box<dyn Model>, Option<f64>) = match config.check {
        CheckKind::KernelDav => {
            let kernel = config.kernel.build(env)?;
            let m = KernelModel::new(kernel, abar, config.tau, config.lambda, rho, &rho_state)?;
            (Box::new(m), config.cmax)
        }
        check => {
            let m = FiniteModel::new(env.features.clone(), check, abar, config.tau, config.lambda, rho, &rho_state)?;
            let cmax = match config.cmax {
                Some(c) => c,
                None => cmax_bound(env.features.dim(), config.tau, config.lambda)?,
            };
            (Box::new(m), Some(cmax))
        }
    };
    let budget = cmax
        .map(|c| query_budget(c, config.iterations as u64, config.rollouts as u64, config.horizon as u64))
        .transpose()?;
    run(&mut *model, &mut sim, rho, &counts, config, cmax, budget)
}

fn insertion_record(model: &dyn Model) -> InsertionRecord {
    InsertionRecord {
        size: model.len(),
        uncertainty: model.last_insertion_uncertainty().unwrap_or(f64::NAN),
        info_gain: model.info_gain(),
    }
}

/// Policy iteration over an already seeded model.
pub fn run(
    model: &mut dyn Model,
    sim: &mut LocalAccessSimulator,
    rho: StateHandle,
    counts: &[usize],
    config: &PlannerConfig,
    cmax: Option<f64>,
    budget: Option<u64>,
) -> Result<PlanOutput> {
    config.validate()?;
    let mut insertions = vec![insertion_record(model)];
    let rho_state = sim.state(rho)?.to_vec();
    while let CheckOutcome::Uncertain(e) = model.check(rho, &rho_state)? {
        model.insert(&rho_state, e)?;
        insertions.push(insertion_record(model));
    }

    let restart_limit = cmax.map(|c| c.ceil() as usize);
    let mut rng = stream(config.seed, Stream::Policy);
    let mut roller = Roller::new(sim, &mut rng, config.gamma, config.rollouts, config.horizon);
    roller.budget = budget;
    let uniform = Policy::Uniform { counts: counts.to_vec() };
    let mut restarts = 0;
    let mut coreset_sizes = Vec::new();

    'restart: loop {
        model.clear_estimates();
        coreset_sizes.push(model.len());
        let mut policies = vec![uniform.clone()];
        let mut weights: Vec<Vec<f64>> = Vec::new();
        let mut cumulative: Vec<f64> = Vec::new();
        let mut iterations = Vec::new();
        for k in 1..=config.iterations {
            roller.set_policy();
            let policy = policies[k - 1].clone();
            let mut i = 0;
            while i < model.len() {
                let (h, a) = model.element(i);
                let a = a.to_vec();
                match roller.rollout(model, &policy, h, &a)? {
                    RolloutResult::Done(q) => {
                        model.set_estimate(i, q);
                        i += 1;
                    }
                    RolloutResult::Uncertain(e) => {
                        let s = roller.sim.state(e.state)?.to_vec();
                        model.insert(&s, e)?;
                        insertions.push(insertion_record(model));
                        if config.resets {
                            restarts += 1;
                            if let Some(limit) = restart_limit {
                                if restarts > limit {
                                    return Err(Error::RestartLimit { limit });
                                }
                            }
                            continue 'restart;
                        }
                    }
                }
            }
            let coef = model.fit()?;
            let next = match config.algorithm {
                Algorithm::Lspi => Policy::Greedy { scorer: model.scorer(coef.clone()), counts: counts.to_vec() },
                Algorithm::Politex => {
                    if cumulative.len() < coef.len() {
                        cumulative.resize(coef.len(), 0.0);
                    }
                    cumulative.iter_mut().zip(&coef).for_each(|(c, x)| *c += x);
                    Policy::Softmax { scorer: model.scorer(cumulative.clone()), alpha: config.alpha, counts: counts.to_vec() }
                }
            };
            policies.push(next);
            weights.push(coef);
            iterations.push(IterationRecord { iteration: k, restarts, coreset_size: model.len(), queries: roller.sim.queries() });
        }
        let stats = RunStats {
            queries: roller.sim.queries(),
            restarts,
            coreset_sizes,
            final_coreset_size: model.len(),
            cmax,
            budget,
            policy_values: None,
        };
        return Ok(PlanOutput { config: config.clone(), policies, weights, iterations, insertions, stats });
    }
}
