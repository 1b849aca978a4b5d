use serde::{Deserialize, Serialize};

use super::{Mixture, Policy, ReturnedPolicy};
use crate::mdp::{evaluate_joint_policy, factor_policy_evaluation, joint_actions, Environment, Mdp};
use crate::rng::{stream, Stream};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EvalMode {
    /// Policy evaluation on the enumerated MDP.
    #[default]
    DpExact,
    /// Average discounted return of `episodes` episodes cut at `horizon` steps.
    MonteCarlo { episodes: usize, horizon: usize },
}

impl EvalMode {
    pub fn monte_carlo() -> Self {
        EvalMode::MonteCarlo { episodes: 200, horizon: 50 }
    }
}

/// `V_π(ρ)` of a single stationary policy.
pub fn policy_value(env: &Environment, policy: &Policy, gamma: f64, mode: EvalMode, seed: u64) -> Result<f64> {
    match mode {
        EvalMode::DpExact => exact_value(env, policy, gamma),
        EvalMode::MonteCarlo { episodes, horizon } => {
            let m = Mixture { components: vec![policy.clone()] };
            Ok(monte_carlo_value(env, &m, gamma, episodes, horizon, seed)?.0)
        }
    }
}

/// Value of what a planner returns. A mixture commits to one component per
/// episode, so its value is the mean of the component values.
pub fn returned_value(env: &Environment, policy: &ReturnedPolicy, gamma: f64, mode: EvalMode, seed: u64) -> Result<f64> {
    match (policy, mode) {
        (ReturnedPolicy::Single(p), _) => policy_value(env, p, gamma, mode, seed),
        (ReturnedPolicy::Mixture(m), EvalMode::DpExact) => {
            let mut total = 0.0;
            for p in &m.components {
                total += exact_value(env, p, gamma)?;
            }
            Ok(total / m.components.len() as f64)
        }
        (ReturnedPolicy::Mixture(m), EvalMode::MonteCarlo { episodes, horizon }) => {
            Ok(monte_carlo_value(env, m, gamma, episodes, horizon, seed)?.0)
        }
    }
}

fn exact_value(env: &Environment, policy: &Policy, gamma: f64) -> Result<f64> {
    let mdp = &*env.mdp;
    let counts = mdp.action_counts().to_vec();
    let rho = mdp.initial_state();
    if let (Some(product), true) = (mdp.as_product(), env.features.agent_local()) {
        let mut total = 0.0;
        for (j, &n) in counts.iter().enumerate() {
            let mut err = None;
            let values = factor_policy_evaluation(product, j, gamma, &mut |x| {
                let mut s = rho.clone();
                s[j] = x;
                policy.agent_distribution(&s, j, n).unwrap_or_else(|e| {
                    err = Some(e);
                    vec![1.0 / n as f64; n]
                })
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            total += values[rho[j]];
        }
        return Ok(total);
    }
    let mut err = None;
    let values = evaluate_joint_policy(mdp, gamma, &mut |s| {
        let dists: Result<Vec<Vec<f64>>> =
            counts.iter().enumerate().map(|(j, &n)| policy.agent_distribution(s, j, n)).collect();
        match dists {
            Ok(d) => joint_actions(&counts)
                .map(|a| {
                    let p = a.iter().enumerate().map(|(j, &x)| d[j][x]).product();
                    (a, p)
                })
                .collect(),
            Err(e) => {
                err = Some(e);
                Vec::new()
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(values[mdp.state_index(&rho)])
}

/// Mean and standard error of the discounted return over `episodes`
/// episodes from the initial state.
pub fn monte_carlo_value(
    env: &Environment,
    mixture: &Mixture,
    gamma: f64,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mdp: &dyn Mdp = &*env.mdp;
    let mut rng = stream(seed, Stream::Evaluation);
    let mut pick = stream(seed, Stream::Mixture);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes.max(1) {
        let policy = &mixture.components[mixture.sample_component(&mut pick)];
        let mut s = mdp.initial_state();
        let (mut ret, mut discount) = (0.0, 1.0);
        for _ in 0..horizon {
            let a = policy.sample(&s, &mut rng)?;
            let (next, r) = mdp.sample(&s, &a, &mut rng);
            ret += discount * r;
            discount *= gamma;
            s = next;
        }
        returns.push(ret);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if n > 1.0 { returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok((mean, (var / n).sqrt()))
}
