use serde::{Deserialize, Serialize};

use super::{Algorithm, KernelSpec, PlannerConfig};
use crate::coreset::cmax_bound;
use crate::uncertainty::CheckKind;
use crate::{Error, Result};

/// `⌈cmax⌉² · K · n · H`.
pub fn query_budget(cmax: f64, iterations: u64, rollouts: u64, horizon: u64) -> Result<u64> {
    if !(cmax > 0.0) || !cmax.is_finite() || iterations == 0 || rollouts == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("query budget needs positive inputs".into()));
    }
    let c = cmax.ceil();
    let overflow = || Error::TooLarge { what: "query budget", size: u128::MAX };
    if c > u64::MAX as f64 {
        return Err(overflow());
    }
    let c = c as u64;
    c.checked_mul(c)
        .and_then(|x| x.checked_mul(iterations))
        .and_then(|x| x.checked_mul(rollouts))
        .and_then(|x| x.checked_mul(horizon))
        .ok_or_else(overflow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremVariant {
    LspiEgss,
    LspiDav,
    PolitexEgss,
    PolitexDav,
    KernelLspiDav,
    KernelPolitexDav,
}

impl TheoremVariant {
    pub const ALL: [TheoremVariant; 6] = [
        TheoremVariant::LspiEgss,
        TheoremVariant::LspiDav,
        TheoremVariant::PolitexEgss,
        TheoremVariant::PolitexDav,
        TheoremVariant::KernelLspiDav,
        TheoremVariant::KernelPolitexDav,
    ];

    pub fn algorithm(self) -> Algorithm {
        match self {
            TheoremVariant::LspiEgss | TheoremVariant::LspiDav | TheoremVariant::KernelLspiDav => Algorithm::Lspi,
            _ => Algorithm::Politex,
        }
    }

    pub fn check(self) -> CheckKind {
        match self {
            TheoremVariant::LspiEgss | TheoremVariant::PolitexEgss => CheckKind::Egss,
            TheoremVariant::LspiDav | TheoremVariant::PolitexDav => CheckKind::Dav,
            TheoremVariant::KernelLspiDav | TheoremVariant::KernelPolitexDav => CheckKind::KernelDav,
        }
    }

    pub fn is_kernel(self) -> bool {
        self.check() == CheckKind::KernelDav
    }
}

/// Parameters prescribed by the suboptimality theorems for a target
/// accuracy `κ` and failure probability `δ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremParameters {
    pub variant: TheoremVariant,
    /// Target accuracy; replaced by the misspecification level's `κ(ε)` when `ε > 0`.
    pub kappa: f64,
    pub delta: f64,
    /// Bound on the true weight norm.
    pub b: f64,
    pub gamma: f64,
    /// Feature dimension, or the critical information gain for kernel variants.
    pub dim: f64,
    pub agents: usize,
    pub epsilon: f64,
    /// Largest per-agent action count.
    pub max_actions: usize,
    /// Error multiplier of the check: `√d` for EGSS, `2m − 1` for DAV.
    pub zeta: f64,
    pub tau: f64,
    pub lambda: f64,
    pub theta: f64,
    pub cmax: f64,
    pub horizon: u64,
    pub iterations: u64,
    pub rollouts: u64,
    pub alpha: Option<f64>,
    pub budget: Option<u64>,
}

/// One sub-inequality `lhs ≤ rhs` of the accuracy or confidence argument.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl ChainCheck {
    /// Allows for rounding in the closed-form settings, which meet several
    /// of these with equality.
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-9)
    }
}

fn ceil_count(x: f64, what: &str) -> Result<u64> {
    if !x.is_finite() || x >= u64::MAX as f64 {
        return Err(Error::InvalidParameter(format!("{what} is not representable: {x}")));
    }
    Ok(x.ceil().max(1.0) as u64)
}

/// Fills every formulaic setting of the chosen theorem. `dim` is the feature
/// dimension `d`, or `Γ̃` for kernel variants, which also serves as `C_max`.
/// With `epsilon > 0` the target `κ` is replaced by the theorem's `κ(ε)`.
#[allow(clippy::too_many_arguments)]
pub fn theorem_parameters(
    variant: TheoremVariant,
    kappa: f64,
    delta: f64,
    b: f64,
    gamma: f64,
    dim: f64,
    agents: usize,
    epsilon: f64,
    max_actions: usize,
) -> Result<TheoremParameters> {
    let bad = |m: String| Err(Error::InvalidParameter(m));
    if !(delta > 0.0 && delta < 1.0) {
        return bad(format!("delta must lie in (0, 1), got {delta}"));
    }
    if !(b > 0.0) || !b.is_finite() {
        return bad(format!("b must be positive, got {b}"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return bad(format!("gamma must lie in (0, 1), got {gamma}"));
    }
    if !(dim >= 1.0) || !dim.is_finite() {
        return bad(format!("dimension must be at least 1, got {dim}"));
    }
    if agents == 0 {
        return bad("need at least one agent".into());
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return bad(format!("epsilon must be non-negative, got {epsilon}"));
    }
    let politex = variant.algorithm() == Algorithm::Politex;
    if politex && max_actions < 2 {
        return bad("Politex settings need at least two actions per agent".into());
    }
    let m = agents as f64;
    let g = 1.0 - gamma;
    let zeta = if variant.check() == CheckKind::Egss { dim.sqrt() } else { 2.0 * m - 1.0 };

    let kappa = if epsilon > 0.0 {
        let log_term = || {
            let r = 1.0 + (b * b / (epsilon * epsilon * dim)).ln();
            if r > 0.0 {
                Ok(r.sqrt())
            } else {
                Err(Error::InvalidParameter(format!("misspecification {epsilon} too large for b = {b}")))
            }
        };
        match variant {
            TheoremVariant::LspiEgss => 32.0 * epsilon * dim / (g * g) * log_term()?,
            TheoremVariant::LspiDav => 32.0 * epsilon * dim.sqrt() * m / (g * g) * log_term()?,
            TheoremVariant::PolitexEgss | TheoremVariant::PolitexDav => 16.0 * epsilon * dim.sqrt() * zeta / g * log_term()?,
            TheoremVariant::KernelLspiDav => 16.0 * epsilon * m * dim.sqrt() / (g * g),
            TheoremVariant::KernelPolitexDav => 8.0 * epsilon * m * dim.sqrt() / g,
        }
    } else {
        kappa
    };
    if !(kappa > 0.0) || !kappa.is_finite() {
        return bad(format!("kappa must be positive, got {kappa}"));
    }

    let tau = 1.0;
    let lambda = if politex {
        kappa * kappa * g * g / (576.0 * b * b * zeta * zeta)
    } else {
        kappa * kappa * g.powi(4) / (1024.0 * b * b * zeta * zeta)
    };
    let cmax = if variant.is_kernel() { dim } else { cmax_bound(dim.round() as usize, tau, lambda)? };
    let (theta, horizon) = if politex {
        (
            kappa * g / (24.0 * zeta * cmax.sqrt()),
            ((24.0 * cmax.sqrt() * zeta).ln() - (kappa * g * g).ln()) / g - 1.0,
        )
    } else {
        (
            kappa * g * g / (32.0 * zeta * cmax.sqrt()),
            ((32.0 * cmax.sqrt() * zeta).ln() - (kappa * g.powi(3)).ln()) / g - 1.0,
        )
    };
    let log_a = (max_actions.max(1) as f64).ln();
    let iterations = if politex {
        2.0 * m * log_a * (4.0 / (kappa * kappa * g.powi(4)) + 3.0 / (kappa * g * g) + 9.0 / 16.0)
    } else {
        ((1.0 / (kappa * g * g)).ln() + 8f64.ln()) / g + 1.0
    };
    let horizon = ceil_count(horizon, "H")?;
    let iterations = ceil_count(iterations, "K")?;
    let rollouts = ((4.0 * iterations as f64 * cmax * cmax).ln() - delta.ln()) / (2.0 * theta * theta * g * g);
    let rollouts = ceil_count(rollouts, "n")?;

    let mut p = TheoremParameters {
        variant,
        kappa,
        delta,
        b,
        gamma,
        dim,
        agents,
        epsilon,
        max_actions,
        zeta,
        tau,
        lambda,
        theta,
        cmax,
        horizon,
        iterations,
        rollouts,
        alpha: None,
        budget: query_budget(cmax, iterations, rollouts, horizon).ok(),
    };
    if politex {
        let spread = 1.0 / g + 2.0 * p.eta();
        p.alpha = Some((2.0 * m * log_a / iterations as f64).sqrt() / spread);
    }
    Ok(p)
}

impl TheoremParameters {
    /// Per-check value-error bound without the misspecification term:
    /// `ζ (b√(λτ) + (γ^{H+1}/(1−γ) + θ) √(τ C_max))`.
    pub fn eta(&self) -> f64 {
        let g = 1.0 - self.gamma;
        let tail = self.gamma.powf(self.horizon as f64 + 1.0) / g;
        self.zeta * (self.b * (self.lambda * self.tau).sqrt() + (tail + self.theta) * (self.tau * self.cmax).sqrt())
    }

    /// The sub-inequalities the settings are chosen to satisfy, evaluated at
    /// the rounded `H`, `K` and `n`.
    pub fn chain(&self) -> Vec<ChainCheck> {
        let g = 1.0 - self.gamma;
        let k = self.kappa;
        let z = self.zeta;
        let sc = (self.tau * self.cmax).sqrt();
        let ridge = z * self.b * (self.lambda * self.tau).sqrt();
        let truncation = z * self.gamma.powf(self.horizon as f64 + 1.0) / g * sc;
        let noise = z * self.theta * sc;
        let mut out = Vec::new();
        if self.variant.algorithm() == Algorithm::Lspi {
            let c = 8.0 / (g * g);
            out.push(ChainCheck { name: "ridge bias", lhs: c * ridge, rhs: k / 4.0 });
            out.push(ChainCheck { name: "rollout truncation", lhs: c * truncation, rhs: k / 4.0 });
            out.push(ChainCheck { name: "rollout noise", lhs: c * noise, rhs: k / 4.0 });
            out.push(ChainCheck {
                name: "policy iteration",
                lhs: 2.0 * self.gamma.powf(self.iterations as f64 - 1.0) / (g * g),
                rhs: k / 4.0,
            });
        } else {
            let c = 4.0 / g;
            out.push(ChainCheck { name: "ridge bias", lhs: c * ridge, rhs: k / 6.0 });
            out.push(ChainCheck { name: "rollout truncation", lhs: c * truncation, rhs: k / 6.0 });
            out.push(ChainCheck { name: "rollout noise", lhs: c * noise, rhs: k / 6.0 });
            let eta = ridge + truncation + noise;
            let m = self.agents as f64;
            let regret = (1.0 / (g * g) + 2.0 * eta / g)
                * (2.0 * m * (self.max_actions as f64).ln() / self.iterations as f64).sqrt();
            out.push(ChainCheck { name: "mirror descent regret", lhs: regret, rhs: k / 2.0 });
        }
        let fail = 4.0 * self.iterations as f64 * self.cmax * self.cmax
            * (-2.0 * self.theta * self.theta * g * g * self.rollouts as f64).exp();
        out.push(ChainCheck { name: "failure probability", lhs: fail, rhs: self.delta });
        out
    }

    /// A reset-mode planner configuration using these settings.
    pub fn config(&self, seed: u64) -> PlannerConfig {
        PlannerConfig {
            algorithm: self.variant.algorithm(),
            check: self.variant.check(),
            iterations: self.iterations as usize,
            rollouts: self.rollouts as usize,
            horizon: self.horizon as usize,
            tau: self.tau,
            lambda: self.lambda,
            gamma: self.gamma,
            alpha: self.alpha.unwrap_or(1.0),
            abar: None,
            seed,
            resets: true,
            kernel: KernelSpec::Linear,
            cmax: Some(self.cmax),
        }
    }
}
