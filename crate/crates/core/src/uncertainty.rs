//! Uncertainty checks: does some action at `s` have `φᵀV⁻¹φ > τ`?

use serde::{Deserialize, Serialize};

use crate::coreset::{CoreElement, CoreSet};
use crate::features::{AdditiveFeatureMap, FeatureMap, GreedyOracle, MAX_ENUMERATION};
use crate::mdp::{joint_action_count, joint_actions, ActionVector, StateHandle};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum CheckOutcome {
    Certain,
    /// An element whose uncertainty exceeds the threshold; its `q` is unset.
    Uncertain(CoreElement),
}

impl CheckOutcome {
    pub fn is_certain(&self) -> bool {
        matches!(self, CheckOutcome::Certain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Enumerate every joint action.
    Naive,
    /// `2d` greedy-oracle calls along whitened coordinate directions.
    Egss,
    /// The default action and its single-agent deviations.
    Dav,
    /// `Dav` with kernel uncertainties.
    KernelDav,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Naive => "naive",
            CheckKind::Egss => "egss",
            CheckKind::Dav => "dav",
            CheckKind::KernelDav => "kernel-dav",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [CheckKind::Naive, CheckKind::Egss, CheckKind::Dav, CheckKind::KernelDav].into_iter().find(|k| k.name() == s)
    }
}

/// Scans all joint actions in lexicographic order and reports the first
/// one whose uncertainty exceeds `tau`.
pub fn check_naive(h: StateHandle, s: &[usize], c: &CoreSet, tau: f64, map: &dyn FeatureMap) -> Result<CheckOutcome> {
    let size = joint_action_count(map.action_counts());
    if size > MAX_ENUMERATION {
        return Err(Error::TooLarge { what: "joint action set", size });
    }
    for a in joint_actions(map.action_counts()) {
        let phi = map.feature(s, &a);
        if c.uncertainty(&phi) > tau {
            return Ok(CheckOutcome::Uncertain(CoreElement::new(h, a, phi)));
        }
    }
    Ok(CheckOutcome::Certain)
}

/// For each `v ∈ {±e₁, …, ±e_d}` (index first, then sign) asks the oracle for
/// the action maximizing `⟨Lv, φ(s, ·)⟩`, where `L` is the lower Cholesky
/// factor of `V⁻¹`, and reports it if the squared value exceeds `tau`. A
/// certain outcome guarantees `φᵀV⁻¹φ ≤ d·τ` for every action.
pub fn check_egss(
    h: StateHandle,
    s: &[usize],
    c: &CoreSet,
    tau: f64,
    map: &dyn FeatureMap,
    oracle: &dyn GreedyOracle,
) -> Result<CheckOutcome> {
    let d = c.dim();
    let mut w = vec![0.0; d];
    for i in 0..d {
        let row = c.whitened_row(i);
        for sign in [1.0, -1.0] {
            w.iter_mut().zip(row).for_each(|(x, r)| *x = sign * r);
            let a = oracle.argmax(s, &w)?;
            let v = map.feature_dot(s, &a, &w);
            if v * v > tau {
                let phi = map.feature(s, &a);
                return Ok(CheckOutcome::Uncertain(CoreElement::new(h, a, phi)));
            }
        }
    }
    Ok(CheckOutcome::Certain)
}

/// `ā` followed by every single-agent deviation `(b, ā₋ⱼ)`, `b ≠ āⱼ`, agent-major.
pub fn dav_candidates(abar: &[usize], counts: &[usize]) -> Vec<ActionVector> {
    let mut out = vec![abar.to_vec()];
    for (j, &n) in counts.iter().enumerate() {
        for b in (0..n).filter(|&b| b != abar[j]) {
            let mut a = abar.to_vec();
            a[j] = b;
            out.push(a);
        }
    }
    out
}

/// Checks the default action and its single-agent deviations.
pub fn check_dav(
    h: StateHandle,
    s: &[usize],
    c: &CoreSet,
    tau: f64,
    abar: &[usize],
    map: &dyn AdditiveFeatureMap,
) -> Result<CheckOutcome> {
    crate::mdp::validate_action(map.action_counts(), abar)?;
    for a in dav_candidates(abar, map.action_counts()) {
        let phi = map.feature(s, &a);
        if c.uncertainty(&phi) > tau {
            return Ok(CheckOutcome::Uncertain(CoreElement::new(h, a, phi)));
        }
    }
    Ok(CheckOutcome::Certain)
}
