use std::sync::Arc;

use super::policy::{ActionScorer, KernelScorer, LinearScorer};
use crate::coreset::{CoreElement, CoreSet};
use crate::features::{AdditiveFeatureMap, AdditiveOracle, EnumerationOracle, FeatureMap, GreedyOracle};
use crate::kernel::{check_kernel_dav, info_gain, kernel_uncertainty, KernelCoreSet, KernelFn};
use crate::mdp::{ActionVector, StateHandle};
use crate::uncertainty::{check_dav, check_egss, check_naive, CheckKind, CheckOutcome};
use crate::{Error, Result};

/// The value model a planner run fits: a core set, its uncertainty check and
/// the regression that turns rolled-out estimates into action scores.
pub trait Model {
    fn len(&self) -> usize;
    /// Incremented on every insertion.
    fn version(&self) -> u64;
    fn element(&self, i: usize) -> (StateHandle, &[usize]);
    fn check(&self, h: StateHandle, s: &[usize]) -> Result<CheckOutcome>;
    /// Whether a state found certain stays certain as elements are added.
    /// Holds when the check bounds `φᵀV⁻¹φ` directly, since adding
    /// elements only shrinks it.
    fn monotone_check(&self) -> bool;
    fn insert(&mut self, s: &[usize], e: CoreElement) -> Result<()>;
    fn set_estimate(&mut self, i: usize, q: f64);
    fn clear_estimates(&mut self);
    /// Coefficients of the current fit: ridge weights or kernel `β`.
    fn fit(&self) -> Result<Vec<f64>>;
    /// Scores under coefficients from [`Model::fit`] (possibly summed across
    /// iterations; kernel coefficients may cover a prefix of the elements).
    fn scorer(&self, coef: Vec<f64>) -> Arc<dyn ActionScorer>;
    /// `log det(I + ΦΦᵀ/λ)` (or its kernel form) of the current core set.
    fn info_gain(&self) -> f64;
    /// Uncertainty of the most recent element just before it was added.
    fn last_insertion_uncertainty(&self) -> Option<f64>;
}

pub struct FiniteModel {
    core: CoreSet,
    map: Arc<dyn AdditiveFeatureMap>,
    oracle: Box<dyn GreedyOracle>,
    check: CheckKind,
    abar: ActionVector,
}

impl FiniteModel {
    /// Core set seeded with `(ρ, ā)`.
    pub fn new(
        map: Arc<dyn AdditiveFeatureMap>,
        check: CheckKind,
        abar: ActionVector,
        tau: f64,
        lambda: f64,
        rho: StateHandle,
        rho_state: &[usize],
    ) -> Result<Self> {
        if check == CheckKind::KernelDav {
            return Err(Error::InvalidParameter("kernel-dav needs a kernel model".into()));
        }
        let core = CoreSet::seed(rho, rho_state, &abar, &*map, tau, lambda)?;
        let oracle: Box<dyn GreedyOracle> = Box::new(AdditiveOracle(map.clone()));
        Ok(Self { core, map, oracle, check, abar })
    }

    /// Uses brute-force enumeration for the EGSS oracle instead of the
    /// per-agent argmax.
    pub fn with_enumeration_oracle(mut self) -> Self {
        let map: Arc<dyn FeatureMap> = Arc::new(AsFeatureMap(self.map.clone()));
        self.oracle = Box::new(EnumerationOracle(map));
        self
    }

    pub fn core(&self) -> &CoreSet {
        &self.core
    }
}

#[derive(Debug)]
struct AsFeatureMap(Arc<dyn AdditiveFeatureMap>);

impl FeatureMap for AsFeatureMap {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn action_counts(&self) -> &[usize] {
        self.0.action_counts()
    }
    fn feature(&self, s: &[usize], a: &[usize]) -> Vec<f64> {
        self.0.feature(s, a)
    }
}

impl Model for FiniteModel {
    fn len(&self) -> usize {
        self.core.len()
    }

    fn version(&self) -> u64 {
        self.core.version()
    }

    fn element(&self, i: usize) -> (StateHandle, &[usize]) {
        let e = &self.core.elements()[i];
        (e.state, &e.action)
    }

    fn check(&self, h: StateHandle, s: &[usize]) -> Result<CheckOutcome> {
        let tau = self.core.tau();
        match self.check {
            CheckKind::Naive => check_naive(h, s, &self.core, tau, &*self.map),
            CheckKind::Egss => check_egss(h, s, &self.core, tau, &*self.map, &*self.oracle),
            CheckKind::Dav => check_dav(h, s, &self.core, tau, &self.abar, &*self.map),
            CheckKind::KernelDav => unreachable!("rejected in FiniteModel::new"),
        }
    }

    fn monotone_check(&self) -> bool {
        self.check != CheckKind::Egss
    }

    fn insert(&mut self, _: &[usize], e: CoreElement) -> Result<()> {
        self.core.add(e)
    }

    fn set_estimate(&mut self, i: usize, q: f64) {
        self.core.set_estimate(i, q);
    }

    fn clear_estimates(&mut self) {
        self.core.clear_estimates();
    }

    fn fit(&self) -> Result<Vec<f64>> {
        self.core.fit()
    }

    fn scorer(&self, coef: Vec<f64>) -> Arc<dyn ActionScorer> {
        Arc::new(LinearScorer { map: self.map.clone(), w: coef })
    }

    fn info_gain(&self) -> f64 {
        let p = self.core.precision();
        p.logdet() - p.dim() as f64 * p.lambda().ln()
    }

    fn last_insertion_uncertainty(&self) -> Option<f64> {
        self.core.elements().last().and_then(|e| e.insertion_uncertainty)
    }
}

pub struct KernelModel {
    core: KernelCoreSet,
    abar: ActionVector,
    tau: f64,
    last_uncertainty: Option<f64>,
}

impl KernelModel {
    pub fn new(
        kernel: Arc<dyn KernelFn>,
        abar: ActionVector,
        tau: f64,
        lambda: f64,
        rho: StateHandle,
        rho_state: &[usize],
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if !kernel.is_additive() {
            return Err(Error::Unsupported("planning needs a kernel that decomposes over agents".into()));
        }
        let mut core = KernelCoreSet::new(kernel, lambda)?;
        let u = kernel_uncertainty(&core, rho_state, &abar);
        core.add(rho, rho_state, &abar)?;
        Ok(Self { core, abar, tau, last_uncertainty: Some(u) })
    }

    pub fn core(&self) -> &KernelCoreSet {
        &self.core
    }
}

impl Model for KernelModel {
    fn len(&self) -> usize {
        self.core.len()
    }

    fn version(&self) -> u64 {
        self.core.version()
    }

    fn element(&self, i: usize) -> (StateHandle, &[usize]) {
        let e = &self.core.elements()[i];
        (e.handle, &e.action)
    }

    fn check(&self, h: StateHandle, s: &[usize]) -> Result<CheckOutcome> {
        check_kernel_dav(h, s, &self.core, self.tau, &self.abar)
    }

    fn monotone_check(&self) -> bool {
        true
    }

    fn insert(&mut self, s: &[usize], e: CoreElement) -> Result<()> {
        let u = kernel_uncertainty(&self.core, s, &e.action);
        self.core.add(e.state, s, &e.action)?;
        self.last_uncertainty = Some(u);
        Ok(())
    }

    fn set_estimate(&mut self, i: usize, q: f64) {
        self.core.set_estimate(i, q);
    }

    fn clear_estimates(&mut self) {
        self.core.clear_estimates();
    }

    fn fit(&self) -> Result<Vec<f64>> {
        self.core.fit()
    }

    fn scorer(&self, coef: Vec<f64>) -> Arc<dyn ActionScorer> {
        let elements = self.core.elements()[..coef.len()].to_vec();
        Arc::new(KernelScorer { kernel: self.core.kernel().clone(), elements, beta: coef })
    }

    fn info_gain(&self) -> f64 {
        info_gain(&self.core)
    }

    fn last_insertion_uncertainty(&self) -> Option<f64> {
        self.last_uncertainty
    }
}
