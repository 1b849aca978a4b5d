//! Kernel ridge regression over state-action pairs: Q estimates, Woodbury
//! uncertainties, information gain and the kernelized default-action check.

use std::fmt::Debug;
use std::sync::Arc;

use crate::coreset::CoreElement;
use crate::features::{dot, AdditiveFeatureMap};
use crate::linalg::{solve_lower, solve_lower_transpose};
use crate::mdp::{validate_action, ActionVector, State, StateHandle};
use crate::uncertainty::{dav_candidates, CheckOutcome};
use crate::{Error, Result};

/// A state-action pair `(s, a)`.
pub type Input<'a> = (&'a [usize], &'a [usize]);

/// Symmetric positive semi-definite kernel on state-action pairs.
pub trait KernelFn: Send + Sync + Debug {
    fn action_counts(&self) -> &[usize];
    fn eval(&self, x: Input, y: Input) -> f64;

    /// Agent `j`'s share `k_j((s, a_j), y)`, with `Σ_j k_j((s, x_j), y) = k((s, x), y)`.
    /// `None` when the kernel does not split over agents.
    fn agent_eval(&self, s: &[usize], agent: usize, action: usize, y: Input) -> Option<f64>;

    fn is_additive(&self) -> bool {
        true
    }
}

/// `⟨φ(x), φ(y)⟩`; agent shares are `⟨φ_j(s, a_j), φ(y)⟩`.
#[derive(Debug, Clone)]
pub struct LinearKernel(pub Arc<dyn AdditiveFeatureMap>);

impl KernelFn for LinearKernel {
    fn action_counts(&self) -> &[usize] {
        self.0.action_counts()
    }

    fn eval(&self, x: Input, y: Input) -> f64 {
        dot(&self.0.feature(x.0, x.1), &self.0.feature(y.0, y.1))
    }

    fn agent_eval(&self, s: &[usize], agent: usize, action: usize, y: Input) -> Option<f64> {
        Some(dot(&self.0.agent_feature(s, agent, action), &self.0.feature(y.0, y.1)))
    }
}

/// `Σ_j exp(−‖φ_j(x) − φ_j(y)‖² / 2ℓ_j²)` over agent features.
#[derive(Debug, Clone)]
pub struct AdditiveSeKernel {
    pub map: Arc<dyn AdditiveFeatureMap>,
    pub length_scales: Vec<f64>,
}

impl AdditiveSeKernel {
    pub fn new(map: Arc<dyn AdditiveFeatureMap>, length_scales: Vec<f64>) -> Result<Self> {
        if length_scales.len() != map.action_counts().len() {
            return Err(Error::Dimension { expected: map.action_counts().len(), got: length_scales.len() });
        }
        if length_scales.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter("length scales must be positive".into()));
        }
        Ok(Self { map, length_scales })
    }

    fn part(&self, s: &[usize], agent: usize, action: usize, ys: &[usize], ya: usize) -> f64 {
        let a = self.map.agent_feature(s, agent, action);
        let b = self.map.agent_feature(ys, agent, ya);
        let d2: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
        let l = self.length_scales[agent];
        (-d2 / (2.0 * l * l)).exp()
    }
}

impl KernelFn for AdditiveSeKernel {
    fn action_counts(&self) -> &[usize] {
        self.map.action_counts()
    }

    fn eval(&self, x: Input, y: Input) -> f64 {
        (0..x.1.len()).map(|j| self.part(x.0, j, x.1[j], y.0, y.1[j])).sum()
    }

    fn agent_eval(&self, s: &[usize], agent: usize, action: usize, y: Input) -> Option<f64> {
        Some(self.part(s, agent, action, y.0, y.1[agent]))
    }
}

/// `exp(−‖φ(x) − φ(y)‖² / 2ℓ²)` on joint features; does not split over agents.
#[derive(Debug, Clone)]
pub struct JointSeKernel {
    pub map: Arc<dyn AdditiveFeatureMap>,
    pub length_scale: f64,
}

impl KernelFn for JointSeKernel {
    fn action_counts(&self) -> &[usize] {
        self.map.action_counts()
    }

    fn eval(&self, x: Input, y: Input) -> f64 {
        let a = self.map.feature(x.0, x.1);
        let b = self.map.feature(y.0, y.1);
        let d2: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
        (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn agent_eval(&self, _: &[usize], _: usize, _: usize, _: Input) -> Option<f64> {
        None
    }

    fn is_additive(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelElement {
    pub handle: StateHandle,
    pub state: State,
    pub action: ActionVector,
    pub q: Option<f64>,
}

/// Core set in the kernel setting: elements, Gram matrix and a Cholesky
/// factor of `K + λI` grown one bordered row per insertion.
#[derive(Debug, Clone)]
pub struct KernelCoreSet {
    kernel: Arc<dyn KernelFn>,
    lambda: f64,
    elements: Vec<KernelElement>,
    gram: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
    version: u64,
}

impl KernelCoreSet {
    pub fn new(kernel: Arc<dyn KernelFn>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { kernel, lambda, elements: Vec::new(), gram: Vec::new(), chol: Vec::new(), version: 0 })
    }

    pub fn kernel(&self) -> &Arc<dyn KernelFn> {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn elements(&self) -> &[KernelElement] {
        &self.elements
    }

    /// Lower triangle of the Gram matrix, row by row.
    pub fn gram(&self) -> &[Vec<f64>] {
        &self.gram
    }

    fn dense_factor(&self) -> Vec<f64> {
        let n = self.len();
        let mut l = vec![0.0; n * n];
        for (i, row) in self.chol.iter().enumerate() {
            l[i * n..i * n + row.len()].copy_from_slice(row);
        }
        l
    }

    /// `k_C(x)`: kernel values between `x` and every element.
    pub fn kvec(&self, s: &[usize], a: &[usize]) -> Vec<f64> {
        self.elements.iter().map(|e| self.kernel.eval((s, a), (&e.state, &e.action))).collect()
    }

    /// `L⁻¹ k` for the bordered factor `L`.
    fn forward(&self, mut k: Vec<f64>) -> Vec<f64> {
        for i in 0..k.len() {
            let row = &self.chol[i];
            let s: f64 = row[..i].iter().zip(&k[..i]).map(|(a, b)| a * b).sum();
            k[i] = (k[i] - s) / row[i];
        }
        k
    }

    pub fn add(&mut self, handle: StateHandle, state: &[usize], action: &[usize]) -> Result<()> {
        validate_action(self.kernel.action_counts(), action)?;
        let k = self.kvec(state, action);
        let kxx = self.kernel.eval((state, action), (state, action));
        let l = self.forward(k.clone());
        let pivot = kxx + self.lambda - l.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut row = l;
        row.push(pivot.sqrt());
        let mut grow = k;
        grow.push(kxx);
        self.chol.push(row);
        self.gram.push(grow);
        self.elements.push(KernelElement { handle, state: state.to_vec(), action: action.to_vec(), q: None });
        self.version += 1;
        Ok(())
    }

    pub fn set_estimate(&mut self, i: usize, q: f64) {
        self.elements[i].q = Some(q);
    }

    pub fn clear_estimates(&mut self) {
        self.elements.iter_mut().for_each(|e| e.q = None);
    }

    /// `(K + λI)⁻¹ b`.
    pub fn solve(&self, mut b: Vec<f64>) -> Vec<f64> {
        let n = self.len();
        let l = self.dense_factor();
        solve_lower(&l, n, &mut b);
        solve_lower_transpose(&l, n, &mut b);
        b
    }

    /// Coefficients `β = (K + λI)⁻¹ q`.
    pub fn fit(&self) -> Result<Vec<f64>> {
        let q = self
            .elements
            .iter()
            .enumerate()
            .map(|(i, e)| e.q.ok_or(Error::MissingEstimate(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.solve(q))
    }

    /// `Σ_c β_c k_j((s, a_j), c)` over the first `β.len()` elements.
    pub fn agent_value(&self, beta: &[f64], s: &[usize], agent: usize, action: usize) -> Result<f64> {
        let mut total = 0.0;
        for (b, e) in beta.iter().zip(&self.elements) {
            let k = self
                .kernel
                .agent_eval(s, agent, action, (&e.state, &e.action))
                .ok_or_else(|| Error::Unsupported("kernel does not decompose over agents".into()))?;
            total += b * k;
        }
        Ok(total)
    }
}

/// `k_C(x)ᵀ (K + λI)⁻¹ q`.
pub fn kernel_q_eval(kc: &KernelCoreSet, s: &[usize], a: &[usize]) -> Result<f64> {
    let beta = kc.fit()?;
    Ok(dot(&kc.kvec(s, a), &beta))
}

/// `(k(x, x) − k_Cᵀ (K + λI)⁻¹ k_C) / λ`, clamped at zero.
pub fn kernel_uncertainty(kc: &KernelCoreSet, s: &[usize], a: &[usize]) -> f64 {
    let kxx = kc.kernel.eval((s, a), (s, a));
    let l = kc.forward(kc.kvec(s, a));
    ((kxx - l.iter().map(|v| v * v).sum::<f64>()) / kc.lambda).max(0.0)
}

/// `log det(I + K/λ)`.
pub fn info_gain(kc: &KernelCoreSet) -> f64 {
    let n = kc.len() as f64;
    kc.chol.iter().enumerate().map(|(i, row)| 2.0 * row[i].ln()).sum::<f64>() - n * kc.lambda.ln()
}

/// Default-action check with kernel uncertainties.
pub fn check_kernel_dav(h: StateHandle, s: &[usize], kc: &KernelCoreSet, tau: f64, abar: &[usize]) -> Result<CheckOutcome> {
    validate_action(kc.kernel.action_counts(), abar)?;
    for a in dav_candidates(abar, kc.kernel.action_counts()) {
        if kernel_uncertainty(kc, s, &a) > tau {
            return Ok(CheckOutcome::Uncertain(CoreElement::new(h, a, Vec::new())));
        }
    }
    Ok(CheckOutcome::Certain)
}

/// `α Σ_k Q̂_{k,j}(s, a_j)`: the log-potential of agent `j` playing `action`
/// under the softmax of accumulated kernel estimates. Each `β_k` refers to a
/// prefix of the core set, which only ever grows by appending.
pub fn kernel_politex_potential(
    kc: &KernelCoreSet,
    betas: &[Vec<f64>],
    alpha: f64,
    s: &[usize],
    agent: usize,
    action: usize,
) -> Result<f64> {
    if !kc.kernel.is_additive() {
        return Err(Error::Unsupported("kernel does not decompose over agents".into()));
    }
    let mut total = 0.0;
    for beta in betas {
        total += kc.agent_value(beta, s, agent, action)?;
    }
    Ok(alpha * total)
}
