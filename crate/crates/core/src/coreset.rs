//! The core set: informative state-action pairs, the precision of their
//! features, and the size bound that caps how many can ever be added.

use std::f64::consts::E;
use std::sync::OnceLock;

use serde::Serialize;

use crate::features::FeatureMap;
use crate::linalg::{cholesky, PrecisionState};
use crate::mdp::{ActionVector, StateHandle};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoreElement {
    #[serde(skip)]
    pub state: StateHandle,
    pub action: ActionVector,
    #[serde(skip)]
    pub phi: Vec<f64>,
    /// Monte-Carlo estimate of the element's action value, once rolled out.
    pub q: Option<f64>,
    /// `φᵀV⁻¹φ` just before insertion.
    pub insertion_uncertainty: Option<f64>,
}

impl CoreElement {
    pub fn new(state: StateHandle, action: ActionVector, phi: Vec<f64>) -> Self {
        Self { state, action, phi, q: None, insertion_uncertainty: None }
    }
}

#[derive(Debug)]
pub struct CoreSet {
    elements: Vec<CoreElement>,
    precision: PrecisionState,
    /// Dense `V⁻¹`, kept current by Sherman-Morrison updates.
    inverse: Vec<f64>,
    tau: f64,
    whitening: OnceLock<Vec<f64>>,
    version: u64,
}

impl Clone for CoreSet {
    fn clone(&self) -> Self {
        Self {
            elements: self.elements.clone(),
            precision: self.precision.clone(),
            inverse: self.inverse.clone(),
            tau: self.tau,
            whitening: OnceLock::new(),
            version: self.version,
        }
    }
}

impl CoreSet {
    pub fn empty(dim: usize, tau: f64, lambda: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        let precision = PrecisionState::new(dim, lambda)?;
        let mut inverse = vec![0.0; dim * dim];
        for i in 0..dim {
            inverse[i * dim + i] = 1.0 / lambda;
        }
        Ok(Self { elements: Vec::new(), precision, inverse, tau, whitening: OnceLock::new(), version: 0 })
    }

    /// One-element core set holding `(ρ, ā)` with no value estimate.
    pub fn seed(
        rho: StateHandle,
        rho_state: &[usize],
        abar: &[usize],
        map: &dyn FeatureMap,
        tau: f64,
        lambda: f64,
    ) -> Result<Self> {
        let mut c = Self::empty(map.dim(), tau, lambda)?;
        c.add(CoreElement::new(rho, abar.to_vec(), map.feature(rho_state, abar)))?;
        Ok(c)
    }

    /// Appends `e` and folds its feature into the precision. The caller is
    /// responsible for having checked that `e` is uncertain.
    pub fn add(&mut self, mut e: CoreElement) -> Result<()> {
        if e.phi.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: e.phi.len() });
        }
        e.insertion_uncertainty = Some(self.precision.quad_form(&e.phi)?);
        self.precision.update(&e.phi)?;
        let d = self.dim();
        let mut u = vec![0.0; d];
        for (j, &p) in e.phi.iter().enumerate().filter(|(_, &p)| p != 0.0) {
            u.iter_mut().zip(&self.inverse[j * d..(j + 1) * d]).for_each(|(x, v)| *x += v * p);
        }
        let denom = 1.0 + crate::features::dot(&u, &e.phi);
        for (i, &ui) in u.iter().enumerate() {
            let scale = ui / denom;
            self.inverse[i * d..(i + 1) * d].iter_mut().zip(&u).for_each(|(v, &uj)| *v -= scale * uj);
        }
        self.elements.push(e);
        self.whitening = OnceLock::new();
        self.version += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.precision.dim()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.precision.lambda()
    }

    /// Incremented on every insertion.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn elements(&self) -> &[CoreElement] {
        &self.elements
    }

    pub fn precision(&self) -> &PrecisionState {
        &self.precision
    }

    pub fn set_estimate(&mut self, i: usize, q: f64) {
        self.elements[i].q = Some(q);
    }

    pub fn clear_estimates(&mut self) {
        self.elements.iter_mut().for_each(|e| e.q = None);
    }

    /// `Lᵀ` for the lower Cholesky factor `L` of `V⁻¹`, rebuilt after each
    /// insertion.
    pub fn whitening(&self) -> &[f64] {
        self.whitening.get_or_init(|| {
            let d = self.dim();
            let l = cholesky(&self.inverse, d)
                .or_else(|_| self.precision.inverse_cholesky())
                .expect("inverse of a precision matrix is positive definite");
            let mut t = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..=i {
                    t[j * d + i] = l[i * d + j];
                }
            }
            t
        })
    }

    /// `φᵀV⁻¹φ` over the nonzero coordinates of `φ`.
    pub fn uncertainty(&self, phi: &[f64]) -> f64 {
        let d = self.dim();
        let nz: Vec<(usize, f64)> = phi.iter().copied().enumerate().filter(|&(_, p)| p != 0.0).collect();
        let mut total = 0.0;
        for &(i, p) in &nz {
            let row = &self.inverse[i * d..(i + 1) * d];
            total += p * nz.iter().map(|&(j, q)| q * row[j]).sum::<f64>();
        }
        total
    }

    /// Column `i` of `L`, i.e. `L eᵢ`.
    pub fn whitened_row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.whitening()[i * d..(i + 1) * d]
    }

    /// Ridge weights `V⁻¹ Σ φ q` using the maintained factor.
    pub fn fit(&self) -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; self.dim()];
        for (i, e) in self.elements.iter().enumerate() {
            let q = e.q.ok_or(Error::MissingEstimate(i))?;
            rhs.iter_mut().zip(&e.phi).for_each(|(r, p)| *r += p * q);
        }
        Ok(self.precision.solve(rhs))
    }

    pub fn diagnostics(&self) -> CoreSetDiagnostics {
        CoreSetDiagnostics {
            size: self.len(),
            dim: self.dim(),
            tau: self.tau,
            lambda: self.lambda(),
            cmax_bound: cmax_bound(self.dim(), self.tau, self.lambda()).ok(),
            elements: self.elements.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoreSetDiagnostics {
    pub size: usize,
    pub dim: usize,
    pub tau: f64,
    pub lambda: f64,
    pub cmax_bound: Option<f64>,
    pub elements: Vec<CoreElement>,
}

/// Upper bound on the number of elements whose uncertainty exceeded `τ` at
/// insertion: `e/(e−1) · (1+τ)/τ · d · (ln(1 + 1/τ) + ln(1 + 1/λ))`.
pub fn cmax_bound(d: usize, tau: f64, lambda: f64) -> Result<f64> {
    if d == 0 || !(tau > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "core-set bound needs d >= 1, tau > 0, lambda > 0 (got {d}, {tau}, {lambda})"
        )));
    }
    Ok(E / (E - 1.0) * (1.0 + tau) / tau * d as f64 * ((1.0 + 1.0 / tau).ln() + (1.0 + 1.0 / lambda).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TableAdditiveMap;
    use crate::mdp::{reset, EnvironmentSpec};
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn handle() -> StateHandle {
        reset(&EnvironmentSpec::Coordination, 0).unwrap().1
    }

    #[test]
    fn cmax_examples() {
        // e/(e-1) * 2 * 2 ln 2
        assert_abs_diff_eq!(cmax_bound(1, 1.0, 1.0).unwrap(), 4.386171, epsilon = 1e-6);
        assert_abs_diff_eq!(cmax_bound(2, 1.0, 1.0).unwrap(), 8.772342, epsilon = 1e-6);
        assert_abs_diff_eq!(cmax_bound(14, 0.3, 0.01).unwrap(), 2.0 * cmax_bound(7, 0.3, 0.01).unwrap(), epsilon = 1e-9);
        assert!(cmax_bound(0, 1.0, 1.0).is_err());
        assert!(cmax_bound(1, 0.0, 1.0).is_err());
        assert!(cmax_bound(1, 1.0, -1.0).is_err());
    }

    #[test]
    fn seed_holds_one_unestimated_element() {
        let map = TableAdditiveMap::coordination();
        let c = CoreSet::seed(handle(), &[0], &[0, 0], &map, 1.0, 0.5).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.elements()[0].q, None);
        let v = c.precision().matrix();
        // φ(s1, (0,0)) = (0, 1)
        let expected = [0.5, 0.0, 0.0, 1.5];
        for (x, y) in v.iter().zip(expected) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn post_add_uncertainty() {
        let mut rng = stream(4, Stream::Environment);
        let mut c = CoreSet::empty(3, 1.0, 0.1).unwrap();
        for _ in 0..20 {
            let phi: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.6..0.6)).collect();
            let u = c.uncertainty(&phi);
            c.add(CoreElement::new(handle(), vec![0], phi.clone())).unwrap();
            assert_abs_diff_eq!(c.uncertainty(&phi), u / (1.0 + u), epsilon = 1e-10);
            assert_abs_diff_eq!(c.elements().last().unwrap().insertion_uncertainty.unwrap(), u, epsilon = 1e-10);
        }
    }

    #[test]
    fn orthonormal_then_unit() {
        let mut c = CoreSet::empty(2, 1.0, 1.0).unwrap();
        c.add(CoreElement::new(handle(), vec![0], vec![1.0, 0.0])).unwrap();
        c.add(CoreElement::new(handle(), vec![0], vec![0.0, 1.0])).unwrap();
        for k in 0..32 {
            let t = k as f64 * 0.2;
            assert!(c.uncertainty(&[t.cos(), t.sin()]) <= 1.0);
        }
    }

    #[test]
    fn uncertainty_matches_triangular_solve() {
        let mut rng = stream(8, Stream::Environment);
        let mut c = CoreSet::empty(6, 1.0, 0.05).unwrap();
        for _ in 0..10 {
            let phi: Vec<f64> = (0..6).map(|_| if rng.gen_bool(0.5) { rng.gen_range(-0.4..0.4) } else { 0.0 }).collect();
            assert_abs_diff_eq!(c.uncertainty(&phi), c.precision().quad_form(&phi).unwrap(), epsilon = 1e-10);
            c.add(CoreElement::new(handle(), vec![0], phi)).unwrap();
        }
    }

    #[test]
    fn fit_needs_estimates() {
        let mut c = CoreSet::empty(2, 1.0, 1.0).unwrap();
        c.add(CoreElement::new(handle(), vec![0], vec![1.0, 0.0])).unwrap();
        assert_eq!(c.fit(), Err(Error::MissingEstimate(0)));
        c.set_estimate(0, 1.0);
        let w = c.fit().unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-15);
        c.clear_estimates();
        assert!(c.fit().is_err());
    }

    #[test]
    fn diagnostics_serialize() {
        let map = TableAdditiveMap::coordination();
        let c = CoreSet::seed(handle(), &[0], &[0, 0], &map, 1.0, 1.0).unwrap();
        let json = serde_json::to_value(c.diagnostics()).unwrap();
        assert_eq!(json["size"], 1);
        assert_eq!(json["elements"][0]["action"], serde_json::json!([0, 0]));
    }
}
