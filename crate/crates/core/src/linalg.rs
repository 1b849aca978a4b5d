//! Dense SPD linear algebra on row-major `n x n` buffers.
//!
//! Only the Cholesky factor of a precision matrix is ever stored; quadratic
//! forms in its inverse come from triangular solves.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// Lower Cholesky factor of the SPD matrix `a`.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    check_dim(n * n, a.len())?;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` in place.
pub fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s: f64 = row.iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub fn solve_lower_transpose(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Replaces `L` by the factor of `L Lᵀ + x xᵀ`. `x` is used as scratch.
pub fn rank_one_update(l: &mut [f64], n: usize, x: &mut [f64]) {
    for k in 0..n {
        if x[k] == 0.0 {
            continue;
        }
        let lkk = l[k * n + k];
        let r = lkk.hypot(x[k]);
        let c = r / lkk;
        let s = x[k] / lkk;
        l[k * n + k] = r;
        for i in k + 1..n {
            let lik = (l[i * n + k] + s * x[i]) / c;
            x[i] = c * x[i] - s * lik;
            l[i * n + k] = lik;
        }
    }
}

/// `2 Σ log L_ii`, the log-determinant of `L Lᵀ`.
pub fn logdet_from_factor(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| 2.0 * l[i * n + i].ln()).sum()
}

/// Regularized least squares `(ΦᵀΦ + λI)⁻¹ Φᵀ q` for row features of length `dim`.
pub fn ridge_solve(features: &[Vec<f64>], targets: &[f64], lambda: f64, dim: usize) -> Result<Vec<f64>> {
    check_dim(features.len(), targets.len())?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    check_finite(targets)?;
    let mut state = PrecisionState::new(dim, lambda)?;
    let mut rhs = vec![0.0; dim];
    for (phi, &q) in features.iter().zip(targets) {
        state.update(phi)?;
        for (r, p) in rhs.iter_mut().zip(phi) {
            *r += p * q;
        }
    }
    Ok(state.solve(rhs))
}

/// Cholesky factor `M` of `V = λI + Σ φφᵀ`, maintained by rank-one updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionState {
    dim: usize,
    lambda: f64,
    chol: Vec<f64>,
    count: usize,
}

impl PrecisionState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        let mut chol = vec![0.0; dim * dim];
        let root = lambda.sqrt();
        for i in 0..dim {
            chol[i * dim + i] = root;
        }
        Ok(Self { dim, lambda, chol, count: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Row-major lower-triangular factor.
    pub fn factor(&self) -> &[f64] {
        &self.chol
    }

    pub fn update(&mut self, phi: &[f64]) -> Result<()> {
        check_dim(self.dim, phi.len())?;
        check_finite(phi)?;
        let mut x = phi.to_vec();
        rank_one_update(&mut self.chol, self.dim, &mut x);
        self.count += 1;
        Ok(())
    }

    /// `V⁻¹ b` by forward and backward substitution.
    pub fn solve(&self, mut b: Vec<f64>) -> Vec<f64> {
        solve_lower(&self.chol, self.dim, &mut b);
        solve_lower_transpose(&self.chol, self.dim, &mut b);
        b
    }

    /// `φᵀ V⁻¹ φ = ‖M⁻¹φ‖²`.
    pub fn quad_form(&self, phi: &[f64]) -> Result<f64> {
        check_dim(self.dim, phi.len())?;
        let mut y = phi.to_vec();
        solve_lower(&self.chol, self.dim, &mut y);
        Ok(y.iter().map(|v| v * v).sum())
    }

    /// `L (sign · e_index)` where `L` is the lower Cholesky factor of `V⁻¹`.
    pub fn whitened_direction(&self, v: SignedBasis) -> Result<Vec<f64>> {
        if v.index >= self.dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {} out of range for dimension {}",
                v.index, self.dim
            )));
        }
        let n = self.dim;
        let l = self.inverse_cholesky()?;
        let sign = if v.negative { -1.0 } else { 1.0 };
        Ok((0..n).map(|i| sign * l[i * n + v.index]).collect())
    }

    /// Lower Cholesky factor of `V⁻¹ = M⁻ᵀ M⁻¹`.
    pub fn inverse_cholesky(&self) -> Result<Vec<f64>> {
        let n = self.dim;
        let w = self.inverse_factor();
        let mut inv = vec![0.0; n * n];
        for k in 0..n {
            let row = &w[k * n..k * n + k + 1];
            for i in 0..=k {
                if row[i] != 0.0 {
                    for j in 0..=i {
                        inv[i * n + j] += row[i] * row[j];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                inv[j * n + i] = inv[i * n + j];
            }
        }
        cholesky(&inv, n)
    }

    /// `M⁻¹` as a row-major lower-triangular matrix, built row by row from
    /// `M W = I`.
    pub fn inverse_factor(&self) -> Vec<f64> {
        let n = self.dim;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            let (done, rest) = w.split_at_mut(i * n);
            let row = &mut rest[..n];
            row[i] = 1.0;
            for k in 0..i {
                let m = self.chol[i * n + k];
                if m != 0.0 {
                    let prev = &done[k * n..k * n + k + 1];
                    row[..=k].iter_mut().zip(prev).for_each(|(r, p)| *r -= m * p);
                }
            }
            let d = self.chol[i * n + i];
            row[..=i].iter_mut().for_each(|r| *r /= d);
        }
        w
    }

    /// Dense `M Mᵀ`.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.dim;
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.chol[i * n + k] * self.chol[j * n + k]).sum();
                v[i * n + j] = s;
                v[j * n + i] = s;
            }
        }
        v
    }

    pub fn logdet(&self) -> f64 {
        logdet_from_factor(&self.chol, self.dim)
    }
}

/// `±e_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedBasis {
    pub index: usize,
    pub negative: bool,
}

impl SignedBasis {
    pub fn positive(index: usize) -> Self {
        Self { index, negative: false }
    }

    pub fn negative(index: usize) -> Self {
        Self { index, negative: true }
    }
}

pub fn precision_update(state: &PrecisionState, phi: &[f64]) -> Result<PrecisionState> {
    let mut next = state.clone();
    next.update(phi)?;
    Ok(next)
}

pub fn uncertainty_quad_form(state: &PrecisionState, phi: &[f64]) -> Result<f64> {
    state.quad_form(phi)
}

pub fn whitened_infnorm_direction(state: &PrecisionState, v: SignedBasis) -> Result<Vec<f64>> {
    state.whitened_direction(v)
}
