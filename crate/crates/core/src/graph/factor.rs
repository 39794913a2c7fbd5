use nalgebra::{DMatrix, DVector};
use std::fmt::Debug;

use super::values::{Value, VariableKey};
use super::GraphError;

/// Whitened Huber threshold used when robust weighting is switched on.
pub const DEFAULT_HUBER_K: f64 = 1.345;

/// Robust loss applied to the whitened residual norm.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Loss {
    #[default]
    None,
    Huber(f64),
}

impl Loss {
    /// Cost contribution for a squared whitened norm `s2`.
    pub fn cost(self, s2: f64) -> f64 {
        match self {
            Loss::None => s2,
            Loss::Huber(k) => {
                let s = s2.sqrt();
                if s <= k {
                    s2
                } else {
                    2.0 * k * s - k * k
                }
            }
        }
    }

    /// IRLS weight for a squared whitened norm `s2`.
    pub fn weight(self, s2: f64) -> f64 {
        match self {
            Loss::None => 1.0,
            Loss::Huber(k) => {
                let s = s2.sqrt();
                if s <= k {
                    1.0
                } else {
                    k / s
                }
            }
        }
    }
}

/// Gaussian noise stored in square-root information form: the whitened
/// residual is `W r` with `WᵀW = Σ⁻¹`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    sqrt_info: DMatrix<f64>,
    diagonal: bool,
    pub loss: Loss,
}

impl NoiseModel {
    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self, GraphError> {
        Self::from_sigmas(&vec![sigma; dim])
    }

    pub fn from_sigmas(sigmas: &[f64]) -> Result<Self, GraphError> {
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(GraphError::InvalidNoise(
                "sigmas must be finite and positive",
            ));
        }
        let d = DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| 1.0 / s));
        Ok(Self {
            sqrt_info: DMatrix::from_diagonal(&d),
            diagonal: true,
            loss: Loss::None,
        })
    }

    /// From a full covariance; fails unless `Σ` is symmetric positive definite.
    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self, GraphError> {
        if !cov.is_square() {
            return Err(GraphError::InvalidNoise("covariance must be square"));
        }
        let asym = (cov - cov.transpose()).amax();
        if asym > 1e-9 * cov.amax().max(1e-300) {
            return Err(GraphError::InvalidNoise("covariance must be symmetric"));
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let chol = sym.cholesky().ok_or(GraphError::InvalidNoise(
            "covariance must be positive definite",
        ))?;
        // Σ = L Lᵀ  ⇒  Σ⁻¹ = L⁻ᵀ L⁻¹, so W = L⁻¹.
        let n = cov.nrows();
        let l_inv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(GraphError::InvalidNoise(
                "covariance must be positive definite",
            ))?;
        Ok(Self {
            sqrt_info: l_inv,
            diagonal: false,
            loss: Loss::None,
        })
    }

    /// Uses an already computed square-root information matrix.
    pub fn from_sqrt_information(sqrt_info: DMatrix<f64>) -> Self {
        Self {
            sqrt_info,
            diagonal: false,
            loss: Loss::None,
        }
    }

    pub fn with_loss(mut self, loss: Loss) -> Self {
        self.loss = loss;
        self
    }

    pub fn dim(&self) -> usize {
        self.sqrt_info.nrows()
    }

    pub fn sqrt_information(&self) -> &DMatrix<f64> {
        &self.sqrt_info
    }

    pub fn whiten(&self, r: &DVector<f64>) -> DVector<f64> {
        if self.diagonal {
            DVector::from_iterator(
                r.len(),
                r.iter()
                    .enumerate()
                    .map(|(i, x)| x * self.sqrt_info[(i, i)]),
            )
        } else {
            &self.sqrt_info * r
        }
    }

    pub fn whiten_matrix(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        if self.diagonal {
            let mut out = j.clone();
            for (i, mut row) in out.row_iter_mut().enumerate() {
                row *= self.sqrt_info[(i, i)];
            }
            out
        } else {
            &self.sqrt_info * j
        }
    }

    /// `‖r‖²_Σ` with the robust loss applied.
    pub fn cost(&self, r: &DVector<f64>) -> f64 {
        self.loss.cost(self.whiten(r).norm_squared())
    }
}

/// A measurement or constraint on a fixed ordered set of variables.
///
/// Implementations must be pure functions of the values passed in; the solver
/// may evaluate them in any order and repeatedly.
pub trait Factor: Debug + Send + Sync {
    fn keys(&self) -> &[VariableKey];

    fn noise(&self) -> &NoiseModel;

    /// Unwhitened residual `r(values)`; `values[i]` belongs to `keys()[i]`.
    fn residual(&self, values: &[&Value]) -> DVector<f64>;

    /// Analytic Jacobians of the unwhitened residual with respect to the
    /// tangent space of each variable. `None` selects central differences.
    fn jacobians(&self, _values: &[&Value]) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    fn dim(&self) -> usize {
        self.noise().dim()
    }

    /// Short type tag for diagnostics.
    fn name(&self) -> &'static str {
        "factor"
    }
}

/// Central finite-difference Jacobians on the manifold. Steps are `1e-6`
/// scaled by the magnitude of each coordinate.
pub fn numerical_jacobians(factor: &dyn Factor, values: &[&Value]) -> Vec<DMatrix<f64>> {
    numerical_jacobians_with_step(factor, values, 1e-6)
}

/// [`numerical_jacobians`] with a custom relative step. Residuals that
/// cancel large terms (ranges of ~2e7 m) need a larger step to keep the
/// rounding error down.
pub fn numerical_jacobians_with_step(
    factor: &dyn Factor,
    values: &[&Value],
    rel_step: f64,
) -> Vec<DMatrix<f64>> {
    let m = factor.dim();
    let mut out = Vec::with_capacity(values.len());
    let mut scratch: Vec<Value> = values.iter().map(|v| (*v).clone()).collect();
    for (k, v) in values.iter().enumerate() {
        let n = v.dim();
        let mut jac = DMatrix::zeros(m, n);
        for i in 0..n {
            let h = rel_step * v.fd_scale(i);
            let mut d = vec![0.0; n];
            d[i] = h;
            scratch[k] = v.retract(&d);
            let plus = factor.residual(&scratch.iter().collect::<Vec<_>>());
            d[i] = -h;
            scratch[k] = v.retract(&d);
            let minus = factor.residual(&scratch.iter().collect::<Vec<_>>());
            jac.set_column(i, &((plus - minus) / (2.0 * h)));
        }
        scratch[k] = (*v).clone();
        out.push(jac);
    }
    out
}
