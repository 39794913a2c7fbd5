//! Sparse nonlinear least squares on manifolds: factor graphs, Gauss–Newton /
//! Levenberg–Marquardt, Schur-complement marginalization and a fixed-lag
//! smoother built from them.
//!
//! The cost minimized is `Σ_f ρ_f(‖W_f r_f(x)‖²)` where `W_f` is the factor's
//! square-root information and `ρ_f` its (optional) robust loss.

mod factor;
mod factors;
mod linear;
mod marginal;
mod smoother;
mod solver;
mod values;

pub use factor::{
    numerical_jacobians, numerical_jacobians_with_step, Factor, Loss, NoiseModel, DEFAULT_HUBER_K,
};
pub use factors::{BetweenVectorFactor, LinearFactor, PoseBetweenFactor, PriorFactor};
pub use linear::{EnvelopeCholesky, EnvelopeMatrix, LinearizedFactor, NormalEquations, Ordering};
pub use marginal::MarginalPrior;
pub use smoother::{FixedLagSmoother, SmootherUpdate};
pub use solver::{OptimizationReport, SolverConfig, SolverMethod};
pub use values::{Pose3, Value, Values, VariableBlock, VariableKey, VariableKind};

pub(crate) use factors::put3;

use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("variable {0} already exists")]
    DuplicateVariable(VariableKey),
    #[error("variable {0} is not in the graph")]
    MissingVariable(VariableKey),
    #[error("no value supplied for variable {0}")]
    MissingValue(VariableKey),
    #[error("variable {key} has the wrong dimension ({dim})")]
    WrongDimension { key: VariableKey, dim: usize },
    #[error("invalid noise model: {0}")]
    InvalidNoise(&'static str),
    #[error("factor {id} ({name}) produced a non-finite residual or Jacobian")]
    NonFiniteFactor { id: FactorId, name: &'static str },
    #[error("cost is not finite")]
    NonFiniteCost,
    #[error(
        "normal equations are singular or indefinite at variable {0}; \
         use Levenberg-Marquardt or add a prior"
    )]
    SingularSystem(VariableKey),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("new state at t={new} is not after the newest state at t={newest}")]
    NonCausalUpdate { new: f64, newest: f64 },
}

/// Identifier of a factor within a graph; strictly increasing in insertion
/// order, which is also the evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FactorId(pub u64);

impl std::fmt::Display for FactorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Variables (with their current values) and the factors connecting them.
#[derive(Clone, Debug, Default)]
pub struct FactorGraph {
    values: Values,
    factors: BTreeMap<FactorId, Arc<dyn Factor>>,
    next_id: u64,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, block: VariableBlock) -> Result<(), GraphError> {
        block.validate()?;
        if self.values.contains(&block.key) {
            return Err(GraphError::DuplicateVariable(block.key));
        }
        self.values.insert(block.key, block.value);
        Ok(())
    }

    pub fn add_factor<F: Factor + 'static>(&mut self, factor: F) -> Result<FactorId, GraphError> {
        self.add_shared_factor(Arc::new(factor))
    }

    pub fn add_shared_factor(&mut self, factor: Arc<dyn Factor>) -> Result<FactorId, GraphError> {
        for k in factor.keys() {
            if !self.values.contains(k) {
                return Err(GraphError::MissingVariable(*k));
            }
        }
        let id = FactorId(self.next_id);
        self.next_id += 1;
        self.factors.insert(id, factor);
        Ok(id)
    }

    pub fn remove_factor(&mut self, id: FactorId) -> Option<Arc<dyn Factor>> {
        self.factors.remove(&id)
    }

    /// Current values of all variables.
    pub fn values(&self) -> &Values {
        &self.values
    }

    /// Overwrites the stored values of variables present in `values`.
    pub fn update_values(&mut self, values: &Values) {
        for (k, v) in values.iter() {
            if let Some(slot) = self.values.get_mut(k) {
                *slot = v.clone();
            }
        }
    }

    pub fn contains(&self, key: &VariableKey) -> bool {
        self.values.contains(key)
    }

    pub fn num_variables(&self) -> usize {
        self.values.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> impl Iterator<Item = (FactorId, &Arc<dyn Factor>)> {
        self.factors.iter().map(|(id, f)| (*id, f))
    }

    pub fn keys(&self) -> impl Iterator<Item = &VariableKey> {
        self.values.keys()
    }

    /// Column layout over all graph variables in key order.
    pub fn ordering(&self) -> Ordering {
        Ordering::new(self.values.iter().map(|(k, v)| (k, v.dim())))
    }

    fn gather<'a>(
        &self,
        factor: &dyn Factor,
        values: &'a Values,
    ) -> Result<Vec<&'a Value>, GraphError> {
        factor
            .keys()
            .iter()
            .map(|k| values.get(k).ok_or(GraphError::MissingValue(*k)))
            .collect()
    }

    /// `Σ ‖r‖²_Σ` over all factors (robust losses applied).
    pub fn total_cost(&self, values: &Values) -> Result<f64, GraphError> {
        let mut cost = 0.0;
        for f in self.factors.values() {
            let vals = self.gather(f.as_ref(), values)?;
            cost += f.noise().cost(&f.residual(&vals));
        }
        Ok(cost)
    }

    /// Per-factor cost, in factor order.
    pub fn factor_costs(
        &self,
        values: &Values,
    ) -> Result<Vec<(FactorId, &'static str, f64)>, GraphError> {
        self.factors
            .iter()
            .map(|(id, f)| {
                let vals = self.gather(f.as_ref(), values)?;
                Ok((*id, f.name(), f.noise().cost(&f.residual(&vals))))
            })
            .collect()
    }

    /// Whitened linearization of every factor at `values`.
    pub fn linearize(&self, values: &Values) -> Result<Vec<LinearizedFactor>, GraphError> {
        self.factors
            .iter()
            .map(|(id, f)| self.linearize_one(*id, f.as_ref(), values))
            .collect()
    }

    fn linearize_one(
        &self,
        id: FactorId,
        f: &dyn Factor,
        values: &Values,
    ) -> Result<LinearizedFactor, GraphError> {
        let vals = self.gather(f, values)?;
        let r = f.residual(&vals);
        let jac = f
            .jacobians(&vals)
            .unwrap_or_else(|| numerical_jacobians(f, &vals));
        let noise = f.noise();
        let wr = noise.whiten(&r);
        let scale = noise.loss.weight(wr.norm_squared()).sqrt();
        let blocks: Vec<DMatrix<f64>> =
            jac.iter().map(|j| noise.whiten_matrix(j) * scale).collect();
        let residual = wr * scale;
        let finite = residual.iter().all(|x| x.is_finite())
            && blocks.iter().all(|b| b.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(GraphError::NonFiniteFactor { id, name: f.name() });
        }
        Ok(LinearizedFactor {
            keys: f.keys().to_vec(),
            blocks,
            residual,
        })
    }

    /// Solves the whole graph starting from `initial`.
    pub fn optimize(
        &self,
        initial: &Values,
        config: &SolverConfig,
    ) -> Result<(Values, OptimizationReport), GraphError> {
        solver::optimize(self, initial, config)
    }

    /// Marginal covariance of one variable's tangent block at `values`.
    pub fn marginal_covariance(
        &self,
        values: &Values,
        key: &VariableKey,
    ) -> Result<DMatrix<f64>, GraphError> {
        let ordering = self.ordering();
        let (off, dim) = ordering
            .slot(key)
            .ok_or(GraphError::MissingVariable(*key))?;
        let lin = self.linearize(values)?;
        let ne = NormalEquations::assemble(&ordering, &lin);
        let chol = ne
            .hessian
            .cholesky()
            .map_err(|col| GraphError::SingularSystem(key_at(&ordering, col)))?;
        Ok(chol.inverse_block(off, dim))
    }
}

pub(crate) fn key_at(ordering: &Ordering, col: usize) -> VariableKey {
    *ordering
        .keys()
        .iter()
        .find(|k| {
            let (o, d) = ordering.slot(k).unwrap();
            col >= o && col < o + d
        })
        .expect("column inside ordering")
}
