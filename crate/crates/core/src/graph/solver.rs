use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::linear::{NormalEquations, Ordering};
use super::values::Values;
use super::{key_at, FactorGraph, GraphError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    GaussNewton,
    LevenbergMarquardt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub max_iterations: usize,
    pub abs_cost_tol: f64,
    pub rel_cost_tol: f64,
    pub lm_initial_lambda: f64,
    pub lm_lambda_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::LevenbergMarquardt,
            max_iterations: 20,
            abs_cost_tol: 1e-10,
            rel_cost_tol: 1e-8,
            lm_initial_lambda: 1e-5,
            lm_lambda_factor: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn gauss_newton() -> Self {
        Self {
            method: SolverMethod::GaussNewton,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.max_iterations < 1 {
            return Err(GraphError::InvalidConfig(
                "max_iterations must be at least 1",
            ));
        }
        let positive = [self.abs_cost_tol, self.rel_cost_tol, self.lm_initial_lambda];
        if positive.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(GraphError::InvalidConfig(
                "tolerances and lambda must be positive",
            ));
        }
        if !(self.lm_lambda_factor > 1.0) {
            return Err(GraphError::InvalidConfig("lm_lambda_factor must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizationReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
}

const LM_MAX_LAMBDA: f64 = 1e12;
/// Floor applied to Hessian diagonal entries when scaling LM damping.
const LM_MIN_DIAGONAL: f64 = 1e-6;

pub(super) fn retract_all(values: &Values, ordering: &Ordering, delta: &DVector<f64>) -> Values {
    values
        .iter()
        .map(|(k, v)| match ordering.slot(k) {
            Some((off, dim)) => (*k, v.retract(&delta.as_slice()[off..off + dim])),
            None => (*k, v.clone()),
        })
        .collect()
}

pub(super) fn optimize(
    graph: &FactorGraph,
    initial: &Values,
    config: &SolverConfig,
) -> Result<(Values, OptimizationReport), GraphError> {
    config.validate()?;
    let mut x = Values::new();
    for k in graph.keys() {
        let v = initial.get(k).ok_or(GraphError::MissingValue(*k))?;
        x.insert(*k, v.clone());
    }
    let ordering = graph.ordering();
    let mut cost = graph.total_cost(&x)?;
    if !cost.is_finite() {
        return Err(GraphError::NonFiniteCost);
    }
    let mut report = OptimizationReport {
        initial_cost: cost,
        final_cost: cost,
        ..Default::default()
    };
    if ordering.dim() == 0 {
        report.converged = true;
        return Ok((x, report));
    }
    let mut lambda = config.lm_initial_lambda;

    for _ in 0..config.max_iterations {
        let lin = graph.linearize(&x)?;
        let ne = NormalEquations::assemble(&ordering, &lin);
        let rhs = -&ne.gradient;
        report.iterations += 1;

        let step = match config.method {
            SolverMethod::GaussNewton => {
                let chol = ne
                    .hessian
                    .cholesky()
                    .map_err(|col| GraphError::SingularSystem(key_at(&ordering, col)))?;
                let delta = chol.solve(&rhs);
                let cand = retract_all(&x, &ordering, &delta);
                let c = graph.total_cost(&cand)?;
                if !c.is_finite() {
                    return Err(GraphError::NonFiniteCost);
                }
                // An uphill Gauss–Newton step means we are at numerical
                // convergence (or GN is not appropriate); keep the old point.
                (c <= cost).then_some((cand, c))
            }
            SolverMethod::LevenbergMarquardt => {
                let mut accepted = None;
                while lambda <= LM_MAX_LAMBDA {
                    let mut h = ne.hessian.clone();
                    for i in 0..ordering.dim() {
                        let d = h.diag(i).max(LM_MIN_DIAGONAL);
                        h.add_diag(i, lambda * d);
                    }
                    let Ok(chol) = h.cholesky() else {
                        lambda *= config.lm_lambda_factor;
                        continue;
                    };
                    let delta = chol.solve(&rhs);
                    let cand = retract_all(&x, &ordering, &delta);
                    let c = graph.total_cost(&cand)?;
                    if c.is_finite() && c <= cost {
                        lambda = (lambda / config.lm_lambda_factor).max(1e-12);
                        accepted = Some((cand, c));
                        break;
                    }
                    lambda *= config.lm_lambda_factor;
                }
                accepted
            }
        };

        let Some((cand, new_cost)) = step else {
            report.converged = true;
            break;
        };
        let decrease = cost - new_cost;
        x = cand;
        cost = new_cost;
        if decrease <= config.abs_cost_tol
            || decrease <= config.rel_cost_tol * cost
            || cost <= config.abs_cost_tol
        {
            report.converged = true;
            break;
        }
    }
    report.final_cost = cost;
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        BetweenVectorFactor, NoiseModel, PriorFactor, Value, VariableBlock, VariableKey,
    };
    use nalgebra::DVector;

    fn cb(e: u32) -> VariableKey {
        VariableKey::clock_bias(e)
    }

    fn chain() -> FactorGraph {
        let mut g = FactorGraph::new();
        g.add_variable(VariableBlock::new(cb(0), Value::vector(&[0.3])))
            .unwrap();
        g.add_variable(VariableBlock::new(cb(1), Value::vector(&[-0.2])))
            .unwrap();
        let n = NoiseModel::isotropic(1, 1.0).unwrap();
        g.add_factor(PriorFactor::new(cb(0), Value::vector(&[0.0]), n.clone()).unwrap())
            .unwrap();
        g.add_factor(
            BetweenVectorFactor::new(cb(0), cb(1), DVector::from_element(1, 1.0), n).unwrap(),
        )
        .unwrap();
        g
    }

    #[test]
    fn linear_chain_one_gn_step() {
        let g = chain();
        let (x, rep) = g
            .optimize(g.values(), &SolverConfig::gauss_newton())
            .unwrap();
        assert!((x.vector(&cb(0)).unwrap()[0]).abs() < 1e-12);
        assert!((x.vector(&cb(1)).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!(rep.final_cost < 1e-20);
        assert!(rep.final_cost <= rep.initial_cost);
    }

    #[test]
    fn two_priors_meet_in_the_middle() {
        let mut g = FactorGraph::new();
        g.add_variable(VariableBlock::new(cb(0), Value::vector(&[5.0])))
            .unwrap();
        let n = NoiseModel::isotropic(1, 1.0).unwrap();
        g.add_factor(PriorFactor::new(cb(0), Value::vector(&[0.0]), n.clone()).unwrap())
            .unwrap();
        g.add_factor(PriorFactor::new(cb(0), Value::vector(&[2.0]), n).unwrap())
            .unwrap();
        for cfg in [SolverConfig::gauss_newton(), SolverConfig::default()] {
            let (x, rep) = g.optimize(g.values(), &cfg).unwrap();
            assert!((x.vector(&cb(0)).unwrap()[0] - 1.0).abs() < 1e-9);
            assert!((rep.final_cost - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gn_reports_singular_system() {
        let mut g = FactorGraph::new();
        g.add_variable(VariableBlock::new(cb(0), Value::vector(&[0.0])))
            .unwrap();
        g.add_variable(VariableBlock::new(cb(1), Value::vector(&[0.0])))
            .unwrap();
        let n = NoiseModel::isotropic(1, 1.0).unwrap();
        // only the difference is constrained: gauge freedom
        g.add_factor(
            BetweenVectorFactor::new(cb(0), cb(1), DVector::from_element(1, 1.0), n).unwrap(),
        )
        .unwrap();
        let err = g
            .optimize(g.values(), &SolverConfig::gauss_newton())
            .unwrap_err();
        assert!(matches!(err, GraphError::SingularSystem(_)));
        assert!(err.to_string().contains("Levenberg-Marquardt"));
        // LM damping still makes progress
        let (x, rep) = g.optimize(g.values(), &SolverConfig::default()).unwrap();
        assert!(rep.final_cost < 1e-6);
        let d = x.vector(&cb(1)).unwrap()[0] - x.vector(&cb(0)).unwrap()[0];
        assert!((d - 1.0).abs() < 1e-3);
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        c.max_iterations = 0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.rel_cost_tol = 0.0;
        assert!(c.validate().is_err());
    }
}
