use nalgebra::DMatrix;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::factor::Factor;
use super::solver::{OptimizationReport, SolverConfig};
use super::values::{Values, VariableBlock, VariableKey};
use super::{FactorGraph, GraphError};

/// Result of one [`FixedLagSmoother::update`].
#[derive(Clone, Debug)]
pub struct SmootherUpdate {
    pub report: OptimizationReport,
    /// Wall time of insertion, optimization and marginalization.
    pub elapsed: Duration,
    /// Epochs marginalized out during this update, oldest first.
    pub marginalized: Vec<u32>,
    /// Some marginalization had to regularize a singular block.
    pub regularized: bool,
}

/// Keeps the states whose timestamps lie within `lag` seconds of the newest
/// one and summarizes everything older with marginal priors. A lag of
/// `f64::INFINITY` turns this into an incremental batch solver.
#[derive(Clone, Debug)]
pub struct FixedLagSmoother {
    graph: FactorGraph,
    lag: f64,
    solver: SolverConfig,
    stamps: BTreeMap<u32, f64>,
}

impl FixedLagSmoother {
    pub fn new(lag: f64, solver: SolverConfig) -> Result<Self, GraphError> {
        if !(lag >= 0.0) {
            return Err(GraphError::InvalidConfig("lag must be non-negative"));
        }
        solver.validate()?;
        Ok(Self {
            graph: FactorGraph::new(),
            lag,
            solver,
            stamps: BTreeMap::new(),
        })
    }

    pub fn lag(&self) -> f64 {
        self.lag
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn values(&self) -> &Values {
        self.graph.values()
    }

    pub fn newest_timestamp(&self) -> Option<f64> {
        self.stamps.values().next_back().copied()
    }

    /// Live epochs and their timestamps.
    pub fn epochs(&self) -> &BTreeMap<u32, f64> {
        &self.stamps
    }

    /// Inserts new variables (all stamped `timestamp`) and factors, solves,
    /// then marginalizes epochs older than `timestamp − lag`. On error the
    /// smoother is left unchanged.
    pub fn update(
        &mut self,
        timestamp: f64,
        variables: Vec<VariableBlock>,
        factors: Vec<Arc<dyn Factor>>,
    ) -> Result<SmootherUpdate, GraphError> {
        let start = Instant::now();
        if let Some(newest) = self.newest_timestamp() {
            if timestamp < newest {
                return Err(GraphError::NonCausalUpdate {
                    new: timestamp,
                    newest,
                });
            }
        }
        let mut graph = self.graph.clone();
        let mut stamps = self.stamps.clone();
        for b in variables {
            stamps.entry(b.key.epoch).or_insert(timestamp);
            graph.add_variable(b)?;
        }
        for f in factors {
            graph.add_shared_factor(f)?;
        }
        let (x, report) = graph.optimize(graph.values(), &self.solver)?;
        graph.update_values(&x);

        let cutoff = timestamp - self.lag;
        let old: Vec<u32> = stamps
            .iter()
            .filter(|(_, t)| **t < cutoff)
            .map(|(e, _)| *e)
            .collect();
        let mut regularized = false;
        for e in &old {
            let keys: BTreeSet<VariableKey> =
                graph.keys().filter(|k| k.epoch == *e).copied().collect();
            if !keys.is_empty() {
                let keys: Vec<VariableKey> = keys.into_iter().collect();
                regularized |= graph.marginalize(&keys)?.regularized;
            }
            stamps.remove(e);
        }
        self.graph = graph;
        self.stamps = stamps;
        Ok(SmootherUpdate {
            report,
            elapsed: start.elapsed(),
            marginalized: old,
            regularized,
        })
    }

    /// Marginal covariance of a live variable's tangent block.
    pub fn marginal_covariance(&self, key: &VariableKey) -> Result<DMatrix<f64>, GraphError> {
        self.graph.marginal_covariance(self.graph.values(), key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{BetweenVectorFactor, NoiseModel, PriorFactor, Value};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cb(e: u32) -> VariableKey {
        VariableKey::clock_bias(e)
    }

    /// Random linear-Gaussian chain: prior on x0, odometry between steps,
    /// and a noisy absolute measurement on every state.
    fn chain(rng: &mut ChaCha8Rng, n: u32) -> Vec<(Vec<VariableBlock>, Vec<Arc<dyn Factor>>)> {
        let mut out = Vec::new();
        for e in 0..n {
            let mut fs: Vec<Arc<dyn Factor>> = Vec::new();
            let init = Value::vector(&[rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
            let z = Value::vector(&[rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]);
            let s = rng.random_range(0.5..3.0);
            fs.push(Arc::new(
                PriorFactor::new(cb(e), z, NoiseModel::isotropic(2, s).unwrap()).unwrap(),
            ));
            if e > 0 {
                let d = DVector::from_column_slice(&[
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]);
                let s = rng.random_range(0.1..1.0);
                fs.push(Arc::new(
                    BetweenVectorFactor::new(
                        cb(e - 1),
                        cb(e),
                        d,
                        NoiseModel::from_sigmas(&[s, 2.0 * s]).unwrap(),
                    )
                    .unwrap(),
                ));
            }
            out.push((vec![VariableBlock::new(cb(e), init)], fs));
        }
        out
    }

    #[test]
    fn linear_chain_filtering_equals_batch() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 25;
            let steps = chain(&mut rng, n);
            let lag = 1.0 + (seed % 5) as f64;
            let mut windowed = FixedLagSmoother::new(lag, SolverConfig::gauss_newton()).unwrap();
            let mut batch =
                FixedLagSmoother::new(f64::INFINITY, SolverConfig::gauss_newton()).unwrap();
            for (e, (vars, fs)) in steps.into_iter().enumerate() {
                windowed.update(e as f64, vars.clone(), fs.clone()).unwrap();
                batch.update(e as f64, vars, fs).unwrap();
                let a = windowed.values().vector(&cb(e as u32)).unwrap();
                let b = batch.values().vector(&cb(e as u32)).unwrap();
                assert!(
                    (a - b).norm() < 1e-9 * (1.0 + b.norm()),
                    "seed {seed} epoch {e}"
                );
                let ca = windowed.marginal_covariance(&cb(e as u32)).unwrap();
                let cbat = batch.marginal_covariance(&cb(e as u32)).unwrap();
                assert!((ca - &cbat).norm() < 1e-9 * cbat.norm());
            }
            assert!(windowed.graph().num_variables() <= lag as usize + 2);
        }
    }

    #[test]
    fn window_size_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = FixedLagSmoother::new(5.0, SolverConfig::default()).unwrap();
        for (e, (vars, fs)) in chain(&mut rng, 400).into_iter().enumerate() {
            let up = s.update(e as f64, vars, fs).unwrap();
            assert!(up.report.final_cost <= up.report.initial_cost);
            assert!(s.graph().num_variables() <= 7);
            assert!(s.graph().num_factors() <= 14);
        }
        assert_eq!(s.epochs().len(), 6);
    }

    #[test]
    fn rejects_time_going_backwards_and_rolls_back() {
        let mut s = FixedLagSmoother::new(2.0, SolverConfig::default()).unwrap();
        let n = NoiseModel::isotropic(1, 1.0).unwrap();
        s.update(
            1.0,
            vec![VariableBlock::new(cb(0), Value::vector(&[0.0]))],
            vec![Arc::new(
                PriorFactor::new(cb(0), Value::vector(&[1.0]), n.clone()).unwrap(),
            )],
        )
        .unwrap();
        assert!(matches!(
            s.update(0.5, vec![], vec![]),
            Err(GraphError::NonCausalUpdate { .. })
        ));
        // factor on a missing key: nothing changes
        let bad = Arc::new(PriorFactor::new(cb(9), Value::vector(&[1.0]), n).unwrap());
        assert!(s
            .update(
                2.0,
                vec![VariableBlock::new(cb(1), Value::vector(&[0.0]))],
                vec![bad]
            )
            .is_err());
        assert_eq!(s.graph().num_variables(), 1);
        assert_eq!(s.newest_timestamp(), Some(1.0));
    }
}
