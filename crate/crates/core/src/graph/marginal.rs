//! Schur-complement marginalization and the dense Gaussian prior it leaves
//! behind on the separator variables.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use std::collections::BTreeSet;
use std::sync::Arc;

use super::factor::{Factor, NoiseModel};
use super::linear::Ordering;
use super::values::{Value, VariableKey};
use super::{FactorGraph, FactorId, GraphError};
use crate::geo::right_jacobian_inv;

/// Eigenvalues below this fraction of the largest are treated as null
/// directions of the marginal information.
const RANK_TOL: f64 = 1e-13;
/// Tikhonov term added when the eliminated block is singular.
const REGULARIZATION: f64 = 1e-12;

/// Quadratic cost `δᵀHδ + 2gᵀδ` (up to a constant) on `δ = x ⊟ x̄`, stored as
/// a whitened factor `r = √Λ Vᵀ δ + Λ^{-1/2} Vᵀ g` with `H = V Λ Vᵀ`.
#[derive(Clone, Debug)]
pub struct MarginalPrior {
    keys: Vec<VariableKey>,
    linearization_point: Vec<Value>,
    pub information: DMatrix<f64>,
    pub information_vector: DVector<f64>,
    /// True when the eliminated block needed regularization.
    pub regularized: bool,
    sqrt: DMatrix<f64>,
    offset: DVector<f64>,
    noise: NoiseModel,
}

impl MarginalPrior {
    pub fn new(
        keys: Vec<VariableKey>,
        linearization_point: Vec<Value>,
        information: DMatrix<f64>,
        information_vector: DVector<f64>,
    ) -> Self {
        let h = (&information + information.transpose()) * 0.5;
        if h.nrows() == 0 {
            return Self {
                keys,
                linearization_point,
                information: h,
                information_vector,
                regularized: false,
                sqrt: DMatrix::zeros(0, 0),
                offset: DVector::zeros(0),
                noise: NoiseModel::from_sqrt_information(DMatrix::zeros(0, 0)),
            };
        }
        let eig = SymmetricEigen::new(h.clone());
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let kept: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > RANK_TOL * lmax && eig.eigenvalues[i] > 0.0)
            .collect();
        let n = h.nrows();
        let mut sqrt = DMatrix::zeros(kept.len(), n);
        let mut offset = DVector::zeros(kept.len());
        for (row, &i) in kept.iter().enumerate() {
            let l = eig.eigenvalues[i];
            let v = eig.eigenvectors.column(i);
            sqrt.row_mut(row).copy_from(&(v.transpose() * l.sqrt()));
            offset[row] = v.dot(&information_vector) / l.sqrt();
        }
        Self {
            keys,
            linearization_point,
            information: h,
            information_vector,
            regularized: false,
            sqrt,
            offset,
            noise: NoiseModel::from_sqrt_information(DMatrix::identity(kept.len(), kept.len())),
        }
    }

    pub fn rank(&self) -> usize {
        self.sqrt.nrows()
    }

    pub fn linearization_point(&self) -> &[Value] {
        &self.linearization_point
    }

    fn delta(&self, values: &[&Value]) -> DVector<f64> {
        let parts: Vec<DVector<f64>> = values
            .iter()
            .zip(&self.linearization_point)
            .map(|(v, lin)| v.local(lin))
            .collect();
        let n = parts.iter().map(|p| p.len()).sum();
        let mut out = DVector::zeros(n);
        let mut off = 0;
        for p in parts {
            out.rows_mut(off, p.len()).copy_from(&p);
            off += p.len();
        }
        out
    }
}

impl Factor for MarginalPrior {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    fn residual(&self, values: &[&Value]) -> DVector<f64> {
        &self.sqrt * self.delta(values) + &self.offset
    }
    fn jacobians(&self, values: &[&Value]) -> Option<Vec<DMatrix<f64>>> {
        let mut off = 0;
        let mut out = Vec::with_capacity(values.len());
        for (v, lin) in values.iter().zip(&self.linearization_point) {
            let d = v.dim();
            let mut j = self.sqrt.columns(off, d).into_owned();
            if let (Value::Pose(p), Value::Pose(q)) = (v, lin) {
                let th: Vector3<f64> = p.rotation.local(&q.rotation);
                let jr = right_jacobian_inv(&th);
                let rot = j.columns(0, 3) * jr;
                j.columns_mut(0, 3).copy_from(&rot);
            }
            out.push(j);
            off += d;
        }
        Some(out)
    }
    fn name(&self) -> &'static str {
        "marginal_prior"
    }
}

impl FactorGraph {
    /// Eliminates `keys` by Schur complement at the graph's current values.
    ///
    /// Every factor touching a removed key is replaced by a single
    /// [`MarginalPrior`] on the remaining (separator) variables, which is
    /// added to the graph and also returned. With an empty separator the
    /// variables are simply dropped and the returned prior has no keys.
    pub fn marginalize(&mut self, keys: &[VariableKey]) -> Result<MarginalPrior, GraphError> {
        let removed: BTreeSet<VariableKey> = keys.iter().copied().collect();
        for k in &removed {
            if !self.contains(k) {
                return Err(GraphError::MissingVariable(*k));
            }
        }
        let touching: Vec<FactorId> = self
            .factors()
            .filter(|(_, f)| f.keys().iter().any(|k| removed.contains(k)))
            .map(|(id, _)| id)
            .collect();
        let separator: BTreeSet<VariableKey> = touching
            .iter()
            .flat_map(|id| self.factors[id].keys().to_vec())
            .filter(|k| !removed.contains(k))
            .collect();

        let vals = self.values();
        let layout: Vec<(&VariableKey, usize)> = removed
            .iter()
            .chain(separator.iter())
            .map(|k| (k, vals.get(k).expect("graph variable").dim()))
            .collect();
        let ordering = Ordering::new(layout);
        let nr: usize = removed.iter().map(|k| ordering.slot(k).unwrap().1).sum();
        let n = ordering.dim();

        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for id in &touching {
            let f = &self.factors[id];
            let lf = self.linearize_one(*id, f.as_ref(), vals)?;
            for (a, ka) in lf.keys.iter().enumerate() {
                let (oa, da) = ordering.slot(ka).unwrap();
                let ja = &lf.blocks[a];
                let mut gv = g.rows_mut(oa, da);
                gv += ja.tr_mul(&lf.residual);
                for (b, kb) in lf.keys.iter().enumerate() {
                    let (ob, db) = ordering.slot(kb).unwrap();
                    let mut hv = h.view_mut((oa, ob), (da, db));
                    hv += ja.tr_mul(&lf.blocks[b]);
                }
            }
        }

        let ns = n - nr;
        let sep_keys: Vec<VariableKey> = separator.iter().copied().collect();
        let lin_point: Vec<Value> = sep_keys
            .iter()
            .map(|k| vals.get(k).unwrap().clone())
            .collect();

        let mut regularized = false;
        let prior = if ns == 0 {
            MarginalPrior::new(vec![], vec![], DMatrix::zeros(0, 0), DVector::zeros(0))
        } else {
            let hrr = h.view((0, 0), (nr, nr)).into_owned();
            let hrs = h.view((0, nr), (nr, ns)).into_owned();
            let hss = h.view((nr, nr), (ns, ns)).into_owned();
            let gr = g.rows(0, nr).into_owned();
            let gs = g.rows(nr, ns).into_owned();
            let chol = match hrr.clone().cholesky() {
                Some(c) => c,
                None => {
                    regularized = true;
                    log::warn!("marginalized block is singular; regularizing");
                    let reg = hrr + DMatrix::identity(nr, nr) * REGULARIZATION;
                    match reg.clone().cholesky() {
                        Some(c) => c,
                        None => {
                            let scale = reg.diagonal().amax().max(1.0);
                            (reg + DMatrix::identity(nr, nr) * (REGULARIZATION * scale))
                                .cholesky()
                                .ok_or(GraphError::SingularSystem(
                                    *removed.iter().next().unwrap(),
                                ))?
                        }
                    }
                }
            };
            let x = chol.solve(&hrs);
            let y = chol.solve(&gr);
            let hm = hss - hrs.transpose() * x;
            let gm = gs - hrs.transpose() * y;
            let mut p = MarginalPrior::new(sep_keys, lin_point, hm, gm);
            p.regularized = regularized;
            p
        };

        for id in &touching {
            self.remove_factor(*id);
        }
        for k in &removed {
            self.values.remove(k);
        }
        if prior.rank() > 0 {
            self.add_shared_factor(Arc::new(prior.clone()))?;
        }
        Ok(prior)
    }
}
