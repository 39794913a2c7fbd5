//! Linearized systems and the envelope (profile) Cholesky used to solve the
//! Gauss–Newton normal equations.
//!
//! Variables are ordered by epoch, so the information matrix of a trajectory
//! is block-banded and the factor's fill stays inside the row envelope.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use super::values::VariableKey;

/// Column layout of the stacked tangent vector.
#[derive(Clone, Debug, Default)]
pub struct Ordering {
    offsets: BTreeMap<VariableKey, (usize, usize)>,
    keys: Vec<VariableKey>,
    dim: usize,
}

impl Ordering {
    pub fn new<'a>(dims: impl IntoIterator<Item = (&'a VariableKey, usize)>) -> Self {
        let mut o = Ordering::default();
        for (k, d) in dims {
            o.offsets.insert(*k, (o.dim, d));
            o.keys.push(*k);
            o.dim += d;
        }
        o
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn keys(&self) -> &[VariableKey] {
        &self.keys
    }

    /// `(offset, dim)` of a key.
    pub fn slot(&self, key: &VariableKey) -> Option<(usize, usize)> {
        self.offsets.get(key).copied()
    }
}

/// One factor's whitened (and robust-weighted) linearization.
#[derive(Clone, Debug)]
pub struct LinearizedFactor {
    pub keys: Vec<VariableKey>,
    /// `∂(W r)/∂δx_k` for each key
    pub blocks: Vec<DMatrix<f64>>,
    /// whitened residual `W r`
    pub residual: DVector<f64>,
}

/// Symmetric matrix stored by rows inside its lower envelope.
#[derive(Clone, Debug)]
pub struct EnvelopeMatrix {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeMatrix {
    /// Zero matrix whose row `i` spans columns `first[i]..=i`.
    pub fn zeros(first: Vec<usize>) -> Self {
        let rows = first
            .iter()
            .enumerate()
            .map(|(i, f)| vec![0.0; i + 1 - f])
            .collect();
        Self { first, rows }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Adds `v` to entry `(i, j)` of the lower triangle (`j ≤ i`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let f = self.first[i];
        debug_assert!(j >= f && j <= i, "entry ({i},{j}) outside envelope");
        self.rows[i][j - f] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let f = self.first[i];
        if j < f {
            0.0
        } else {
            self.rows[i][j - f]
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        *self.rows[i].last().unwrap()
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        *self.rows[i].last_mut().unwrap() += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// In-place profile Cholesky `A = L Lᵀ`. Fails with the offending column
    /// if a pivot is not safely positive.
    pub fn cholesky(mut self) -> Result<EnvelopeCholesky, usize> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let mut s = self.rows[i][j - fi];
                {
                    let ri = &self.rows[i][start - fi..j - fi];
                    let rj = &self.rows[j][start - fj..j - fj];
                    s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                }
                if j < i {
                    let djj = self.rows[j][j - fj];
                    self.rows[i][j - fi] = s / djj;
                } else {
                    let orig = self.rows[i][i - fi];
                    if !(s.is_finite() && s > 1e-13 * orig.abs() && s > 0.0) {
                        return Err(i);
                    }
                    self.rows[i][i - fi] = s.sqrt();
                }
            }
        }
        Ok(EnvelopeCholesky { l: self })
    }
}

/// Lower-triangular factor produced by [`EnvelopeMatrix::cholesky`].
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    l: EnvelopeMatrix,
}

impl EnvelopeCholesky {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.dim();
        let mut y = b.clone();
        for i in 0..n {
            let f = self.l.first[i];
            let row = &self.l.rows[i];
            let s: f64 = row[..i - f]
                .iter()
                .zip(y.as_slice()[f..i].iter())
                .map(|(a, b)| a * b)
                .sum();
            y[i] = (y[i] - s) / row[i - f];
        }
        for i in (0..n).rev() {
            let f = self.l.first[i];
            let row = &self.l.rows[i];
            y[i] /= row[i - f];
            let xi = y[i];
            for (k, lij) in row[..i - f].iter().enumerate() {
                y[f + k] -= lij * xi;
            }
        }
        y
    }

    /// Dense block `(A⁻¹)[range, range]`.
    pub fn inverse_block(&self, offset: usize, dim: usize) -> DMatrix<f64> {
        let n = self.l.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut e = DVector::zeros(n);
            e[offset + c] = 1.0;
            let x = self.solve(&e);
            for r in 0..dim {
                out[(r, c)] = x[offset + r];
            }
        }
        out
    }
}

/// Gauss–Newton normal equations `H δ = −g` with `H = JᵀJ`, `g = Jᵀr`.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    pub hessian: EnvelopeMatrix,
    pub gradient: DVector<f64>,
}

impl NormalEquations {
    pub fn assemble(ordering: &Ordering, factors: &[LinearizedFactor]) -> Self {
        let n = ordering.dim();
        let mut first: Vec<usize> = (0..n).collect();
        // diagonal blocks are dense
        for &(off, d) in ordering.offsets.values() {
            for r in off..off + d {
                first[r] = first[r].min(off);
            }
        }
        let slots: Vec<Vec<(usize, usize)>> = factors
            .iter()
            .map(|f| {
                f.keys
                    .iter()
                    .map(|k| ordering.slot(k).expect("key in ordering"))
                    .collect()
            })
            .collect();
        for s in &slots {
            let lo = s.iter().map(|x| x.0).min().unwrap_or(0);
            for &(off, d) in s {
                for r in off..off + d {
                    first[r] = first[r].min(lo);
                }
            }
        }
        let mut hessian = EnvelopeMatrix::zeros(first);
        let mut gradient = DVector::zeros(n);
        for (f, s) in factors.iter().zip(&slots) {
            for (a, &(oa, da)) in s.iter().enumerate() {
                let ja = &f.blocks[a];
                let ga = ja.tr_mul(&f.residual);
                for r in 0..da {
                    gradient[oa + r] += ga[r];
                }
                for (b, &(ob, db)) in s.iter().enumerate() {
                    if ob > oa {
                        continue;
                    }
                    let hab = ja.tr_mul(&f.blocks[b]);
                    for r in 0..da {
                        for c in 0..db {
                            let (i, j) = (oa + r, ob + c);
                            if j <= i {
                                hessian.add(i, j, hab[(r, c)]);
                            }
                        }
                    }
                }
            }
        }
        Self { hessian, gradient }
    }
}
