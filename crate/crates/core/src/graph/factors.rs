//! Generic factors: priors, random-walk / between constraints and dense linear
//! factors.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::factor::{Factor, NoiseModel};
use super::values::{Value, VariableKey};
use super::GraphError;
use crate::geo::{right_jacobian_inv, Rotation3};

/// Prior `‖x ⊟ x̄‖²_Σ` on one variable.
#[derive(Clone, Debug)]
pub struct PriorFactor {
    keys: [VariableKey; 1],
    pub prior: Value,
    noise: NoiseModel,
}

impl PriorFactor {
    pub fn new(key: VariableKey, prior: Value, noise: NoiseModel) -> Result<Self, GraphError> {
        check_dim(key, prior.dim(), noise.dim())?;
        Ok(Self {
            keys: [key],
            prior,
            noise,
        })
    }
}

impl Factor for PriorFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    fn residual(&self, values: &[&Value]) -> DVector<f64> {
        values[0].local(&self.prior)
    }
    fn jacobians(&self, values: &[&Value]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.prior.dim();
        let mut j = DMatrix::identity(n, n);
        if let Value::Pose(_) = values[0] {
            let r = self.residual(values);
            let th = Vector3::new(r[0], r[1], r[2]);
            j.view_mut((0, 0), (3, 3))
                .copy_from(&right_jacobian_inv(&th));
        }
        Some(vec![j])
    }
    fn name(&self) -> &'static str {
        "prior"
    }
}

/// Random-walk / between constraint on two vector variables:
/// `r = x_j − x_i − z`.
#[derive(Clone, Debug)]
pub struct BetweenVectorFactor {
    keys: [VariableKey; 2],
    pub measured: DVector<f64>,
    noise: NoiseModel,
}

impl BetweenVectorFactor {
    pub fn new(
        from: VariableKey,
        to: VariableKey,
        measured: DVector<f64>,
        noise: NoiseModel,
    ) -> Result<Self, GraphError> {
        check_dim(to, measured.len(), noise.dim())?;
        Ok(Self {
            keys: [from, to],
            measured,
            noise,
        })
    }

    /// Discrete random walk `s_j − s_i ~ N(0, diag(q)·Δt)` where `q` are the
    /// continuous-time intensities (σ² per second).
    pub fn random_walk(
        from: VariableKey,
        to: VariableKey,
        sigmas_per_sqrt_s: &[f64],
        dt: f64,
    ) -> Result<Self, GraphError> {
        let s: Vec<f64> = sigmas_per_sqrt_s.iter().map(|s| s * dt.sqrt()).collect();
        Self::new(
            from,
            to,
            DVector::zeros(s.len()),
            NoiseModel::from_sigmas(&s)?,
        )
    }
}

impl Factor for BetweenVectorFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    fn residual(&self, values: &[&Value]) -> DVector<f64> {
        let (a, b) = (vec_of(values[0]), vec_of(values[1]));
        b - a - &self.measured
    }
    fn jacobians(&self, _values: &[&Value]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.measured.len();
        Some(vec![-DMatrix::identity(n, n), DMatrix::identity(n, n)])
    }
    fn name(&self) -> &'static str {
        "random_walk"
    }
}

/// Relative pose constraint `(x_iᵀ x_j) ⊟ z`, with the relative translation
/// expressed in frame `i`. Jacobians are numerical.
#[derive(Clone, Debug)]
pub struct PoseBetweenFactor {
    keys: [VariableKey; 2],
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
    noise: NoiseModel,
}

impl PoseBetweenFactor {
    pub fn new(
        from: VariableKey,
        to: VariableKey,
        rotation: Rotation3,
        translation: Vector3<f64>,
        noise: NoiseModel,
    ) -> Result<Self, GraphError> {
        check_dim(to, 6, noise.dim())?;
        Ok(Self {
            keys: [from, to],
            rotation,
            translation,
            noise,
        })
    }
}

impl Factor for PoseBetweenFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    fn residual(&self, values: &[&Value]) -> DVector<f64> {
        let a = values[0].as_pose().expect("pose");
        let b = values[1].as_pose().expect("pose");
        let rel = a.rotation.transpose().compose(&b.rotation);
        let th = rel.local(&self.rotation);
        let t: Vector3<f64> =
            a.rotation.matrix().transpose() * (b.translation - a.translation) - self.translation;
        DVector::from_column_slice(&[th.x, th.y, th.z, t.x, t.y, t.z])
    }
    fn name(&self) -> &'static str {
        "pose_between"
    }
}

/// Dense linear factor `r = Σ_k A_k x_k − b` on vector variables.
#[derive(Clone, Debug)]
pub struct LinearFactor {
    keys: Vec<VariableKey>,
    pub blocks: Vec<DMatrix<f64>>,
    pub rhs: DVector<f64>,
    noise: NoiseModel,
}

impl LinearFactor {
    pub fn new(
        keys: Vec<VariableKey>,
        blocks: Vec<DMatrix<f64>>,
        rhs: DVector<f64>,
        noise: NoiseModel,
    ) -> Result<Self, GraphError> {
        if keys.len() != blocks.len()
            || blocks.iter().any(|b| b.nrows() != rhs.len())
            || noise.dim() != rhs.len()
        {
            return Err(GraphError::InvalidNoise(
                "linear factor block sizes disagree",
            ));
        }
        Ok(Self {
            keys,
            blocks,
            rhs,
            noise,
        })
    }
}

impl Factor for LinearFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    fn residual(&self, values: &[&Value]) -> DVector<f64> {
        let mut r = -self.rhs.clone();
        for (a, v) in self.blocks.iter().zip(values) {
            r += a * vec_of(v);
        }
        r
    }
    fn jacobians(&self, _values: &[&Value]) -> Option<Vec<DMatrix<f64>>> {
        Some(self.blocks.clone())
    }
    fn name(&self) -> &'static str {
        "linear"
    }
}

pub(crate) fn vec_of(v: &Value) -> &DVector<f64> {
    v.as_vector()
        .expect("factor expects a vector-valued variable")
}

fn check_dim(key: VariableKey, value_dim: usize, noise_dim: usize) -> Result<(), GraphError> {
    if value_dim != noise_dim {
        return Err(GraphError::WrongDimension {
            key,
            dim: noise_dim,
        });
    }
    Ok(())
}

/// Copies a 3×3 block into `m` at `(r, c)`.
pub(crate) fn put3(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix3<f64>) {
    m.view_mut((r, c), (3, 3)).copy_from(b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::so3_exp;
    use crate::graph::factor::numerical_jacobians;
    use crate::graph::values::Pose3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-12)
    }

    #[test]
    fn prior_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let mut rv = || {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            };
            let prior = Value::Pose(Pose3::new(so3_exp(&(rv() * 2.0)), rv() * 100.0));
            let x = Value::Pose(Pose3::new(so3_exp(&(rv() * 1.0)), rv() * 100.0));
            let f = PriorFactor::new(
                VariableKey::pose(0),
                prior,
                NoiseModel::isotropic(6, 1.0).unwrap(),
            )
            .unwrap();
            let a = f.jacobians(&[&x]).unwrap();
            let n = numerical_jacobians(&f, &[&x]);
            assert!(rel_err(&a[0], &n[0]) < 1e-5, "{}", rel_err(&a[0], &n[0]));
        }
    }

    #[test]
    fn random_walk_jacobian_and_scaling() {
        let f = BetweenVectorFactor::random_walk(
            VariableKey::imu_bias(0),
            VariableKey::imu_bias(1),
            &[0.1; 6],
            4.0,
        )
        .unwrap();
        let a = Value::vector(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Value::vector(&[1.2, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = f.residual(&[&a, &b]);
        // σ = 0.1·√4 = 0.2 → (0.2/0.2)² = 1
        assert!((f.noise().cost(&r) - 1.0).abs() < 1e-12);
        let an = f.jacobians(&[&a, &b]).unwrap();
        let nu = numerical_jacobians(&f, &[&a, &b]);
        for (x, y) in an.iter().zip(&nu) {
            assert!(rel_err(x, y) < 1e-8);
        }
    }
}
