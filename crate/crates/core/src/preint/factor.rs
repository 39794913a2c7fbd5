use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{ImuBias, ImuNoiseParams, PreintError, PreintegratedDelta, Vector9};
use crate::geo::{right_jacobian, right_jacobian_inv, skew, so3_exp};
use crate::graph::{
    put3, BetweenVectorFactor, Factor, GraphError, NoiseModel, Pose3, Value, VariableKey,
};

/// Tolerance between the state interval and the preintegrated interval.
const INTERVAL_TOL: f64 = 1e-6;

/// Preintegrated residual `(r_θ, r_v, r_p)` between two navigation states.
pub fn imu_residual(
    delta: &PreintegratedDelta,
    pose_i: &Pose3,
    vel_i: &Vector3<f64>,
    pose_j: &Pose3,
    vel_j: &Vector3<f64>,
    bias_i: &ImuBias,
    gravity: &Vector3<f64>,
) -> Vector9 {
    let (dr, dv, dp) = delta.bias_corrected(bias_i);
    let dt = delta.delta_t;
    let rit = pose_i.rotation.matrix().transpose();
    let rel = pose_i.rotation.transpose().compose(&pose_j.rotation);
    let r_th = rel.local(&dr);
    let r_v = rit * (vel_j - vel_i - gravity * dt) - dv;
    let r_p = rit
        * (pose_j.translation - pose_i.translation - vel_i * dt - gravity * (0.5 * dt * dt))
        - dp;
    let mut out = Vector9::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&r_th);
    out.fixed_rows_mut::<3>(3).copy_from(&r_v);
    out.fixed_rows_mut::<3>(6).copy_from(&r_p);
    out
}

/// IMU factor on `[pose_i, vel_i, pose_j, vel_j, bias_i]`, weighted by the
/// preintegration covariance.
#[derive(Clone, Debug)]
pub struct ImuFactor {
    keys: [VariableKey; 5],
    pub delta: PreintegratedDelta,
    pub gravity: Vector3<f64>,
    noise: NoiseModel,
}

impl ImuFactor {
    /// `state_interval` is `t_j − t_i` of the connected states.
    pub fn new(
        epoch_i: u32,
        epoch_j: u32,
        delta: PreintegratedDelta,
        gravity: Vector3<f64>,
        state_interval: f64,
    ) -> Result<Self, PreintError> {
        if (state_interval - delta.delta_t).abs() > INTERVAL_TOL {
            return Err(PreintError::IntervalMismatch {
                states: state_interval,
                delta: delta.delta_t,
            });
        }
        let cov = DMatrix::from_column_slice(9, 9, delta.covariance.as_slice());
        let noise = NoiseModel::from_covariance(&cov)
            .map_err(|_| PreintError::InvalidNoise("covariance"))?;
        Ok(Self {
            keys: [
                VariableKey::pose(epoch_i),
                VariableKey::velocity(epoch_i),
                VariableKey::pose(epoch_j),
                VariableKey::velocity(epoch_j),
                VariableKey::imu_bias(epoch_i),
            ],
            delta,
            gravity,
            noise,
        })
    }
}

fn unpack<'a>(values: &[&'a Value]) -> (&'a Pose3, Vector3<f64>, &'a Pose3, Vector3<f64>, ImuBias) {
    let v3 = |v: &Value| {
        let x = v.as_vector().expect("velocity");
        Vector3::new(x[0], x[1], x[2])
    };
    (
        values[0].as_pose().expect("pose"),
        v3(values[1]),
        values[2].as_pose().expect("pose"),
        v3(values[3]),
        ImuBias::from_slice(values[4].as_vector().expect("bias").as_slice()),
    )
}

impl Factor for ImuFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    fn residual(&self, values: &[&Value]) -> DVector<f64> {
        let (pi, vi, pj, vj, b) = unpack(values);
        let r = imu_residual(&self.delta, pi, &vi, pj, &vj, &b, &self.gravity);
        DVector::from_column_slice(r.as_slice())
    }
    fn jacobians(&self, values: &[&Value]) -> Option<Vec<DMatrix<f64>>> {
        let (pi, vi, pj, vj, b) = unpack(values);
        let r = imu_residual(&self.delta, pi, &vi, pj, &vj, &b, &self.gravity);
        let dt = self.delta.delta_t;
        let r_th: Vector3<f64> = r.fixed_rows::<3>(0).into();
        let jr_inv = right_jacobian_inv(&r_th);
        let ri = pi.rotation.matrix();
        let rj = pj.rotation.matrix();
        let rit = ri.transpose();
        let dv_nav = vj - vi - self.gravity * dt;
        let dp_nav = pj.translation - pi.translation - vi * dt - self.gravity * (0.5 * dt * dt);

        let mut j_pi = DMatrix::zeros(9, 6);
        put3(&mut j_pi, 0, 0, &(-jr_inv * rj.transpose() * ri));
        put3(&mut j_pi, 3, 0, &skew(&(rit * dv_nav)));
        put3(&mut j_pi, 6, 0, &skew(&(rit * dp_nav)));
        put3(&mut j_pi, 6, 3, &(-rit));

        let mut j_vi = DMatrix::zeros(9, 3);
        put3(&mut j_vi, 3, 0, &(-rit));
        put3(&mut j_vi, 6, 0, &(-rit * dt));

        let mut j_pj = DMatrix::zeros(9, 6);
        put3(&mut j_pj, 0, 0, &jr_inv);
        put3(&mut j_pj, 6, 3, &rit);

        let mut j_vj = DMatrix::zeros(9, 3);
        put3(&mut j_vj, 3, 0, &rit);

        let bj = &self.delta.bias_jacobians;
        let db = b.to_vector() - self.delta.bias_lin_point.to_vector();
        let jrg: Matrix3<f64> = bj.fixed_view::<3, 3>(0, 3).into();
        let corr: Vector3<f64> = jrg * db.fixed_rows::<3>(3);
        let th_b = -jr_inv * so3_exp(&r_th).matrix().transpose() * right_jacobian(&corr) * jrg;
        let mut j_b = DMatrix::zeros(9, 6);
        put3(&mut j_b, 0, 3, &th_b);
        for (row, col) in [(3, 0), (3, 3), (6, 0), (6, 3)] {
            let blk: Matrix3<f64> = bj.fixed_view::<3, 3>(row, col).into();
            put3(&mut j_b, row, col, &(-blk));
        }
        Some(vec![j_pi, j_vi, j_pj, j_vj, j_b])
    }
    fn name(&self) -> &'static str {
        "imu"
    }
}

/// Random walk on the IMU bias block between two epochs.
pub fn bias_random_walk_factor(
    epoch_i: u32,
    epoch_j: u32,
    noise: &ImuNoiseParams,
    dt: f64,
) -> Result<BetweenVectorFactor, GraphError> {
    let a = noise.accel_bias_rw;
    let g = noise.gyro_bias_rw;
    BetweenVectorFactor::random_walk(
        VariableKey::imu_bias(epoch_i),
        VariableKey::imu_bias(epoch_j),
        &[a, a, a, g, g, g],
        dt,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Rotation3;
    use crate::graph::numerical_jacobians;
    use crate::preint::ImuSample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rv(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-s..s),
            rng.random_range(-s..s),
            rng.random_range(-s..s),
        )
    }

    fn delta(rng: &mut ChaCha8Rng, bias: ImuBias) -> PreintegratedDelta {
        let mut d = PreintegratedDelta::new(bias);
        let n = ImuNoiseParams::default();
        for k in 0..100 {
            let s = ImuSample::new(
                k as f64 * 0.01,
                rv(rng, 2.0) + Vector3::new(0.0, 0.0, -9.8),
                rv(rng, 0.3),
            );
            d.integrate_sample(&s, 0.01, &n).unwrap();
        }
        d
    }

    #[test]
    fn exact_states_give_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bias = ImuBias::new(rv(&mut rng, 0.05), rv(&mut rng, 0.01));
        let d = delta(&mut rng, bias);
        let g = Vector3::new(0.0, 0.0, 9.80665);
        let pi = Pose3::new(so3_exp(&rv(&mut rng, 2.0)), rv(&mut rng, 100.0));
        let vi = rv(&mut rng, 10.0);
        let (rj, vj, pj) = d.predict(&pi.rotation, &vi, &pi.translation, &bias, &g);
        let r = imu_residual(&d, &pi, &vi, &Pose3::new(rj, pj), &vj, &bias, &g);
        assert!(r.norm() < 1e-8);
        // a position perturbation of p_j moves r_p by R_iᵀ ε
        let eps = Vector3::new(0.01, 0.0, 0.0);
        let r2 = imu_residual(&d, &pi, &vi, &Pose3::new(rj, pj + eps), &vj, &bias, &g);
        let expect = pi.rotation.matrix().transpose() * eps;
        assert!((r2.fixed_rows::<3>(6) - expect).norm() < 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Vector3::new(0.0, 0.0, 9.80665);
        for _ in 0..100 {
            let lin = ImuBias::new(rv(&mut rng, 0.05), rv(&mut rng, 0.01));
            let d = delta(&mut rng, lin);
            let f = ImuFactor::new(0, 1, d, g, 1.0).unwrap();
            let vals = [
                Value::Pose(Pose3::new(so3_exp(&rv(&mut rng, 3.0)), rv(&mut rng, 100.0))),
                Value::vector(rv(&mut rng, 10.0).as_slice()),
                Value::Pose(Pose3::new(so3_exp(&rv(&mut rng, 3.0)), rv(&mut rng, 100.0))),
                Value::vector(rv(&mut rng, 10.0).as_slice()),
                Value::vector(&[
                    lin.accel.x + 0.01,
                    lin.accel.y - 0.02,
                    lin.accel.z,
                    lin.gyro.x + 1e-3,
                    lin.gyro.y,
                    lin.gyro.z - 2e-3,
                ]),
            ];
            let refs: Vec<&Value> = vals.iter().collect();
            let an = f.jacobians(&refs).unwrap();
            let nu = numerical_jacobians(&f, &refs);
            for (k, (a, n)) in an.iter().zip(&nu).enumerate() {
                let err = (a - n).norm() / n.norm().max(1e-9);
                assert!(err < 1e-5, "block {k}: {err}");
            }
        }
    }

    #[test]
    fn interval_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = delta(&mut rng, ImuBias::default());
        assert!(matches!(
            ImuFactor::new(0, 1, d, Vector3::zeros(), 1.1),
            Err(PreintError::IntervalMismatch { .. })
        ));
    }

    #[test]
    fn bias_walk_scales_with_interval() {
        let n = ImuNoiseParams::default();
        let f = bias_random_walk_factor(0, 1, &n, 4.0).unwrap();
        let a = Value::vector(&[0.0; 6]);
        let b = Value::vector(&[n.accel_bias_rw * 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((f.noise().cost(&f.residual(&[&a, &b])) - 1.0).abs() < 1e-12);
        let _ = Rotation3::identity();
    }
}
