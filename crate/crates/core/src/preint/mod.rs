//! IMU preintegration between GNSS epochs: delta accumulation on SO(3) with
//! inputs held over each sample, discrete noise propagation and first-order
//! bias correction.

mod factor;

pub use factor::{bias_random_walk_factor, imu_residual, ImuFactor};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{right_jacobian, skew, so3_exp, Rotation3};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Matrix9x6 = SMatrix<f64, 9, 6>;
pub type Vector9 = SVector<f64, 9>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreintError {
    #[error("sample interval must be positive and finite, got {0}")]
    InvalidInterval(f64),
    #[error("IMU sample at t={0} is not finite")]
    NonFiniteSample(f64),
    #[error("IMU sample at t={t} is not after the previous one at t={prev}")]
    OutOfOrder { t: f64, prev: f64 },
    #[error("IMU noise parameter {0} must be finite and positive")]
    InvalidNoise(&'static str),
    #[error("state interval {states} s does not match the preintegrated interval {delta} s")]
    IntervalMismatch { states: f64, delta: f64 },
}

/// One body-frame IMU measurement. The value is taken to hold over the
/// interval that ends at `timestamp`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub timestamp: f64,
    pub specific_force: Vector3<f64>,
    pub angular_rate: Vector3<f64>,
}

impl ImuSample {
    pub fn new(timestamp: f64, specific_force: Vector3<f64>, angular_rate: Vector3<f64>) -> Self {
        Self {
            timestamp,
            specific_force,
            angular_rate,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.timestamp.is_finite()
            && self.specific_force.iter().all(|x| x.is_finite())
            && self.angular_rate.iter().all(|x| x.is_finite())
    }
}

/// Continuous-time IMU noise description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuNoiseParams {
    /// m/s²/√Hz
    pub accel_noise_density: f64,
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// m/s²·√Hz (bias random-walk intensity)
    pub accel_bias_rw: f64,
    /// rad/s·√Hz
    pub gyro_bias_rw: f64,
    /// position discretization noise, m/√s
    pub integration_sigma: f64,
}

impl Default for ImuNoiseParams {
    /// Consumer MEMS grade.
    fn default() -> Self {
        Self {
            accel_noise_density: 1.0e-3,
            gyro_noise_density: 2.0e-4,
            accel_bias_rw: 1.0e-4,
            gyro_bias_rw: 1.0e-5,
            integration_sigma: 1.0e-4,
        }
    }
}

impl ImuNoiseParams {
    pub fn validate(&self) -> Result<(), PreintError> {
        let fields = [
            ("accel_noise_density", self.accel_noise_density),
            ("gyro_noise_density", self.gyro_noise_density),
            ("accel_bias_rw", self.accel_bias_rw),
            ("gyro_bias_rw", self.gyro_bias_rw),
            ("integration_sigma", self.integration_sigma),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(PreintError::InvalidNoise(name));
            }
        }
        Ok(())
    }
}

/// Accelerometer and gyroscope biases; tangent order `(b_a, b_g)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ImuBias {
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

impl ImuBias {
    pub fn new(accel: Vector3<f64>, gyro: Vector3<f64>) -> Self {
        Self { accel, gyro }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            accel: Vector3::new(v[0], v[1], v[2]),
            gyro: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.accel.x,
            self.accel.y,
            self.accel.z,
            self.gyro.x,
            self.gyro.y,
            self.gyro.z,
        )
    }
}

/// Bias correction size above which the first-order model is questionable.
const BIAS_CORRECTION_WARN: f64 = 0.1;

/// Relative motion accumulated from IMU samples, expressed in the body frame
/// of the first sample and independent of gravity and the initial state.
/// `(1/dt²) ∫₀^dt ∫₀^s Exp(φ u/dt) du ds` for `φ = ω dt`.
fn rotation_integral_2(phi: &Vector3<f64>) -> Matrix3<f64> {
    let t2 = phi.norm_squared();
    let k = skew(phi);
    let (c1, c2) = if t2 < 1e-4 {
        (
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
            1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0,
        )
    } else {
        let t = t2.sqrt();
        (
            (t - t.sin()) / (t2 * t),
            (0.5 * t2 + t.cos() - 1.0) / (t2 * t2),
        )
    };
    Matrix3::identity() * 0.5 + k * c1 + k * k * c2
}

/// Derivatives with respect to `φ` of `∫₀¹ Exp(φs) a ds` and
/// `∫₀¹ (1−s) Exp(φs) a ds`, by 4-point Gauss-Legendre quadrature.
fn rotation_integral_derivatives(
    phi: &Vector3<f64>,
    a: &Vector3<f64>,
) -> (Matrix3<f64>, Matrix3<f64>) {
    const NODES: [(f64, f64); 4] = [
        (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
        (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
        (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
        (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
    ];
    let ax = skew(a);
    let mut d1 = Matrix3::zeros();
    let mut d2 = Matrix3::zeros();
    for (s, wt) in NODES {
        let m = so3_exp(&(phi * s)).matrix() * ax * right_jacobian(&(phi * s)) * (-s * wt);
        d1 += m;
        d2 += m * (1.0 - s);
    }
    (d1, d2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreintegratedDelta {
    pub delta_r: Rotation3,
    pub delta_v: Vector3<f64>,
    pub delta_p: Vector3<f64>,
    pub delta_t: f64,
    /// Covariance of `(δθ, δv, δp)`.
    pub covariance: Matrix9,
    /// `∂(θ, v, p)/∂(b_a, b_g)`.
    pub bias_jacobians: Matrix9x6,
    pub bias_lin_point: ImuBias,
}

impl PreintegratedDelta {
    pub fn new(bias_lin_point: ImuBias) -> Self {
        Self {
            delta_r: Rotation3::identity(),
            delta_v: Vector3::zeros(),
            delta_p: Vector3::zeros(),
            delta_t: 0.0,
            covariance: Matrix9::zeros(),
            bias_jacobians: Matrix9x6::zeros(),
            bias_lin_point,
        }
    }

    /// Integrates one sample held constant over `dt`.
    pub fn integrate_sample(
        &mut self,
        sample: &ImuSample,
        dt: f64,
        noise: &ImuNoiseParams,
    ) -> Result<(), PreintError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(PreintError::InvalidInterval(dt));
        }
        if !sample.is_finite() {
            return Err(PreintError::NonFiniteSample(sample.timestamp));
        }
        let a = sample.specific_force - self.bias_lin_point.accel;
        let w = sample.angular_rate - self.bias_lin_point.gyro;

        let phi = w * dt;
        let full = so3_exp(&phi);
        let r = *self.delta_r.matrix();
        let jr_full = right_jacobian(&phi);
        // velocity and position increments are R·g1·dt and R·g2·dt²
        let (g1, g2) = (jr_full.transpose() * a, rotation_integral_2(&phi) * a);
        let (d1, d2) = rotation_integral_derivatives(&phi, &a);
        let dt2 = dt * dt;

        // state transition of (θ, v, p)
        let mut at = Matrix9::identity();
        at.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&full.matrix().transpose());
        at.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(-r * skew(&g1) * dt));
        at.fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(-r * skew(&g2) * dt2));
        at.fixed_view_mut::<3, 3>(6, 3)
            .copy_from(&(Matrix3::identity() * dt));

        // measurement noise input (n_g, n_a)
        let mut b = SMatrix::<f64, 9, 6>::zeros();
        b.fixed_view_mut::<3, 3>(0, 0).copy_from(&(jr_full * dt));
        b.fixed_view_mut::<3, 3>(3, 0).copy_from(&(r * d1 * dt2));
        b.fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(r * d2 * (dt2 * dt)));
        b.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(r * jr_full.transpose() * dt));
        b.fixed_view_mut::<3, 3>(6, 3)
            .copy_from(&(r * rotation_integral_2(&phi) * dt2));

        let qg = noise.gyro_noise_density.powi(2) / dt;
        let qa = noise.accel_noise_density.powi(2) / dt;
        let q = SMatrix::<f64, 6, 6>::from_diagonal(&Vector6::new(qg, qg, qg, qa, qa, qa));
        let mut cov = at * self.covariance * at.transpose() + b * q * b.transpose();
        let qi = noise.integration_sigma.powi(2) * dt;
        for i in 6..9 {
            cov[(i, i)] += qi;
        }
        self.covariance = (cov + cov.transpose()) * 0.5;

        // bias Jacobians
        let j = &mut self.bias_jacobians;
        let jr_g: Matrix3<f64> = j.fixed_view::<3, 3>(0, 3).into();
        let jv_a: Matrix3<f64> = j.fixed_view::<3, 3>(3, 0).into();
        let jv_g: Matrix3<f64> = j.fixed_view::<3, 3>(3, 3).into();
        let jp_a: Matrix3<f64> = j.fixed_view::<3, 3>(6, 0).into();
        let jp_g: Matrix3<f64> = j.fixed_view::<3, 3>(6, 3).into();
        let dva = -r * jr_full.transpose();
        let dpa = -r * rotation_integral_2(&phi);
        let dvg = -r * (skew(&g1) * jr_g + d1 * dt);
        let dpg = -r * (skew(&g2) * jr_g + d2 * dt);
        j.fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(jp_a + jv_a * dt + dpa * dt2));
        j.fixed_view_mut::<3, 3>(6, 3)
            .copy_from(&(jp_g + jv_g * dt + dpg * dt2));
        j.fixed_view_mut::<3, 3>(3, 0).copy_from(&(jv_a + dva * dt));
        j.fixed_view_mut::<3, 3>(3, 3).copy_from(&(jv_g + dvg * dt));
        j.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(full.matrix().transpose() * jr_g - jr_full * dt));

        // deltas
        self.delta_p += self.delta_v * dt + r * g2 * dt2;
        self.delta_v += r * g1 * dt;
        self.delta_r = self.delta_r.compose(&full);
        self.delta_t += dt;
        Ok(())
    }

    /// First-order re-linearization of the deltas to another bias.
    pub fn bias_corrected(&self, bias: &ImuBias) -> (Rotation3, Vector3<f64>, Vector3<f64>) {
        let db = bias.to_vector() - self.bias_lin_point.to_vector();
        if db.norm() > BIAS_CORRECTION_WARN {
            log::warn!(
                "bias correction of {:.3} exceeds first-order validity",
                db.norm()
            );
        }
        let d = self.bias_jacobians * db;
        let rot = self.delta_r.compose(&so3_exp(&d.fixed_rows::<3>(0).into()));
        let v = self.delta_v + d.fixed_rows::<3>(3);
        let p = self.delta_p + d.fixed_rows::<3>(6);
        (rot, v, p)
    }

    /// Applies the delta to a navigation state `(R, v, p)` under constant
    /// gravity `g`.
    pub fn predict(
        &self,
        rotation: &Rotation3,
        velocity: &Vector3<f64>,
        position: &Vector3<f64>,
        bias: &ImuBias,
        gravity: &Vector3<f64>,
    ) -> (Rotation3, Vector3<f64>, Vector3<f64>) {
        let (dr, dv, dp) = self.bias_corrected(bias);
        let dt = self.delta_t;
        let r = rotation.matrix();
        let rj = rotation.compose(&dr);
        let vj = velocity + gravity * dt + r * dv;
        let pj = position + velocity * dt + gravity * (0.5 * dt * dt) + r * dp;
        (rj, vj, pj)
    }
}

/// Streams samples into per-epoch deltas. A sample stamped `t_k` covers
/// `(t_{k-1}, t_k]`; when an epoch falls inside that interval the most recent
/// sample is held up to the epoch and the next sample covers the remainder.
#[derive(Clone, Debug)]
pub struct Preintegrator {
    noise: ImuNoiseParams,
    delta: PreintegratedDelta,
    /// end of the already-integrated span
    cursor: f64,
    last: Option<ImuSample>,
}

impl Preintegrator {
    pub fn new(noise: ImuNoiseParams, start: f64, bias: ImuBias) -> Result<Self, PreintError> {
        noise.validate()?;
        Ok(Self {
            noise,
            delta: PreintegratedDelta::new(bias),
            cursor: start,
            last: None,
        })
    }

    pub fn cursor(&self) -> f64 {
        self.cursor
    }

    pub fn delta(&self) -> &PreintegratedDelta {
        &self.delta
    }

    pub fn last_sample(&self) -> Option<&ImuSample> {
        self.last.as_ref()
    }

    /// Seeds the sample used to bridge a gap before the first pushed sample.
    pub fn set_last_sample(&mut self, s: ImuSample) {
        self.last = Some(s);
    }

    pub fn push(&mut self, s: &ImuSample) -> Result<(), PreintError> {
        if !s.is_finite() {
            return Err(PreintError::NonFiniteSample(s.timestamp));
        }
        if let Some(prev) = &self.last {
            if s.timestamp <= prev.timestamp {
                return Err(PreintError::OutOfOrder {
                    t: s.timestamp,
                    prev: prev.timestamp,
                });
            }
        }
        let dt = s.timestamp - self.cursor;
        if dt > 0.0 {
            self.delta.integrate_sample(s, dt, &self.noise)?;
            self.cursor = s.timestamp;
        }
        self.last = Some(*s);
        Ok(())
    }

    /// Closes the current delta at time `t` and starts a new one there with
    /// bias linearization point `bias`.
    pub fn finish(&mut self, t: f64, bias: ImuBias) -> Result<PreintegratedDelta, PreintError> {
        if t > self.cursor {
            if let Some(last) = self.last {
                self.delta
                    .integrate_sample(&last, t - self.cursor, &self.noise)?;
            }
            self.cursor = t;
        }
        Ok(std::mem::replace(
            &mut self.delta,
            PreintegratedDelta::new(bias),
        ))
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Fine-step RK4 integration of the continuous strapdown equations
    //! `Ṙ = R[ω]×, v̇ = R a, ṗ = v` with piecewise-constant inputs.
    use super::*;

    pub fn rk4(
        samples: &[(f64, Vector3<f64>, Vector3<f64>)],
        substeps: usize,
    ) -> (Matrix3<f64>, Vector3<f64>, Vector3<f64>) {
        let mut r = Matrix3::identity();
        let mut v = Vector3::zeros();
        let mut p = Vector3::zeros();
        for &(dt, a, w) in samples {
            let h = dt / substeps as f64;
            let wx = skew(&w);
            for _ in 0..substeps {
                let f = |r: &Matrix3<f64>, v: &Vector3<f64>| (r * wx, r * a, *v);
                let (k1r, k1v, k1p) = f(&r, &v);
                let (k2r, k2v, k2p) = f(&(r + k1r * (h / 2.0)), &(v + k1v * (h / 2.0)));
                let (k3r, k3v, k3p) = f(&(r + k2r * (h / 2.0)), &(v + k2v * (h / 2.0)));
                let (k4r, k4v, k4p) = f(&(r + k3r * h), &(v + k3v * h));
                r += (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (h / 6.0);
                v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
                p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            }
        }
        (r, v, p)
    }
}
