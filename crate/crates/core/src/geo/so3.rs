//! Rotations on SO(3) with the exponential / logarithm maps and the right
//! Jacobians used by the on-manifold optimizer and the IMU preintegration.
//!
//! Perturbations are applied on the right: `R ⊞ δ = R · Exp(δ)`.

use nalgebra::{Matrix3, Quaternion, Rotation3 as NaRotation, UnitQuaternion, Vector3};
use std::f64::consts::PI;

/// Below this angle the Rodrigues coefficients are replaced by their Taylor
/// expansions.
const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric (cross-product) matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]: extracts the axial vector of the antisymmetric part.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// An element of SO(3), stored as an orthonormal 3×3 matrix.
///
/// Compositions re-orthonormalize through a unit-quaternion round trip, so
/// `RᵀR = I` and `det R = 1` hold to ~1e-15 after any sequence of operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(Matrix3::identity())
    }

    /// Wraps a matrix that is assumed to be a rotation, projecting it onto
    /// SO(3) to remove round-off.
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Rotation3(*quaternion_of(&m).to_rotation_matrix().matrix())
    }

    /// Wraps a matrix without re-projection. The caller guarantees
    /// orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation3(m)
    }

    /// Body→navigation rotation from roll/pitch/yaw (ZYX convention, radians).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Rotation3(*NaRotation::from_euler_angles(roll, pitch, yaw).matrix())
    }

    /// Roll, pitch, yaw (ZYX convention, radians).
    pub fn euler(&self) -> (f64, f64, f64) {
        let m = &self.0;
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        (roll, pitch, yaw)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation3(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn compose(&self, other: &Rotation3) -> Self {
        Rotation3::from_matrix(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// `Exp` of a tangent vector (Rodrigues formula).
    pub fn exp(omega: &Vector3<f64>) -> Self {
        so3_exp(omega)
    }

    /// Principal logarithm, `‖ω‖ ≤ π`.
    pub fn log(&self) -> Vector3<f64> {
        so3_log(self)
    }

    /// `self ⊞ δ = self · Exp(δ)`.
    pub fn retract(&self, delta: &Vector3<f64>) -> Self {
        self.compose(&so3_exp(delta))
    }

    /// `self ⊟ base = Log(baseᵀ · self)`.
    pub fn local(&self, base: &Rotation3) -> Vector3<f64> {
        so3_log(&Rotation3(base.0.transpose() * self.0))
    }

    /// Largest absolute entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }
}

/// Nearest unit quaternion to a near-orthonormal matrix (Shepperd's method,
/// branching on the largest of the four squared components).
fn quaternion_of(m: &Matrix3<f64>) -> UnitQuaternion<f64> {
    let t = m.trace();
    let (w, x, y, z);
    if t >= m[(0, 0)] && t >= m[(1, 1)] && t >= m[(2, 2)] {
        let s = (1.0 + t).sqrt() * 2.0;
        w = 0.25 * s;
        x = (m[(2, 1)] - m[(1, 2)]) / s;
        y = (m[(0, 2)] - m[(2, 0)]) / s;
        z = (m[(1, 0)] - m[(0, 1)]) / s;
    } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        w = (m[(2, 1)] - m[(1, 2)]) / s;
        x = 0.25 * s;
        y = (m[(0, 1)] + m[(1, 0)]) / s;
        z = (m[(0, 2)] + m[(2, 0)]) / s;
    } else if m[(1, 1)] >= m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        w = (m[(0, 2)] - m[(2, 0)]) / s;
        x = (m[(0, 1)] + m[(1, 0)]) / s;
        y = 0.25 * s;
        z = (m[(1, 2)] + m[(2, 1)]) / s;
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        w = (m[(1, 0)] - m[(0, 1)]) / s;
        x = (m[(0, 2)] + m[(2, 0)]) / s;
        y = (m[(1, 2)] + m[(2, 1)]) / s;
        z = 0.25 * s;
    }
    UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
}

/// Exponential map `so(3) → SO(3)`.
pub fn so3_exp(omega: &Vector3<f64>) -> Rotation3 {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(omega);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation3(Matrix3::identity() + k * a + k * k * b)
}

/// Principal logarithm map `SO(3) → so(3)` with `‖ω‖ ≤ π`.
///
/// At exactly `θ = π` the axis sign is ambiguous; the returned axis has its
/// largest-magnitude component positive.
pub fn so3_log(r: &Rotation3) -> Vector3<f64> {
    let m = &r.0;
    let axial = vee(m); // sin θ · n
    let s = axial.norm();
    let c = 0.5 * (m.trace() - 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        // θ/sinθ ≈ 1 + θ²/6
        return axial * (1.0 + theta * theta / 6.0);
    }
    if theta < 0.75 * PI {
        return axial * (theta / s);
    }

    // Near π the antisymmetric part loses precision; recover the axis from the
    // symmetric part (1 − cosθ) n nᵀ and fix its sign from the axial vector.
    let sym = (m + m.transpose()) * 0.5 - Matrix3::identity() * c;
    let one_minus_c = 1.0 - c;
    let diag = Vector3::new(sym[(0, 0)], sym[(1, 1)], sym[(2, 2)]);
    let i = diag.imax();
    let mut n: Vector3<f64> = sym.column(i).into();
    n /= (diag[i] * one_minus_c).max(0.0).sqrt();
    let n = n.normalize();
    let n = if s > 1e-12 {
        if n.dot(&axial) < 0.0 {
            -n
        } else {
            n
        }
    } else if n[n.iamax()] < 0.0 {
        -n
    } else {
        n
    };
    n * theta
}

/// Right Jacobian of SO(3): `Exp(φ + δ) ≈ Exp(φ) Exp(Jr(φ) δ)`.
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    if theta < 1e-5 {
        return Matrix3::identity() - k * 0.5 + k * k / 6.0;
    }
    Matrix3::identity() - k * ((1.0 - theta.cos()) / theta2)
        + k * k * ((theta - theta.sin()) / (theta2 * theta))
}

/// Inverse of [`right_jacobian`]: `Log(Exp(φ) Exp(δ)) ≈ φ + Jr⁻¹(φ) δ`.
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    if theta < 1e-5 {
        return Matrix3::identity() + k * 0.5 + k * k / 12.0;
    }
    let coeff = 1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    Matrix3::identity() + k * 0.5 + k * k * coeff
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ) * scale
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(so3_exp(&Vector3::zeros()).matrix(), &Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = so3_exp(&Vector3::new(0.0, 0.0, PI / 2.0));
        let v = r.rotate(&Vector3::x());
        assert_relative_eq!(v, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn exp_is_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let r = so3_exp(&random_vec(&mut rng, 4.0));
            let v = random_vec(&mut rng, 10.0);
            assert_relative_eq!(r.rotate(&v).norm(), v.norm(), epsilon = 1e-12);
            assert!(r.orthonormality_error() < 1e-9);
            assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(so3_log(&Rotation3::identity()), Vector3::zeros());
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let dir = random_vec(&mut rng, 1.0).normalize();
            let angle = rng.random_range(1e-12..(PI - 0.01));
            let w = dir * angle;
            let back = so3_log(&so3_exp(&w));
            assert!((back - w).norm() < 1e-9, "{w:?} -> {back:?}");
        }
        // tiny angles take the Taylor branch
        let w = Vector3::new(1e-10, -2e-10, 3e-11);
        assert_relative_eq!(so3_log(&so3_exp(&w)), w, epsilon = 1e-20);
    }

    #[test]
    fn log_at_pi_about_x() {
        // trace(R) = −1 branch; convention returns the positive axis.
        let r = Rotation3::from_matrix_unchecked(Matrix3::new(
            1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0,
        ));
        assert_relative_eq!(r.matrix().trace(), -1.0);
        let w = so3_log(&r);
        assert_relative_eq!(w, Vector3::new(PI, 0.0, 0.0), epsilon = 1e-12);
        // just short of π on either side keeps the sign of the generating axis
        let w = Vector3::new(-(PI - 1e-7), 0.0, 0.0);
        assert_relative_eq!(so3_log(&so3_exp(&w)), w, epsilon = 1e-8);
    }

    #[test]
    fn near_pi_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let dir = random_vec(&mut rng, 1.0).normalize();
            let w = dir * (PI - rng.random_range(1e-6..0.3));
            assert!((so3_log(&so3_exp(&w)) - w).norm() < 1e-9);
        }
    }

    #[test]
    fn right_jacobian_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let phi = random_vec(&mut rng, 2.0);
            let d = random_vec(&mut rng, 1e-6);
            let lhs = so3_exp(&(phi + d));
            let rhs = so3_exp(&phi).compose(&so3_exp(&(right_jacobian(&phi) * d)));
            assert!(lhs.local(&rhs).norm() < 1e-11);
            let jr = right_jacobian(&phi);
            let jri = right_jacobian_inv(&phi);
            assert!((jr * jri - Matrix3::identity()).amax() < 1e-10);
        }
    }

    #[test]
    fn compose_keeps_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut r = Rotation3::identity();
        for _ in 0..10_000 {
            r = r.retract(&random_vec(&mut rng, 0.1));
        }
        assert!(
            r.orthonormality_error() < 1e-12,
            "{}",
            r.orthonormality_error()
        );
    }

    #[test]
    fn euler_round_trip() {
        let r = Rotation3::from_euler(0.1, -0.2, 2.5);
        let (roll, pitch, yaw) = r.euler();
        assert_relative_eq!(roll, 0.1, epsilon = 1e-12);
        assert_relative_eq!(pitch, -0.2, epsilon = 1e-12);
        assert_relative_eq!(yaw, 2.5, epsilon = 1e-12);
    }
}
