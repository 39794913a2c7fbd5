//! WGS84 ellipsoid, geodetic/ECEF conversions, the local NED frame, normal
//! gravity and the Sagnac range term.

use super::so3::Rotation3;
use super::GeoError;
use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

/// Semi-major axis \[m\].
pub const WGS84_A: f64 = 6_378_137.0;
/// Flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// Semi-minor axis \[m\].
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
/// Earth rotation rate \[rad/s\].
pub const OMEGA_EARTH: f64 = 7.292_115_146_7e-5;
/// Speed of light \[m/s\].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Earth gravitational parameter \[m³/s²\].
pub const GM_EARTH: f64 = 3.986_004_418e14;
/// Normal gravity at the equator \[m/s²\].
pub const GAMMA_EQUATOR: f64 = 9.780_325_335_9;
/// Normal gravity at the poles \[m/s²\].
pub const GAMMA_POLE: f64 = 9.832_184_937_9;

/// Earth-Centered Earth-Fixed coordinates \[m\] (also used for ECEF velocities).
pub type EcefVector = Vector3<f64>;

/// Geodetic coordinates on the WGS84 ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct GeodeticPosition {
    /// radians, |lat| ≤ π/2
    pub latitude: f64,
    /// radians, wrapped to (−π, π]
    pub longitude: f64,
    /// meters above the ellipsoid
    pub height: f64,
}

impl GeodeticPosition {
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Self {
        Self {
            latitude,
            longitude: wrap_angle(longitude),
            height,
        }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, height: f64) -> Self {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), height)
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn prime_vertical_radius(sin_lat: f64) -> f64 {
    WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt()
}

pub fn lla_to_ecef(p: &GeodeticPosition) -> EcefVector {
    let (sl, cl) = p.latitude.sin_cos();
    let (so, co) = p.longitude.sin_cos();
    let n = prime_vertical_radius(sl);
    Vector3::new(
        (n + p.height) * cl * co,
        (n + p.height) * cl * so,
        (n * (1.0 - WGS84_E2) + p.height) * sl,
    )
}

/// Iterative inverse; converges to |Δlat| < 1e-12 rad in a handful of steps.
pub fn ecef_to_lla(p: &EcefVector) -> Result<GeodeticPosition, GeoError> {
    if !p.iter().all(|c| c.is_finite()) {
        return Err(GeoError::NonFinite);
    }
    let rho = p.x.hypot(p.y);
    if p.norm() < 1.0 {
        return Err(GeoError::EarthCenter);
    }
    let lon = p.y.atan2(p.x);
    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    for _ in 0..30 {
        let sl = lat.sin();
        let n = prime_vertical_radius(sl);
        let next = (p.z + WGS84_E2 * n * sl).atan2(rho);
        let done = (next - lat).abs() < 1e-12;
        lat = next;
        if done {
            break;
        }
    }
    let (sl, cl) = lat.sin_cos();
    let height = rho * cl + p.z * sl - WGS84_A * (1.0 - WGS84_E2 * sl * sl).sqrt();
    Ok(GeodeticPosition::new(lat, lon, height))
}

/// Rotation taking NED vectors at `origin` to ECEF vectors. Its columns are the
/// ECEF unit vectors of local North, East and Down.
pub fn ned_rotation(origin: &GeodeticPosition) -> Rotation3 {
    let (sl, cl) = origin.latitude.sin_cos();
    let (so, co) = origin.longitude.sin_cos();
    let north = Vector3::new(-sl * co, -sl * so, cl);
    let east = Vector3::new(-so, co, 0.0);
    let down = Vector3::new(-cl * co, -cl * so, -sl);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[north, east, down]))
}

/// Earth-rotation correction to the geometric range, to be **added** to the
/// predicted range: `ω_E (x_s y_r − y_s x_r) / c`.
pub fn sagnac_correction(sat_pos: &EcefVector, rx_pos: &EcefVector) -> f64 {
    OMEGA_EARTH * (sat_pos.x * rx_pos.y - sat_pos.y * rx_pos.x) / SPEED_OF_LIGHT
}

/// Gradient of [`sagnac_correction`] with respect to the receiver position.
pub fn sagnac_gradient_rx(sat_pos: &EcefVector) -> Vector3<f64> {
    Vector3::new(-sat_pos.y, sat_pos.x, 0.0) * (OMEGA_EARTH / SPEED_OF_LIGHT)
}

/// Somigliana normal gravity with the second-order free-air height term,
/// pointing down in NED.
pub fn gravity_ned(p: &GeodeticPosition) -> Vector3<f64> {
    let s2 = p.latitude.sin().powi(2);
    let k = (WGS84_B * GAMMA_POLE - WGS84_A * GAMMA_EQUATOR) / (WGS84_A * GAMMA_EQUATOR);
    let gamma0 = GAMMA_EQUATOR * (1.0 + k * s2) / (1.0 - WGS84_E2 * s2).sqrt();
    let m = OMEGA_EARTH * OMEGA_EARTH * WGS84_A * WGS84_A * WGS84_B / GM_EARTH;
    let h = p.height;
    let gamma = gamma0
        * (1.0 - 2.0 / WGS84_A * (1.0 + WGS84_F + m - 2.0 * WGS84_F * s2) * h
            + 3.0 * h * h / (WGS84_A * WGS84_A));
    Vector3::new(0.0, 0.0, gamma)
}

/// A fixed local NED navigation frame anchored at a geodetic origin.
#[derive(Clone, Copy, Debug)]
pub struct LocalFrame {
    pub origin: GeodeticPosition,
    pub origin_ecef: EcefVector,
    /// NED → ECEF
    pub r_ne: Rotation3,
}

impl LocalFrame {
    pub fn new(origin: GeodeticPosition) -> Self {
        Self {
            origin,
            origin_ecef: lla_to_ecef(&origin),
            r_ne: ned_rotation(&origin),
        }
    }

    pub fn from_ecef(origin: &EcefVector) -> Result<Self, GeoError> {
        Ok(Self::new(ecef_to_lla(origin)?))
    }

    pub fn to_ecef(&self, ned: &Vector3<f64>) -> EcefVector {
        self.origin_ecef + self.r_ne.rotate(ned)
    }

    pub fn to_ned(&self, ecef: &EcefVector) -> Vector3<f64> {
        self.r_ne.matrix().transpose() * (ecef - self.origin_ecef)
    }

    pub fn vec_to_ecef(&self, ned: &Vector3<f64>) -> Vector3<f64> {
        self.r_ne.rotate(ned)
    }

    pub fn vec_to_ned(&self, ecef: &Vector3<f64>) -> Vector3<f64> {
        self.r_ne.matrix().transpose() * ecef
    }

    pub fn gravity(&self) -> Vector3<f64> {
        gravity_ned(&self.origin)
    }
}
