//! Circular-orbit satellites placed to give a chosen sky geometry at t = 0.

use nalgebra::Vector3;

use crate::geo::{EcefVector, LocalFrame, GM_EARTH};
use crate::gnss::Constellation;

/// Orbit radius of a medium Earth orbit satellite, m.
pub const ORBIT_RADIUS: f64 = 2.656e7;

/// Elevation pattern (deg) cycled over the satellites of one constellation.
const ELEVATIONS: [[f64; 8]; 2] = [
    [78.0, 22.0, 45.0, 30.0, 60.0, 18.0, 38.0, 52.0],
    [70.0, 25.0, 48.0, 33.0, 57.0, 20.0, 42.0, 28.0],
];

#[derive(Clone, Debug, PartialEq)]
pub struct Satellite {
    pub id: String,
    pub constellation: Constellation,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    /// rad/s
    mean_motion: f64,
    /// m
    pub clock_bias: f64,
    /// m/s
    pub clock_drift: f64,
}

impl Satellite {
    /// ECEF position and velocity at time `t`.
    pub fn state(&self, t: f64) -> (EcefVector, Vector3<f64>) {
        let (s, c) = (self.mean_motion * t).sin_cos();
        let p = (self.e1 * c + self.e2 * s) * ORBIT_RADIUS;
        let v = (self.e2 * c - self.e1 * s) * (ORBIT_RADIUS * self.mean_motion);
        (p, v)
    }

    fn new(id: String, constellation: Constellation, p0: EcefVector, tilt: f64, k: usize) -> Self {
        let e1 = p0.normalize();
        let reference = if e1.z.abs() > 0.99 {
            Vector3::x()
        } else {
            Vector3::z()
        };
        let base = (reference - e1 * e1.dot(&reference)).normalize();
        let other = e1.cross(&base);
        let e2 = base * tilt.cos() + other * tilt.sin();
        Self {
            id,
            constellation,
            e1,
            e2,
            mean_motion: (GM_EARTH / ORBIT_RADIUS.powi(3)).sqrt(),
            clock_bias: 1.0e4 * (k as f64 + 1.0) * if k % 2 == 0 { 1.0 } else { -1.0 },
            clock_drift: 0.01 * k as f64,
        }
    }
}

/// Point on the orbit sphere seen from `frame`'s origin at `(az, el)`.
fn sky_point(frame: &LocalFrame, az: f64, el: f64) -> EcefVector {
    let dir = frame.vec_to_ecef(&Vector3::new(
        el.cos() * az.cos(),
        el.cos() * az.sin(),
        -el.sin(),
    ));
    let o = frame.origin_ecef;
    let b = o.dot(&dir);
    let s = -b + (b * b - o.norm_squared() + ORBIT_RADIUS * ORBIT_RADIUS).sqrt();
    o + dir * s
}

/// `count` satellites of `constellation`, spread evenly in azimuth over a
/// fixed elevation pattern. `rotation` shifts all azimuths (rad).
pub fn build(
    frame: &LocalFrame,
    constellation: Constellation,
    count: usize,
    rotation: f64,
) -> Vec<Satellite> {
    let (prefix, pattern, az0) = match constellation {
        Constellation::Gps => ('G', 0, 10f64),
        Constellation::Galileo => ('E', 1, 35.0),
        Constellation::Glonass => ('R', 0, 60.0),
        Constellation::Beidou => ('C', 1, 80.0),
        Constellation::Qzss => ('J', 0, 100.0),
    };
    (0..count)
        .map(|i| {
            let az = (az0 + 360.0 * i as f64 / count as f64).to_radians() + rotation;
            let el = ELEVATIONS[pattern][i % 8].to_radians();
            let p0 = sky_point(frame, az, el);
            let tilt = (i as f64 * 47.0).to_radians();
            Satellite::new(format!("{prefix}{:02}", i + 1), constellation, p0, tilt, i)
        })
        .collect()
}
