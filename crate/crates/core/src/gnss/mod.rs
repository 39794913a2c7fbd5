//! GNSS observation model: corrections, line-of-sight geometry, pseudorange
//! and range-rate residuals, tropospheric delay and a single-point solver.

mod factors;
mod spp;

pub use factors::{DopplerFactor, PseudorangeFactor};
pub use spp::{spp_solve, SppConfig, SppOutcome, SppSolution};

use nalgebra::{RowVector3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::geo::{
    ecef_to_lla, ned_rotation, sagnac_correction, sagnac_gradient_rx, EcefVector, GeodeticPosition,
    OMEGA_EARTH, SPEED_OF_LIGHT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnssError {
    #[error("unknown constellation '{0}' (supported: GPS, GAL, GLO, BDS, QZS)")]
    UnknownConstellation(String),
    #[error("observation {sat} lacks {fields:?}")]
    MissingCorrection {
        sat: String,
        fields: Vec<&'static str>,
    },
    #[error("receiver and satellite positions coincide")]
    CoincidentPositions,
    #[error("constellation {0} is not enabled")]
    DisabledConstellation(Constellation),
    #[error("GPS must be enabled as the clock reference")]
    NoGpsReference,
    #[error("invalid measurement noise: {0}")]
    InvalidNoise(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constellation {
    #[serde(rename = "GPS")]
    Gps,
    #[serde(rename = "GAL")]
    Galileo,
    #[serde(rename = "GLO")]
    Glonass,
    #[serde(rename = "BDS")]
    Beidou,
    #[serde(rename = "QZS")]
    Qzss,
}

impl Constellation {
    pub const ALL: [Constellation; 5] = [
        Constellation::Gps,
        Constellation::Galileo,
        Constellation::Glonass,
        Constellation::Beidou,
        Constellation::Qzss,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Constellation::Gps => "GPS",
            Constellation::Galileo => "GAL",
            Constellation::Glonass => "GLO",
            Constellation::Beidou => "BDS",
            Constellation::Qzss => "QZS",
        }
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Constellation {
    type Err = GnssError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Constellation::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| GnssError::UnknownConstellation(s.to_string()))
    }
}

/// Enabled constellations in clock-slot order; GPS is always slot 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstellationSet(Vec<Constellation>);

impl ConstellationSet {
    pub fn new(list: &[Constellation]) -> Result<Self, GnssError> {
        if !list.contains(&Constellation::Gps) {
            return Err(GnssError::NoGpsReference);
        }
        let mut v: Vec<Constellation> = list.to_vec();
        v.sort();
        v.dedup();
        Ok(Self(v))
    }

    pub fn gps_only() -> Self {
        Self(vec![Constellation::Gps])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn slot(&self, c: Constellation) -> Option<usize> {
        self.0.iter().position(|x| *x == c)
    }

    pub fn contains(&self, c: Constellation) -> bool {
        self.0.contains(&c)
    }

    pub fn iter(&self) -> impl Iterator<Item = Constellation> + '_ {
        self.0.iter().copied()
    }
}

/// One satellite's raw measurements and the terms needed to correct them.
#[derive(Clone, Debug, PartialEq)]
pub struct SatObservation {
    pub sat_id: String,
    pub constellation: Constellation,
    /// m
    pub pseudorange: f64,
    /// range rate, m/s (positive when the range grows)
    pub pseudorange_rate: f64,
    /// ECEF at transmit time
    pub sat_pos: EcefVector,
    pub sat_vel: Vector3<f64>,
    /// m, added to the raw pseudorange by [`apply_corrections`]
    pub sat_clock_bias: f64,
    /// m/s
    pub sat_clock_drift: f64,
    pub tropo_delay: Option<f64>,
    pub iono_delay: Option<f64>,
    /// dB-Hz
    pub cn0: Option<f64>,
    /// rad
    pub elevation: Option<f64>,
}

/// Sanity band for raw pseudoranges, m.
pub const PSEUDORANGE_BAND: (f64, f64) = (1.0e7, 5.0e7);

impl SatObservation {
    pub fn is_plausible(&self) -> bool {
        self.pseudorange > PSEUDORANGE_BAND.0
            && self.pseudorange < PSEUDORANGE_BAND.1
            && self.pseudorange_rate.is_finite()
            && self
                .sat_pos
                .iter()
                .chain(self.sat_vel.iter())
                .all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct GnssEpoch {
    pub timestamp: f64,
    pub observations: Vec<SatObservation>,
}

/// Observation after satellite clock correction, with resolved atmospheric
/// terms and geometry at the approximate receiver position.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedObservation {
    pub sat_id: String,
    pub constellation: Constellation,
    pub pseudorange: f64,
    /// Range rate corrected for satellite clock drift only; the satellite
    /// velocity enters the prediction.
    pub pseudorange_rate: f64,
    pub sat_pos: EcefVector,
    pub sat_vel: Vector3<f64>,
    pub tropo_delay: f64,
    pub iono_delay: f64,
    pub elevation: f64,
    pub cn0: Option<f64>,
    /// The tropospheric delay came from the model rather than the input.
    pub tropo_modeled: bool,
}

/// Receiver clock: GPS bias/drift plus per-constellation offsets.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ClockState {
    pub gps_bias: f64,
    pub gps_drift: f64,
    pub inter_system_offsets: BTreeMap<Constellation, f64>,
    pub inter_system_drifts: BTreeMap<Constellation, f64>,
}

impl ClockState {
    pub fn bias(&self, c: Constellation) -> f64 {
        self.gps_bias + self.offset(c)
    }

    pub fn drift(&self, c: Constellation) -> f64 {
        let d = match c {
            Constellation::Gps => 0.0,
            _ => self.inter_system_drifts.get(&c).copied().unwrap_or(0.0),
        };
        self.gps_drift + d
    }

    pub fn offset(&self, c: Constellation) -> f64 {
        match c {
            Constellation::Gps => 0.0,
            _ => self.inter_system_offsets.get(&c).copied().unwrap_or(0.0),
        }
    }

    /// Clock-bias and drift vectors in `set` slot order.
    pub fn to_vectors(&self, set: &ConstellationSet) -> (Vec<f64>, Vec<f64>) {
        let b = set
            .iter()
            .map(|c| {
                if c == Constellation::Gps {
                    self.gps_bias
                } else {
                    self.offset(c)
                }
            })
            .collect();
        let d = set
            .iter()
            .map(|c| match c {
                Constellation::Gps => self.gps_drift,
                _ => self.inter_system_drifts.get(&c).copied().unwrap_or(0.0),
            })
            .collect();
        (b, d)
    }

    pub fn from_vectors(set: &ConstellationSet, bias: &[f64], drift: &[f64]) -> Self {
        let mut s = ClockState::default();
        for (i, c) in set.iter().enumerate() {
            if c == Constellation::Gps {
                s.gps_bias = bias[i];
                s.gps_drift = drift[i];
            } else {
                s.inter_system_offsets.insert(c, bias[i]);
                s.inter_system_drifts.insert(c, drift[i]);
            }
        }
        s
    }
}

/// `(sat − rx)/‖sat − rx‖`.
pub fn los_unit_vector(
    rx_pos: &EcefVector,
    sat_pos: &EcefVector,
) -> Result<Vector3<f64>, GnssError> {
    let d = sat_pos - rx_pos;
    let n = d.norm();
    if !(n > 0.0) {
        return Err(GnssError::CoincidentPositions);
    }
    Ok(d / n)
}

/// Elevation and azimuth of a satellite seen from `rx_pos`.
pub fn elevation_azimuth(rx_pos: &EcefVector, sat_pos: &EcefVector) -> Option<(f64, f64)> {
    let lla = ecef_to_lla(rx_pos).ok()?;
    let u = los_unit_vector(rx_pos, sat_pos).ok()?;
    let ned = ned_rotation(&lla).matrix().transpose() * u;
    let el = (-ned.z).clamp(-1.0, 1.0).asin();
    let az = ned.y.atan2(ned.x);
    Some((el, az))
}

/// Elevation below which the tropospheric model is clamped.
pub const TROPO_MIN_ELEVATION: f64 = 5.0 * std::f64::consts::PI / 180.0;
/// Relative humidity assumed by [`tropo_saastamoinen`].
pub const STANDARD_HUMIDITY: f64 = 0.7;

/// Saastamoinen slant delay with a standard atmosphere (15 °C and 1013.25 hPa
/// at sea level) and relative humidity `humidity`. Returns the delay and
/// whether the elevation was clamped to 5°.
pub fn saastamoinen(elevation: f64, pos: &GeodeticPosition, humidity: f64) -> (f64, bool) {
    let clamped = elevation < TROPO_MIN_ELEVATION;
    let el = elevation.max(TROPO_MIN_ELEVATION);
    if pos.height < -100.0 || pos.height > 1.0e4 {
        return (0.0, clamped);
    }
    let h = pos.height.max(0.0);
    let pres = 1013.25 * (1.0 - 2.2557e-5 * h).powf(5.2568);
    let temp = 15.0 - 6.5e-3 * h + 273.16;
    let e = 6.108 * humidity * ((17.15 * temp - 4684.0) / (temp - 38.45)).exp();
    let z = std::f64::consts::FRAC_PI_2 - el;
    let hydro = 0.0022768 * pres
        / (1.0 - 0.00266 * (2.0 * pos.latitude).cos() - 0.00028 * h / 1e3)
        / z.cos();
    let wet = 0.002277 * (1255.0 / temp + 0.05) * e / z.cos();
    (hydro + wet, clamped)
}

/// [`saastamoinen`] at [`STANDARD_HUMIDITY`].
pub fn tropo_saastamoinen(elevation: f64, pos: &GeodeticPosition) -> (f64, bool) {
    saastamoinen(elevation, pos, STANDARD_HUMIDITY)
}

/// Applies satellite clock corrections and resolves atmospheric terms at
/// `rx_pos_approx`. Missing tropospheric delays fall back to the model;
/// missing ionospheric delays are taken as zero.
pub fn apply_corrections(
    raw: &SatObservation,
    rx_pos_approx: &EcefVector,
) -> Result<CorrectedObservation, GnssError> {
    let mut missing = Vec::new();
    if !raw.sat_clock_bias.is_finite() {
        missing.push("sat_clock_bias");
    }
    if !raw.sat_clock_drift.is_finite() {
        missing.push("sat_clock_drift");
    }
    if !missing.is_empty() {
        return Err(GnssError::MissingCorrection {
            sat: raw.sat_id.clone(),
            fields: missing,
        });
    }
    let geom = elevation_azimuth(rx_pos_approx, &raw.sat_pos);
    let elevation = raw
        .elevation
        .filter(|e| e.is_finite())
        .or(geom.map(|g| g.0))
        .unwrap_or(std::f64::consts::FRAC_PI_2);
    let (tropo_delay, tropo_modeled) = match raw.tropo_delay.filter(|t| t.is_finite()) {
        Some(t) => (t, false),
        None => {
            let t = ecef_to_lla(rx_pos_approx)
                .map(|lla| tropo_saastamoinen(elevation, &lla).0)
                .unwrap_or(0.0);
            log::debug!("{}: tropospheric delay modeled ({t:.3} m)", raw.sat_id);
            (t, true)
        }
    };
    let iono_delay = match raw.iono_delay.filter(|i| i.is_finite()) {
        Some(i) => i,
        None => {
            log::warn!("{}: no ionospheric delay, using zero", raw.sat_id);
            0.0
        }
    };
    Ok(CorrectedObservation {
        sat_id: raw.sat_id.clone(),
        constellation: raw.constellation,
        pseudorange: raw.pseudorange + raw.sat_clock_bias,
        pseudorange_rate: raw.pseudorange_rate + raw.sat_clock_drift,
        sat_pos: raw.sat_pos,
        sat_vel: raw.sat_vel,
        tropo_delay,
        iono_delay,
        elevation,
        cn0: raw.cn0,
        tropo_modeled,
    })
}

/// Predicted range including the Earth-rotation term.
pub fn predicted_range(rx_pos: &EcefVector, sat_pos: &EcefVector) -> f64 {
    (sat_pos - rx_pos).norm() + sagnac_correction(sat_pos, rx_pos)
}

/// Time derivative of the Earth-rotation range term.
pub fn sagnac_rate(
    rx_pos: &EcefVector,
    rx_vel: &Vector3<f64>,
    sat_pos: &EcefVector,
    sat_vel: &Vector3<f64>,
) -> f64 {
    OMEGA_EARTH
        * (sat_vel.x * rx_pos.y + sat_pos.x * rx_vel.y
            - sat_vel.y * rx_pos.x
            - sat_pos.y * rx_vel.x)
        / SPEED_OF_LIGHT
}

/// Predicted range rate `uᵀ(v_s − v_r)` plus the Earth-rotation rate term.
pub fn predicted_range_rate(
    rx_pos: &EcefVector,
    rx_vel: &Vector3<f64>,
    sat_pos: &EcefVector,
    sat_vel: &Vector3<f64>,
) -> f64 {
    let u = (sat_pos - rx_pos).normalize();
    u.dot(&(sat_vel - rx_vel)) + sagnac_rate(rx_pos, rx_vel, sat_pos, sat_vel)
}

/// Pseudorange residual and its gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudorangeEval {
    pub residual: f64,
    pub d_rx_pos: RowVector3<f64>,
}

/// `r = ρ − (‖p_s − p_r‖ + sagnac + δt_GPS + offset_c + T + I)`. The
/// gradient with respect to each active clock entry is −1.
pub fn pseudorange_residual(
    rx_pos: &EcefVector,
    clock: &ClockState,
    obs: &CorrectedObservation,
) -> PseudorangeEval {
    pseudorange_eval(rx_pos, clock.bias(obs.constellation), obs)
}

pub(crate) fn pseudorange_eval(
    rx_pos: &EcefVector,
    clock_bias: f64,
    obs: &CorrectedObservation,
) -> PseudorangeEval {
    let d = obs.sat_pos - rx_pos;
    let range = d.norm();
    let pred = range
        + sagnac_correction(&obs.sat_pos, rx_pos)
        + clock_bias
        + obs.tropo_delay
        + obs.iono_delay;
    let u = d / range;
    // d(range)/d(rx) = −uᵀ, and the residual negates the prediction
    let grad = u - sagnac_gradient_rx(&obs.sat_pos);
    PseudorangeEval {
        residual: obs.pseudorange - pred,
        d_rx_pos: grad.transpose(),
    }
}

/// Range-rate residual and its gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DopplerEval {
    pub residual: f64,
    pub d_rx_pos: RowVector3<f64>,
    pub d_rx_vel: RowVector3<f64>,
}

/// `r = ρ̇ − (uᵀ v_s − uᵀ v_r + sagnac rate + δṫ)`: the receiver velocity
/// enters with a negative sign, so a receiver closing on the satellite sees a
/// negative range rate. The gradient with respect to each active drift entry
/// is −1.
pub fn doppler_residual(
    rx_pos: &EcefVector,
    rx_vel: &Vector3<f64>,
    clock: &ClockState,
    obs: &CorrectedObservation,
) -> DopplerEval {
    doppler_eval(rx_pos, rx_vel, clock.drift(obs.constellation), obs)
}

pub(crate) fn doppler_eval(
    rx_pos: &EcefVector,
    rx_vel: &Vector3<f64>,
    clock_drift: f64,
    obs: &CorrectedObservation,
) -> DopplerEval {
    let d = obs.sat_pos - rx_pos;
    let range = d.norm();
    let u = d / range;
    let rel = obs.sat_vel - rx_vel;
    let pred = u.dot(&rel) + sagnac_rate(rx_pos, rx_vel, &obs.sat_pos, &obs.sat_vel) + clock_drift;
    let k = OMEGA_EARTH / SPEED_OF_LIGHT;
    // ∂(uᵀ w)/∂p_r = −wᵀ(I − u uᵀ)/d
    let du = -(rel - u * u.dot(&rel)) / range;
    let dsag_p = Vector3::new(-obs.sat_vel.y, obs.sat_vel.x, 0.0) * k;
    let dsag_v = Vector3::new(-obs.sat_pos.y, obs.sat_pos.x, 0.0) * k;
    DopplerEval {
        residual: obs.pseudorange_rate - pred,
        d_rx_pos: -(du + dsag_p).transpose(),
        d_rx_vel: (u - dsag_v).transpose(),
    }
}

/// Elevation (and optional C/N0) dependent measurement sigmas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementNoise {
    /// zenith pseudorange sigma, m
    pub pseudorange_sigma: f64,
    /// zenith range-rate sigma, m/s
    pub range_rate_sigma: f64,
    pub cn0_weighting: bool,
    /// C/N0 at or above which no extra down-weighting applies, dB-Hz
    pub cn0_reference: f64,
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        Self {
            pseudorange_sigma: 1.5,
            range_rate_sigma: 0.1,
            cn0_weighting: false,
            cn0_reference: 45.0,
        }
    }
}

/// Smallest elevation used in the `1/sin(el)` scaling.
const MIN_SIGMA_ELEVATION: f64 = 0.05;

impl MeasurementNoise {
    pub fn validate(&self) -> Result<(), GnssError> {
        if !(self.pseudorange_sigma > 0.0 && self.pseudorange_sigma.is_finite()) {
            return Err(GnssError::InvalidNoise("pseudorange_sigma"));
        }
        if !(self.range_rate_sigma > 0.0 && self.range_rate_sigma.is_finite()) {
            return Err(GnssError::InvalidNoise("range_rate_sigma"));
        }
        Ok(())
    }

    fn scale(&self, elevation: f64, cn0: Option<f64>) -> f64 {
        let mut s = 1.0 / elevation.max(MIN_SIGMA_ELEVATION).sin();
        if self.cn0_weighting {
            if let Some(c) = cn0.filter(|c| c.is_finite()) {
                if c < self.cn0_reference {
                    s *= 10f64.powf((self.cn0_reference - c) / 20.0);
                }
            }
        }
        s
    }

    pub fn pseudorange(&self, obs: &CorrectedObservation) -> f64 {
        self.pseudorange_sigma * self.scale(obs.elevation, obs.cn0)
    }

    pub fn range_rate(&self, obs: &CorrectedObservation) -> f64 {
        self.range_rate_sigma * self.scale(obs.elevation, obs.cn0)
    }
}
