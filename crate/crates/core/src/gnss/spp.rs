//! Epoch-wise single point positioning by iterated weighted least squares.

use nalgebra::{DMatrix, DVector, Vector3};
use std::fmt;

use super::{
    apply_corrections, doppler_eval, pseudorange_eval, ClockState, Constellation, ConstellationSet,
    CorrectedObservation, GnssEpoch, MeasurementNoise,
};
use crate::geo::EcefVector;

#[derive(Clone, Debug, PartialEq)]
pub struct SppConfig {
    pub constellations: ConstellationSet,
    /// rad
    pub elevation_mask: f64,
    pub noise: MeasurementNoise,
    pub max_iterations: usize,
    /// Stop when the position update is below this, m.
    pub convergence: f64,
}

impl Default for SppConfig {
    fn default() -> Self {
        Self {
            constellations: ConstellationSet::gps_only(),
            elevation_mask: 10f64.to_radians(),
            noise: MeasurementNoise::default(),
            max_iterations: 30,
            convergence: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SppSolution {
    pub position: EcefVector,
    pub clock: ClockState,
    /// `None` when the range rates could not be solved.
    pub velocity: Option<Vector3<f64>>,
    pub satellites: Vec<String>,
    pub iterations: usize,
    /// Unweighted pseudorange residual RMS at the solution, m.
    pub residual_rms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unavailable {
    TooFewSatellites { used: usize, required: usize },
    NoGpsReference,
    Geometry,
    NotConverged,
}

impl fmt::Display for Unavailable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unavailable::TooFewSatellites { used, required } => {
                write!(f, "{used} usable satellites, {required} required")
            }
            Unavailable::NoGpsReference => f.write_str("no GPS satellite for the clock reference"),
            Unavailable::Geometry => f.write_str("singular geometry"),
            Unavailable::NotConverged => f.write_str("iteration did not converge"),
        }
    }
}

/// Result of [`spp_solve`]; unavailability is an ordinary outcome.
#[derive(Clone, Debug, PartialEq)]
pub enum SppOutcome {
    Fix(SppSolution),
    Unavailable(Unavailable),
}

impl SppOutcome {
    pub fn fix(&self) -> Option<&SppSolution> {
        match self {
            SppOutcome::Fix(s) => Some(s),
            SppOutcome::Unavailable(_) => None,
        }
    }
}

/// A position within this band of radii is close enough to the Earth's
/// surface for elevation-dependent processing.
const SURFACE_BAND: (f64, f64) = (6.2e6, 6.5e6);

fn near_surface(p: &EcefVector) -> bool {
    let r = p.norm();
    r > SURFACE_BAND.0 && r < SURFACE_BAND.1
}

/// Weighted linear least squares `min Σ w (A x − b)²`.
fn wls(a: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
    let mut aw = a.clone();
    for (i, mut row) in aw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let n = aw.tr_mul(a);
    let rhs = aw.tr_mul(b);
    let chol = n.cholesky()?;
    let x = chol.solve(&rhs);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn prepare(epoch: &GnssEpoch, rx: &EcefVector, config: &SppConfig) -> Vec<CorrectedObservation> {
    let near = near_surface(rx);
    epoch
        .observations
        .iter()
        .filter(|o| config.constellations.contains(o.constellation) && o.is_plausible())
        .filter_map(|o| match apply_corrections(o, rx) {
            Ok(mut c) => {
                if !near {
                    c.elevation = std::f64::consts::FRAC_PI_2;
                    if c.tropo_modeled {
                        c.tropo_delay = 0.0;
                    }
                }
                Some(c)
            }
            Err(e) => {
                log::warn!("t={}: {e}", epoch.timestamp);
                None
            }
        })
        .filter(|c| !near || c.elevation >= config.elevation_mask)
        .collect()
}

/// Columns of the clock unknowns: GPS first, then every other constellation
/// present in `obs`.
fn clock_columns(obs: &[CorrectedObservation]) -> Vec<Constellation> {
    let mut cols = vec![Constellation::Gps];
    for o in obs {
        if !cols.contains(&o.constellation) {
            cols.push(o.constellation);
        }
    }
    cols[1..].sort();
    cols
}

/// Solves receiver position and clock from the pseudoranges of one epoch,
/// then velocity and clock drift from the range rates.
pub fn spp_solve(epoch: &GnssEpoch, init: Option<EcefVector>, config: &SppConfig) -> SppOutcome {
    let mut x = init.unwrap_or_else(Vector3::zeros);
    let mut clock_vals: Vec<f64> = Vec::new();
    let mut cols: Vec<Constellation> = Vec::new();
    let mut used: Vec<CorrectedObservation> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        iterations += 1;
        let obs = prepare(epoch, &x, config);
        if !obs.iter().any(|o| o.constellation == Constellation::Gps) {
            return SppOutcome::Unavailable(Unavailable::NoGpsReference);
        }
        let new_cols = clock_columns(&obs);
        if new_cols != cols {
            clock_vals = new_cols
                .iter()
                .map(|c| {
                    cols.iter()
                        .position(|p| p == c)
                        .map(|i| clock_vals[i])
                        .unwrap_or(0.0)
                })
                .collect();
            cols = new_cols;
        }
        let required = 3 + cols.len();
        if obs.len() < required {
            return SppOutcome::Unavailable(Unavailable::TooFewSatellites {
                used: obs.len(),
                required,
            });
        }
        let n = 3 + cols.len();
        let near = near_surface(&x);
        let mut a = DMatrix::zeros(obs.len(), n);
        let mut b = DVector::zeros(obs.len());
        let mut w = DVector::zeros(obs.len());
        for (i, o) in obs.iter().enumerate() {
            let k = cols.iter().position(|c| *c == o.constellation).unwrap();
            let bias = clock_vals[0] + if k > 0 { clock_vals[k] } else { 0.0 };
            let e = pseudorange_eval(&x, bias, o);
            // residual r(x + δ) ≈ r + ∇r δ; solve ∇r δ = −r, i.e. (−∇r) δ = r
            for j in 0..3 {
                a[(i, j)] = -e.d_rx_pos[j];
            }
            a[(i, 3)] = 1.0;
            if k > 0 {
                a[(i, 3 + k)] = 1.0;
            }
            b[i] = e.residual;
            w[i] = if near {
                config.noise.pseudorange(o).powi(-2)
            } else {
                1.0
            };
        }
        let Some(dx) = wls(&a, &b, &w) else {
            return SppOutcome::Unavailable(Unavailable::Geometry);
        };
        let dp = Vector3::new(dx[0], dx[1], dx[2]);
        x += dp;
        for (c, d) in clock_vals.iter_mut().zip(dx.iter().skip(3)) {
            *c += d;
        }
        used = obs;
        if dp.norm() < config.convergence && near_surface(&x) {
            converged = true;
            break;
        }
    }
    if !converged {
        return SppOutcome::Unavailable(Unavailable::NotConverged);
    }

    let bias_of = |k: usize| clock_vals[0] + if k > 0 { clock_vals[k] } else { 0.0 };
    let mut sq = 0.0;
    for o in &used {
        let k = cols.iter().position(|c| *c == o.constellation).unwrap();
        sq += pseudorange_eval(&x, bias_of(k), o).residual.powi(2);
    }
    let residual_rms = (sq / used.len() as f64).sqrt();

    // range rates: r(v, d) = r(0, 0) + ∇_v r · v − d
    let n = 3 + cols.len();
    let mut a = DMatrix::zeros(used.len(), n);
    let mut b = DVector::zeros(used.len());
    let mut w = DVector::zeros(used.len());
    for (i, o) in used.iter().enumerate() {
        let k = cols.iter().position(|c| *c == o.constellation).unwrap();
        let e = doppler_eval(&x, &Vector3::zeros(), 0.0, o);
        for j in 0..3 {
            a[(i, j)] = -e.d_rx_vel[j];
        }
        a[(i, 3)] = 1.0;
        if k > 0 {
            a[(i, 3 + k)] = 1.0;
        }
        b[i] = e.residual;
        w[i] = config.noise.range_rate(o).powi(-2);
    }
    let rates = if used.iter().all(|o| o.pseudorange_rate.is_finite()) {
        wls(&a, &b, &w)
    } else {
        None
    };
    let drift_vals: Vec<f64> = match &rates {
        Some(r) => r.iter().skip(3).copied().collect(),
        None => vec![0.0; cols.len()],
    };

    let mut clock = ClockState {
        gps_bias: clock_vals[0],
        gps_drift: drift_vals[0],
        ..Default::default()
    };
    for (k, c) in cols.iter().enumerate().skip(1) {
        clock.inter_system_offsets.insert(*c, clock_vals[k]);
        clock.inter_system_drifts.insert(*c, drift_vals[k]);
    }
    SppOutcome::Fix(SppSolution {
        position: x,
        clock,
        velocity: rates.map(|r| Vector3::new(r[0], r[1], r[2])),
        satellites: used.iter().map(|o| o.sat_id.clone()).collect(),
        iterations,
        residual_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{lla_to_ecef, GeodeticPosition, LocalFrame, SPEED_OF_LIGHT};
    use crate::gnss::{predicted_range, predicted_range_rate, SatObservation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Noise-free epoch generated straight from the measurement equations.
    fn synth(
        rx: &EcefVector,
        vel: &Vector3<f64>,
        clock: &ClockState,
        sats: &[(Constellation, EcefVector, Vector3<f64>)],
    ) -> GnssEpoch {
        let observations = sats
            .iter()
            .enumerate()
            .map(|(i, (c, p, v))| SatObservation {
                sat_id: format!("{}{:02}", &c.token()[..1], i + 1),
                constellation: *c,
                pseudorange: predicted_range(rx, p) + clock.bias(*c) + 2.0 + 1.0 - 7.0,
                pseudorange_rate: predicted_range_rate(rx, vel, p, v) + clock.drift(*c) - 0.25,
                sat_pos: *p,
                sat_vel: *v,
                sat_clock_bias: 7.0,
                sat_clock_drift: 0.25,
                tropo_delay: Some(2.0),
                iono_delay: Some(1.0),
                cn0: None,
                elevation: None,
            })
            .collect();
        GnssEpoch {
            timestamp: 0.0,
            observations,
        }
    }

    fn sky(
        rng: &mut ChaCha8Rng,
        frame: &LocalFrame,
        n: usize,
        c: Constellation,
    ) -> Vec<(Constellation, EcefVector, Vector3<f64>)> {
        (0..n)
            .map(|i| {
                let az =
                    2.0 * std::f64::consts::PI * (i as f64 + rng.random_range(0.0..0.5)) / n as f64;
                let el = rng.random_range(15f64..85.0).to_radians();
                let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), -el.sin());
                let u = frame.vec_to_ecef(&dir);
                // solve |o + s u| = 26560 km
                let o = frame.origin_ecef;
                let r = 2.656e7;
                let bq = o.dot(&u);
                let s = -bq + (bq * bq - o.norm_squared() + r * r).sqrt();
                let p = o + u * s;
                let v = p.cross(&Vector3::z()).normalize() * 3874.0;
                (c, p, v)
            })
            .collect()
    }

    #[test]
    fn recovers_truth_noise_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = LocalFrame::new(GeodeticPosition::from_degrees(22.3, 114.2, 30.0));
        let rx = frame.to_ecef(&Vector3::new(12.0, -5.0, 1.0));
        let vel = frame.vec_to_ecef(&Vector3::new(8.0, 3.0, 0.1));
        let clock = ClockState {
            gps_bias: 0.0,
            gps_drift: 0.0,
            ..Default::default()
        };
        let ep = synth(
            &rx,
            &vel,
            &clock,
            &sky(&mut rng, &frame, 6, Constellation::Gps),
        );
        let s = spp_solve(&ep, None, &SppConfig::default());
        let s = s.fix().expect("fix");
        assert!(
            (s.position - rx).norm() < 1e-6,
            "{}",
            (s.position - rx).norm()
        );
        assert!((s.velocity.unwrap() - vel).norm() < 1e-6);
        assert!(s.clock.gps_bias.abs() < 1e-6);
    }

    #[test]
    fn recovers_clock_bias_with_four_satellites() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = LocalFrame::new(GeodeticPosition::from_degrees(-33.9, 151.2, 5.0));
        let rx = frame.origin_ecef;
        let clock = ClockState {
            gps_bias: 1e-3 * SPEED_OF_LIGHT,
            gps_drift: 2.0,
            ..Default::default()
        };
        let ep = synth(
            &rx,
            &Vector3::zeros(),
            &clock,
            &sky(&mut rng, &frame, 4, Constellation::Gps),
        );
        let s = spp_solve(&ep, None, &SppConfig::default());
        let s = s.fix().expect("fix");
        assert!((s.clock.gps_bias - clock.gps_bias).abs() < 1e-6);
        assert!((s.clock.gps_drift - 2.0).abs() < 1e-6);
    }

    #[test]
    fn three_satellites_are_unavailable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = LocalFrame::new(GeodeticPosition::from_degrees(10.0, 10.0, 0.0));
        let ep = synth(
            &frame.origin_ecef,
            &Vector3::zeros(),
            &ClockState::default(),
            &sky(&mut rng, &frame, 3, Constellation::Gps),
        );
        assert_eq!(
            spp_solve(&ep, None, &SppConfig::default()),
            SppOutcome::Unavailable(Unavailable::TooFewSatellites {
                used: 3,
                required: 4
            })
        );
    }

    #[test]
    fn inter_system_offset_is_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame = LocalFrame::new(GeodeticPosition::from_degrees(48.0, 11.0, 500.0));
        let mut clock = ClockState {
            gps_bias: 300.0,
            gps_drift: 0.1,
            ..Default::default()
        };
        clock
            .inter_system_offsets
            .insert(Constellation::Galileo, 100.0);
        clock
            .inter_system_drifts
            .insert(Constellation::Galileo, 0.0);
        let mut sats = sky(&mut rng, &frame, 5, Constellation::Gps);
        sats.extend(sky(&mut rng, &frame, 4, Constellation::Galileo));
        let ep = synth(&frame.origin_ecef, &Vector3::zeros(), &clock, &sats);
        let cfg = SppConfig {
            constellations: ConstellationSet::new(&[Constellation::Gps, Constellation::Galileo])
                .unwrap(),
            ..Default::default()
        };
        let s = spp_solve(&ep, None, &cfg);
        let s = s.fix().unwrap();
        assert!((s.clock.offset(Constellation::Galileo) - 100.0).abs() < 1e-6);
        assert!((s.position - frame.origin_ecef).norm() < 1e-6);
        // the same epoch with Galileo disabled uses GPS only
        let s2 = spp_solve(&ep, None, &SppConfig::default());
        assert_eq!(s2.fix().unwrap().satellites.len(), 5);
    }

    #[test]
    fn random_constellations_recover_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let frame = LocalFrame::new(GeodeticPosition::new(
                rng.random_range(-1.3..1.3),
                rng.random_range(-3.1..3.1),
                rng.random_range(0.0..2000.0),
            ));
            let n = rng.random_range(5..12);
            let sats = sky(&mut rng, &frame, n, Constellation::Gps);
            let clock = ClockState {
                gps_bias: rng.random_range(-1e5..1e5),
                gps_drift: 0.0,
                ..Default::default()
            };
            let ep = synth(&frame.origin_ecef, &Vector3::zeros(), &clock, &sats);
            let s = spp_solve(&ep, None, &SppConfig::default());
            let s = s.fix().unwrap();
            assert!((s.position - frame.origin_ecef).norm() < 1e-6);
        }
    }

    #[test]
    fn start_near_truth_converges_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frame = LocalFrame::new(GeodeticPosition::from_degrees(0.0, 0.0, 0.0));
        let ep = synth(
            &frame.origin_ecef,
            &Vector3::zeros(),
            &ClockState::default(),
            &sky(&mut rng, &frame, 8, Constellation::Gps),
        );
        let s = spp_solve(
            &ep,
            Some(lla_to_ecef(&GeodeticPosition::from_degrees(
                0.001, 0.0, 0.0,
            ))),
            &SppConfig::default(),
        );
        assert!(s.fix().unwrap().iterations <= 5);
    }
}
