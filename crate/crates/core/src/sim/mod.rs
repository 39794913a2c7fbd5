//! Synthetic scenarios: ground truth, IMU samples and GNSS epochs generated
//! from one configuration and seed.

pub mod constellation;
pub mod trajectory;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::NavState;
use crate::geo::{
    ecef_to_lla, gravity_ned, sagnac_correction, GeodeticPosition, LocalFrame, OMEGA_EARTH,
    SPEED_OF_LIGHT,
};
use crate::gnss::{
    saastamoinen, ClockState, Constellation, GnssEpoch, SatObservation, STANDARD_HUMIDITY,
};
use crate::preint::{ImuBias, ImuNoiseParams, ImuSample};
pub use constellation::Satellite;
pub use trajectory::{Trajectory, TrajectoryPoint, TrajectoryProfile, TurnSegment};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario setting {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
}

impl Origin {
    pub fn geodetic(&self) -> GeodeticPosition {
        GeodeticPosition::from_degrees(self.lat_deg, self.lon_deg, self.height)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SatelliteConfig {
    pub gps: usize,
    pub galileo: usize,
    /// Satellites below this elevation are not tracked, deg.
    pub cutoff_deg: f64,
    /// Rotates the whole sky pattern in azimuth, deg.
    pub azimuth_rotation_deg: f64,
}

impl Default for SatelliteConfig {
    fn default() -> Self {
        Self {
            gps: 8,
            galileo: 0,
            cutoff_deg: 5.0,
            azimuth_rotation_deg: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockConfig {
    /// m
    pub initial_bias: f64,
    /// m/s
    pub initial_drift: f64,
    /// m/√s
    pub bias_rw: f64,
    /// m/s/√s
    pub drift_rw: f64,
    /// Galileo minus GPS system time, m.
    pub galileo_offset: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self {
            initial_bias: 3000.0,
            initial_drift: 0.5,
            bias_rw: 0.1,
            drift_rw: 0.01,
            galileo_offset: 100.0,
        }
    }
}

/// Noise switches and magnitudes. Each switch only affects its own random
/// stream, so turning one off leaves the others unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub imu: bool,
    pub imu_bias: bool,
    pub gnss: bool,
    pub clock: bool,
    pub imu_params: ImuNoiseParams,
    /// initial accelerometer bias sigma, m/s²
    pub accel_bias_sigma: f64,
    /// initial gyroscope bias sigma, rad/s
    pub gyro_bias_sigma: f64,
    /// zenith pseudorange sigma, m
    pub pseudorange_sigma: f64,
    /// zenith range-rate sigma, m/s
    pub range_rate_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            imu: true,
            imu_bias: true,
            gnss: true,
            clock: true,
            imu_params: ImuNoiseParams::default(),
            accel_bias_sigma: 0.02,
            gyro_bias_sigma: 1.0e-3,
            pseudorange_sigma: 1.5,
            range_rate_sigma: 0.1,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            imu: false,
            imu_bias: false,
            gnss: false,
            clock: false,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtmosphereConfig {
    pub tropo: bool,
    /// zenith ionospheric delay, m
    pub iono_zenith: f64,
    /// Write the delays into the observations; otherwise leave them empty.
    pub write_tropo: bool,
    pub write_iono: bool,
}

impl Default for AtmosphereConfig {
    fn default() -> Self {
        Self {
            tropo: true,
            iono_zenith: 3.0,
            write_tropo: true,
            write_iono: true,
        }
    }
}

/// Window `[start, end]` in which only the first `keep` tracked satellites
/// (GPS first, then by id) are reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outage {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub keep: usize,
}

/// Non-line-of-sight window adding a positive range bias to one satellite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlosWindow {
    pub sat_id: String,
    pub start: f64,
    pub end: f64,
    /// m
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// s
    pub duration: f64,
    /// Hz
    pub imu_rate: f64,
    /// Hz
    pub gnss_rate: f64,
    pub origin: Origin,
    pub trajectory: TrajectoryProfile,
    pub satellites: SatelliteConfig,
    pub clock: ClockConfig,
    pub noise: NoiseConfig,
    pub atmosphere: AtmosphereConfig,
    pub outages: Vec<Outage>,
    pub nlos: Vec<NlosWindow>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            duration: 120.0,
            imu_rate: 100.0,
            gnss_rate: 1.0,
            origin: Origin {
                lat_deg: 22.3,
                lon_deg: 114.2,
                height: 10.0,
            },
            trajectory: TrajectoryProfile::FigureEight {
                radius: 100.0,
                speed: 10.0,
            },
            satellites: SatelliteConfig::default(),
            clock: ClockConfig::default(),
            noise: NoiseConfig::default(),
            atmosphere: AtmosphereConfig::default(),
            outages: Vec::new(),
            nlos: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.duration) {
            return Err(SimError::InvalidConfig("duration"));
        }
        if !pos(self.imu_rate) {
            return Err(SimError::InvalidConfig("imu_rate"));
        }
        if !pos(self.gnss_rate) || self.gnss_rate > self.imu_rate {
            return Err(SimError::InvalidConfig("gnss_rate"));
        }
        let ratio = self.imu_rate / self.gnss_rate;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(SimError::InvalidConfig(
                "imu_rate must be a multiple of gnss_rate",
            ));
        }
        if self.satellites.gps == 0 {
            return Err(SimError::InvalidConfig("satellites.gps"));
        }
        self.noise
            .imu_params
            .validate()
            .map_err(|_| SimError::InvalidConfig("noise.imu_params"))?;
        let n = &self.noise;
        for (name, v) in [
            ("noise.accel_bias_sigma", n.accel_bias_sigma),
            ("noise.gyro_bias_sigma", n.gyro_bias_sigma),
            ("noise.pseudorange_sigma", n.pseudorange_sigma),
            ("noise.range_rate_sigma", n.range_rate_sigma),
            ("clock.bias_rw", self.clock.bias_rw),
            ("clock.drift_rw", self.clock.drift_rw),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidConfig(name));
            }
        }
        if let TrajectoryProfile::FigureEight { radius, speed } = self.trajectory {
            if !pos(radius) || !pos(speed) {
                return Err(SimError::InvalidConfig("trajectory"));
            }
        }
        Ok(())
    }

    /// Constellations present in the scenario, GPS first.
    pub fn constellations(&self) -> Vec<Constellation> {
        let mut v = vec![Constellation::Gps];
        if self.satellites.galileo > 0 {
            v.push(Constellation::Galileo);
        }
        v
    }

    /// Benign open-sky figure eight with every noise source off.
    pub fn noise_free(duration: f64) -> Self {
        Self {
            duration,
            noise: NoiseConfig::none(),
            ..Default::default()
        }
    }

    /// Two coordinated 90° turns of 0.3 g peak lateral acceleration at 10 m/s,
    /// separated by straight runs.
    pub fn turn_course(seed: u64) -> Self {
        Self {
            seed,
            duration: 100.0,
            trajectory: TrajectoryProfile::TurnCourse {
                speed: 10.0,
                heading_deg: 0.0,
                segments: vec![
                    TurnSegment {
                        duration: 20.0,
                        turn_deg: 0.0,
                    },
                    TurnSegment {
                        duration: 10.0,
                        turn_deg: 90.0,
                    },
                    TurnSegment {
                        duration: 20.0,
                        turn_deg: 0.0,
                    },
                    TurnSegment {
                        duration: 10.0,
                        turn_deg: 90.0,
                    },
                ],
            },
            ..Default::default()
        }
    }

    /// Urban-like degradation: recurring windows with three satellites and
    /// stretches where one or two satellites carry large NLOS biases.
    pub fn degraded(seed: u64, duration: f64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0dd5);
        let mut outages = Vec::new();
        let mut nlos = Vec::new();
        let mut t = 5.0;
        while t < duration {
            let kind = rng.random_range(0..3);
            let len = rng.random_range(8.0..20.0);
            match kind {
                0 => outages.push(Outage {
                    start: t,
                    end: t + len,
                    keep: 3,
                }),
                1 => {
                    for _ in 0..rng.random_range(1..3) {
                        nlos.push(NlosWindow {
                            sat_id: format!("G{:02}", rng.random_range(2..9)),
                            start: t,
                            end: t + len,
                            bias: rng.random_range(30.0..80.0),
                        });
                    }
                }
                _ => {}
            }
            t += len + rng.random_range(2.0..8.0);
        }
        Self {
            seed,
            duration,
            outages,
            nlos,
            ..Default::default()
        }
    }
}

/// Everything a simulation run produces.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub frame: LocalFrame,
    /// ground truth at every IMU time, including t = 0
    pub truth: Vec<NavState>,
    pub imu: Vec<ImuSample>,
    pub gnss: Vec<GnssEpoch>,
    pub satellites: Vec<Satellite>,
}

impl Scenario {
    /// Truth sample at time `t`, if `t` is on the IMU grid.
    pub fn truth_at(&self, t: f64) -> Option<&NavState> {
        let k = (t * self.config.imu_rate).round();
        if k < 0.0 || (k / self.config.imu_rate - t).abs() > 1e-9 {
            return None;
        }
        self.truth.get(k as usize)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(normal(rng), normal(rng), normal(rng))
}

/// Independent random stream `k` of the scenario seed.
fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

/// Ionospheric single-layer obliquity factor (350 km shell).
fn iono_obliquity(el: f64) -> f64 {
    let re = 6_371_000.0;
    let x = re * el.cos() / (re + 350_000.0);
    1.0 / (1.0 - x * x).sqrt()
}

/// Generates a scenario. Identical configurations give identical output.
pub fn simulate(config: &ScenarioConfig) -> Result<Scenario, SimError> {
    config.validate()?;
    let frame = LocalFrame::new(config.origin.geodetic());
    let gravity = gravity_ned(&config.origin.geodetic());
    let traj = Trajectory::new(config.trajectory.clone(), gravity.z);
    let dt = 1.0 / config.imu_rate;
    let n_imu = (config.duration * config.imu_rate).round() as usize;
    let noise = &config.noise;

    let mut bias_rng = stream(config.seed, 1);
    let mut imu_rng = stream(config.seed, 2);
    let mut clock_rng = stream(config.seed, 3);
    let mut gnss_rng = stream(config.seed, 4);

    // IMU bias at every IMU time
    let mut bias = if noise.imu_bias {
        ImuBias::new(
            normal3(&mut bias_rng) * noise.accel_bias_sigma,
            normal3(&mut bias_rng) * noise.gyro_bias_sigma,
        )
    } else {
        ImuBias::default()
    };
    let mut biases = Vec::with_capacity(n_imu + 1);
    biases.push(bias);
    for _ in 0..n_imu {
        if noise.imu_bias {
            let sdt = dt.sqrt();
            bias.accel += normal3(&mut bias_rng) * (noise.imu_params.accel_bias_rw * sdt);
            bias.gyro += normal3(&mut bias_rng) * (noise.imu_params.gyro_bias_rw * sdt);
        }
        biases.push(bias);
    }

    // receiver clock at every GNSS epoch
    let gnss_dt = 1.0 / config.gnss_rate;
    let n_gnss = (config.duration * config.gnss_rate).floor() as usize;
    let mut clocks = Vec::with_capacity(n_gnss + 1);
    let (mut b, mut d) = (config.clock.initial_bias, config.clock.initial_drift);
    for _ in 0..=n_gnss {
        clocks.push((b, d));
        b += d * gnss_dt;
        if noise.clock {
            b += normal(&mut clock_rng) * config.clock.bias_rw * gnss_dt.sqrt();
            d += normal(&mut clock_rng) * config.clock.drift_rw * gnss_dt.sqrt();
        }
    }
    let galileo = config.satellites.galileo > 0;
    let clock_at = |t: f64| {
        let k = ((t * config.gnss_rate + 1e-9).floor() as usize).min(n_gnss);
        let (b, d) = clocks[k];
        let mut c = ClockState {
            gps_bias: b + d * (t - k as f64 * gnss_dt),
            gps_drift: d,
            ..Default::default()
        };
        if galileo {
            c.inter_system_offsets
                .insert(Constellation::Galileo, config.clock.galileo_offset);
            c.inter_system_drifts.insert(Constellation::Galileo, 0.0);
        }
        c
    };

    // truth and IMU samples
    let mut truth = Vec::with_capacity(n_imu + 1);
    let mut imu = Vec::with_capacity(n_imu);
    for (k, bias) in biases.iter().enumerate() {
        let t = k as f64 * dt;
        let p = traj.sample(t);
        truth.push(NavState {
            timestamp: t,
            attitude: p.attitude,
            position: p.position,
            velocity: p.velocity,
            bias: *bias,
            clock: clock_at(t),
        });
        if k == 0 {
            continue;
        }
        let m = traj.sample(t - 0.5 * dt);
        let mut f = m.attitude.matrix().transpose() * (m.acceleration - gravity) + bias.accel;
        let mut w = m.angular_rate + bias.gyro;
        if noise.imu {
            f += normal3(&mut imu_rng) * (noise.imu_params.accel_noise_density / dt.sqrt());
            w += normal3(&mut imu_rng) * (noise.imu_params.gyro_noise_density / dt.sqrt());
        }
        imu.push(ImuSample::new(t, f, w));
    }

    // GNSS epochs
    let rotation = config.satellites.azimuth_rotation_deg.to_radians();
    let mut satellites =
        constellation::build(&frame, Constellation::Gps, config.satellites.gps, rotation);
    satellites.extend(constellation::build(
        &frame,
        Constellation::Galileo,
        config.satellites.galileo,
        rotation,
    ));
    let cutoff = config.satellites.cutoff_deg.to_radians();
    let mut gnss = Vec::with_capacity(n_gnss + 1);
    for k in 0..=n_gnss {
        let t = k as f64 * gnss_dt;
        let state = config
            .truth_index(t)
            .map(|i| &truth[i])
            .expect("epoch on the IMU grid");
        let rx = frame.to_ecef(&state.position);
        let rx_vel = frame.vec_to_ecef(&state.velocity);
        let rx_lla = ecef_to_lla(&rx).expect("receiver position");
        let up = frame.vec_to_ecef(&Vector3::new(0.0, 0.0, -1.0));
        let mut observations = Vec::new();
        for sat in &satellites {
            // light time
            let mut tau = 0.07;
            let (mut ps, mut vs) = sat.state(t - tau);
            for _ in 0..3 {
                tau = (ps - rx).norm() / SPEED_OF_LIGHT;
                (ps, vs) = sat.state(t - tau);
            }
            let los = ps - rx;
            let range = los.norm();
            let u = los / range;
            let el = u.dot(&up).asin();
            if el < cutoff {
                continue;
            }
            let clock = &state.clock;
            let sys_bias = clock.bias(sat.constellation);
            let tropo = if config.atmosphere.tropo {
                saastamoinen(el, &rx_lla, STANDARD_HUMIDITY).0
            } else {
                0.0
            };
            let iono = config.atmosphere.iono_zenith * iono_obliquity(el);
            let nlos: f64 = config
                .nlos
                .iter()
                .filter(|w| w.sat_id == sat.id && t >= w.start && t <= w.end)
                .map(|w| w.bias)
                .sum();
            let sigma_scale = 1.0 / el.sin();
            let (pr_noise, rr_noise) = if noise.gnss {
                (
                    normal(&mut gnss_rng) * noise.pseudorange_sigma * sigma_scale,
                    normal(&mut gnss_rng) * noise.range_rate_sigma * sigma_scale,
                )
            } else {
                (0.0, 0.0)
            };
            let pseudorange = range + sagnac_correction(&ps, &rx) + sys_bias + tropo + iono + nlos
                - sat.clock_bias
                + pr_noise;
            let sagnac_dot = OMEGA_EARTH
                * (vs.x * rx.y + ps.x * rx_vel.y - vs.y * rx.x - ps.y * rx_vel.x)
                / SPEED_OF_LIGHT;
            let rate = u.dot(&(vs - rx_vel)) + sagnac_dot + clock.drift(sat.constellation)
                - sat.clock_drift
                + rr_noise;
            observations.push(SatObservation {
                sat_id: sat.id.clone(),
                constellation: sat.constellation,
                pseudorange,
                pseudorange_rate: rate,
                sat_pos: ps,
                sat_vel: vs,
                sat_clock_bias: sat.clock_bias,
                sat_clock_drift: sat.clock_drift,
                tropo_delay: config.atmosphere.write_tropo.then_some(tropo),
                iono_delay: config.atmosphere.write_iono.then_some(iono),
                cn0: Some(35.0 + 15.0 * el.sin() - if nlos > 0.0 { 10.0 } else { 0.0 }),
                elevation: None,
            });
        }
        if let Some(o) = config.outages.iter().find(|o| t >= o.start && t <= o.end) {
            observations
                .sort_by(|a, b| (a.constellation, &a.sat_id).cmp(&(b.constellation, &b.sat_id)));
            observations.truncate(o.keep);
        }
        gnss.push(GnssEpoch {
            timestamp: t,
            observations,
        });
    }

    Ok(Scenario {
        config: config.clone(),
        frame,
        truth,
        imu,
        gnss,
        satellites,
    })
}

impl ScenarioConfig {
    fn truth_index(&self, t: f64) -> Option<usize> {
        let k = (t * self.imu_rate).round();
        ((k / self.imu_rate - t).abs() < 1e-9 && k >= 0.0).then_some(k as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnss::{apply_corrections, spp_solve, SppConfig};
    use crate::preint::PreintegratedDelta;

    #[test]
    fn deterministic_for_a_seed() {
        let c = ScenarioConfig {
            duration: 10.0,
            ..Default::default()
        };
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a.imu, b.imu);
        assert_eq!(a.gnss, b.gnss);
        let c2 = ScenarioConfig { seed: 2, ..c };
        assert_ne!(simulate(&c2).unwrap().imu, a.imu);
    }

    #[test]
    fn noise_switches_use_separate_streams() {
        let c = ScenarioConfig {
            duration: 5.0,
            ..Default::default()
        };
        let mut quiet_gnss = c.clone();
        quiet_gnss.noise.gnss = false;
        assert_eq!(
            simulate(&c).unwrap().imu,
            simulate(&quiet_gnss).unwrap().imu
        );
    }

    #[test]
    fn sizes_and_grid() {
        let s = simulate(&ScenarioConfig::noise_free(10.0)).unwrap();
        assert_eq!(s.truth.len(), 1001);
        assert_eq!(s.imu.len(), 1000);
        assert_eq!(s.gnss.len(), 11);
        assert!((s.imu[0].timestamp - 0.01).abs() < 1e-12);
        assert_eq!(s.gnss[3].observations.len(), 8);
        assert_eq!(s.truth_at(2.5).unwrap().timestamp, 2.5);
    }

    #[test]
    fn noise_free_imu_reproduces_truth() {
        let s = simulate(&ScenarioConfig::noise_free(20.0)).unwrap();
        let g = gravity_ned(&s.config.origin.geodetic());
        let noise = ImuNoiseParams::default();
        // integrate one second at a time from the true state
        for sec in 0..20 {
            let i0 = sec * 100;
            let mut d = PreintegratedDelta::new(ImuBias::default());
            for smp in &s.imu[i0..i0 + 100] {
                d.integrate_sample(smp, 0.01, &noise).unwrap();
            }
            let (a, b) = (&s.truth[i0], &s.truth[i0 + 100]);
            let (r, v, p) = d.predict(
                &a.attitude,
                &a.velocity,
                &a.position,
                &ImuBias::default(),
                &g,
            );
            assert!(
                (p - b.position).norm() < 1e-4,
                "sec {sec}: {}",
                (p - b.position).norm()
            );
            assert!((v - b.velocity).norm() < 1e-4);
            assert!(crate::geo::so3_log(&r.transpose().compose(&b.attitude)).norm() < 1e-5);
        }
    }

    #[test]
    fn noise_free_gnss_matches_the_measurement_model() {
        let mut c = ScenarioConfig::noise_free(5.0);
        c.satellites.galileo = 5;
        let s = simulate(&c).unwrap();
        for ep in &s.gnss {
            let truth = s.truth_at(ep.timestamp).unwrap();
            let rx = s.frame.to_ecef(&truth.position);
            let vel = s.frame.vec_to_ecef(&truth.velocity);
            for o in &ep.observations {
                let c = apply_corrections(o, &rx).unwrap();
                let pr = crate::gnss::pseudorange_residual(&rx, &truth.clock, &c);
                assert!(pr.residual.abs() < 1e-6, "{}", pr.residual);
                let dr = crate::gnss::doppler_residual(&rx, &vel, &truth.clock, &c);
                assert!(dr.residual.abs() < 1e-6);
            }
            let fix = spp_solve(
                ep,
                None,
                &SppConfig {
                    constellations: crate::gnss::ConstellationSet::new(&c.constellations())
                        .unwrap(),
                    ..Default::default()
                },
            );
            assert!((fix.fix().unwrap().position - rx).norm() < 1e-5);
        }
    }

    #[test]
    fn outages_and_nlos_are_applied() {
        let mut c = ScenarioConfig::noise_free(10.0);
        c.outages.push(Outage {
            start: 2.0,
            end: 3.0,
            keep: 3,
        });
        c.outages.push(Outage {
            start: 6.0,
            end: 6.0,
            keep: 0,
        });
        c.nlos.push(NlosWindow {
            sat_id: "G02".into(),
            start: 4.0,
            end: 5.0,
            bias: 50.0,
        });
        let s = simulate(&c).unwrap();
        assert_eq!(s.gnss[2].observations.len(), 3);
        assert_eq!(s.gnss[3].observations.len(), 3);
        assert!(s.gnss[6].observations.is_empty());
        let clean = simulate(&ScenarioConfig::noise_free(10.0)).unwrap();
        let pick = |s: &Scenario, k: usize| {
            s.gnss[k]
                .observations
                .iter()
                .find(|o| o.sat_id == "G02")
                .unwrap()
                .pseudorange
        };
        assert!((pick(&s, 4) - pick(&clean, 4) - 50.0).abs() < 1e-9);
        assert_eq!(pick(&s, 7), pick(&clean, 7));
    }

    #[test]
    fn bad_config_is_rejected() {
        let c = ScenarioConfig {
            imu_rate: 0.0,
            ..Default::default()
        };
        assert!(simulate(&c).is_err());
        let c = ScenarioConfig {
            gnss_rate: 3.0,
            imu_rate: 100.0,
            ..Default::default()
        };
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = ScenarioConfig::degraded(3, 300.0);
        let s = toml::to_string(&c).unwrap();
        let back: ScenarioConfig = toml::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
