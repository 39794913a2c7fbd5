//! Tightly coupled GNSS/IMU pipeline: builds one navigation state per GNSS
//! epoch, links states with IMU, bias and clock factors, attaches raw
//! pseudorange and range-rate factors, and solves causally with a fixed-lag
//! smoother.

mod config;
mod init;
mod state;

pub use config::{ClockModel, ClockNoise, EstimatorConfig, PriorConfig};
pub use init::{initial_attitude, level, AttitudeInit};
pub use state::NavState;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use thiserror::Error;

use crate::geo::{ecef_to_lla, ned_rotation, GeodeticPosition, LocalFrame, Rotation3};
use crate::gnss::{
    apply_corrections, spp_solve, ClockState, Constellation, ConstellationSet, DopplerFactor,
    GnssEpoch, GnssError, PseudorangeFactor, SppConfig, SppOutcome, SppSolution,
};
use crate::graph::{
    Factor, FixedLagSmoother, GraphError, LinearFactor, Loss, NoiseModel, Pose3, PriorFactor,
    Value, VariableBlock, VariableKey,
};
use crate::preint::{
    bias_random_walk_factor, ImuBias, ImuFactor, ImuSample, PreintError, Preintegrator,
};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),
    #[error("IMU sample at t={t} is not after the previous one at t={prev}")]
    ImuOutOfOrder { t: f64, prev: f64 },
    #[error("IMU sample at t={0} is not finite")]
    NonFiniteImu(f64),
    #[error("GNSS epoch at t={t} is not after the previous one at t={prev}")]
    EpochOutOfOrder { t: f64, prev: f64 },
    #[error("initialization failed: no usable SPP fix in {epochs} GNSS epochs")]
    InitializationFailed { epochs: usize },
    #[error(transparent)]
    Preint(#[from] PreintError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gnss(#[from] GnssError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolutionStatus {
    Valid,
    Unavailable,
    Diverged,
}

impl SolutionStatus {
    pub fn token(self) -> &'static str {
        match self {
            SolutionStatus::Valid => "valid",
            SolutionStatus::Unavailable => "unavailable",
            SolutionStatus::Diverged => "diverged",
        }
    }
}

/// Solution expressed in the local frame at its own position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSolution {
    pub position: GeodeticPosition,
    /// NED, m/s
    pub velocity: Vector3<f64>,
    /// roll, pitch, yaw, rad
    pub attitude: (f64, f64, f64),
}

/// Causal estimate reported at one GNSS epoch.
#[derive(Clone, Debug)]
pub struct EpochSolution {
    pub state: NavState,
    pub status: SolutionStatus,
    /// Navigation frame of `state`; `None` when no frame has been anchored.
    pub frame: Option<LocalFrame>,
    pub num_sats_used: BTreeMap<Constellation, usize>,
    /// s
    pub optimization_time: f64,
    /// Navigation-frame position covariance, m².
    pub position_covariance: Option<Matrix3<f64>>,
}

impl EpochSolution {
    fn unavailable(t: f64, frame: Option<LocalFrame>) -> Self {
        Self {
            state: NavState::undefined(t),
            status: SolutionStatus::Unavailable,
            frame,
            num_sats_used: BTreeMap::new(),
            optimization_time: 0.0,
            position_covariance: None,
        }
    }

    pub fn timestamp(&self) -> f64 {
        self.state.timestamp
    }

    pub fn total_sats(&self) -> usize {
        self.num_sats_used.values().sum()
    }

    /// Position, velocity and attitude expressed at the solution point:
    /// geodetic position, velocity in the local NED frame there, and
    /// roll/pitch/yaw of body to that frame (NaN when undefined).
    pub fn at_point(&self) -> Option<PointSolution> {
        let frame = self.frame.as_ref()?;
        let s = &self.state;
        if !s
            .position
            .iter()
            .chain(s.velocity.iter())
            .all(|x| x.is_finite())
        {
            return None;
        }
        let position = ecef_to_lla(&frame.to_ecef(&s.position)).ok()?;
        let to_point = ned_rotation(&position).matrix().transpose() * frame.r_ne.matrix();
        let attitude = if s.attitude.matrix().iter().all(|x| x.is_finite()) {
            Rotation3::from_matrix_unchecked(to_point * s.attitude.matrix()).euler()
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        Some(PointSolution {
            position,
            velocity: to_point * s.velocity,
            attitude,
        })
    }

    /// ECEF position, if the state is defined.
    pub fn position_ecef(&self) -> Option<Vector3<f64>> {
        let f = self.frame.as_ref()?;
        self.state
            .position
            .iter()
            .all(|x| x.is_finite())
            .then(|| f.to_ecef(&self.state.position))
    }
}

/// Running state of an anchored, initialized window.
struct Active {
    frame: LocalFrame,
    gravity: Vector3<f64>,
    smoother: FixedLagSmoother,
    preint: Preintegrator,
    epoch: u32,
    state: NavState,
}

/// Streaming tightly coupled estimator. Feed IMU samples and GNSS epochs in
/// time order; each epoch yields one [`EpochSolution`].
pub struct Estimator {
    config: EstimatorConfig,
    set: ConstellationSet,
    spp: SppConfig,
    loss: Loss,
    imu_buffer: VecDeque<ImuSample>,
    last_imu: Option<f64>,
    last_epoch: Option<f64>,
    /// Previous SPP fix before initialization: time, ECEF position and velocity.
    prev_fix: Option<(f64, Vector3<f64>, Option<Vector3<f64>>)>,
    /// Frame anchored at the first SPP fix since start or the last divergence.
    anchor: Option<LocalFrame>,
    active: Option<Active>,
    next_epoch: u32,
    failed_init_epochs: usize,
    last_valid: Option<(NavState, LocalFrame)>,
    recovered_bias: Option<ImuBias>,
}

impl Estimator {
    pub fn new(config: EstimatorConfig) -> Result<Self, EstimatorError> {
        config.validate()?;
        let set = config.constellation_set()?;
        let spp = SppConfig {
            constellations: set.clone(),
            elevation_mask: config.elevation_mask_deg.to_radians(),
            noise: config.gnss,
            ..Default::default()
        };
        let loss = if config.robust {
            Loss::Huber(config.huber_k)
        } else {
            Loss::None
        };
        Ok(Self {
            config,
            set,
            spp,
            loss,
            imu_buffer: VecDeque::new(),
            last_imu: None,
            last_epoch: None,
            prev_fix: None,
            anchor: None,
            active: None,
            next_epoch: 0,
            failed_init_epochs: 0,
            last_valid: None,
            recovered_bias: None,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn is_initialized(&self) -> bool {
        self.active.is_some()
    }

    /// Navigation frame of the current window.
    pub fn frame(&self) -> Option<&LocalFrame> {
        self.active.as_ref().map(|a| &a.frame)
    }

    /// Latest estimate of the newest state.
    pub fn current_state(&self) -> Option<&NavState> {
        self.active.as_ref().map(|a| &a.state)
    }

    /// Number of GNSS epochs seen so far without being able to initialize.
    pub fn failed_init_epochs(&self) -> usize {
        self.failed_init_epochs
    }

    pub fn process_imu(&mut self, sample: &ImuSample) -> Result<(), EstimatorError> {
        if !sample.is_finite() {
            return Err(EstimatorError::NonFiniteImu(sample.timestamp));
        }
        if let Some(prev) = self.last_imu {
            if sample.timestamp <= prev {
                return Err(EstimatorError::ImuOutOfOrder {
                    t: sample.timestamp,
                    prev,
                });
            }
        }
        self.last_imu = Some(sample.timestamp);
        self.imu_buffer.push_back(*sample);
        let keep_from = sample.timestamp - self.config.init_window - 0.5;
        while self
            .imu_buffer
            .front()
            .is_some_and(|s| s.timestamp < keep_from)
        {
            self.imu_buffer.pop_front();
        }
        if let Some(a) = &mut self.active {
            a.preint.push(sample)?;
        }
        Ok(())
    }

    pub fn process_gnss_epoch(
        &mut self,
        epoch: &GnssEpoch,
    ) -> Result<EpochSolution, EstimatorError> {
        let t = epoch.timestamp;
        if let Some(prev) = self.last_epoch {
            if !(t > prev) {
                return Err(EstimatorError::EpochOutOfOrder { t, prev });
            }
        }
        self.last_epoch = Some(t);
        if self.active.is_none() {
            return self.try_initialize(epoch);
        }
        self.step(epoch)
    }

    fn prior_noise_pose(&self, yaw_sigma: f64) -> Result<NoiseModel, GraphError> {
        let p = &self.config.prior;
        let rp = p.roll_pitch_sigma_deg.to_radians();
        NoiseModel::from_sigmas(&[
            rp,
            rp,
            yaw_sigma,
            p.position_sigma,
            p.position_sigma,
            p.position_sigma,
        ])
    }

    fn try_initialize(&mut self, epoch: &GnssEpoch) -> Result<EpochSolution, EstimatorError> {
        let t = epoch.timestamp;
        let hint = self.prev_fix.map(|f| f.1);
        let fix = match spp_solve(epoch, hint, &self.spp) {
            SppOutcome::Fix(f) => f,
            SppOutcome::Unavailable(why) => {
                log::debug!("t={t}: no SPP fix for initialization ({why})");
                return self.init_failed(t);
            }
        };
        let window: Vec<ImuSample> = self
            .imu_buffer
            .iter()
            .filter(|s| s.timestamp > t - self.config.init_window - 1e-9 && s.timestamp <= t + 1e-9)
            .copied()
            .collect();
        let history: Vec<ImuSample> = self
            .imu_buffer
            .iter()
            .filter(|s| s.timestamp <= t + 1e-9)
            .copied()
            .collect();
        let covered = window
            .first()
            .is_some_and(|s| s.timestamp <= t - self.config.init_window + 0.05)
            && window.last().is_some_and(|s| s.timestamp >= t - 0.05);
        let prev = self.prev_fix.replace((t, fix.position, fix.velocity));
        let frame = match self.anchor {
            Some(f) => f,
            None => {
                let f = LocalFrame::from_ecef(&fix.position).map_err(|e| {
                    EstimatorError::InvalidConfig(format!("SPP fix cannot anchor a frame: {e}"))
                })?;
                self.anchor = Some(f);
                f
            }
        };
        if !covered {
            log::debug!(
                "t={t}: waiting for {} s of IMU data",
                self.config.init_window
            );
            return self.init_failed(t);
        }
        let prev_vel = match prev {
            Some((tp, _, Some(vp))) if t - tp > 0.0 && t - tp <= 2.0 => {
                Some((tp, frame.vec_to_ned(&vp)))
            }
            _ => None,
        };
        self.install(epoch, &fix, frame, &history, prev_vel)
    }

    fn init_failed(&mut self, t: f64) -> Result<EpochSolution, EstimatorError> {
        self.failed_init_epochs += 1;
        if self.failed_init_epochs > self.config.init_max_epochs && self.last_valid.is_none() {
            return Err(EstimatorError::InitializationFailed {
                epochs: self.failed_init_epochs,
            });
        }
        Ok(match &self.last_valid {
            Some((s, f)) => EpochSolution {
                state: NavState {
                    timestamp: t,
                    ..s.clone()
                },
                status: SolutionStatus::Diverged,
                frame: Some(*f),
                num_sats_used: BTreeMap::new(),
                optimization_time: 0.0,
                position_covariance: None,
            },
            None => EpochSolution::unavailable(t, None),
        })
    }

    /// Installs the first state at the SPP fix with its priors and solves it
    /// together with the epoch's GNSS factors.
    fn install(
        &mut self,
        epoch: &GnssEpoch,
        fix: &SppSolution,
        frame: LocalFrame,
        history: &[ImuSample],
        prev_vel: Option<(f64, Vector3<f64>)>,
    ) -> Result<EpochSolution, EstimatorError> {
        let t = epoch.timestamp;
        let cfg = self.config.clone();
        let p = &cfg.prior;
        let gravity = frame.gravity();
        let vel = fix.velocity.map(|v| frame.vec_to_ned(&v));
        let heading = cfg.heading_init.then_some(cfg.heading_speed_threshold);
        let init = initial_attitude(
            history,
            t,
            cfg.init_window,
            vel,
            prev_vel,
            &gravity,
            &cfg.imu,
            heading,
        )?;
        let yaw_sigma = if init.yaw_known {
            p.yaw_sigma_deg.to_radians()
        } else {
            std::f64::consts::PI
        };
        let bias = self.recovered_bias.take().unwrap_or_default();
        let mut state = NavState {
            timestamp: t,
            attitude: init.attitude,
            position: frame.to_ned(&fix.position),
            velocity: vel.unwrap_or_else(Vector3::zeros),
            bias,
            clock: fix.clock.clone(),
        };
        for c in self.set.iter().skip(1) {
            state.clock.inter_system_offsets.entry(c).or_insert(0.0);
            state.clock.inter_system_drifts.entry(c).or_insert(0.0);
        }

        let e = self.next_epoch;
        self.next_epoch += 1;
        let n = self.set.len();
        let (cb, cd) = state.clock.to_vectors(&self.set);
        let mut cb_sig = vec![p.inter_system_sigma; n];
        cb_sig[0] = p.clock_bias_sigma;
        let mut cd_sig = vec![p.inter_system_drift_sigma; n];
        cd_sig[0] = p.clock_drift_sigma;
        let vel_sigma = if vel.is_some() {
            p.velocity_sigma
        } else {
            p.velocity_sigma.max(10.0)
        };
        let pose = Value::Pose(Pose3::new(state.attitude, state.position));
        let v = Value::vector(state.velocity.as_slice());
        let b = Value::vector(bias.to_vector().as_slice());
        let (ab, gb) = (p.accel_bias_sigma, p.gyro_bias_sigma);
        let mut factors: Vec<Arc<dyn Factor>> = vec![
            Arc::new(PriorFactor::new(
                VariableKey::pose(e),
                pose.clone(),
                self.prior_noise_pose(yaw_sigma)?,
            )?),
            Arc::new(PriorFactor::new(
                VariableKey::velocity(e),
                v.clone(),
                NoiseModel::isotropic(3, vel_sigma)?,
            )?),
            Arc::new(PriorFactor::new(
                VariableKey::imu_bias(e),
                b.clone(),
                NoiseModel::from_sigmas(&[ab, ab, ab, gb, gb, gb])?,
            )?),
            Arc::new(PriorFactor::new(
                VariableKey::clock_bias(e),
                Value::vector(&cb),
                NoiseModel::from_sigmas(&cb_sig)?,
            )?),
            Arc::new(PriorFactor::new(
                VariableKey::clock_drift(e),
                Value::vector(&cd),
                NoiseModel::from_sigmas(&cd_sig)?,
            )?),
        ];
        let (gnss, used) = self.gnss_factors(e, epoch, &frame, &frame.to_ecef(&state.position))?;
        factors.extend(gnss);
        let blocks = state_blocks(e, &state, &self.set);

        let mut smoother = FixedLagSmoother::new(cfg.lag, cfg.solver.clone())?;
        let update = smoother.update(t, blocks, factors)?;
        let mut preint = Preintegrator::new(cfg.imu, t, bias)?;
        if let Some(last) = history.last() {
            preint.set_last_sample(*last);
        }
        let state = read_state(&smoother, e, t, &self.set);
        log::info!(
            "t={t}: initialized in the frame at {:.6}°, {:.6}° (yaw {:.1}°, sigma {:.1}°)",
            frame.origin.latitude.to_degrees(),
            frame.origin.longitude.to_degrees(),
            init.attitude.euler().2.to_degrees(),
            yaw_sigma.to_degrees()
        );
        self.active = Some(Active {
            frame,
            gravity,
            smoother,
            preint,
            epoch: e,
            state,
        });
        self.prev_fix = None;
        Ok(self.finish_epoch(
            update.report.final_cost,
            update.report.converged,
            update.elapsed.as_secs_f64(),
            used,
        ))
    }

    /// Adds the next state and its factors, then solves the window.
    fn step(&mut self, epoch: &GnssEpoch) -> Result<EpochSolution, EstimatorError> {
        let t = epoch.timestamp;
        let set = self.set.clone();
        let cfg = self.config.clone();
        let a = self.active.as_mut().expect("initialized");
        let prev = a.state.clone();
        let dt = t - prev.timestamp;
        let delta = a.preint.finish(t, prev.bias)?;
        let (r, v, p) = delta.predict(
            &prev.attitude,
            &prev.velocity,
            &prev.position,
            &prev.bias,
            &a.gravity,
        );
        let mut clock = prev.clock.clone();
        clock.gps_bias += clock.gps_drift * dt;
        for (c, off) in clock.inter_system_offsets.iter_mut() {
            *off += prev
                .clock
                .inter_system_drifts
                .get(c)
                .copied()
                .unwrap_or(0.0)
                * dt;
        }
        let predicted = NavState {
            timestamp: t,
            attitude: r,
            position: p,
            velocity: v,
            bias: prev.bias,
            clock,
        };
        let (i, j) = (a.epoch, self.next_epoch);
        let mut factors: Vec<Arc<dyn Factor>> = vec![
            Arc::new(ImuFactor::new(i, j, delta, a.gravity, dt)?),
            Arc::new(bias_random_walk_factor(i, j, &cfg.imu, dt)?),
            Arc::new(clock_factor(i, j, set.len(), dt, &cfg.clock)?),
        ];
        let frame = a.frame;
        let (gnss, used) =
            self.gnss_factors(j, epoch, &frame, &frame.to_ecef(&predicted.position))?;
        factors.extend(gnss);
        self.next_epoch += 1;

        let a = self.active.as_mut().expect("initialized");
        let update = match a
            .smoother
            .update(t, state_blocks(j, &predicted, &set), factors)
        {
            Ok(u) => u,
            Err(
                e @ (GraphError::NonFiniteCost
                | GraphError::NonFiniteFactor { .. }
                | GraphError::SingularSystem(_)),
            ) => {
                log::warn!("t={t}: solver failed ({e}), re-anchoring at the next SPP fix");
                return Ok(self.diverge(t));
            }
            Err(e) => return Err(e.into()),
        };
        a.epoch = j;
        a.state = read_state(&a.smoother, j, t, &set);
        Ok(self.finish_epoch(
            update.report.final_cost,
            update.report.converged,
            update.elapsed.as_secs_f64(),
            used,
        ))
    }

    fn finish_epoch(
        &mut self,
        cost: f64,
        converged: bool,
        elapsed: f64,
        used: BTreeMap<Constellation, usize>,
    ) -> EpochSolution {
        let a = self.active.as_ref().expect("initialized");
        let t = a.state.timestamp;
        if !cost.is_finite() || cost > self.config.divergence_cost || !a.state.is_finite() {
            log::warn!("t={t}: window cost {cost:e} exceeds the divergence limit, re-anchoring");
            return self.diverge(t);
        }
        if !converged {
            log::warn!("t={t}: optimization did not converge");
            let mut s = match &self.last_valid {
                Some((s, f)) => EpochSolution {
                    state: NavState {
                        timestamp: t,
                        ..s.clone()
                    },
                    status: SolutionStatus::Diverged,
                    frame: Some(*f),
                    num_sats_used: used,
                    optimization_time: elapsed,
                    position_covariance: None,
                },
                None => EpochSolution::unavailable(t, Some(a.frame)),
            };
            s.optimization_time = elapsed;
            return s;
        }
        let position_covariance = if self.config.compute_covariance {
            match a.smoother.marginal_covariance(&VariableKey::pose(a.epoch)) {
                Ok(c) => Some(c.fixed_view::<3, 3>(3, 3).into()),
                Err(e) => {
                    log::warn!("t={t}: no position covariance ({e})");
                    None
                }
            }
        } else {
            None
        };
        self.last_valid = Some((a.state.clone(), a.frame));
        EpochSolution {
            state: a.state.clone(),
            status: SolutionStatus::Valid,
            frame: Some(a.frame),
            num_sats_used: used,
            optimization_time: elapsed,
            position_covariance,
        }
    }

    /// Drops the window, keeping the bias estimate for the next anchor.
    fn diverge(&mut self, t: f64) -> EpochSolution {
        let a = self.active.take().expect("initialized");
        self.recovered_bias = self
            .last_valid
            .as_ref()
            .map(|(s, _)| s.bias)
            .or(Some(a.state.bias));
        self.prev_fix = None;
        self.anchor = None;
        match &self.last_valid {
            Some((s, f)) => EpochSolution {
                state: NavState {
                    timestamp: t,
                    ..s.clone()
                },
                status: SolutionStatus::Diverged,
                frame: Some(*f),
                num_sats_used: BTreeMap::new(),
                optimization_time: 0.0,
                position_covariance: None,
            },
            None => EpochSolution {
                status: SolutionStatus::Diverged,
                ..EpochSolution::unavailable(t, Some(a.frame))
            },
        }
    }

    /// Pseudorange and range-rate factors for every usable observation,
    /// corrected at the approximate receiver position `rx`.
    fn gnss_factors(
        &self,
        e: u32,
        epoch: &GnssEpoch,
        frame: &LocalFrame,
        rx: &Vector3<f64>,
    ) -> Result<(Vec<Arc<dyn Factor>>, BTreeMap<Constellation, usize>), EstimatorError> {
        let mut out: Vec<Arc<dyn Factor>> = Vec::new();
        let mut used = BTreeMap::new();
        let mask = self.config.elevation_mask_deg.to_radians();
        let n = self.set.len();
        for raw in &epoch.observations {
            let Some(slot) = self.set.slot(raw.constellation) else {
                continue;
            };
            if !raw.is_plausible() {
                log::debug!(
                    "t={}: {} rejected as implausible",
                    epoch.timestamp,
                    raw.sat_id
                );
                continue;
            }
            let obs = match apply_corrections(raw, rx) {
                Ok(o) => o,
                Err(err) => {
                    log::warn!("t={}: {err}", epoch.timestamp);
                    continue;
                }
            };
            if obs.elevation < mask {
                continue;
            }
            let sigma = self.config.gnss.pseudorange(&obs);
            let rate_sigma = self.config.gnss.range_rate(&obs);
            *used.entry(obs.constellation).or_insert(0) += 1;
            if self.config.use_doppler && obs.pseudorange_rate.is_finite() {
                out.push(Arc::new(DopplerFactor::new(
                    e,
                    obs.clone(),
                    *frame,
                    slot,
                    n,
                    rate_sigma,
                    self.loss,
                )?));
            }
            out.push(Arc::new(PseudorangeFactor::new(
                e, obs, *frame, slot, n, sigma, self.loss,
            )?));
        }
        Ok((out, used))
    }
}

fn state_blocks(e: u32, s: &NavState, set: &ConstellationSet) -> Vec<VariableBlock> {
    let (cb, cd) = s.clock.to_vectors(set);
    vec![
        VariableBlock::new(
            VariableKey::pose(e),
            Value::Pose(Pose3::new(s.attitude, s.position)),
        ),
        VariableBlock::new(
            VariableKey::velocity(e),
            Value::vector(s.velocity.as_slice()),
        ),
        VariableBlock::new(
            VariableKey::imu_bias(e),
            Value::vector(s.bias.to_vector().as_slice()),
        ),
        VariableBlock::new(VariableKey::clock_bias(e), Value::vector(&cb)),
        VariableBlock::new(VariableKey::clock_drift(e), Value::vector(&cd)),
    ]
}

fn read_state(smoother: &FixedLagSmoother, e: u32, t: f64, set: &ConstellationSet) -> NavState {
    let vals = smoother.values();
    let pose = vals.pose(&VariableKey::pose(e)).expect("pose in window");
    let v = vals
        .vector(&VariableKey::velocity(e))
        .expect("velocity in window");
    let b = vals
        .vector(&VariableKey::imu_bias(e))
        .expect("bias in window");
    let cb = vals
        .vector(&VariableKey::clock_bias(e))
        .expect("clock in window");
    let cd = vals
        .vector(&VariableKey::clock_drift(e))
        .expect("drift in window");
    NavState {
        timestamp: t,
        attitude: pose.rotation,
        position: pose.translation,
        velocity: Vector3::new(v[0], v[1], v[2]),
        bias: ImuBias::from_slice(b.as_slice()),
        clock: ClockState::from_vectors(set, cb.as_slice(), cd.as_slice()),
    }
}

/// Receiver clock process factor between epochs `i` and `j` on
/// `[bias_i, drift_i, bias_j, drift_j]`, one bias/drift pair per clock slot.
pub fn clock_factor(
    i: u32,
    j: u32,
    n: usize,
    dt: f64,
    noise: &ClockNoise,
) -> Result<LinearFactor, GraphError> {
    let eye = DMatrix::<f64>::identity(n, n);
    let mut a_bi = DMatrix::zeros(2 * n, n);
    let mut a_di = DMatrix::zeros(2 * n, n);
    let mut a_bj = DMatrix::zeros(2 * n, n);
    let mut a_dj = DMatrix::zeros(2 * n, n);
    a_bi.view_mut((0, 0), (n, n)).copy_from(&(-&eye));
    a_bj.view_mut((0, 0), (n, n)).copy_from(&eye);
    a_dj.view_mut((n, 0), (n, n)).copy_from(&eye);
    a_di.view_mut((n, 0), (n, n)).copy_from(&(-&eye));
    let integrated = noise.model == ClockModel::DriftIntegrated;
    if integrated {
        a_di.view_mut((0, 0), (n, n)).copy_from(&(-&eye * dt));
    }
    let mut cov = DMatrix::zeros(2 * n, 2 * n);
    for s in 0..n {
        let (qb, qd) = if s == 0 {
            (noise.bias_rw.powi(2), noise.drift_rw.powi(2))
        } else {
            (
                noise.inter_system_rw.powi(2),
                noise.inter_system_drift_rw.powi(2),
            )
        };
        if integrated {
            cov[(s, s)] = qb * dt + qd * dt.powi(3) / 3.0;
            cov[(s, n + s)] = qd * dt * dt / 2.0;
            cov[(n + s, s)] = qd * dt * dt / 2.0;
        } else {
            cov[(s, s)] = qb * dt;
        }
        cov[(n + s, n + s)] = qd * dt;
    }
    LinearFactor::new(
        vec![
            VariableKey::clock_bias(i),
            VariableKey::clock_drift(i),
            VariableKey::clock_bias(j),
            VariableKey::clock_drift(j),
        ],
        vec![a_bi, a_di, a_bj, a_dj],
        DVector::zeros(2 * n),
        NoiseModel::from_covariance(&cov)?,
    )
}

/// Timing and status summary of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub epochs: usize,
    pub valid: usize,
    pub unavailable: usize,
    pub diverged: usize,
    /// s
    pub mean_optimization_time: f64,
    /// s
    pub p95_optimization_time: f64,
}

impl RunReport {
    pub fn from_solutions(solutions: &[EpochSolution]) -> Self {
        let count = |st| solutions.iter().filter(|s| s.status == st).count();
        let mut times: Vec<f64> = solutions
            .iter()
            .filter(|s| s.status == SolutionStatus::Valid)
            .map(|s| s.optimization_time)
            .collect();
        times.sort_by(f64::total_cmp);
        let mean = if times.is_empty() {
            0.0
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        };
        let p95 = if times.is_empty() {
            0.0
        } else {
            times[((times.len() as f64 * 0.95).ceil() as usize).clamp(1, times.len()) - 1]
        };
        Self {
            epochs: solutions.len(),
            valid: count(SolutionStatus::Valid),
            unavailable: count(SolutionStatus::Unavailable),
            diverged: count(SolutionStatus::Diverged),
            mean_optimization_time: mean,
            p95_optimization_time: p95,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub solutions: Vec<EpochSolution>,
    pub report: RunReport,
}

/// Runs the tightly coupled estimator over time-sorted streams. IMU samples
/// up to and including an epoch's timestamp are processed before the epoch.
pub fn run_dataset(
    imu: &[ImuSample],
    gnss: &[GnssEpoch],
    config: &EstimatorConfig,
) -> Result<RunOutput, EstimatorError> {
    let mut est = Estimator::new(config.clone())?;
    let mut solutions = Vec::with_capacity(gnss.len());
    let mut k = 0;
    for epoch in gnss {
        while k < imu.len() && imu[k].timestamp <= epoch.timestamp {
            est.process_imu(&imu[k])?;
            k += 1;
        }
        solutions.push(est.process_gnss_epoch(epoch)?);
    }
    if !solutions
        .iter()
        .any(|s| s.status != SolutionStatus::Unavailable)
    {
        return Err(EstimatorError::InitializationFailed {
            epochs: est.failed_init_epochs(),
        });
    }
    let report = RunReport::from_solutions(&solutions);
    Ok(RunOutput { solutions, report })
}

/// GNSS-only baseline: an independent SPP fix per epoch, expressed in a frame
/// anchored at the first fix.
pub fn run_spp(gnss: &[GnssEpoch], config: &EstimatorConfig) -> Result<RunOutput, EstimatorError> {
    config.validate()?;
    let spp = SppConfig {
        constellations: config.constellation_set()?,
        elevation_mask: config.elevation_mask_deg.to_radians(),
        noise: config.gnss,
        ..Default::default()
    };
    let mut frame: Option<LocalFrame> = None;
    let mut hint = None;
    let mut solutions = Vec::with_capacity(gnss.len());
    for epoch in gnss {
        let t = epoch.timestamp;
        let start = std::time::Instant::now();
        let outcome = spp_solve(epoch, hint, &spp);
        let elapsed = start.elapsed().as_secs_f64();
        let SppOutcome::Fix(fix) = outcome else {
            solutions.push(EpochSolution::unavailable(t, frame));
            continue;
        };
        hint = Some(fix.position);
        let f = match frame {
            Some(f) => f,
            None => {
                let f = LocalFrame::from_ecef(&fix.position).map_err(|e| {
                    EstimatorError::InvalidConfig(format!("SPP fix cannot anchor a frame: {e}"))
                })?;
                frame = Some(f);
                f
            }
        };
        let mut used = BTreeMap::new();
        for id in &fix.satellites {
            if let Some(o) = epoch.observations.iter().find(|o| &o.sat_id == id) {
                *used.entry(o.constellation).or_insert(0) += 1;
            }
        }
        let mut state = NavState::undefined(t);
        state.position = f.to_ned(&fix.position);
        state.velocity = fix
            .velocity
            .map(|v| f.vec_to_ned(&v))
            .unwrap_or_else(|| Vector3::repeat(f64::NAN));
        state.clock = fix.clock.clone();
        solutions.push(EpochSolution {
            state,
            status: SolutionStatus::Valid,
            frame: Some(f),
            num_sats_used: used,
            optimization_time: elapsed,
            position_covariance: None,
        });
    }
    let report = RunReport::from_solutions(&solutions);
    Ok(RunOutput { solutions, report })
}

#[cfg(test)]
mod tests;
