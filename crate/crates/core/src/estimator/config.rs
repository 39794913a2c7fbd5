use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::gnss::{Constellation, ConstellationSet, MeasurementNoise};
use crate::graph::{SolverConfig, DEFAULT_HUBER_K};
use crate::preint::ImuNoiseParams;

/// Prior sigmas installed on the first state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// m
    pub position_sigma: f64,
    /// m/s
    pub velocity_sigma: f64,
    pub roll_pitch_sigma_deg: f64,
    /// Used when the heading comes from the SPP velocity; otherwise yaw gets
    /// a sigma of π.
    pub yaw_sigma_deg: f64,
    /// m/s²
    pub accel_bias_sigma: f64,
    /// rad/s
    pub gyro_bias_sigma: f64,
    /// m
    pub clock_bias_sigma: f64,
    /// m/s
    pub clock_drift_sigma: f64,
    /// m
    pub inter_system_sigma: f64,
    /// m/s
    pub inter_system_drift_sigma: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            position_sigma: 10.0,
            velocity_sigma: 1.0,
            roll_pitch_sigma_deg: 2.0,
            yaw_sigma_deg: 5.0,
            accel_bias_sigma: 0.1,
            gyro_bias_sigma: 0.01,
            clock_bias_sigma: 10.0,
            clock_drift_sigma: 1.0,
            inter_system_sigma: 100.0,
            inter_system_drift_sigma: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockModel {
    /// Bias integrates the drift: `b_j = b_i + d_i Δt + w_b`, `d_j = d_i + w_d`.
    DriftIntegrated,
    /// Independent random walks on bias and drift.
    RandomWalk,
}

/// Receiver clock process noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockNoise {
    pub model: ClockModel,
    /// m/√s
    pub bias_rw: f64,
    /// m/s/√s
    pub drift_rw: f64,
    /// inter-system offset walk, m/√s
    pub inter_system_rw: f64,
    /// inter-system drift walk, m/s/√s
    pub inter_system_drift_rw: f64,
}

impl Default for ClockNoise {
    fn default() -> Self {
        Self {
            model: ClockModel::DriftIntegrated,
            bias_rw: 5.0,
            drift_rw: 0.5,
            inter_system_rw: 0.05,
            inter_system_drift_rw: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Smoothing window, s; `inf` keeps every state (batch mode).
    pub lag: f64,
    pub constellations: Vec<Constellation>,
    pub elevation_mask_deg: f64,
    pub use_doppler: bool,
    /// Huber loss on GNSS factors.
    pub robust: bool,
    pub huber_k: f64,
    pub imu: ImuNoiseParams,
    pub gnss: MeasurementNoise,
    pub clock: ClockNoise,
    pub prior: PriorConfig,
    pub solver: SolverConfig,
    /// Accelerometer leveling window before the first state, s.
    pub init_window: f64,
    /// GNSS epochs without a usable SPP fix before initialization fails.
    pub init_max_epochs: usize,
    /// Take the initial yaw from the SPP velocity heading.
    pub heading_init: bool,
    /// Minimum horizontal speed for the heading initialization, m/s.
    pub heading_speed_threshold: f64,
    pub compute_covariance: bool,
    /// Write measured optimization times into solution files.
    pub record_timing: bool,
    /// Final cost above which the window is considered diverged.
    pub divergence_cost: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            lag: 30.0,
            constellations: vec![Constellation::Gps],
            elevation_mask_deg: 10.0,
            use_doppler: true,
            robust: false,
            huber_k: DEFAULT_HUBER_K,
            imu: ImuNoiseParams::default(),
            gnss: MeasurementNoise::default(),
            clock: ClockNoise::default(),
            prior: PriorConfig::default(),
            solver: SolverConfig::default(),
            init_window: 1.0,
            init_max_epochs: 60,
            heading_init: true,
            heading_speed_threshold: 2.0,
            compute_covariance: true,
            record_timing: false,
            divergence_cost: 1e12,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |s: &str| Err(EstimatorError::InvalidConfig(s.to_string()));
        if !(self.lag > 0.0) {
            return bad("lag must be positive");
        }
        let p = &self.prior;
        let c = &self.clock;
        for (name, v) in [
            ("prior.position_sigma", p.position_sigma),
            ("prior.velocity_sigma", p.velocity_sigma),
            ("prior.roll_pitch_sigma_deg", p.roll_pitch_sigma_deg),
            ("prior.yaw_sigma_deg", p.yaw_sigma_deg),
            ("prior.accel_bias_sigma", p.accel_bias_sigma),
            ("prior.gyro_bias_sigma", p.gyro_bias_sigma),
            ("prior.clock_bias_sigma", p.clock_bias_sigma),
            ("prior.clock_drift_sigma", p.clock_drift_sigma),
            ("prior.inter_system_sigma", p.inter_system_sigma),
            ("prior.inter_system_drift_sigma", p.inter_system_drift_sigma),
            ("clock.bias_rw", c.bias_rw),
            ("clock.drift_rw", c.drift_rw),
            ("clock.inter_system_rw", c.inter_system_rw),
            ("clock.inter_system_drift_rw", c.inter_system_drift_rw),
            ("huber_k", self.huber_k),
            ("init_window", self.init_window),
            ("divergence_cost", self.divergence_cost),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive and finite"));
            }
        }
        if !(self.elevation_mask_deg.is_finite() && (0.0..90.0).contains(&self.elevation_mask_deg))
        {
            return bad("elevation_mask_deg must lie in [0, 90)");
        }
        self.imu
            .validate()
            .map_err(|e| EstimatorError::InvalidConfig(e.to_string()))?;
        self.gnss
            .validate()
            .map_err(|e| EstimatorError::InvalidConfig(e.to_string()))?;
        self.solver
            .validate()
            .map_err(|e| EstimatorError::InvalidConfig(e.to_string()))?;
        self.constellation_set()?;
        Ok(())
    }

    pub fn constellation_set(&self) -> Result<ConstellationSet, EstimatorError> {
        ConstellationSet::new(&self.constellations)
            .map_err(|e| EstimatorError::InvalidConfig(e.to_string()))
    }
}
