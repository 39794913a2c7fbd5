//! Accuracy, availability and timing metrics against ground truth.

use nalgebra::Vector3;
use thiserror::Error;

use crate::estimator::{
    run_dataset, EpochSolution, EstimatorConfig, EstimatorError, NavState, SolutionStatus,
};
use crate::geo::{ecef_to_lla, LocalFrame};
use crate::gnss::GnssEpoch;
use crate::preint::ImuSample;
use crate::sim::Scenario;

/// Nearest-neighbor association window between solution and truth, s.
pub const ASSOCIATION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no aligned epochs between truth and solution")]
    NoAlignedEpochs,
    #[error("no valid epochs under the mask")]
    NoEpochs,
    #[error("empty series")]
    EmptySeries,
    #[error("truth timestamps are not increasing at t={0}")]
    UnsortedTruth(f64),
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Time-tagged ECEF position (and optionally velocity) from truth or a
/// solution file.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionRecord {
    pub timestamp: f64,
    pub valid: bool,
    pub position: Vector3<f64>,
    pub velocity: Option<Vector3<f64>>,
    /// s
    pub optimization_time: f64,
}

impl PositionRecord {
    pub fn from_nav(state: &NavState, frame: &LocalFrame) -> Self {
        Self {
            timestamp: state.timestamp,
            valid: true,
            position: frame.to_ecef(&state.position),
            velocity: Some(frame.vec_to_ecef(&state.velocity)),
            optimization_time: 0.0,
        }
    }

    pub fn from_solution(s: &EpochSolution) -> Self {
        let position = s.position_ecef();
        let velocity = match (&s.frame, position) {
            (Some(f), Some(_)) if s.state.velocity.iter().all(|x| x.is_finite()) => {
                Some(f.vec_to_ecef(&s.state.velocity))
            }
            _ => None,
        };
        Self {
            timestamp: s.timestamp(),
            valid: s.status == SolutionStatus::Valid && position.is_some(),
            position: position.unwrap_or_else(|| Vector3::repeat(f64::NAN)),
            velocity,
            optimization_time: s.optimization_time,
        }
    }
}

/// Truth records of a simulated scenario at IMU rate.
pub fn scenario_truth(sc: &Scenario) -> Vec<PositionRecord> {
    sc.truth
        .iter()
        .map(|s| PositionRecord::from_nav(s, &sc.frame))
        .collect()
}

pub fn solution_records(solutions: &[EpochSolution]) -> Vec<PositionRecord> {
    solutions
        .iter()
        .map(PositionRecord::from_solution)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedEpoch {
    pub timestamp: f64,
    /// North/East error in the NED frame of the truth point, m.
    pub error_2d: f64,
    pub error_3d: f64,
    /// m/s; NaN without a solution velocity.
    pub velocity_error: f64,
    pub valid: bool,
    /// s
    pub optimization_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignedErrorSeries {
    pub epochs: Vec<AlignedEpoch>,
}

/// Index of the nearest timestamp in a sorted slice, within tolerance.
fn nearest(times: &[f64], t: f64) -> Option<usize> {
    let i = times.partition_point(|&x| x < t);
    [i.checked_sub(1), (i < times.len()).then_some(i)]
        .into_iter()
        .flatten()
        .filter(|&j| (times[j] - t).abs() <= ASSOCIATION_TOLERANCE)
        .min_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs()))
}

impl AlignedErrorSeries {
    /// Associates every solution epoch with the nearest truth record;
    /// epochs without truth within [`ASSOCIATION_TOLERANCE`] are dropped.
    pub fn align(
        truth: &[PositionRecord],
        solutions: &[PositionRecord],
    ) -> Result<Self, EvalError> {
        if let Some(w) = truth.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(EvalError::UnsortedTruth(w[1].timestamp));
        }
        let times: Vec<f64> = truth.iter().map(|r| r.timestamp).collect();
        let mut epochs = Vec::with_capacity(solutions.len());
        for s in solutions {
            let Some(j) = nearest(&times, s.timestamp) else {
                continue;
            };
            let tr = &truth[j];
            let (mut e2, mut e3, mut ev) = (f64::NAN, f64::NAN, f64::NAN);
            let valid = s.valid && s.position.iter().all(|x| x.is_finite());
            if valid {
                let frame = ecef_to_lla(&tr.position).map(LocalFrame::new).ok();
                if let Some(f) = frame {
                    let d = f.to_ned(&s.position);
                    e2 = d.xy().norm();
                    e3 = d.norm();
                }
                if let (Some(v), Some(vt)) = (s.velocity, tr.velocity) {
                    ev = (v - vt).norm();
                }
            }
            epochs.push(AlignedEpoch {
                timestamp: s.timestamp,
                error_2d: e2,
                error_3d: e3,
                velocity_error: ev,
                valid: valid && e2.is_finite(),
                optimization_time: s.optimization_time,
            });
        }
        if epochs.is_empty() {
            return Err(EvalError::NoAlignedEpochs);
        }
        Ok(Self { epochs })
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Epochs kept by the mask.
    pub fn masked(&self, mask: &EpochMask) -> Self {
        Self {
            epochs: self
                .epochs
                .iter()
                .filter(|e| mask.contains(e.timestamp))
                .cloned()
                .collect(),
        }
    }

    pub fn valid_fraction(&self) -> f64 {
        self.epochs.iter().filter(|e| e.valid).count() as f64 / self.epochs.len().max(1) as f64
    }
}

/// Epoch selection for metrics: excluded segments and an optional set of
/// common epochs that must also be present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochMask {
    excluded: Vec<(f64, f64)>,
    common: Option<Vec<f64>>,
}

impl EpochMask {
    pub fn all() -> Self {
        Self::default()
    }

    /// Drops epochs in `[start, end]`.
    pub fn exclude(mut self, start: f64, end: f64) -> Self {
        self.excluded.push((start.min(end), start.max(end)));
        self
    }

    /// Keeps only epochs within the association tolerance of a valid epoch
    /// of `other`.
    pub fn common_with(mut self, other: &[PositionRecord]) -> Self {
        let mut t: Vec<f64> = other
            .iter()
            .filter(|r| r.valid)
            .map(|r| r.timestamp)
            .collect();
        t.sort_by(f64::total_cmp);
        self.common = Some(match self.common.take() {
            Some(prev) => prev
                .into_iter()
                .filter(|&x| nearest(&t, x).is_some())
                .collect(),
            None => t,
        });
        self
    }

    pub fn excluded(&self) -> &[(f64, f64)] {
        &self.excluded
    }

    pub fn contains(&self, t: f64) -> bool {
        !self.excluded.iter().any(|&(a, b)| t >= a && t <= b)
            && self.common.as_ref().is_none_or(|c| nearest(c, t).is_some())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Horizontal,
    Spatial,
    Velocity,
}

impl Metric {
    fn of(self, e: &AlignedEpoch) -> f64 {
        match self {
            Metric::Horizontal => e.error_2d,
            Metric::Spatial => e.error_3d,
            Metric::Velocity => e.velocity_error,
        }
    }
}

/// Root-mean-square error over valid epochs kept by the mask.
pub fn rmse(
    series: &AlignedErrorSeries,
    metric: Metric,
    mask: Option<&EpochMask>,
) -> Result<f64, EvalError> {
    let errs: Vec<f64> = series
        .epochs
        .iter()
        .filter(|e| e.valid && mask.is_none_or(|m| m.contains(e.timestamp)))
        .map(|e| metric.of(e))
        .filter(|x| x.is_finite())
        .collect();
    if errs.is_empty() {
        return Err(EvalError::NoEpochs);
    }
    Ok((errs.iter().map(|x| x * x).sum::<f64>() / errs.len() as f64).sqrt())
}

/// Fraction of all epochs that are valid with a 2D error within each
/// threshold, returned as `(threshold, fraction)` pairs.
pub fn service_availability(
    series: &AlignedErrorSeries,
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>, EvalError> {
    if series.is_empty() {
        return Err(EvalError::EmptySeries);
    }
    let n = series.len() as f64;
    thresholds
        .iter()
        .map(|&tau| {
            if tau.is_nan() || tau < 0.0 {
                return Err(EvalError::InvalidThreshold(tau));
            }
            let k = series
                .epochs
                .iter()
                .filter(|e| e.valid && e.error_2d <= tau)
                .count();
            Ok((tau, k as f64 / n))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingStats {
    /// s
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

/// Optimization time statistics over valid epochs.
pub fn timing_stats(series: &AlignedErrorSeries) -> Result<TimingStats, EvalError> {
    let mut t: Vec<f64> = series
        .epochs
        .iter()
        .filter(|e| e.valid)
        .map(|e| e.optimization_time)
        .filter(|x| x.is_finite())
        .collect();
    if t.is_empty() {
        return Err(EvalError::NoEpochs);
    }
    t.sort_by(f64::total_cmp);
    let idx = ((0.95 * t.len() as f64).ceil() as usize).clamp(1, t.len()) - 1;
    Ok(TimingStats {
        mean: t.iter().sum::<f64>() / t.len() as f64,
        p95: t[idx],
        max: t[t.len() - 1],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagSweepRow {
    /// s; may be infinite
    pub lag: f64,
    pub rmse_2d: f64,
    pub rmse_3d: f64,
    /// s
    pub mean_optimization_time: f64,
}

/// Runs the estimator once per lag with an otherwise identical config.
pub fn lag_sweep(
    imu: &[ImuSample],
    gnss: &[GnssEpoch],
    truth: &[PositionRecord],
    config: &EstimatorConfig,
    lags: &[f64],
) -> Result<Vec<LagSweepRow>, EvalError> {
    lags.iter()
        .map(|&lag| {
            let cfg = EstimatorConfig {
                lag,
                ..config.clone()
            };
            let out = run_dataset(imu, gnss, &cfg)?;
            let series = AlignedErrorSeries::align(truth, &solution_records(&out.solutions))?;
            log::info!(
                "lag {lag}: {} epochs, {} valid",
                out.report.epochs,
                out.report.valid
            );
            Ok(LagSweepRow {
                lag,
                rmse_2d: rmse(&series, Metric::Horizontal, None)?,
                rmse_3d: rmse(&series, Metric::Spatial, None)?,
                mean_optimization_time: out.report.mean_optimization_time,
            })
        })
        .collect()
}
