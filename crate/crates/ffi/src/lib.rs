//! C ABI for the streaming estimator.
//!
//! Every function returns a [`TcfgoStatus`]; on failure the message is
//! available from [`tcfgo_last_error`] on the same thread. Handles are
//! opaque and must be released with [`tcfgo_estimator_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::Vector3;
use tcfgo::estimator::{Estimator, EstimatorConfig, EstimatorError, SolutionStatus};
use tcfgo::gnss::{Constellation, GnssEpoch, SatObservation};
use tcfgo::preint::ImuSample;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcfgoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    OutOfOrder = 4,
    InitializationFailed = 5,
    EstimationFailed = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcfgoConstellation {
    Gps = 0,
    Galileo = 1,
    Glonass = 2,
    Beidou = 3,
    Qzss = 4,
}

impl From<TcfgoConstellation> for Constellation {
    fn from(c: TcfgoConstellation) -> Self {
        match c {
            TcfgoConstellation::Gps => Constellation::Gps,
            TcfgoConstellation::Galileo => Constellation::Galileo,
            TcfgoConstellation::Glonass => Constellation::Glonass,
            TcfgoConstellation::Beidou => Constellation::Beidou,
            TcfgoConstellation::Qzss => Constellation::Qzss,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcfgoSolutionStatus {
    Valid = 0,
    Unavailable = 1,
    Diverged = 2,
}

/// One satellite observation. Optional values (`tropo`, `iono`, `cn0`,
/// `pseudorange_rate`) are NaN when missing.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TcfgoObservation {
    /// NUL-terminated satellite identifier, e.g. "G05".
    pub sat_id: *const c_char,
    pub constellation: TcfgoConstellation,
    /// m, satellite clock not yet applied
    pub pseudorange: f64,
    /// m/s
    pub pseudorange_rate: f64,
    /// ECEF, m
    pub sat_pos: [f64; 3],
    /// ECEF, m/s
    pub sat_vel: [f64; 3],
    /// m
    pub sat_clock_bias: f64,
    /// m/s
    pub sat_clock_drift: f64,
    pub tropo: f64,
    pub iono: f64,
    /// dB-Hz
    pub cn0: f64,
}

/// Estimate at one GNSS epoch. State fields are NaN when undefined.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TcfgoSolution {
    pub timestamp: f64,
    pub status: TcfgoSolutionStatus,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub height: f64,
    /// NED at the solution point, m/s
    pub velocity_ned: [f64; 3],
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    /// GPS receiver clock bias, m
    pub clock_bias: f64,
    /// m/s
    pub clock_drift: f64,
    pub num_sats: u32,
    /// s
    pub optimization_time: f64,
}

/// Opaque estimator handle.
pub struct TcfgoEstimator {
    inner: Estimator,
    pending: Vec<SatObservation>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: TcfgoStatus, msg: impl Into<String>) -> TcfgoStatus {
    set_error(msg);
    status
}

fn estimator_status(e: &EstimatorError) -> TcfgoStatus {
    match e {
        EstimatorError::InvalidConfig(_) => TcfgoStatus::InvalidConfig,
        EstimatorError::ImuOutOfOrder { .. } | EstimatorError::EpochOutOfOrder { .. } => {
            TcfgoStatus::OutOfOrder
        }
        EstimatorError::NonFiniteImu(_) => TcfgoStatus::InvalidArgument,
        EstimatorError::InitializationFailed { .. } => TcfgoStatus::InitializationFailed,
        _ => TcfgoStatus::EstimationFailed,
    }
}

/// Runs `f`, converting panics into [`TcfgoStatus::Panic`].
fn guard(f: impl FnOnce() -> TcfgoStatus) -> TcfgoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == TcfgoStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(TcfgoStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tcfgo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tcfgo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an estimator from a TOML estimator configuration, or from the
/// defaults when `config_toml` is NULL.
///
/// # Safety
/// `config_toml` must be NULL or a valid NUL-terminated string; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcfgo_estimator_new(
    config_toml: *const c_char,
    out: *mut *mut TcfgoEstimator,
) -> TcfgoStatus {
    guard(|| {
        if out.is_null() {
            return fail(TcfgoStatus::NullPointer, "out is NULL");
        }
        // SAFETY: checked non-null; caller guarantees validity.
        unsafe { *out = ptr::null_mut() };
        let config = if config_toml.is_null() {
            EstimatorConfig::default()
        } else {
            // SAFETY: caller guarantees a NUL-terminated string.
            let Ok(text) = unsafe { CStr::from_ptr(config_toml) }.to_str() else {
                return fail(TcfgoStatus::InvalidArgument, "config is not UTF-8");
            };
            match toml::from_str::<EstimatorConfig>(text) {
                Ok(c) => c,
                Err(e) => return fail(TcfgoStatus::InvalidConfig, e.to_string()),
            }
        };
        match Estimator::new(config) {
            Ok(inner) => {
                let h = Box::new(TcfgoEstimator {
                    inner,
                    pending: Vec::new(),
                });
                // SAFETY: checked non-null above.
                unsafe { *out = Box::into_raw(h) };
                TcfgoStatus::Ok
            }
            Err(e) => fail(estimator_status(&e), e.to_string()),
        }
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `handle` must be NULL or a pointer from [`tcfgo_estimator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tcfgo_estimator_free(handle: *mut TcfgoEstimator) {
    if !handle.is_null() {
        // SAFETY: caller guarantees ownership of a live handle.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Feeds one IMU sample (specific force m/s², angular rate rad/s, body frame).
///
/// # Safety
/// `handle` must be a live handle; `specific_force` and `angular_rate` must
/// point to three doubles each.
#[no_mangle]
pub unsafe extern "C" fn tcfgo_estimator_push_imu(
    handle: *mut TcfgoEstimator,
    timestamp: f64,
    specific_force: *const f64,
    angular_rate: *const f64,
) -> TcfgoStatus {
    guard(|| {
        if handle.is_null() || specific_force.is_null() || angular_rate.is_null() {
            return fail(TcfgoStatus::NullPointer, "NULL argument");
        }
        // SAFETY: checked non-null; caller guarantees three readable doubles each.
        let (h, f, w) = unsafe {
            (
                &mut *handle,
                std::slice::from_raw_parts(specific_force, 3),
                std::slice::from_raw_parts(angular_rate, 3),
            )
        };
        let s = ImuSample::new(
            timestamp,
            Vector3::from_column_slice(f),
            Vector3::from_column_slice(w),
        );
        match h.inner.process_imu(&s) {
            Ok(()) => TcfgoStatus::Ok,
            Err(e) => fail(estimator_status(&e), e.to_string()),
        }
    })
}

/// Queues one observation for the next [`tcfgo_estimator_process_epoch`].
///
/// # Safety
/// `handle` must be a live handle and `obs` a valid pointer whose `sat_id`
/// is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tcfgo_estimator_add_observation(
    handle: *mut TcfgoEstimator,
    obs: *const TcfgoObservation,
) -> TcfgoStatus {
    guard(|| {
        if handle.is_null() || obs.is_null() {
            return fail(TcfgoStatus::NullPointer, "NULL argument");
        }
        // SAFETY: checked non-null; caller guarantees validity.
        let (h, o) = unsafe { (&mut *handle, &*obs) };
        if o.sat_id.is_null() {
            return fail(TcfgoStatus::NullPointer, "sat_id is NULL");
        }
        // SAFETY: caller guarantees a NUL-terminated string.
        let Ok(id) = unsafe { CStr::from_ptr(o.sat_id) }.to_str() else {
            return fail(TcfgoStatus::InvalidArgument, "sat_id is not UTF-8");
        };
        if h.pending.iter().any(|p| p.sat_id == id) {
            return fail(
                TcfgoStatus::InvalidArgument,
                format!("duplicate satellite {id}"),
            );
        }
        let finite = |x: f64| x.is_finite().then_some(x);
        h.pending.push(SatObservation {
            sat_id: id.to_string(),
            constellation: o.constellation.into(),
            pseudorange: o.pseudorange,
            pseudorange_rate: o.pseudorange_rate,
            sat_pos: Vector3::from(o.sat_pos),
            sat_vel: Vector3::from(o.sat_vel),
            sat_clock_bias: o.sat_clock_bias,
            sat_clock_drift: o.sat_clock_drift,
            tropo_delay: finite(o.tropo),
            iono_delay: finite(o.iono),
            cn0: finite(o.cn0),
            elevation: None,
        });
        TcfgoStatus::Ok
    })
}

fn to_c(s: &tcfgo::estimator::EpochSolution) -> TcfgoSolution {
    let nan = f64::NAN;
    let pt = s.at_point();
    let (pos, vel, (r, p, y)) = match &pt {
        Some(pt) => (
            [
                pt.position.latitude.to_degrees(),
                pt.position.longitude.to_degrees(),
                pt.position.height,
            ],
            pt.velocity.into(),
            pt.attitude,
        ),
        None => ([nan; 3], [nan; 3], (nan, nan, nan)),
    };
    let defined = pt.is_some();
    TcfgoSolution {
        timestamp: s.timestamp(),
        status: match s.status {
            SolutionStatus::Valid => TcfgoSolutionStatus::Valid,
            SolutionStatus::Unavailable => TcfgoSolutionStatus::Unavailable,
            SolutionStatus::Diverged => TcfgoSolutionStatus::Diverged,
        },
        latitude_deg: pos[0],
        longitude_deg: pos[1],
        height: pos[2],
        velocity_ned: vel,
        roll_deg: r.to_degrees(),
        pitch_deg: p.to_degrees(),
        yaw_deg: y.to_degrees(),
        clock_bias: if defined { s.state.clock.gps_bias } else { nan },
        clock_drift: if defined {
            s.state.clock.gps_drift
        } else {
            nan
        },
        num_sats: s.total_sats() as u32,
        optimization_time: s.optimization_time,
    }
}

/// Processes the queued observations as the epoch at `timestamp` and writes
/// the solution to `out`. The queue is cleared even on failure.
///
/// # Safety
/// `handle` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcfgo_estimator_process_epoch(
    handle: *mut TcfgoEstimator,
    timestamp: f64,
    out: *mut TcfgoSolution,
) -> TcfgoStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return fail(TcfgoStatus::NullPointer, "NULL argument");
        }
        // SAFETY: checked non-null; caller guarantees validity.
        let h = unsafe { &mut *handle };
        let epoch = GnssEpoch {
            timestamp,
            observations: std::mem::take(&mut h.pending),
        };
        match h.inner.process_gnss_epoch(&epoch) {
            Ok(s) => {
                // SAFETY: checked non-null above.
                unsafe { *out = to_c(&s) };
                TcfgoStatus::Ok
            }
            Err(e) => fail(estimator_status(&e), e.to_string()),
        }
    })
}
