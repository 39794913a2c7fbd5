use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tcfgo::estimator::{run_dataset, EstimatorConfig, SolutionStatus};
use tcfgo::gnss::Constellation;
use tcfgo::sim::{simulate, ScenarioConfig};
use tcfgo_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tcfgo_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn new_estimator(config: Option<&str>) -> (TcfgoStatus, *mut TcfgoEstimator) {
    let text = config.map(|c| CString::new(c).unwrap());
    let mut h = ptr::null_mut();
    let s =
        unsafe { tcfgo_estimator_new(text.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut h) };
    (s, h)
}

fn constellation(c: Constellation) -> TcfgoConstellation {
    match c {
        Constellation::Gps => TcfgoConstellation::Gps,
        Constellation::Galileo => TcfgoConstellation::Galileo,
        Constellation::Glonass => TcfgoConstellation::Glonass,
        Constellation::Beidou => TcfgoConstellation::Beidou,
        Constellation::Qzss => TcfgoConstellation::Qzss,
    }
}

#[test]
fn streaming_matches_the_library_run() {
    let sc = simulate(&ScenarioConfig {
        duration: 20.0,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let reference = run_dataset(&sc.imu, &sc.gnss, &EstimatorConfig::default()).unwrap();
    let (s, h) = new_estimator(None);
    assert_eq!(s, TcfgoStatus::Ok);
    let mut k = 0;
    for (epoch, expected) in sc.gnss.iter().zip(&reference.solutions) {
        while k < sc.imu.len() && sc.imu[k].timestamp <= epoch.timestamp {
            let i = &sc.imu[k];
            let st = unsafe {
                tcfgo_estimator_push_imu(
                    h,
                    i.timestamp,
                    i.specific_force.as_ptr(),
                    i.angular_rate.as_ptr(),
                )
            };
            assert_eq!(st, TcfgoStatus::Ok);
            k += 1;
        }
        let ids: Vec<CString> = epoch
            .observations
            .iter()
            .map(|o| CString::new(o.sat_id.clone()).unwrap())
            .collect();
        for (o, id) in epoch.observations.iter().zip(&ids) {
            let c = TcfgoObservation {
                sat_id: id.as_ptr(),
                constellation: constellation(o.constellation),
                pseudorange: o.pseudorange,
                pseudorange_rate: o.pseudorange_rate,
                sat_pos: o.sat_pos.into(),
                sat_vel: o.sat_vel.into(),
                sat_clock_bias: o.sat_clock_bias,
                sat_clock_drift: o.sat_clock_drift,
                tropo: o.tropo_delay.unwrap_or(f64::NAN),
                iono: o.iono_delay.unwrap_or(f64::NAN),
                cn0: o.cn0.unwrap_or(f64::NAN),
            };
            assert_eq!(
                unsafe { tcfgo_estimator_add_observation(h, &c) },
                TcfgoStatus::Ok
            );
        }
        let mut out = std::mem::MaybeUninit::<TcfgoSolution>::uninit();
        assert_eq!(
            unsafe { tcfgo_estimator_process_epoch(h, epoch.timestamp, out.as_mut_ptr()) },
            TcfgoStatus::Ok
        );
        let out = unsafe { out.assume_init() };
        assert_eq!(out.timestamp, expected.timestamp());
        match expected.at_point() {
            Some(pt) => {
                assert_eq!(out.status, TcfgoSolutionStatus::Valid);
                assert_eq!(expected.status, SolutionStatus::Valid);
                assert_eq!(out.latitude_deg, pt.position.latitude.to_degrees());
                assert_eq!(out.height, pt.position.height);
                assert_eq!(out.velocity_ned, <[f64; 3]>::from(pt.velocity));
                assert_eq!(out.yaw_deg, pt.attitude.2.to_degrees());
                assert_eq!(out.clock_bias, expected.state.clock.gps_bias);
                assert_eq!(out.num_sats as usize, expected.total_sats());
            }
            None => {
                assert_eq!(out.status, TcfgoSolutionStatus::Unavailable);
                assert!(out.latitude_deg.is_nan() && out.clock_bias.is_nan());
            }
        }
    }
    unsafe { tcfgo_estimator_free(h) };
}

#[test]
fn errors_carry_codes_and_messages() {
    assert_eq!(
        unsafe { tcfgo_estimator_new(ptr::null(), ptr::null_mut()) },
        TcfgoStatus::NullPointer
    );

    let (s, h) = new_estimator(Some("lag = -1.0"));
    assert_eq!(s, TcfgoStatus::InvalidConfig);
    assert!(h.is_null());
    assert!(last_error().contains("lag"), "{}", last_error());
    assert_eq!(new_estimator(Some("lag = [")).0, TcfgoStatus::InvalidConfig);

    let (s, h) = new_estimator(Some("lag = 10.0\nuse_doppler = false"));
    assert_eq!(s, TcfgoStatus::Ok);
    assert!(last_error().is_empty());
    let f = [0.0, 0.0, -9.8];
    let w = [0.0; 3];
    unsafe {
        assert_eq!(
            tcfgo_estimator_push_imu(h, 1.0, f.as_ptr(), w.as_ptr()),
            TcfgoStatus::Ok
        );
        assert_eq!(
            tcfgo_estimator_push_imu(h, 0.5, f.as_ptr(), w.as_ptr()),
            TcfgoStatus::OutOfOrder
        );
        assert!(last_error().contains("0.5"));
        assert_eq!(
            tcfgo_estimator_push_imu(h, 2.0, [f64::NAN; 3].as_ptr(), w.as_ptr()),
            TcfgoStatus::InvalidArgument
        );
        assert_eq!(
            tcfgo_estimator_push_imu(h, 2.0, ptr::null(), w.as_ptr()),
            TcfgoStatus::NullPointer
        );

        let id = CString::new("G01").unwrap();
        let obs = TcfgoObservation {
            sat_id: id.as_ptr(),
            constellation: TcfgoConstellation::Gps,
            pseudorange: 2.2e7,
            pseudorange_rate: f64::NAN,
            sat_pos: [1.5e7, 1e7, 1.8e7],
            sat_vel: [0.0; 3],
            sat_clock_bias: 0.0,
            sat_clock_drift: 0.0,
            tropo: f64::NAN,
            iono: f64::NAN,
            cn0: f64::NAN,
        };
        assert_eq!(tcfgo_estimator_add_observation(h, &obs), TcfgoStatus::Ok);
        assert_eq!(
            tcfgo_estimator_add_observation(h, &obs),
            TcfgoStatus::InvalidArgument
        );
        assert!(last_error().contains("duplicate"));
        let null_id = TcfgoObservation {
            sat_id: ptr::null(),
            ..obs
        };
        assert_eq!(
            tcfgo_estimator_add_observation(h, &null_id),
            TcfgoStatus::NullPointer
        );

        let mut out = std::mem::MaybeUninit::<TcfgoSolution>::uninit();
        assert_eq!(
            tcfgo_estimator_process_epoch(h, 1.0, out.as_mut_ptr()),
            TcfgoStatus::Ok
        );
        assert_eq!(out.assume_init().status, TcfgoSolutionStatus::Unavailable);
        assert_eq!(
            tcfgo_estimator_process_epoch(h, 0.5, out.as_mut_ptr()),
            TcfgoStatus::OutOfOrder
        );
        assert_eq!(
            tcfgo_estimator_process_epoch(h, 3.0, ptr::null_mut()),
            TcfgoStatus::NullPointer
        );
        tcfgo_estimator_free(h);
        tcfgo_estimator_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(tcfgo_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/tcfgo.h")).unwrap();
    for name in [
        "typedef struct TcfgoEstimator TcfgoEstimator;",
        "tcfgo_estimator_new",
        "tcfgo_estimator_free",
        "tcfgo_estimator_push_imu",
        "tcfgo_estimator_add_observation",
        "tcfgo_estimator_process_epoch",
        "tcfgo_last_error",
        "TCFGO_STATUS_OUT_OF_ORDER = 4",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Static library built next to this test binary.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let lib = dir.join("libtcfgo_ffi.a");
    lib.exists().then_some(lib)
}

fn has_cc() -> bool {
    Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_against_the_header() {
    let (Some(lib), true) = (static_lib(), has_cc()) else {
        eprintln!("skipping: no C compiler or static library");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "tcfgo.h"

int main(void) {
    TcfgoEstimator *h = NULL;
    if (tcfgo_estimator_new("lag = 0.0", &h) != TCFGO_STATUS_INVALID_CONFIG || h != NULL) return 1;
    if (strlen(tcfgo_last_error()) == 0) return 2;
    if (tcfgo_estimator_new(NULL, &h) != TCFGO_STATUS_OK) return 3;
    double f[3] = {0.0, 0.0, -9.8}, w[3] = {0.0, 0.0, 0.0};
    if (tcfgo_estimator_push_imu(h, 0.01, f, w) != TCFGO_STATUS_OK) return 4;
    if (tcfgo_estimator_push_imu(h, 0.005, f, w) != TCFGO_STATUS_OUT_OF_ORDER) return 5;
    TcfgoSolution s;
    if (tcfgo_estimator_process_epoch(h, 0.02, &s) != TCFGO_STATUS_OK) return 6;
    if (s.status != TCFGO_SOLUTION_STATUS_UNAVAILABLE || !isnan(s.latitude_deg)) return 7;
    tcfgo_estimator_free(h);
    printf("%s\n", tcfgo_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let include = crate_dir().join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(Path::new(&exe)).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        env!("CARGO_PKG_VERSION")
    );
}
