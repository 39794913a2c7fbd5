use super::*;
use crate::geo::so3_log;
use crate::graph::numerical_jacobians;
use crate::sim::{simulate, NlosWindow, Outage, Scenario, ScenarioConfig, TrajectoryProfile};

/// Estimate minus truth in the simulator's NED frame.
fn position_error(sol: &EpochSolution, sc: &Scenario) -> Vector3<f64> {
    let truth = sc.truth_at(sol.timestamp()).unwrap();
    sc.frame.to_ned(&sol.position_ecef().unwrap()) - truth.position
}

fn velocity_error(sol: &EpochSolution, sc: &Scenario) -> Vector3<f64> {
    let truth = sc.truth_at(sol.timestamp()).unwrap();
    let f = sol.frame.unwrap();
    sc.frame.vec_to_ned(&f.vec_to_ecef(&sol.state.velocity)) - truth.velocity
}

fn yaw_error(sol: &EpochSolution, sc: &Scenario) -> f64 {
    let truth = sc.truth_at(sol.timestamp()).unwrap();
    let f = sol.frame.unwrap();
    // express the estimated attitude in the simulator frame
    let r = sc
        .frame
        .r_ne
        .transpose()
        .compose(&f.r_ne)
        .compose(&sol.state.attitude);
    crate::geo::wrap_angle(r.euler().2 - truth.attitude.euler().2)
}

fn run(sc: &Scenario, cfg: &EstimatorConfig) -> RunOutput {
    run_dataset(&sc.imu, &sc.gnss, cfg).unwrap()
}

#[test]
fn clock_factor_is_zero_on_the_clock_model() {
    for model in [ClockModel::DriftIntegrated, ClockModel::RandomWalk] {
        let noise = ClockNoise {
            model,
            ..Default::default()
        };
        let f = clock_factor(0, 1, 2, 0.5, &noise).unwrap();
        let (b, d) = (Value::vector(&[100.0, 3.0]), Value::vector(&[2.0, 0.1]));
        let bj = match model {
            ClockModel::DriftIntegrated => Value::vector(&[101.0, 3.05]),
            ClockModel::RandomWalk => b.clone(),
        };
        let r = f.residual(&[&b, &d, &bj, &d]);
        assert!(r.norm() < 1e-12, "{model:?}");
        let vals = [&b, &d, &bj, &d];
        for (a, n) in f
            .jacobians(&vals)
            .unwrap()
            .iter()
            .zip(numerical_jacobians(&f, &vals))
        {
            assert!((a - n).norm() < 1e-6);
        }
    }
}

#[test]
fn drift_integrated_covariance_matches_closed_form() {
    let noise = ClockNoise::default();
    let f = clock_factor(0, 1, 1, 2.0, &noise).unwrap();
    // a pure bias step of 1 m costs 1 / Σ⁻¹₀₀ with Σ = [[q_b Δt + q_d Δt³/3, q_d Δt²/2], [·, q_d Δt]]
    let (qb, qd, dt): (f64, f64, f64) = (25.0, 0.25, 2.0);
    let s = nalgebra::Matrix2::new(
        qb * dt + qd * dt.powi(3) / 3.0,
        qd * dt * dt / 2.0,
        qd * dt * dt / 2.0,
        qd * dt,
    );
    let expect = s.try_inverse().unwrap()[(0, 0)];
    let z = Value::vector(&[0.0]);
    let one = Value::vector(&[1.0]);
    let cost = f.noise().cost(&f.residual(&[&z, &z, &one, &z]));
    assert!((cost - expect).abs() < 1e-12);
}

#[test]
fn noise_free_closed_loop() {
    let sc = simulate(&ScenarioConfig::noise_free(60.0)).unwrap();
    let out = run(&sc, &EstimatorConfig::default());
    assert!(out
        .solutions
        .iter()
        .skip(1)
        .all(|s| s.status == SolutionStatus::Valid));
    let last = out.solutions.last().unwrap();
    let truth = sc.truth_at(last.timestamp()).unwrap();
    assert!(
        position_error(last, &sc).norm() < 1e-3,
        "{}",
        position_error(last, &sc).norm()
    );
    assert!(
        velocity_error(last, &sc).norm() < 1e-4,
        "{}",
        velocity_error(last, &sc).norm()
    );
    assert!((last.state.clock.gps_bias - truth.clock.gps_bias).abs() < 1e-3);
    assert!((last.state.bias.accel - truth.bias.accel).norm() < 1e-4);
    assert!((last.state.bias.gyro - truth.bias.gyro).norm() < 1e-4);
}

#[test]
fn static_start_levels_and_leaves_yaw_free() {
    let mut c = ScenarioConfig::noise_free(5.0);
    c.trajectory = TrajectoryProfile::Static { heading_deg: 40.0 };
    let sc = simulate(&c).unwrap();
    let mut est = Estimator::new(EstimatorConfig::default()).unwrap();
    let mut k = 0;
    let mut first = None;
    for ep in &sc.gnss {
        while k < sc.imu.len() && sc.imu[k].timestamp <= ep.timestamp {
            est.process_imu(&sc.imu[k]).unwrap();
            k += 1;
        }
        let s = est.process_gnss_epoch(ep).unwrap();
        if s.status == SolutionStatus::Valid && first.is_none() {
            first = Some(s);
        }
    }
    let s = first.unwrap();
    assert_eq!(s.timestamp(), 1.0);
    let truth = sc.truth_at(1.0).unwrap();
    let (r, p, _) = s.state.attitude.euler();
    let (tr, tp, _) = truth.attitude.euler();
    assert!((r - tr).abs() < 0.5f64.to_radians() && (p - tp).abs() < 0.5f64.to_radians());
}

#[test]
fn moving_start_takes_heading_from_velocity() {
    let mut c = ScenarioConfig::default();
    c.duration = 3.0;
    c.seed = 4;
    c.trajectory = TrajectoryProfile::StraightLine {
        speed: 10.0,
        heading_deg: 63.0,
    };
    let sc = simulate(&c).unwrap();
    let out = run(&sc, &EstimatorConfig::default());
    let s = out
        .solutions
        .iter()
        .find(|s| s.status == SolutionStatus::Valid)
        .unwrap();
    assert!(
        yaw_error(s, &sc).abs() < 2f64.to_radians(),
        "{}",
        yaw_error(s, &sc).to_degrees()
    );
}

#[test]
fn initial_clock_bias_is_recovered() {
    let mut c = ScenarioConfig::default();
    c.duration = 3.0;
    c.clock.initial_bias = 500.0;
    let sc = simulate(&c).unwrap();
    let out = run(&sc, &EstimatorConfig::default());
    let s = out
        .solutions
        .iter()
        .find(|s| s.status == SolutionStatus::Valid)
        .unwrap();
    let truth = sc.truth_at(s.timestamp()).unwrap();
    assert!((s.state.clock.gps_bias - truth.clock.gps_bias).abs() < 10.0);
}

#[test]
fn coasts_through_an_outage() {
    let mut c = ScenarioConfig::default();
    c.duration = 90.0;
    c.outages.push(Outage {
        start: 30.0,
        end: 60.0,
        keep: 0,
    });
    let sc = simulate(&c).unwrap();
    let out = run(&sc, &EstimatorConfig::default());
    for s in out.solutions.iter().skip(1) {
        assert_eq!(s.status, SolutionStatus::Valid, "t={}", s.timestamp());
    }
    let end = out
        .solutions
        .iter()
        .find(|s| s.timestamp() == 60.0)
        .unwrap();
    assert_eq!(end.total_sats(), 0);
    let cov = end.position_covariance.unwrap();
    let bound = 3.0 * (cov[(0, 0)] + cov[(1, 1)]).sqrt();
    assert!(position_error(end, &sc).xy().norm() < bound);
}

#[test]
fn galileo_offset_converges() {
    let mut c = ScenarioConfig::default();
    c.duration = 60.0;
    c.satellites.galileo = 6;
    c.clock.galileo_offset = 100.0;
    let sc = simulate(&c).unwrap();
    let cfg = EstimatorConfig {
        constellations: vec![Constellation::Gps, Constellation::Galileo],
        ..Default::default()
    };
    let out = run(&sc, &cfg);
    let last = out.solutions.last().unwrap();
    assert_eq!(last.num_sats_used[&Constellation::Galileo], 6);
    let off = last.state.clock.offset(Constellation::Galileo);
    assert!((off - 100.0).abs() < 1.5, "{off}");
}

#[test]
fn solutions_are_causal() {
    let mut c = ScenarioConfig::default();
    c.duration = 25.0;
    let sc = simulate(&c).unwrap();
    let cfg = EstimatorConfig {
        lag: 5.0,
        ..Default::default()
    };
    let full = run(&sc, &cfg);
    let cut = 12.0;
    let imu: Vec<_> = sc
        .imu
        .iter()
        .filter(|s| s.timestamp <= cut)
        .copied()
        .collect();
    let gnss: Vec<_> = sc
        .gnss
        .iter()
        .filter(|e| e.timestamp <= cut)
        .cloned()
        .collect();
    let part = run_dataset(&imu, &gnss, &cfg).unwrap();
    for (a, b) in part.solutions.iter().zip(&full.solutions) {
        assert_eq!(format!("{:?}", a.state), format!("{:?}", b.state));
    }
}

#[test]
fn constant_pseudorange_shift_moves_only_the_clock() {
    let mut c = ScenarioConfig::default();
    c.duration = 20.0;
    let sc = simulate(&c).unwrap();
    let mut shifted = sc.gnss.clone();
    for ep in &mut shifted {
        for o in &mut ep.observations {
            o.pseudorange += 250.0;
        }
    }
    let cfg = EstimatorConfig::default();
    let a = run(&sc, &cfg);
    let b = run_dataset(&sc.imu, &shifted, &cfg).unwrap();
    for (x, y) in a.solutions.iter().zip(&b.solutions).skip(1) {
        let dp = x.position_ecef().unwrap() - y.position_ecef().unwrap();
        assert!(dp.norm() < 1e-4, "t={}: {}", x.timestamp(), dp.norm());
        assert!((y.state.clock.gps_bias - x.state.clock.gps_bias - 250.0).abs() < 1e-4);
    }
}

#[test]
fn batch_and_windowed_final_states_agree() {
    let mut c = ScenarioConfig::default();
    c.duration = 80.0;
    let sc = simulate(&c).unwrap();
    let win = run(&sc, &EstimatorConfig::default());
    let batch = run(
        &sc,
        &EstimatorConfig {
            lag: f64::INFINITY,
            ..Default::default()
        },
    );
    let (a, b) = (
        win.solutions.last().unwrap(),
        batch.solutions.last().unwrap(),
    );
    let d = a.position_ecef().unwrap() - b.position_ecef().unwrap();
    assert!(a.frame.unwrap().vec_to_ned(&d).xy().norm() < 0.10);
}

#[test]
fn attitude_tracks_truth_on_a_noisy_figure_eight() {
    let sc = simulate(&ScenarioConfig::default()).unwrap();
    let out = run(&sc, &EstimatorConfig::default());
    let last = out.solutions.last().unwrap();
    let truth = sc.truth_at(last.timestamp()).unwrap();
    let f = last.frame.unwrap();
    let r = sc
        .frame
        .r_ne
        .transpose()
        .compose(&f.r_ne)
        .compose(&last.state.attitude);
    assert!(so3_log(&truth.attitude.transpose().compose(&r)).norm() < 1f64.to_radians());
    assert!(position_error(last, &sc).xy().norm() < 3.0);
}

#[test]
fn stream_errors() {
    let mut est = Estimator::new(EstimatorConfig::default()).unwrap();
    let s = ImuSample::new(1.0, Vector3::zeros(), Vector3::zeros());
    est.process_imu(&s).unwrap();
    assert!(matches!(
        est.process_imu(&s),
        Err(EstimatorError::ImuOutOfOrder { .. })
    ));
    let ep = GnssEpoch {
        timestamp: 2.0,
        observations: vec![],
    };
    assert_eq!(
        est.process_gnss_epoch(&ep).unwrap().status,
        SolutionStatus::Unavailable
    );
    assert!(matches!(
        est.process_gnss_epoch(&ep),
        Err(EstimatorError::EpochOutOfOrder { .. })
    ));
    assert!(matches!(
        run_dataset(&[], &[], &EstimatorConfig::default()),
        Err(EstimatorError::InitializationFailed { .. })
    ));
}

#[test]
fn spp_baseline_reports_unavailable_epochs() {
    let mut c = ScenarioConfig::noise_free(10.0);
    c.outages.push(Outage {
        start: 3.0,
        end: 4.0,
        keep: 3,
    });
    let sc = simulate(&c).unwrap();
    let out = run_spp(&sc.gnss, &EstimatorConfig::default()).unwrap();
    assert_eq!(out.report.unavailable, 2);
    assert!(position_error(&out.solutions[0], &sc).norm() < 1e-5);
}

#[test]
fn clock_bias_tracks_truth_within_three_sigma() {
    let sc = simulate(&ScenarioConfig::default()).unwrap();
    let mut est = Estimator::new(EstimatorConfig::default()).unwrap();
    let mut k = 0;
    let mut checked = 0;
    for epoch in &sc.gnss {
        while k < sc.imu.len() && sc.imu[k].timestamp <= epoch.timestamp {
            est.process_imu(&sc.imu[k]).unwrap();
            k += 1;
        }
        let sol = est.process_gnss_epoch(epoch).unwrap();
        if sol.status != SolutionStatus::Valid {
            continue;
        }
        let a = est.active.as_ref().unwrap();
        let cov = a
            .smoother
            .marginal_covariance(&VariableKey::clock_bias(a.epoch))
            .unwrap();
        let truth = sc.truth_at(sol.timestamp()).unwrap();
        let err = sol.state.clock.gps_bias - truth.clock.gps_bias;
        assert!(
            err.abs() <= 3.0 * cov[(0, 0)].sqrt(),
            "t={}: {err} vs σ {}",
            sol.timestamp(),
            cov[(0, 0)].sqrt()
        );
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
#[ignore = "a persistent bias outlasting the ~15 s position memory set by the pseudorange and Doppler weights is absorbed by the non-robust estimate"]
fn single_nlos_satellite_is_diluted() {
    let mut c = ScenarioConfig::default();
    c.nlos.push(NlosWindow {
        sat_id: "G03".into(),
        start: 30.0,
        end: 60.0,
        bias: 50.0,
    });
    let sc = simulate(&c).unwrap();
    let cfg = EstimatorConfig::default();
    let tc = run(&sc, &cfg);
    let spp = run_spp(&sc.gnss, &cfg).unwrap();
    for (a, b) in tc.solutions.iter().zip(&spp.solutions) {
        let t = a.timestamp();
        if !(30.0..=60.0).contains(&t) {
            continue;
        }
        assert!(position_error(b, &sc).xy().norm() > 5.0, "SPP t={t}");
        let e = position_error(a, &sc).xy().norm();
        assert!(e < 5.0, "t={t}: {e}");
    }
}
