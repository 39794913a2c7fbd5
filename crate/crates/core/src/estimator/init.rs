use nalgebra::Vector3;

use crate::geo::{wrap_angle, Rotation3};
use crate::preint::{ImuBias, ImuNoiseParams, ImuSample, PreintError, PreintegratedDelta};

/// Initial attitude and whether its yaw is observed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttitudeInit {
    pub attitude: Rotation3,
    pub yaw_known: bool,
}

/// Initial attitude at `t` from buffered IMU samples up to `t` (each sample
/// covers the interval ending at its timestamp).
///
/// With a previous velocity `(t_prev, v_prev)` and samples covering
/// `(t_prev, t]`, the attitude at `t_prev` levels the integrated velocity
/// change `R Δv = v − v_prev − g T` and is carried forward by the integrated
/// rotation. Otherwise the mean over the last `window` seconds is leveled as
/// if unaccelerated.
/// `heading` holds the minimum speed for taking yaw from the velocity.
pub fn initial_attitude(
    samples: &[ImuSample],
    t: f64,
    window: f64,
    vel: Option<Vector3<f64>>,
    prev: Option<(f64, Vector3<f64>)>,
    gravity: &Vector3<f64>,
    noise: &ImuNoiseParams,
    heading: Option<f64>,
) -> Result<AttitudeInit, PreintError> {
    let heading_of = |v: &Vector3<f64>| match heading {
        Some(min) if v.xy().norm() > min => Some(v.y.atan2(v.x)),
        _ => None,
    };
    if let (Some((tp, vp)), Some(v)) = (prev, vel) {
        let span: Vec<&ImuSample> = samples.iter().filter(|s| s.timestamp > tp + 1e-9).collect();
        // the first sample after t_prev must not reach further back than one interval
        let starts = match span.as_slice() {
            [a, b, ..] => a.timestamp - tp <= b.timestamp - a.timestamp + 1e-9,
            _ => false,
        };
        let covers = starts && span.last().is_some_and(|s| (s.timestamp - t).abs() <= 1e-9);
        if covers && t > tp {
            let mut delta = PreintegratedDelta::new(ImuBias::default());
            let mut prev_t = tp;
            for s in &span {
                delta.integrate_sample(s, s.timestamp - prev_t, noise)?;
                prev_t = s.timestamp;
            }
            let dt = t - tp;
            let yaw = heading_of(&vp);
            let (roll, pitch) = level(
                &(delta.delta_v / dt),
                &((v - vp) / dt),
                yaw.unwrap_or(0.0),
                gravity,
            );
            let start = Rotation3::from_euler(roll, pitch, yaw.unwrap_or(0.0));
            return Ok(AttitudeInit {
                attitude: start.compose(&delta.delta_r),
                yaw_known: yaw.is_some(),
            });
        }
    }
    let recent: Vec<&ImuSample> = samples
        .iter()
        .filter(|s| s.timestamp > t - window - 1e-9)
        .collect();
    let f_mean = recent
        .iter()
        .map(|s| s.specific_force)
        .sum::<Vector3<f64>>()
        / recent.len().max(1) as f64;
    let yaw = vel.as_ref().and_then(heading_of);
    let (roll, pitch) = level(&f_mean, &Vector3::zeros(), yaw.unwrap_or(0.0), gravity);
    Ok(AttitudeInit {
        attitude: Rotation3::from_euler(roll, pitch, yaw.unwrap_or(0.0)),
        yaw_known: yaw.is_some(),
    })
}

/// Roll and pitch that rotate the mean specific force `f_mean` (body) onto
/// `accel_nav − gravity` (navigation frame) for a given yaw. With zero
/// acceleration this is plain accelerometer leveling.
pub fn level(
    f_mean: &Vector3<f64>,
    accel_nav: &Vector3<f64>,
    yaw: f64,
    gravity: &Vector3<f64>,
) -> (f64, f64) {
    // R_z(ψ) R_y(θ) R_x(φ) f = a − g  ⇒  R_y(θ) R_x(φ) f = R_z(ψ)ᵀ (a − g) = w
    let w = Rotation3::from_euler(0.0, 0.0, yaw).matrix().transpose() * (accel_nav - gravity);
    let plain = (-f_mean.y).atan2(-f_mean.z);
    // R_x keeps x and sets y' = f_y cos φ − f_z sin φ = A cos(φ + α)
    let amp = f_mean.y.hypot(f_mean.z);
    let roll = if amp > 0.0 {
        let alpha = f_mean.z.atan2(f_mean.y);
        let base = (w.y / amp).clamp(-1.0, 1.0).acos();
        let c1 = wrap_angle(base - alpha);
        let c2 = wrap_angle(-base - alpha);
        if wrap_angle(c1 - plain).abs() <= wrap_angle(c2 - plain).abs() {
            c1
        } else {
            c2
        }
    } else {
        plain
    };
    let (s, c) = roll.sin_cos();
    let fx = f_mean.x;
    let fz = s * f_mean.y + c * f_mean.z;
    // R_y rotates the (z, x) pair by θ
    let pitch = wrap_angle(w.x.atan2(w.z) - fx.atan2(fz));
    (roll, pitch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn static_leveling() {
        let g = Vector3::new(0.0, 0.0, 9.8);
        let r = Rotation3::from_euler(0.1, -0.05, 1.0);
        let f = r.matrix().transpose() * (-g);
        let (roll, pitch) = level(&f, &Vector3::zeros(), 1.0, &g);
        assert!((roll - 0.1).abs() < 1e-12 && (pitch + 0.05).abs() < 1e-12);
    }

    #[test]
    fn accelerating_leveling_recovers_attitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Vector3::new(0.0, 0.0, 9.80665);
        for _ in 0..200 {
            let (roll, pitch, yaw) = (
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-3.1..3.1),
            );
            let a = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-0.5..0.5),
            );
            let r = Rotation3::from_euler(roll, pitch, yaw);
            let f = r.matrix().transpose() * (a - g);
            let (rr, pp) = level(&f, &a, yaw, &g);
            assert!(
                (rr - roll).abs() < 1e-9 && (pp - pitch).abs() < 1e-9,
                "{rr} {roll} {pp} {pitch}"
            );
        }
    }

    #[test]
    fn initial_attitude_is_exact_while_turning() {
        use crate::geo::so3_log;
        use crate::sim::{simulate, ScenarioConfig};
        let sc = simulate(&ScenarioConfig::noise_free(10.0)).unwrap();
        let g = sc.frame.gravity();
        let (tp, t) = (4.0, 5.0);
        let vp = sc.truth_at(tp).unwrap().velocity;
        let truth = sc.truth_at(t).unwrap();
        let samples: Vec<ImuSample> = sc
            .imu
            .iter()
            .filter(|s| s.timestamp <= t + 1e-9)
            .copied()
            .collect();
        let noise = ImuNoiseParams::default();
        let init = initial_attitude(
            &samples,
            t,
            1.0,
            Some(truth.velocity),
            Some((tp, vp)),
            &g,
            &noise,
            Some(2.0),
        )
        .unwrap();
        assert!(init.yaw_known);
        assert!(so3_log(&init.attitude.transpose().compose(&truth.attitude)).norm() < 1e-4);
        // without a previous velocity the centripetal term tilts the plain leveling
        let plain = initial_attitude(
            &samples,
            t,
            1.0,
            Some(truth.velocity),
            None,
            &g,
            &noise,
            Some(2.0),
        )
        .unwrap();
        assert!(so3_log(&plain.attitude.transpose().compose(&truth.attitude)).norm() > 1e-3);
        let blind = initial_attitude(
            &samples,
            t,
            1.0,
            Some(truth.velocity),
            Some((tp, vp)),
            &g,
            &noise,
            None,
        )
        .unwrap();
        assert!(!blind.yaw_known);
    }
}
