//! Analytic vehicle trajectories in a local NED frame. Attitude follows the
//! horizontal velocity heading with coordinated (banked) turns and zero pitch.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geo::Rotation3;

/// A heading change (or a straight run when `turn_deg` is zero) at constant
/// speed. Heading follows a quintic smoothstep so that the turn rate and its
/// derivative are continuous.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnSegment {
    pub duration: f64,
    #[serde(default)]
    pub turn_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryProfile {
    Static {
        #[serde(default)]
        heading_deg: f64,
    },
    StraightLine {
        speed: f64,
        #[serde(default)]
        heading_deg: f64,
    },
    /// Lissajous figure eight `N = r sin Ωt, E = (r/2) sin 2Ωt` with
    /// `Ω = speed / r`.
    FigureEight { radius: f64, speed: f64 },
    /// Constant speed course made of segments; the last segment repeats as
    /// a straight run if the scenario outlasts the course.
    TurnCourse {
        speed: f64,
        #[serde(default)]
        heading_deg: f64,
        segments: Vec<TurnSegment>,
    },
}

/// Position and its first three derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
}

/// Full kinematic and attitude state at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub attitude: Rotation3,
    /// body-frame angular rate, rad/s
    pub angular_rate: Vector3<f64>,
}

/// Quintic smoothstep and its first two derivatives.
fn smoothstep(x: f64) -> (f64, f64, f64) {
    let x = x.clamp(0.0, 1.0);
    let s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
    let ds = 30.0 * x * x * (1.0 - x) * (1.0 - x);
    let dds = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
    (s, ds, dds)
}

/// 5-point Gauss–Legendre nodes and weights on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];
/// Longest quadrature panel, s.
const PANEL: f64 = 0.25;

#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    duration: f64,
    psi0: f64,
    dpsi: f64,
    p0: Vector3<f64>,
}

/// Precomputed trajectory ready for sampling.
#[derive(Clone, Debug)]
pub struct Trajectory {
    profile: TrajectoryProfile,
    segments: Vec<Segment>,
    gravity: f64,
}

impl Trajectory {
    /// `gravity` is the magnitude used for the bank angle.
    pub fn new(profile: TrajectoryProfile, gravity: f64) -> Self {
        let mut segments = Vec::new();
        if let TrajectoryProfile::TurnCourse {
            speed,
            heading_deg,
            segments: segs,
        } = &profile
        {
            let mut t0 = 0.0;
            let mut psi = heading_deg.to_radians();
            let mut p0 = Vector3::zeros();
            for s in segs {
                let seg = Segment {
                    t0,
                    duration: s.duration,
                    psi0: psi,
                    dpsi: s.turn_deg.to_radians(),
                    p0,
                };
                p0 = seg_position(&seg, *speed, s.duration);
                t0 += s.duration;
                psi += seg.dpsi;
                segments.push(seg);
            }
            // open-ended straight run
            segments.push(Segment {
                t0,
                duration: f64::INFINITY,
                psi0: psi,
                dpsi: 0.0,
                p0,
            });
        }
        Self {
            profile,
            segments,
            gravity,
        }
    }

    pub fn profile(&self) -> &TrajectoryProfile {
        &self.profile
    }

    /// Period of a closed profile.
    pub fn period(&self) -> Option<f64> {
        match self.profile {
            TrajectoryProfile::FigureEight { radius, speed } => {
                Some(2.0 * std::f64::consts::PI * radius / speed)
            }
            _ => None,
        }
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        let z = Vector3::zeros();
        match &self.profile {
            TrajectoryProfile::Static { .. } => Kinematics {
                position: z,
                velocity: z,
                acceleration: z,
                jerk: z,
            },
            TrajectoryProfile::StraightLine { speed, heading_deg } => {
                let h = heading_deg.to_radians();
                let dir = Vector3::new(h.cos(), h.sin(), 0.0);
                Kinematics {
                    position: dir * (speed * t),
                    velocity: dir * *speed,
                    acceleration: z,
                    jerk: z,
                }
            }
            TrajectoryProfile::FigureEight { radius, speed } => {
                let r = *radius;
                let w = speed / r;
                let (s1, c1) = (w * t).sin_cos();
                let (s2, c2) = (2.0 * w * t).sin_cos();
                Kinematics {
                    position: Vector3::new(r * s1, 0.5 * r * s2, 0.0),
                    velocity: Vector3::new(r * w * c1, r * w * c2, 0.0),
                    acceleration: Vector3::new(-r * w * w * s1, -2.0 * r * w * w * s2, 0.0),
                    jerk: Vector3::new(-r * w.powi(3) * c1, -4.0 * r * w.powi(3) * c2, 0.0),
                }
            }
            TrajectoryProfile::TurnCourse { speed, .. } => {
                let seg = self.segment_at(t);
                let (psi, dpsi, ddpsi) = seg_heading(seg, t - seg.t0);
                let (s, c) = psi.sin_cos();
                let fwd = Vector3::new(c, s, 0.0);
                let left = Vector3::new(-s, c, 0.0);
                Kinematics {
                    position: seg_position(seg, *speed, t - seg.t0),
                    velocity: fwd * *speed,
                    acceleration: left * (speed * dpsi),
                    jerk: left * (speed * ddpsi) - fwd * (speed * dpsi * dpsi),
                }
            }
        }
    }

    fn segment_at(&self, t: f64) -> &Segment {
        let i = self.segments.partition_point(|s| s.t0 <= t).max(1) - 1;
        &self.segments[i]
    }

    fn fallback_heading(&self) -> f64 {
        match &self.profile {
            TrajectoryProfile::Static { heading_deg }
            | TrajectoryProfile::StraightLine { heading_deg, .. }
            | TrajectoryProfile::TurnCourse { heading_deg, .. } => heading_deg.to_radians(),
            TrajectoryProfile::FigureEight { .. } => 0.0,
        }
    }

    pub fn sample(&self, t: f64) -> TrajectoryPoint {
        let k = self.kinematics(t);
        let (vn, ve) = (k.velocity.x, k.velocity.y);
        let (an, ae) = (k.acceleration.x, k.acceleration.y);
        let (jn, je) = (k.jerk.x, k.jerk.y);
        let sp2 = vn * vn + ve * ve;
        let (psi, dpsi, ddpsi, speed, dspeed) = if sp2 < 1e-12 {
            (self.fallback_heading(), 0.0, 0.0, 0.0, 0.0)
        } else {
            let cross = vn * ae - ve * an;
            let dcross = vn * je - ve * jn;
            let dsp2 = 2.0 * (vn * an + ve * ae);
            let dpsi = cross / sp2;
            let ddpsi = (dcross * sp2 - cross * dsp2) / (sp2 * sp2);
            let speed = sp2.sqrt();
            (ve.atan2(vn), dpsi, ddpsi, speed, 0.5 * dsp2 / speed)
        };
        let g = self.gravity;
        let x = speed * dpsi / g;
        let roll = x.atan();
        let droll = (dspeed * dpsi + speed * ddpsi) / g / (1.0 + x * x);
        let attitude = Rotation3::from_euler(roll, 0.0, psi);
        let angular_rate = Vector3::new(droll, dpsi * roll.sin(), dpsi * roll.cos());
        TrajectoryPoint {
            position: k.position,
            velocity: k.velocity,
            acceleration: k.acceleration,
            attitude,
            angular_rate,
        }
    }
}

fn seg_heading(seg: &Segment, tau: f64) -> (f64, f64, f64) {
    if seg.dpsi == 0.0 || !seg.duration.is_finite() {
        return (seg.psi0 + seg.dpsi, 0.0, 0.0);
    }
    let d = seg.duration;
    let (s, ds, dds) = smoothstep(tau / d);
    (
        seg.psi0 + seg.dpsi * s,
        seg.dpsi * ds / d,
        seg.dpsi * dds / (d * d),
    )
}

fn seg_position(seg: &Segment, speed: f64, tau: f64) -> Vector3<f64> {
    if seg.dpsi == 0.0 {
        let (s, c) = seg.psi0.sin_cos();
        return seg.p0 + Vector3::new(c, s, 0.0) * (speed * tau);
    }
    let tau = tau.min(seg.duration);
    let panels = (tau / PANEL).ceil().max(1.0) as usize;
    let h = tau / panels as f64;
    let mut acc = Vector3::zeros();
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for (x, w) in GL5 {
            let (psi, _, _) = seg_heading(seg, mid + 0.5 * h * x);
            acc += Vector3::new(psi.cos(), psi.sin(), 0.0) * (w * 0.5 * h);
        }
    }
    seg.p0 + acc * speed
}
