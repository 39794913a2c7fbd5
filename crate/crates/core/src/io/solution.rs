//! `t status lat lon h vn ve vd roll pitch yaw clk_gps clkd_gps [isb_X isbd_X ...] n_sats opt_time`.
//!
//! Positions are geodetic (degrees, m); velocity and attitude are expressed
//! in the NED frame at the reported point; angles in degrees. Epochs without
//! a state carry `-` in every state column.

use nalgebra::Vector3;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{create, io_err, open, IoError};
use crate::estimator::{EpochSolution, NavState, SolutionStatus};
use crate::eval::PositionRecord;
use crate::geo::{lla_to_ecef, ned_rotation, GeodeticPosition, LocalFrame};
use crate::gnss::{Constellation, ConstellationSet};

/// One parsed line of a solution or truth file.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionRecord {
    pub timestamp: f64,
    pub status: SolutionStatus,
    pub position: Option<GeodeticPosition>,
    /// NED at the point, m/s
    pub velocity: Option<Vector3<f64>>,
    /// roll, pitch, yaw, rad
    pub attitude: Option<(f64, f64, f64)>,
    pub clock_bias: Option<f64>,
    pub clock_drift: Option<f64>,
    /// inter-system offset and drift per constellation
    pub offsets: BTreeMap<Constellation, (f64, f64)>,
    pub num_sats: usize,
    pub optimization_time: f64,
}

impl SolutionRecord {
    pub fn to_position_record(&self) -> PositionRecord {
        let ecef = self.position.as_ref().map(lla_to_ecef);
        let velocity = match (&self.position, self.velocity) {
            (Some(p), Some(v)) => Some(ned_rotation(p).rotate(&v)),
            _ => None,
        };
        PositionRecord {
            timestamp: self.timestamp,
            valid: self.status == SolutionStatus::Valid && ecef.is_some(),
            position: ecef.unwrap_or_else(|| Vector3::repeat(f64::NAN)),
            velocity,
            optimization_time: self.optimization_time,
        }
    }
}

pub fn solution_header(constellations: &ConstellationSet) -> String {
    let mut h = String::from("# t status lat lon h vn ve vd roll pitch yaw clk_gps clkd_gps");
    for c in constellations.iter().filter(|&c| c != Constellation::Gps) {
        h.push_str(&format!(" isb_{c} isbd_{c}"));
    }
    h.push_str(" n_sats opt_time");
    h
}

fn state_columns(s: &EpochSolution, constellations: &ConstellationSet) -> Option<String> {
    let pt = s.at_point()?;
    let (p, v, (roll, pitch, yaw)) = (pt.position, pt.velocity, pt.attitude);
    let clock = &s.state.clock;
    let mut out = format!(
        "{:.9} {:.9} {:.4} {:.4} {:.4} {:.4} {} {} {} {:.4} {:.5}",
        p.latitude.to_degrees(),
        p.longitude.to_degrees(),
        p.height,
        v.x,
        v.y,
        v.z,
        angle(roll),
        angle(pitch),
        angle(yaw),
        clock.gps_bias,
        clock.gps_drift,
    );
    for c in constellations.iter().filter(|&c| c != Constellation::Gps) {
        out.push_str(&format!(
            " {:.4} {:.5}",
            clock.offset(c),
            clock.drift(c) - clock.gps_drift
        ));
    }
    Some(out)
}

fn angle(a: f64) -> String {
    if a.is_finite() {
        format!("{:.5}", a.to_degrees())
    } else {
        "nan".to_string()
    }
}

/// Writes one line per solution. `record_timing` writes measured optimization
/// times; otherwise they are `nan` so repeated runs produce identical files.
pub fn write_solutions<W: Write>(
    mut w: W,
    solutions: &[EpochSolution],
    constellations: &ConstellationSet,
    record_timing: bool,
) -> std::io::Result<()> {
    writeln!(w, "{}", solution_header(constellations))?;
    let n_state = 11 + 2 * (constellations.len() - 1);
    for s in solutions {
        let cols = state_columns(s, constellations).unwrap_or_else(|| vec!["-"; n_state].join(" "));
        let opt_time = if record_timing {
            format!("{:.6}", s.optimization_time)
        } else {
            "nan".to_string()
        };
        writeln!(
            w,
            "{:.6} {} {cols} {} {opt_time}",
            s.timestamp(),
            s.status.token(),
            s.total_sats()
        )?;
    }
    w.flush()
}

pub fn write_solution_file(
    path: &Path,
    solutions: &[EpochSolution],
    constellations: &ConstellationSet,
    record_timing: bool,
) -> Result<(), IoError> {
    write_solutions(create(path)?, solutions, constellations, record_timing).map_err(io_err(path))
}

/// Truth states in the solution format, as valid epochs.
pub fn truth_solutions(
    states: &[NavState],
    frame: &LocalFrame,
    num_sats: &[usize],
) -> Vec<EpochSolution> {
    states
        .iter()
        .zip(num_sats.iter().copied().chain(std::iter::repeat(0)))
        .map(|(s, n)| EpochSolution {
            state: s.clone(),
            status: SolutionStatus::Valid,
            frame: Some(*frame),
            num_sats_used: if n > 0 {
                BTreeMap::from([(Constellation::Gps, n)])
            } else {
                BTreeMap::new()
            },
            optimization_time: f64::NAN,
            position_covariance: None,
        })
        .collect()
}

fn parse_status(s: &str) -> Option<SolutionStatus> {
    [
        SolutionStatus::Valid,
        SolutionStatus::Unavailable,
        SolutionStatus::Diverged,
    ]
    .into_iter()
    .find(|x| x.token() == s)
}

/// Parses a solution file; inter-system columns are named by the header.
pub fn parse_solutions<R: BufRead>(reader: R) -> Result<Vec<SolutionRecord>, IoError> {
    let mut extra: Vec<Constellation> = Vec::new();
    let mut out: Vec<SolutionRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let ln = i + 1;
        let line = line.map_err(|e| IoError::parse(ln, e.to_string()))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix('#') {
            if h.split_whitespace().next() == Some("t") {
                extra = h
                    .split_whitespace()
                    .filter_map(|c| c.strip_prefix("isb_"))
                    .map(|c| c.parse().map_err(|e| IoError::parse(ln, format!("{e}"))))
                    .collect::<Result<_, _>>()?;
            }
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let n = 15 + 2 * extra.len();
        if f.len() != n {
            return Err(IoError::parse(
                ln,
                format!("expected {n} fields, found {}", f.len()),
            ));
        }
        let num = |k: usize| -> Result<Option<f64>, IoError> {
            match f[k] {
                "-" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|_| {
                    IoError::parse(ln, format!("field {}: cannot parse '{s}'", k + 1))
                }),
            }
        };
        let timestamp = num(0)?
            .filter(|x| x.is_finite())
            .ok_or_else(|| IoError::parse(ln, "missing time"))?;
        if let Some(prev) = out.last() {
            if timestamp <= prev.timestamp {
                return Err(IoError::parse(
                    ln,
                    format!("time {timestamp} does not increase"),
                ));
            }
        }
        let status = parse_status(f[1])
            .ok_or_else(|| IoError::parse(ln, format!("unknown status '{}'", f[1])))?;
        let position = match (num(2)?, num(3)?, num(4)?) {
            (Some(lat), Some(lon), Some(h)) => Some(GeodeticPosition::from_degrees(lat, lon, h)),
            _ => None,
        };
        let velocity = match (num(5)?, num(6)?, num(7)?) {
            (Some(a), Some(b), Some(c)) => Some(Vector3::new(a, b, c)),
            _ => None,
        };
        let attitude = match (num(8)?, num(9)?, num(10)?) {
            (Some(r), Some(p), Some(y)) if r.is_finite() && p.is_finite() && y.is_finite() => {
                Some((r.to_radians(), p.to_radians(), y.to_radians()))
            }
            _ => None,
        };
        let mut offsets = BTreeMap::new();
        for (j, c) in extra.iter().enumerate() {
            if let (Some(o), Some(d)) = (num(13 + 2 * j)?, num(14 + 2 * j)?) {
                offsets.insert(*c, (o, d));
            }
        }
        let num_sats = f[n - 2]
            .parse()
            .map_err(|_| IoError::parse(ln, format!("bad satellite count '{}'", f[n - 2])))?;
        out.push(SolutionRecord {
            timestamp,
            status,
            position,
            velocity,
            attitude,
            clock_bias: num(11)?,
            clock_drift: num(12)?,
            offsets,
            num_sats,
            optimization_time: num(n - 1)?.unwrap_or(f64::NAN),
        });
    }
    Ok(out)
}

pub fn read_solution_file(path: &Path) -> Result<Vec<SolutionRecord>, IoError> {
    parse_solutions(open(path)?).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{run_dataset, EstimatorConfig};
    use crate::geo::{so3_log, Rotation3};
    use crate::sim::{simulate, ScenarioConfig};

    #[test]
    fn truth_round_trips_through_the_file() {
        let mut cfg = ScenarioConfig::noise_free(3.0);
        cfg.satellites.galileo = 4;
        let sc = simulate(&cfg).unwrap();
        let set = ConstellationSet::new(&[Constellation::Gps, Constellation::Galileo]).unwrap();
        let states: Vec<NavState> = sc
            .gnss
            .iter()
            .map(|e| sc.truth_at(e.timestamp).unwrap().clone())
            .collect();
        let sols = truth_solutions(&states, &sc.frame, &[8, 12]);
        let mut buf = Vec::new();
        write_solutions(&mut buf, &sols, &set, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "# t status lat lon h vn ve vd roll pitch yaw clk_gps clkd_gps isb_GAL isbd_GAL n_sats"
        ));
        let recs = parse_solutions(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), states.len());
        assert_eq!(
            (recs[0].num_sats, recs[1].num_sats, recs[2].num_sats),
            (8, 12, 0)
        );
        for (r, s) in recs.iter().zip(&states) {
            let p = r.to_position_record();
            assert!((p.position - sc.frame.to_ecef(&s.position)).norm() < 1e-3);
            assert!((p.velocity.unwrap() - sc.frame.vec_to_ecef(&s.velocity)).norm() < 1e-3);
            let (roll, pitch, yaw) = r.attitude.unwrap();
            let at_point = ned_rotation(r.position.as_ref().unwrap());
            let r_e = at_point.compose(&Rotation3::from_euler(roll, pitch, yaw));
            let truth_e = sc.frame.r_ne.compose(&s.attitude);
            assert!(so3_log(&r_e.transpose().compose(&truth_e)).norm() < 1e-6);
            assert!(
                (r.offsets[&Constellation::Galileo].0 - s.clock.offset(Constellation::Galileo))
                    .abs()
                    < 1e-4
            );
            assert!(r.optimization_time.is_nan());
        }
    }

    #[test]
    fn empty_epochs_use_dashes() {
        let sc = simulate(&ScenarioConfig::noise_free(2.0)).unwrap();
        let out = run_dataset(&sc.imu, &sc.gnss, &EstimatorConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_solutions(
            &mut buf,
            &out.solutions,
            &ConstellationSet::gps_only(),
            false,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().nth(1).unwrap();
        assert_eq!(first, "0.000000 unavailable - - - - - - - - - - - 0 nan");
        let recs = parse_solutions(text.as_bytes()).unwrap();
        assert_eq!(recs[0].status, SolutionStatus::Unavailable);
        assert!(!recs[0].to_position_record().valid);
        assert!(recs[2].to_position_record().valid);
    }

    #[test]
    fn malformed_solution_lines() {
        let head =
            "# t status lat lon h vn ve vd roll pitch yaw clk_gps clkd_gps n_sats opt_time\n";
        for (body, line) in [
            ("0 valid 1 2 3 0 0 0 0 0 0 0 0 8\n", 2),
            ("0 bogus 1 2 3 0 0 0 0 0 0 0 0 8 nan\n", 2),
            (
                "1 valid 1 2 3 0 0 0 0 0 0 0 0 8 nan\n0.5 valid 1 2 3 0 0 0 0 0 0 0 0 8 nan\n",
                3,
            ),
        ] {
            let e = parse_solutions(format!("{head}{body}").as_bytes()).unwrap_err();
            assert!(
                matches!(e, IoError::Parse { line: l, .. } if l == line),
                "{e}"
            );
        }
    }
}
