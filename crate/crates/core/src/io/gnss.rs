//! `t sat_id const pr prr sat_x sat_y sat_z sat_vx sat_vy sat_vz sat_clk sat_clkd trop iono cn0`,
//! one observation per line, consecutive lines with equal `t` forming one epoch.

use nalgebra::Vector3;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{create, expect_len, field, finite_field, io_err, num, open, opt, records, IoError};
use crate::gnss::{Constellation, GnssEpoch, SatObservation};

const COLUMNS: usize = 16;

pub fn parse_gnss<R: BufRead>(reader: R) -> Result<Vec<GnssEpoch>, IoError> {
    let mut out: Vec<GnssEpoch> = Vec::new();
    for rec in records(reader) {
        let (line, f) = rec?;
        expect_len(line, &f, COLUMNS)?;
        let t = finite_field(line, &f, 0, "t")?;
        let constellation: Constellation = f[2]
            .parse()
            .map_err(|e| IoError::parse(line, format!("{e}")))?;
        let fin = |i: usize, name: &str| finite_field(line, &f, i, name);
        let optional = |i: usize, name: &str| -> Result<Option<f64>, IoError> {
            let v = field(line, &f, i, name)?;
            Ok(v.is_finite().then_some(v))
        };
        let obs = SatObservation {
            sat_id: f[1].clone(),
            constellation,
            pseudorange: fin(3, "pr")?,
            // a missing rate leaves the observation without a Doppler factor
            pseudorange_rate: field(line, &f, 4, "prr")?,
            sat_pos: Vector3::new(fin(5, "sat_x")?, fin(6, "sat_y")?, fin(7, "sat_z")?),
            sat_vel: Vector3::new(fin(8, "sat_vx")?, fin(9, "sat_vy")?, fin(10, "sat_vz")?),
            sat_clock_bias: fin(11, "sat_clk")?,
            sat_clock_drift: fin(12, "sat_clkd")?,
            tropo_delay: optional(13, "trop")?,
            iono_delay: optional(14, "iono")?,
            cn0: optional(15, "cn0")?,
            elevation: None,
        };
        match out.last_mut() {
            Some(e) if e.timestamp == t => {
                if e.observations.iter().any(|o| o.sat_id == obs.sat_id) {
                    return Err(IoError::parse(
                        line,
                        format!("duplicate satellite {} at t={t}", obs.sat_id),
                    ));
                }
                e.observations.push(obs);
            }
            Some(e) if t < e.timestamp => {
                return Err(IoError::parse(
                    line,
                    format!("time {t} does not increase (previous {})", e.timestamp),
                ));
            }
            _ => out.push(GnssEpoch {
                timestamp: t,
                observations: vec![obs],
            }),
        }
    }
    Ok(out)
}

pub fn read_gnss_file(path: &Path) -> Result<Vec<GnssEpoch>, IoError> {
    parse_gnss(open(path)?).map_err(|e| e.in_file(path))
}

/// Epochs without observations cannot be represented and are skipped.
pub fn write_gnss<W: Write>(mut w: W, epochs: &[GnssEpoch]) -> std::io::Result<()> {
    writeln!(w, "# t sat_id const pr prr sat_x sat_y sat_z sat_vx sat_vy sat_vz sat_clk sat_clkd trop iono cn0")?;
    for e in epochs {
        for o in &e.observations {
            let (p, v) = (&o.sat_pos, &o.sat_vel);
            let nums = [
                o.pseudorange,
                o.pseudorange_rate,
                p.x,
                p.y,
                p.z,
                v.x,
                v.y,
                v.z,
                o.sat_clock_bias,
                o.sat_clock_drift,
            ]
            .map(num);
            writeln!(
                w,
                "{} {} {} {} {} {} {}",
                num(e.timestamp),
                o.sat_id,
                o.constellation,
                nums.join(" "),
                opt(o.tropo_delay),
                opt(o.iono_delay),
                opt(o.cn0)
            )?;
        }
    }
    w.flush()
}

pub fn write_gnss_file(path: &Path, epochs: &[GnssEpoch]) -> Result<(), IoError> {
    write_gnss(create(path)?, epochs).map_err(io_err(path))
}
