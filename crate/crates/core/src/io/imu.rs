//! `t ax ay az gx gy gz`, SI units, body frame.

use nalgebra::Vector3;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{create, expect_len, finite_field, io_err, num, open, records, IoError};
use crate::preint::ImuSample;

pub fn parse_imu<R: BufRead>(reader: R) -> Result<Vec<ImuSample>, IoError> {
    let mut out: Vec<ImuSample> = Vec::new();
    for rec in records(reader) {
        let (line, f) = rec?;
        expect_len(line, &f, 7)?;
        let v =
            (0..7).map(|i| finite_field(line, &f, i, ["t", "ax", "ay", "az", "gx", "gy", "gz"][i]));
        let v = v.collect::<Result<Vec<f64>, _>>()?;
        if let Some(prev) = out.last() {
            if v[0] <= prev.timestamp {
                return Err(IoError::parse(
                    line,
                    format!(
                        "time {} does not increase (previous {})",
                        v[0], prev.timestamp
                    ),
                ));
            }
        }
        out.push(ImuSample::new(
            v[0],
            Vector3::new(v[1], v[2], v[3]),
            Vector3::new(v[4], v[5], v[6]),
        ));
    }
    Ok(out)
}

pub fn read_imu_file(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    parse_imu(open(path)?).map_err(|e| e.in_file(path))
}

pub fn write_imu<W: Write>(mut w: W, samples: &[ImuSample]) -> std::io::Result<()> {
    writeln!(w, "# t ax ay az gx gy gz")?;
    for s in samples {
        let (f, g) = (&s.specific_force, &s.angular_rate);
        let cols = [s.timestamp, f.x, f.y, f.z, g.x, g.y, g.z].map(num);
        writeln!(w, "{}", cols.join(" "))?;
    }
    w.flush()
}

pub fn write_imu_file(path: &Path, samples: &[ImuSample]) -> Result<(), IoError> {
    write_imu(create(path)?, samples).map_err(io_err(path))
}
