//! Metric tables, availability curves, lag-sweep tables and mask files.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{create, expect_len, finite_field, io_err, open, records, IoError};
use crate::eval::{EpochMask, LagSweepRow};

/// Reads excluded segments, one `start end` pair per line.
pub fn parse_mask<R: BufRead>(reader: R) -> Result<EpochMask, IoError> {
    let mut mask = EpochMask::all();
    for rec in records(reader) {
        let (line, f) = rec?;
        expect_len(line, &f, 2)?;
        mask = mask.exclude(
            finite_field(line, &f, 0, "start")?,
            finite_field(line, &f, 1, "end")?,
        );
    }
    Ok(mask)
}

pub fn read_mask_file(path: &Path) -> Result<EpochMask, IoError> {
    parse_mask(open(path)?).map_err(|e| e.in_file(path))
}

/// `name value` lines.
pub fn write_metrics<W: Write>(mut w: W, metrics: &[(&str, f64)]) -> std::io::Result<()> {
    writeln!(w, "# metric value")?;
    for (k, v) in metrics {
        writeln!(w, "{k} {v:.6}")?;
    }
    w.flush()
}

pub fn write_metrics_file(path: &Path, metrics: &[(&str, f64)]) -> Result<(), IoError> {
    write_metrics(create(path)?, metrics).map_err(io_err(path))
}

pub fn write_availability<W: Write>(mut w: W, curve: &[(f64, f64)]) -> std::io::Result<()> {
    writeln!(w, "# threshold_m fraction")?;
    for (t, f) in curve {
        writeln!(w, "{t:.3} {f:.6}")?;
    }
    w.flush()
}

pub fn write_availability_file(path: &Path, curve: &[(f64, f64)]) -> Result<(), IoError> {
    write_availability(create(path)?, curve).map_err(io_err(path))
}

pub fn write_lag_sweep<W: Write>(mut w: W, rows: &[LagSweepRow]) -> std::io::Result<()> {
    writeln!(w, "# lag_s rmse2d_m rmse3d_m mean_opt_time_s")?;
    for r in rows {
        writeln!(
            w,
            "{} {:.6} {:.6} {:.6}",
            r.lag, r.rmse_2d, r.rmse_3d, r.mean_optimization_time
        )?;
    }
    w.flush()
}

pub fn write_lag_sweep_file(path: &Path, rows: &[LagSweepRow]) -> Result<(), IoError> {
    write_lag_sweep(create(path)?, rows).map_err(io_err(path))
}
