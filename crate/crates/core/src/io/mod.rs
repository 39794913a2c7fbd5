//! Line-oriented text formats and run configuration files.

mod config;
mod gnss;
mod imu;
mod metrics;
mod solution;

pub use config::{RunConfigFile, RunMode, CONFIG_ECHO};
pub use gnss::{parse_gnss, read_gnss_file, write_gnss, write_gnss_file};
pub use imu::{parse_imu, read_imu_file, write_imu, write_imu_file};
pub use metrics::{
    parse_mask, read_mask_file, write_availability, write_availability_file, write_lag_sweep,
    write_lag_sweep_file, write_metrics, write_metrics_file,
};
pub use solution::{
    parse_solutions, read_solution_file, solution_header, truth_solutions, write_solution_file,
    write_solutions, SolutionRecord,
};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<IoError>,
    },
    #[error("invalid config: {0}")]
    Config(String),
}

impl IoError {
    fn parse(line: usize, msg: impl Into<String>) -> Self {
        IoError::Parse {
            line,
            msg: msg.into(),
        }
    }

    fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (IoError::Io { .. } | IoError::File { .. }) => e,
            e => IoError::File {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Non-comment lines split into fields on whitespace or commas, with their
/// 1-based line numbers.
fn records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, Vec<String>), IoError>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(IoError::parse(i + 1, e.to_string()))),
        };
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            return None;
        }
        let fields = t
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(String::from);
        Some(Ok((i + 1, fields.collect())))
    })
}

fn field(line: usize, fields: &[String], i: usize, name: &str) -> Result<f64, IoError> {
    let s = &fields[i];
    s.parse::<f64>().map_err(|_| {
        IoError::parse(
            line,
            format!("field {} ({name}): cannot parse '{s}'", i + 1),
        )
    })
}

fn finite_field(line: usize, fields: &[String], i: usize, name: &str) -> Result<f64, IoError> {
    let v = field(line, fields, i, name)?;
    if !v.is_finite() {
        return Err(IoError::parse(
            line,
            format!("field {} ({name}) must be finite", i + 1),
        ));
    }
    Ok(v)
}

fn expect_len(line: usize, fields: &[String], n: usize) -> Result<(), IoError> {
    if fields.len() != n {
        return Err(IoError::parse(
            line,
            format!("expected {n} fields, found {}", fields.len()),
        ));
    }
    Ok(())
}

/// Shortest round-trip representation, `nan` for missing values.
fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    num(x.unwrap_or(f64::NAN))
}
