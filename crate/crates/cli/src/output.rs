//! CSV output for trajectories and benchmark reports.
//!
//! Files start with optional `#` comment lines (the effective run
//! configuration), followed by one header line and the data rows. Floats are
//! written with 17 significant digits so parsing recovers them exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bilevel_core::{Trajectory, Vector};

use crate::benchmark::{AggregateRow, BenchmarkReport, RunRow};
use crate::error::{CliError, Result};

pub const TRAJECTORY_COLUMNS: [&str; 7] = [
    "k",
    "alpha",
    "phi_y",
    "omega_y",
    "step_residual",
    "map_residual",
    "elapsed_seconds",
];

pub const DISTANCE_COLUMN: &str = "distance";

pub const REPORT_COLUMNS: [&str; 17] = [
    "kind",
    "problem_id",
    "rho",
    "gamma",
    "replication",
    "seed",
    "iterations",
    "elapsed_seconds",
    "rfg",
    "rog",
    "rog_absolute",
    "phi_gap",
    "termination",
    "runs",
    "at_limit",
    "failed",
    "error",
];

/// Renders `v` with 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn parse_float(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

fn open(path: &Path, preamble: Option<&str>) -> Result<csv::Writer<BufWriter<File>>> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut file = BufWriter::new(File::create(path).map_err(io_err)?);
    if let Some(text) = preamble {
        file.write_all(text.as_bytes()).map_err(io_err)?;
    }
    Ok(csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn finish(w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    w.into_inner()
        .map_err(|e| io_err(e.into_error()))?
        .flush()
        .map_err(io_err)
}

/// Writes the recorded iterations of `traj`. With `reference`, a last
/// column holds `||x^k - reference||`.
pub fn write_trajectory_csv(
    path: &Path,
    traj: &Trajectory,
    reference: Option<&Vector>,
    preamble: Option<&str>,
) -> Result<()> {
    let mut w = open(path, preamble)?;
    let err = csv_err(path);
    let mut header: Vec<&str> = TRAJECTORY_COLUMNS.to_vec();
    if reference.is_some() {
        header.push(DISTANCE_COLUMN);
    }
    w.write_record(&header).map_err(&err)?;
    for r in &traj.records {
        let mut row = vec![
            r.k.to_string(),
            format_float(r.alpha),
            format_float(r.phi_y),
            format_float(r.omega_y),
            format_float(r.step_residual),
            format_float(r.map_residual),
            format_float(r.elapsed.as_secs_f64()),
        ];
        if let Some(x_ref) = reference {
            row.push(format_float((&r.x - x_ref).norm()));
        }
        w.write_record(&row).map_err(&err)?;
    }
    finish(w, path)
}

/// One parsed trajectory line.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub k: usize,
    pub alpha: f64,
    pub phi_y: f64,
    pub omega_y: f64,
    pub step_residual: f64,
    pub map_residual: f64,
    pub elapsed_seconds: f64,
    pub distance: Option<f64>,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err(path))
}

fn format_error(path: &Path, reason: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let with_distance = match header.len() {
        7 => false,
        8 if &header[7] == DISTANCE_COLUMN => true,
        _ => return Err(format_error(path, "not a trajectory CSV")),
    };
    if header.iter().take(7).ne(TRAJECTORY_COLUMNS) {
        return Err(format_error(path, "not a trajectory CSV"));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = || format_error(path, format!("record {}: malformed value", line + 1));
        let f = |i: usize| parse_float(&rec[i]).ok_or_else(bad);
        rows.push(TrajectoryRow {
            k: rec[0].parse().map_err(|_| bad())?,
            alpha: f(1)?,
            phi_y: f(2)?,
            omega_y: f(3)?,
            step_residual: f(4)?,
            map_residual: f(5)?,
            elapsed_seconds: f(6)?,
            distance: if with_distance { Some(f(7)?) } else { None },
        });
    }
    Ok(rows)
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn run_record(r: &RunRow) -> Vec<String> {
    vec![
        "run".into(),
        r.problem_id.clone(),
        format_float(r.rho),
        format_float(r.gamma),
        r.replication.to_string(),
        r.seed.to_string(),
        r.iterations.map(|i| i.to_string()).unwrap_or_default(),
        opt_float(r.elapsed_seconds),
        opt_float(r.rfg),
        opt_float(r.rog),
        r.rog_absolute.to_string(),
        opt_float(r.phi_gap),
        r.termination.clone().unwrap_or_default(),
        "1".into(),
        (r.at_limit() as u8).to_string(),
        (r.error.is_some() as u8).to_string(),
        r.error.clone().unwrap_or_default(),
    ]
}

fn aggregate_record(a: &AggregateRow) -> Vec<String> {
    vec![
        "mean".into(),
        a.problem_id.clone(),
        format_float(a.rho),
        format_float(a.gamma),
        String::new(),
        String::new(),
        format_float(a.mean_iterations),
        format_float(a.mean_elapsed_seconds),
        format_float(a.mean_rfg),
        format_float(a.mean_rog),
        String::new(),
        format_float(a.mean_phi_gap),
        String::new(),
        a.runs.to_string(),
        a.at_limit.to_string(),
        a.failed.to_string(),
        String::new(),
    ]
}

/// Run rows followed by aggregate rows, distinguished by the `kind` column.
pub fn write_report_csv(path: &Path, report: &BenchmarkReport, preamble: Option<&str>) -> Result<()> {
    let mut w = open(path, preamble)?;
    let err = csv_err(path);
    w.write_record(REPORT_COLUMNS).map_err(&err)?;
    for r in &report.rows {
        w.write_record(run_record(r)).map_err(&err)?;
    }
    for a in &report.aggregates {
        w.write_record(aggregate_record(a)).map_err(&err)?;
    }
    finish(w, path)
}

/// Raw report records keyed by column name order [`REPORT_COLUMNS`].
pub fn read_report_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(REPORT_COLUMNS) {
        return Err(format_error(path, "not a benchmark report CSV"));
    }
    rdr.records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_owned).collect())
                .map_err(csv_err(path))
        })
        .collect()
}
