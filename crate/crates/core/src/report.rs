//! Trace CSV and certificate JSON output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::certify::Certificate;
use crate::trace::RunTrace;

/// Header of the trace CSV, after the leading timestamp comment.
pub const TRACE_COLUMNS: [&str; 7] =
    ["k", "f", "step_norm", "index_set_size", "subproblems", "cumulative_subproblems", "wall_ns"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize)]
struct TraceRow {
    k: usize,
    f: f64,
    step_norm: f64,
    index_set_size: usize,
    subproblems: usize,
    cumulative_subproblems: usize,
    wall_ns: u64,
}

/// Writes the trace as CSV: one `# generated …` comment line, a header, then
/// one row per recorded iterate. `wall_ns` is zeroed unless `record_timing`
/// is set, so reruns with the same seed produce identical bytes after the
/// first line.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &RunTrace, record_timing: bool) -> Result<(), ReportError> {
    writeln!(out, "# generated {}", chrono::Utc::now().to_rfc3339())
        .map_err(|source| ReportError::Io { path: PathBuf::from("<trace>"), source })?;
    let mut w = csv::Writer::from_writer(out);
    let mut cumulative = 0;
    for r in &trace.records {
        cumulative += r.subproblems_solved;
        w.serialize(TraceRow {
            k: r.k,
            f: r.f_value,
            step_norm: r.step_norm,
            index_set_size: r.index_set_size,
            subproblems: r.subproblems_solved,
            cumulative_subproblems: cumulative,
            wall_ns: if record_timing { r.wall_ns } else { 0 },
        })?;
    }
    if trace.records.is_empty() {
        w.write_record(TRACE_COLUMNS)?;
    }
    w.flush().map_err(|source| ReportError::Io { path: PathBuf::from("<trace>"), source })?;
    Ok(())
}

/// The trace CSV as a string.
pub fn trace_csv_string(trace: &RunTrace, record_timing: bool) -> Result<String, ReportError> {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, trace, record_timing)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Drops the leading timestamp comment.
pub fn strip_timestamp(csv: &str) -> &str {
    match csv.strip_prefix("# generated ") {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => csv,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

pub fn save_trace_csv(path: &Path, trace: &RunTrace, record_timing: bool) -> Result<(), ReportError> {
    write_trace_csv(create(path)?, trace, record_timing)
}

pub fn certificate_json(cert: &Certificate) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(cert)?)
}

pub fn save_certificate_json(path: &Path, cert: &Certificate) -> Result<(), ReportError> {
    let mut w = create(path)?;
    let body = certificate_json(cert)?;
    writeln!(w, "{body}").map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    w.flush().map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}
