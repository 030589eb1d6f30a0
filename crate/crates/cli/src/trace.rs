//! Trace CSV files.

use std::path::Path;

use lowrank_sdp::TraceRecord;

use crate::error::{CliError, CliResult};

pub const TRACE_HEADER: [&str; 8] = [
    "iter",
    "phi",
    "f_val",
    "feas",
    "grad_map_norm",
    "dist_to_solution",
    "inner_iters",
    "wall_time",
];

fn float(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:e}")
    }
}

fn row(rec: &TraceRecord) -> Vec<String> {
    vec![
        rec.iter.to_string(),
        float(rec.phi),
        float(rec.f_val),
        float(rec.feas),
        float(rec.grad_map_norm),
        rec.dist_to_solution.map(float).unwrap_or_default(),
        rec.inner_iters.to_string(),
        float(rec.wall_time),
    ]
}

fn create(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(CliError::from)
}

/// Writes the trace with the fixed header; NaN and absent values become
/// empty fields.
pub fn trace_to_csv(trace: &[TraceRecord], path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_record(TRACE_HEADER)?;
    for rec in trace {
        w.write_record(row(rec))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Same columns plus a trailing `method` column.
pub fn trace_to_csv_with_method(trace: &[TraceRecord], method: &str, path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    let mut header: Vec<&str> = TRACE_HEADER.to_vec();
    header.push("method");
    w.write_record(&header)?;
    for rec in trace {
        let mut r = row(rec);
        r.push(method.to_string());
        w.write_record(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parse_float(s: &str, path: &Path) -> CliResult<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| CliError::Input(format!("{}: bad number `{s}`", path.display())))
}

fn parse_int(s: &str, path: &Path) -> CliResult<usize> {
    s.parse()
        .map_err(|_| CliError::Input(format!("{}: bad integer `{s}`", path.display())))
}

pub fn read_trace_csv(path: &Path) -> CliResult<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().take(8).ne(TRACE_HEADER.iter().copied()) {
        return Err(CliError::Input(format!("{}: unexpected trace header", path.display())));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let dist = get(5);
        out.push(TraceRecord {
            iter: parse_int(get(0), path)?,
            phi: parse_float(get(1), path)?,
            f_val: parse_float(get(2), path)?,
            feas: parse_float(get(3), path)?,
            grad_map_norm: parse_float(get(4), path)?,
            dist_to_solution: if dist.is_empty() { None } else { Some(parse_float(dist, path)?) },
            inner_iters: parse_int(get(6), path)?,
            wall_time: parse_float(get(7), path)?,
        });
    }
    Ok(out)
}
