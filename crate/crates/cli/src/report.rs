//! Aggregates the mean rows of several runs into one table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pei_core::metrics::MetricReport;

use crate::error::{io_at, CliError, CliResult};
use crate::evaluate::{fmt_value, METRICS_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run: String,
    pub mean: MetricReport,
}

fn parse_cell(cell: &str, path: &Path) -> CliResult<Option<f64>> {
    match cell.trim() {
        "" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        "-inf" => Ok(Some(f64::NEG_INFINITY)),
        s => s
            .parse()
            .map(Some)
            .map_err(|_| io_at(path, format!("bad metric value `{s}`"))),
    }
}

/// Locates the metrics file of a run directory (`eval/metrics.csv` or
/// `metrics.csv`), or accepts a CSV path directly.
pub fn metrics_path(run: &Path) -> PathBuf {
    if run.is_file() {
        return run.to_path_buf();
    }
    let nested = run.join("eval").join(METRICS_FILE);
    if nested.exists() {
        nested
    } else {
        run.join(METRICS_FILE)
    }
}

/// Reads the `mean` row of a metrics CSV; every metric column must be present.
pub fn read_mean_row(path: &Path) -> CliResult<MetricReport> {
    let text = std::fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
    let mut idx = [0usize; 6];
    for (k, col) in MetricReport::COLUMNS.iter().enumerate() {
        idx[k] = header
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| CliError::Config(format!("{}: missing column `{col}`", path.display())))?;
    }
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.first().map(|c| c.trim()) == Some("mean") {
            let mut v = [None; 6];
            for k in 0..6 {
                v[k] = parse_cell(cells.get(idx[k]).copied().unwrap_or(""), path)?;
            }
            return Ok(MetricReport::from_values(v));
        }
    }
    Err(CliError::Config(format!("{}: no `mean` row", path.display())))
}

fn run_name(run: &Path) -> String {
    let base = if run.is_file() { run.parent().and_then(|p| p.parent()).unwrap_or(run) } else { run };
    base.file_name().and_then(|s| s.to_str()).unwrap_or("run").to_string()
}

/// One row per run, sorted by QNR descending; runs without QNR go last in
/// their given order.
pub fn collect(runs: &[PathBuf]) -> CliResult<Vec<RunRow>> {
    let mut rows = runs
        .iter()
        .map(|r| {
            Ok(RunRow {
                run: run_name(r),
                mean: read_mean_row(&metrics_path(r))?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    rows.sort_by(|a, b| match (a.mean.qnr, b.mean.qnr) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

pub fn to_csv(rows: &[RunRow]) -> String {
    let mut s = String::from("run");
    for c in MetricReport::COLUMNS {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for r in rows {
        s.push_str(&r.run);
        for v in r.mean.values() {
            let _ = write!(s, ",{}", fmt_value(v));
        }
        s.push('\n');
    }
    s
}

pub fn to_markdown(rows: &[RunRow]) -> String {
    let mut s = String::from("| run |");
    for c in MetricReport::COLUMNS {
        let _ = write!(s, " {c} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(MetricReport::COLUMNS.len()));
    s.push('\n');
    for r in rows {
        let _ = write!(s, "| {} |", r.run);
        for v in r.mean.values() {
            let _ = write!(s, " {} |", fmt_value(v));
        }
        s.push('\n');
    }
    s
}

/// Writes `report.csv` and `report.md` into `out`.
pub fn report(runs: &[PathBuf], out: &Path) -> CliResult<Vec<RunRow>> {
    if runs.is_empty() {
        return Err(CliError::Config("report needs at least one run directory".into()));
    }
    let rows = collect(runs)?;
    std::fs::create_dir_all(out).map_err(|e| io_at(out, e))?;
    std::fs::write(out.join("report.csv"), to_csv(&rows)).map_err(|e| io_at(out, e))?;
    std::fs::write(out.join("report.md"), to_markdown(&rows)).map_err(|e| io_at(out, e))?;
    Ok(rows)
}
