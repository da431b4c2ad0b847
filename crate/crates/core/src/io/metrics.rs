//! Per-round metrics as CSV.
//!
//! Columns: `round, trial_loss, global_loss, grad_norm_sq, suboptimality,
//! w_1..w_n, b_1..b_n, wall_micros`. Reals use Rust's shortest round-trip
//! formatting, so parsing a file and writing it back reproduces it byte for
//! byte. An absent suboptimality is an empty field.

use std::fs;
use std::path::Path;

use crate::engine::{LocalTrace, RoundReport};
use crate::error::{Error, Result};

pub type MetricsRow = RoundReport;

/// Identifies the column layout; bumped whenever columns change.
pub const METRICS_FORMAT: &str = "byzant-metrics-v1";

pub fn metrics_header(workers: usize) -> Vec<String> {
    let mut h: Vec<String> = ["round", "trial_loss", "global_loss", "grad_norm_sq", "suboptimality"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=workers).map(|i| format!("w_{i}")));
    h.extend((1..=workers).map(|i| format!("b_{i}")));
    h.push("wall_micros".into());
    h
}

fn record(row: &MetricsRow) -> Vec<String> {
    let mut r = vec![
        row.round.to_string(),
        row.trial_loss.to_string(),
        row.global_loss.to_string(),
        row.grad_norm_sq.to_string(),
        row.suboptimality.map(|v| v.to_string()).unwrap_or_default(),
    ];
    r.extend(row.weights.iter().map(|w| w.to_string()));
    r.extend(row.byzantine.iter().map(|b| if *b { "1" } else { "0" }.to_string()));
    r.push(row.wall_micros.to_string());
    r
}

/// Renders rows as CSV text. `workers` fixes the column count when `rows` is empty.
pub fn metrics_to_csv(rows: &[MetricsRow], workers: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid("metrics", e.to_string());
    w.write_record(metrics_header(workers)).map_err(csv_err)?;
    for row in rows {
        if row.weights.len() != workers || row.byzantine.len() != workers {
            return Err(Error::DimensionMismatch {
                expected: workers,
                got: row.weights.len(),
            });
        }
        w.write_record(record(row)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid("metrics", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

pub fn write_metrics(rows: &[MetricsRow], workers: usize, path: &Path) -> Result<()> {
    let text = metrics_to_csv(rows, workers)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::invalid("metrics", format!("row {line}: {}", msg.into()))
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::invalid("metrics", e.to_string()))?
        .clone();
    let cols = header.len();
    if cols < 6 || (cols - 6) % 2 != 0 {
        return Err(Error::invalid("metrics", format!("unexpected column count {cols}")));
    }
    let n = (cols - 6) / 2;
    if header.iter().collect::<Vec<_>>() != metrics_header(n) {
        return Err(Error::invalid("metrics", "header does not match the metrics layout"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let real = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|_| bad(line, format!("column {k} is not a number")))
        };
        let suboptimality = if rec[4].is_empty() { None } else { Some(real(4)?) };
        let weights = (0..n).map(|j| real(5 + j)).collect::<Result<Vec<_>>>()?;
        let byzantine = (0..n)
            .map(|j| match &rec[5 + n + j] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(bad(line, format!("byzantine flag `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(RoundReport {
            round: rec[0].parse().map_err(|_| bad(line, "round is not an integer"))?,
            trial_loss: real(1)?,
            global_loss: real(2)?,
            grad_norm_sq: real(3)?,
            suboptimality,
            weights,
            byzantine,
            wall_micros: rec[cols - 1]
                .parse()
                .map_err(|_| bad(line, "wall_micros is not an integer"))?,
        });
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text)
}

pub fn write_local_trace(trace: &[LocalTrace], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid("trace", e.to_string());
    w.write_record(["iteration", "worker", "local_loss"]).map_err(csv_err)?;
    for t in trace {
        w.write_record([t.iteration.to_string(), t.worker.to_string(), t.local_loss.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid("trace", e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
