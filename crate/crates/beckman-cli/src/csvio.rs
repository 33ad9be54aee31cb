//! Plain numeric CSV surfaces: solver traces, prediction sets, feature
//! exports, dataset labels, and PSNR reports. Floats are written with Rust's
//! shortest round-trip formatting, so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use beckman::solver::TraceRecord;
use beckman::PredictionSet;

/// Writes `(iteration, objective, residual)` rows with a header line.
pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut out = String::from("iteration,objective,residual\n");
    for r in records {
        writeln!(out, "{},{},{}", r.iteration, r.objective, r.residual)?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Writes a headerless `n x C` matrix of softmax rows.
pub fn write_predictions(path: &Path, preds: &PredictionSet) -> Result<()> {
    let mut out = String::new();
    for row in preds.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            write!(out, "{v}")?;
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Reads a headerless prediction CSV, rejecting rows whose sum strays from 1
/// by more than 1e-3 (the offending row index is reported).
pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| cell.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: row {idx} is not numeric", path.display()))?;
        rows.push(row);
    }
    PredictionSet::with_tolerance(rows, 1e-3)
        .with_context(|| format!("{}: invalid prediction rows", path.display()))
}

/// Writes feature rows (`f0..f{d-1},label`) with a header; an empty dataset
/// yields a header-only file.
pub fn write_features(path: &Path, rows: &[(Vec<f64>, usize)], feature_dim: usize) -> Result<()> {
    let mut out = String::new();
    for i in 0..feature_dim {
        write!(out, "f{i},")?;
    }
    out.push_str("label\n");
    for (features, label) in rows {
        for v in features {
            write!(out, "{v},")?;
        }
        writeln!(out, "{label}")?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Writes the `filename,label` index of a dataset directory.
pub fn write_labels(path: &Path, entries: &[(String, usize)]) -> Result<()> {
    let mut out = String::from("filename,label\n");
    for (name, label) in entries {
        writeln!(out, "{name},{label}")?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Reads a `filename,label` index.
pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("filename,label") => {}
        other => bail!("{}: expected 'filename,label' header, got {other:?}", path.display()),
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, label) = line
            .split_once(',')
            .with_context(|| format!("{}: row {idx} is not 'filename,label'", path.display()))?;
        let label: usize =
            label.trim().parse().with_context(|| format!("{}: bad label in row {idx}", path.display()))?;
        out.push((name.trim().to_string(), label));
    }
    Ok(out)
}

/// Writes `name,psnr_db` rows with a header.
pub fn write_psnr(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("name,psnr_db\n");
    for (name, value) in rows {
        writeln!(out, "{name},{value}")?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Writes `setting,accuracy` rows with a header.
pub fn write_report(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("setting,accuracy\n");
    for (name, value) in rows {
        writeln!(out, "{name},{value}")?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
