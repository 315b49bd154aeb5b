//! File writers: JSON documents and comma-separated tables.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(crate::exit::BAD_INPUT, format!("writing {}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, Failure> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_failure(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes a header row and records with `,` separators and LF endings.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf, Failure> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io_failure(path, e))?;
    w.write_record(header).map_err(|e| io_failure(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))?;
    Ok(path.to_path_buf())
}

/// Shortest round-tripping decimal form.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}
