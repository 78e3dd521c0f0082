//! Datasets on disk (a JSON manifest plus one headerless CSV per batch) and
//! parameter points as JSON.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::ParameterPoint;
use crate::model::BatchDataset;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEntry {
    /// Relative to the manifest's directory.
    pub file: String,
    #[serde(default)]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub p: usize,
    pub n: usize,
    pub classes: usize,
    pub batches: Vec<BatchEntry>,
}

/// Values with 17 significant digits, which round-trip every `f64`.
fn format_row(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

pub fn write_batch_csv(path: &Path, data: &BatchDataset) -> Result<()> {
    let mut text = String::with_capacity(data.n() * data.p() * 24);
    for row in data.samples().row_iter() {
        text.push_str(&format_row(row.iter().copied()));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads an `n × p` headerless CSV. `expected` checks the shape when given.
pub fn read_batch_csv(path: &Path, label: Option<usize>, expected: Option<(usize, usize)>) -> Result<BatchDataset> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let width = *cols.get_or_insert(record.len());
        if record.len() != width {
            return Err(parse_err(line, format!("expected {width} fields, found {}", record.len())));
        }
        for (field, text) in record.iter().enumerate() {
            let v: f64 = text
                .parse()
                .map_err(|_| parse_err(line, format!("field {}: '{text}' is not a number", field + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("field {}: value is not finite", field + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::EmptyDataset(format!("{} has no rows", path.display())))?;
    if let Some((n, p)) = expected {
        if (rows, cols) != (n, p) {
            return Err(parse_err(
                rows as u64,
                format!("batch is {rows}x{cols}, the manifest declares {n}x{p}"),
            ));
        }
    }
    BatchDataset::new(DMatrix::from_row_slice(rows, cols, &values), label).map_err(|e| parse_err(0, e.to_string()))
}

/// Writes `dir/manifest.json` and `dir/batch_NNNNN.csv`. All batches must
/// share `(n, p)`.
pub fn save_dataset(dir: &Path, batches: &[BatchDataset]) -> Result<DatasetManifest> {
    let first = batches
        .first()
        .ok_or_else(|| Error::EmptyDataset("no batches to save".into()))?;
    let (n, p) = (first.n(), first.p());
    for (index, b) in batches.iter().enumerate() {
        if (b.n(), b.p()) != (n, p) {
            return Err(Error::Batch {
                index,
                source: Box::new(Error::dims("batch shape", format!("{n}x{p}"), format!("{}x{}", b.n(), b.p()))),
            });
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(batches.len());
    for (i, b) in batches.iter().enumerate() {
        let file = format!("batch_{i:05}.csv");
        write_batch_csv(&dir.join(&file), b)?;
        entries.push(BatchEntry { file, label: b.label() });
    }
    let classes = entries.iter().filter_map(|e| e.label).collect::<BTreeSet<_>>().len();
    let manifest = DatasetManifest {
        version: DATASET_FORMAT_VERSION,
        p,
        n,
        classes,
        batches: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if manifest.version != DATASET_FORMAT_VERSION {
        return Err(Error::InvalidData(format!(
            "{}: unsupported dataset version {}",
            path.display(),
            manifest.version
        )));
    }
    if manifest.batches.is_empty() {
        return Err(Error::EmptyDataset(format!("{} lists no batches", path.display())));
    }
    Ok(manifest)
}

/// Loads every batch listed in `dir/manifest.json`, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<Vec<BatchDataset>> {
    let manifest = read_manifest(dir)?;
    manifest
        .batches
        .iter()
        .map(|entry| read_batch_csv(&dir.join(&entry.file), entry.label, Some((manifest.n, manifest.p))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PointFile {
    p: usize,
    n: usize,
    mu: Vec<f64>,
    /// Row-major.
    sigma: Vec<f64>,
    tau: Vec<f64>,
}

pub fn point_to_json(theta: &ParameterPoint) -> Result<String> {
    let file = PointFile {
        p: theta.p(),
        n: theta.n(),
        mu: theta.mu().iter().copied().collect(),
        sigma: theta.sigma().transpose().iter().copied().collect(),
        tau: theta.tau().iter().copied().collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn point_from_json(text: &str) -> Result<ParameterPoint> {
    let f: PointFile = serde_json::from_str(text)?;
    if f.mu.len() != f.p || f.sigma.len() != f.p * f.p || f.tau.len() != f.n {
        return Err(Error::InvalidData(format!(
            "point declares p = {}, n = {} but has {} / {} / {} entries",
            f.p,
            f.n,
            f.mu.len(),
            f.sigma.len(),
            f.tau.len()
        )));
    }
    ParameterPoint::new(
        DVector::from_vec(f.mu),
        DMatrix::from_row_slice(f.p, f.p, &f.sigma),
        DVector::from_vec(f.tau),
    )
}

pub fn save_point(path: &Path, theta: &ParameterPoint) -> Result<()> {
    write_text(path, &point_to_json(theta)?)
}

pub fn load_point(path: &Path) -> Result<ParameterPoint> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    point_from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.to_path_buf(),
            line: j.line() as u64,
            message: j.to_string(),
        },
        other => other,
    })
}

/// Creates missing parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(PathBuf::from(path)));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, f64::MAX, 6.02214076e23] {
            let s = format_row(std::iter::once(v));
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
