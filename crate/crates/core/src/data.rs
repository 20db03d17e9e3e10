//! Synthetic datasets, noise augmentation and CSV ingestion/emission.
//!
//! Dataset CSV: a header row `f0,f1,...,f{dim-1}` with an optional trailing
//! `label` column, then one sample per row. Floats are written with Rust's
//! shortest round-trip formatting, so `load_csv(save_csv(x)) == x` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::rng::Stream;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: line {line}: {detail}")]
    Parse { path: String, line: u64, detail: String },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Samples as rows of an `N × dim` tensor, with optional ground truth.
///
/// Labels are for evaluation only; training code paths never read them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Option<Vec<usize>>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, index: usize) -> &[f64] {
        self.features.row(index)
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }
}

/// Parameters of [`gen_blobs`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobSpec {
    pub samples: usize,
    pub classes: usize,
    pub dim: usize,
    pub centroid_scale: f64,
    pub sigma: f64,
}

/// Gaussian blobs around centroids drawn uniformly in `[-scale, scale]^dim`.
///
/// Sample `i` belongs to class `i % classes`, which balances the classes and
/// hands any remainder to the lowest class indices. Centroids are drawn first
/// (class-major, coordinate-minor), then each sample's noise in sample order.
pub fn gen_blobs(seed: u64, spec: BlobSpec) -> Result<Dataset, DataError> {
    let BlobSpec { samples, classes, dim, centroid_scale, sigma } = spec;
    if classes < 2 || samples < classes {
        return Err(DataError::InvalidParams(format!(
            "need samples >= classes >= 2, got samples={samples} classes={classes}"
        )));
    }
    if dim == 0 {
        return Err(DataError::InvalidParams("dim must be at least 1".into()));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() || !centroid_scale.is_finite() {
        return Err(DataError::InvalidParams(format!("sigma={sigma} centroid_scale={centroid_scale}")));
    }
    let mut rng = Stream::new(seed);
    let centroids: Vec<f64> = (0..classes * dim)
        .map(|_| rng.uniform_in(-centroid_scale, centroid_scale))
        .collect();
    let mut values = Vec::with_capacity(samples * dim);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % classes;
        labels.push(class);
        for d in 0..dim {
            values.push(centroids[class * dim + d] + sigma * rng.gaussian());
        }
    }
    Ok(Dataset {
        features: Tensor::matrix(samples, dim, values),
        labels: Some(labels),
        seed: Some(seed),
    })
}

/// `features + N(0, noise_sigma² I)`, deterministic per seed.
pub fn augment(features: &Tensor, noise_sigma: f64, seed: u64) -> Tensor {
    let mut out = features.clone();
    if noise_sigma == 0.0 {
        return out;
    }
    let mut rng = Stream::new(seed);
    out.data_mut().iter_mut().for_each(|v| *v += noise_sigma * rng.gaussian());
    out
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let has_labels = headers.iter().next_back() == Some("label");
    let dim = headers.len() - usize::from(has_labels);
    for (i, h) in headers.iter().take(dim).enumerate() {
        if h.trim() != format!("f{i}") {
            return Err(DataError::Parse {
                path: path_str(path),
                line: 1,
                detail: format!("expected column `f{i}`, found `{h}`"),
            });
        }
    }
    if dim == 0 {
        return Err(DataError::Format { path: path_str(path), detail: "no feature columns".into() });
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |detail: String| DataError::Parse { path: path_str(path), line, detail };
        if record.len() != headers.len() {
            return Err(fail(format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        for (i, cell) in record.iter().take(dim).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| fail(format!("column f{i}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(fail(format!("column f{i}: non-finite value")));
            }
            values.push(v);
        }
        if has_labels {
            let cell = record.get(dim).unwrap_or_default();
            labels.push(cell.trim().parse().map_err(|_| fail(format!("label `{cell}` is not a non-negative integer")))?);
        }
    }
    let rows = values.len() / dim;
    if rows == 0 {
        return Err(DataError::Format { path: path_str(path), detail: "no samples".into() });
    }
    Ok(Dataset {
        features: Tensor::matrix(rows, dim, values),
        labels: has_labels.then_some(labels),
        seed: None,
    })
}

pub fn save_csv(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    let dim = dataset.dim();
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    if dataset.labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let mut row: Vec<String> = dataset.sample(i).iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &dataset.labels {
            row.push(labels[i].to_string());
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Labels as `sample_index,label` rows.
pub fn save_labels_csv(path: &Path, labels: &[usize]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "sample_index,label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_labels_csv(path: &Path) -> Result<Vec<usize>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["sample_index", "label"] {
        return Err(DataError::Parse {
            path: path_str(path),
            line: 1,
            detail: "expected header `sample_index,label`".into(),
        });
    }
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |detail: String| DataError::Parse { path: path_str(path), line, detail };
        let index: usize = record.get(0).unwrap_or_default().trim().parse().map_err(|_| fail("bad sample_index".into()))?;
        if index != labels.len() {
            return Err(fail(format!("sample_index {index} out of order, expected {}", labels.len())));
        }
        labels.push(record.get(1).unwrap_or_default().trim().parse().map_err(|_| fail("bad label".into()))?);
    }
    Ok(labels)
}

/// Matrix rows as headerless comma-separated lines.
pub fn save_matrix_csv(path: &Path, matrix: &[Vec<f64>]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DataError::Parse { path: path_str(path), line, detail: e.to_string() })?;
        rows.push(row);
    }
    Ok(rows)
}
