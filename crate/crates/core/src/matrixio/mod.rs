//! Matrix containers and dataset manifests.
//!
//! Matrices travel in one of two encodings:
//!
//! * the `FMX1` binary container (see [`container`]), bit-exact and
//!   trivially parseable, optionally accompanied by a JSON sidecar
//!   `<file>.meta.json` carrying sample rates and labels;
//! * CSV with a header row, for hand inspection and spreadsheets.
//!
//! In memory everything is an `nalgebra::DMatrix<f64>` with rows as time
//! samples and columns as features or targets.

pub mod container;
pub mod csv;
pub mod manifest;
mod meta;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use container::{read_container, write_container, Dtype};
pub use manifest::{validate_manifest, Block, DatasetManifest, FeatureRecord, ManifestViolation, SubjectRecord};
pub use meta::{MatrixKind, MatrixMeta};

/// Time × feature activations or engineered features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: DMatrix<f64>,
    /// Rows per second.
    pub sample_rate: f64,
    pub name: String,
    pub layer_index: Option<u32>,
    /// Free-form provenance (window type, mel variant, flattening convention).
    pub attributes: BTreeMap<String, String>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>, sample_rate: f64, name: impl Into<String>) -> Result<Self> {
        check_matrix(&data)?;
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            data,
            sample_rate,
            name: name.into(),
            layer_index: None,
            attributes: BTreeMap::new(),
        })
    }

    pub fn with_layer(mut self, layer: u32) -> Self {
        self.layer_index = Some(layer);
        self
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }
}

/// Time × target BOLD responses at the acquisition rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    pub data: DMatrix<f64>,
    pub tr_seconds: f64,
    pub target_labels: Option<Vec<String>>,
}

impl ResponseMatrix {
    pub fn new(data: DMatrix<f64>, tr_seconds: f64) -> Result<Self> {
        check_matrix(&data)?;
        if !(tr_seconds.is_finite() && tr_seconds > 0.0) {
            return Err(Error::invalid(format!(
                "repetition time must be positive, got {tr_seconds}"
            )));
        }
        Ok(Self {
            data,
            tr_seconds,
            target_labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.data.ncols() {
            return Err(Error::shape(format!(
                "{} target labels for {} targets",
                labels.len(),
                self.data.ncols()
            )));
        }
        self.target_labels = Some(labels);
        Ok(self)
    }

    pub fn n_scans(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.data.ncols()
    }
}

fn check_matrix(data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::shape(format!(
            "matrix must be non-empty, got {}x{}",
            data.nrows(),
            data.ncols()
        )));
    }
    if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
        let (r, c) = (idx % data.nrows(), idx / data.nrows());
        return Err(Error::NonFinite(format!("row {r}, column {c}")));
    }
    Ok(())
}

/// A matrix read from disk, with whatever metadata came with it.
#[derive(Debug, Clone)]
pub struct LoadedMatrix {
    pub data: DMatrix<f64>,
    pub meta: MatrixMeta,
}

impl LoadedMatrix {
    /// Interprets the matrix as features. `fallback_rate` is used when the
    /// file carried no sample rate.
    pub fn into_features(self, fallback_rate: Option<f64>) -> Result<FeatureMatrix> {
        let rate = self.meta.sample_rate.or(fallback_rate).ok_or_else(|| {
            Error::invalid("feature matrix has no sample rate; supply one explicitly")
        })?;
        let mut fm = FeatureMatrix::new(self.data, rate, self.meta.name.unwrap_or_default())?;
        fm.layer_index = self.meta.layer_index;
        fm.attributes = self.meta.attributes;
        Ok(fm)
    }

    /// Interprets the matrix as responses. Defaults to a 2 s TR.
    pub fn into_response(self) -> Result<ResponseMatrix> {
        let tr = self.meta.tr_seconds.unwrap_or(2.0);
        let mut rm = ResponseMatrix::new(self.data, tr)?;
        if let Some(labels) = self.meta.column_labels {
            rm = rm.with_labels(labels)?;
        }
        Ok(rm)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a matrix from a `.csv` file or an `FMX1` container, picking up the
/// sidecar metadata when present.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<LoadedMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|e| {
            Error::in_file(
                path,
                Error::Csv {
                    row: 0,
                    reason: format!("not UTF-8: {e}"),
                },
            )
        })?;
        let (data, header) = csv::parse_csv(&text).map_err(|e| Error::in_file(path, e))?;
        let mut meta = MatrixMeta::read_sidecar(path)?.unwrap_or_default();
        if meta.column_labels.is_none() {
            meta.column_labels = Some(header);
        }
        return Ok(LoadedMatrix { data, meta });
    }
    let (data, _) = container::decode(&bytes).map_err(|e| Error::in_file(path, e))?;
    let meta = MatrixMeta::read_sidecar(path)?.unwrap_or_default();
    Ok(LoadedMatrix { data, meta })
}

/// Writes `data` to `path` (CSV if the extension is `.csv`, otherwise a
/// 64-bit container) and, if `meta` is non-empty, its sidecar.
pub fn write_matrix(path: impl AsRef<Path>, data: &DMatrix<f64>, meta: &MatrixMeta) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_csv(path) {
        csv::format_csv(data, meta.column_labels.as_deref())?.into_bytes()
    } else {
        container::encode(data, Dtype::F64)
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    if !meta.is_empty() {
        meta.write_sidecar(path)?;
    }
    Ok(())
}

pub fn write_features(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    write_matrix(path, &features.data, &MatrixMeta::from_features(features))
}

pub fn write_response(path: impl AsRef<Path>, response: &ResponseMatrix) -> Result<()> {
    write_matrix(path, &response.data, &MatrixMeta::from_response(response))
}
