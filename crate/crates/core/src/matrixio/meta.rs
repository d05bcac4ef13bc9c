use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, ResponseMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Features,
    Response,
    Scores,
    Contrast,
    Group,
    LogProbs,
}

/// Sidecar metadata stored as `<file>.meta.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MatrixKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl MatrixMeta {
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    pub fn is_empty(&self) -> bool {
        *self == MatrixMeta::default()
    }

    pub fn from_features(f: &FeatureMatrix) -> Self {
        Self {
            kind: Some(MatrixKind::Features),
            name: Some(f.name.clone()).filter(|n| !n.is_empty()),
            sample_rate: Some(f.sample_rate),
            layer_index: f.layer_index,
            attributes: f.attributes.clone(),
            ..Default::default()
        }
    }

    pub fn from_response(r: &ResponseMatrix) -> Self {
        Self {
            kind: Some(MatrixKind::Response),
            tr_seconds: Some(r.tr_seconds),
            column_labels: r.target_labels.clone(),
            ..Default::default()
        }
    }

    pub fn of_kind(kind: MatrixKind) -> Self {
        Self {
            kind: Some(kind),
            ..Default::default()
        }
    }

    pub(crate) fn read_sidecar(path: &Path) -> Result<Option<Self>> {
        let side = Self::sidecar_path(path);
        match std::fs::read_to_string(&side) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| Error::Metadata {
                path: side,
                reason: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(side, e)),
        }
    }

    pub(crate) fn write_sidecar(&self, path: &Path) -> Result<()> {
        let side = Self::sidecar_path(path);
        let text = serde_json::to_string_pretty(self).expect("metadata serializes");
        std::fs::write(&side, text + "\n").map_err(|e| Error::io(side, e))
    }
}
