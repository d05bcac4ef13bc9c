//! Dataset manifests: which response file belongs to which subject, which
//! feature files exist, how scans group into contiguous blocks, and which
//! targets make up each region of interest.
//!
//! ```json
//! {
//!   "n_scans": 60, "n_targets": 100, "tr_seconds": 2.0,
//!   "subjects": [{"id": "sub-01", "response": "sub-01.fmx"}],
//!   "features": [{"name": "mel", "path": "mel.fmx", "layer_index": 0}],
//!   "blocks": [[0, 5], [5, 10]],
//!   "rois": {"A1": [0, 1, 2]}
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open row range `[start, end)` at acquisition rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Block {
    pub start: usize,
    pub end: usize,
}

impl Block {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    /// Splits `n_rows` into `n_blocks` contiguous blocks whose sizes differ
    /// by at most one (longer blocks first).
    pub fn equal_partition(n_rows: usize, n_blocks: usize) -> Vec<Block> {
        if n_blocks == 0 {
            return Vec::new();
        }
        let base = n_rows / n_blocks;
        let extra = n_rows % n_blocks;
        let mut start = 0;
        (0..n_blocks)
            .map(|i| {
                let len = base + usize::from(i < extra);
                let b = Block::new(start, start + len);
                start += len;
                b
            })
            .collect()
    }
}

impl From<(usize, usize)> for Block {
    fn from((start, end): (usize, usize)) -> Self {
        Block { start, end }
    }
}

impl From<Block> for (usize, usize) {
    fn from(b: Block) -> Self {
        (b.start, b.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectRecord {
    pub id: String,
    pub response: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub name: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_index: Option<u32>,
    /// Overrides the sample rate stored with the matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub n_scans: usize,
    pub n_targets: usize,
    #[serde(default = "default_tr")]
    pub tr_seconds: f64,
    pub subjects: Vec<SubjectRecord>,
    pub features: Vec<FeatureRecord>,
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub rois: BTreeMap<String, Vec<usize>>,
    /// How multi-axis activations were flattened into feature columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flattening: Option<String>,
}

fn default_tr() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestViolation {
    EmptyBlock { block: usize },
    Overlap { first: usize, second: usize },
    Gap { block: usize, expected_start: usize },
    BadCoverageEnd { covered_until: usize, n_scans: usize },
    RoiIndexOutOfRange { roi: String, index: usize, n_targets: usize },
    EmptyRoi { roi: String },
    DuplicateSubject { id: String },
    DuplicateFeature { name: String },
    BadTr,
}

impl fmt::Display for ManifestViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ManifestViolation::*;
        match self {
            EmptyBlock { block } => write!(f, "block {block} is empty"),
            Overlap { first, second } => write!(f, "blocks {first} and {second} overlap"),
            Gap { block, expected_start } => {
                write!(f, "block {block} leaves rows uncovered before it (expected start {expected_start})")
            }
            BadCoverageEnd { covered_until, n_scans } => {
                write!(f, "blocks cover rows up to {covered_until}, but there are {n_scans} scans")
            }
            RoiIndexOutOfRange { roi, index, n_targets } => {
                write!(f, "ROI {roi:?} has index {index} >= n_targets {n_targets}")
            }
            EmptyRoi { roi } => write!(f, "ROI {roi:?} is empty"),
            DuplicateSubject { id } => write!(f, "subject {id:?} listed twice"),
            DuplicateFeature { name } => write!(f, "feature {name:?} listed twice"),
            BadTr => write!(f, "tr_seconds must be positive"),
        }
    }
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            manifest.resolve_paths(base);
        }
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.subjects.iter_mut().for_each(|s| fix(&mut s.response));
        self.features.iter_mut().for_each(|f| fix(&mut f.path));
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureRecord> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Checks every manifest invariant; an empty list means the manifest is
    /// consistent.
    pub fn validate(&self) -> Vec<ManifestViolation> {
        let mut out = Vec::new();
        if !(self.tr_seconds.is_finite() && self.tr_seconds > 0.0) {
            out.push(ManifestViolation::BadTr);
        }

        let mut cursor = 0usize;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.is_empty() {
                out.push(ManifestViolation::EmptyBlock { block: i });
                continue;
            }
            if b.start < cursor {
                out.push(ManifestViolation::Overlap {
                    first: i - 1,
                    second: i,
                });
            } else if b.start > cursor {
                out.push(ManifestViolation::Gap {
                    block: i,
                    expected_start: cursor,
                });
            }
            cursor = cursor.max(b.end);
        }
        if cursor != self.n_scans {
            out.push(ManifestViolation::BadCoverageEnd {
                covered_until: cursor,
                n_scans: self.n_scans,
            });
        }

        for (roi, indices) in &self.rois {
            if indices.is_empty() {
                out.push(ManifestViolation::EmptyRoi { roi: roi.clone() });
            }
            for &index in indices.iter().filter(|&&i| i >= self.n_targets) {
                out.push(ManifestViolation::RoiIndexOutOfRange {
                    roi: roi.clone(),
                    index,
                    n_targets: self.n_targets,
                });
            }
        }

        let mut seen = HashSet::new();
        for s in &self.subjects {
            if !seen.insert(&s.id) {
                out.push(ManifestViolation::DuplicateSubject { id: s.id.clone() });
            }
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(&f.name) {
                out.push(ManifestViolation::DuplicateFeature {
                    name: f.name.clone(),
                });
            }
        }
        out
    }
}

pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<ManifestViolation> {
    manifest.validate()
}
