//! Versioned `report.json` schema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use brainscore::contrast::ContrastKind;
use brainscore::groupstats::Alternative;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub n_subjects: usize,
    pub n_scans: usize,
    pub n_targets: usize,
    pub n_folds: usize,
    pub levels: Vec<LevelEntry>,
    /// Scores of feature sets used only in comparisons.
    pub feature_scores: Vec<FeatureScoreEntry>,
    pub contrasts: Vec<ContrastEntry>,
}

/// Mean and maximum of the subject-averaged score over a set of targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSummary {
    pub all: Summary,
    pub rois: BTreeMap<String, Summary>,
    /// Targets whose correlation was undefined in every fold, summed over
    /// subjects.
    pub undefined_targets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelEntry {
    pub level: usize,
    pub members: Vec<String>,
    pub scores: ScoreSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureScoreEntry {
    pub feature: String,
    pub scores: ScoreSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiTest {
    /// Mean over subjects of the per-subject ROI mean.
    pub mean: f64,
    pub statistic: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastEntry {
    pub name: String,
    pub kind: ContrastKind,
    pub a: String,
    pub b: String,
    /// Group-mean ΔR over all targets.
    pub mean_delta: f64,
    pub max_delta: f64,
    pub n_significant: usize,
    pub q: f64,
    pub alternative: Alternative,
    /// Per-subject ΔR averaged over all targets, tested across subjects.
    pub global: RoiTest,
    pub rois: BTreeMap<String, RoiTest>,
    /// Relative path of the per-target statistics file.
    pub stats_file: String,
}

/// Parses and checks a report document.
pub fn validate_report(text: &str) -> Result<Report, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("not JSON: {e}"))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(REPORT_SCHEMA_VERSION) => {}
        Some(v) => return Err(format!("unsupported schema_version {v}, expected {REPORT_SCHEMA_VERSION}")),
        None => return Err("missing schema_version".into()),
    }
    let report: Report = serde_json::from_value(value).map_err(|e| format!("schema violation: {e}"))?;
    for c in &report.contrasts {
        if !(c.global.p > 0.0 && c.global.p <= 1.0) {
            return Err(format!("contrast {:?} has p = {} outside (0, 1]", c.name, c.global.p));
        }
        if c.n_significant > report.n_targets {
            return Err(format!("contrast {:?} reports more significant targets than exist", c.name));
        }
    }
    for (i, l) in report.levels.iter().enumerate() {
        if l.level != i || l.members.len() != i + 1 {
            return Err(format!("level entry {i} does not describe a nested hierarchy"));
        }
    }
    Ok(report)
}
