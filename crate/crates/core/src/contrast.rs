//! Layer-concatenation hierarchy and ΔR maps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::encode::ScoreMap;
use crate::error::{Error, Result};
use crate::matrixio::FeatureMatrix;

/// Deepest concatenation level (mel + five network layers).
pub const MAX_LEVEL: usize = 5;

/// Members of one level of the hierarchy: the baseline followed by the
/// first `level` layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcatLevel {
    pub level: usize,
    pub members: Vec<String>,
}

impl ConcatLevel {
    /// `names[0]` is the baseline, `names[1..]` the layers in depth order.
    pub fn new(level: usize, names: &[String]) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::invalid(format!("concat level {level} exceeds {MAX_LEVEL}")));
        }
        if names.len() <= level {
            return Err(Error::invalid(format!(
                "level {level} needs {} feature sets, {} given",
                level + 1,
                names.len()
            )));
        }
        Ok(Self {
            level,
            members: names[..=level].to_vec(),
        })
    }

    /// Every level from 0 up to `names.len() - 1`.
    pub fn hierarchy(names: &[String]) -> Result<Vec<Self>> {
        if names.is_empty() {
            return Err(Error::invalid("hierarchy needs at least the baseline feature set"));
        }
        (0..names.len()).map(|l| Self::new(l, names)).collect()
    }
}

/// Which columns of a concatenated matrix came from which member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpan {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

/// Column-wise concatenation of the level's members, in member order.
pub fn build_concat(level: &ConcatLevel, features: &[FeatureMatrix]) -> Result<(FeatureMatrix, Vec<ColumnSpan>)> {
    let mut parts = Vec::with_capacity(level.members.len());
    for name in &level.members {
        let m = features
            .iter()
            .find(|f| &f.name == name)
            .ok_or_else(|| Error::invalid(format!("feature set {name:?} not provided")))?;
        parts.push(m);
    }
    concat_features(&parts, &format!("level_{}", level.level))
}

/// Column-wise concatenation of row-aligned feature matrices.
pub fn concat_features(parts: &[&FeatureMatrix], name: &str) -> Result<(FeatureMatrix, Vec<ColumnSpan>)> {
    let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
    let rows = first.n_rows();
    for p in parts {
        if p.n_rows() != rows {
            return Err(Error::shape(format!(
                "{:?} has {} rows, {:?} has {rows}",
                p.name,
                p.n_rows(),
                first.name
            )));
        }
        if (p.sample_rate - first.sample_rate).abs() > 1e-9 * first.sample_rate {
            return Err(Error::invalid(format!(
                "{:?} is at {} Hz, {:?} at {} Hz",
                p.name, p.sample_rate, first.name, first.sample_rate
            )));
        }
    }
    let cols: usize = parts.iter().map(|p| p.n_features()).sum();
    let mut data = DMatrix::zeros(rows, cols);
    let mut spans = Vec::with_capacity(parts.len());
    let mut at = 0;
    for p in parts {
        let w = p.n_features();
        data.columns_mut(at, w).copy_from(&p.data);
        spans.push(ColumnSpan {
            name: p.name.clone(),
            start: at,
            end: at + w,
        });
        at += w;
    }
    let provenance = spans
        .iter()
        .map(|s| format!("{}:{}-{}", s.name, s.start, s.end))
        .collect::<Vec<_>>()
        .join(",");
    let fm = FeatureMatrix::new(data, first.sample_rate, name)?.with_attribute("columns", provenance);
    Ok((fm, spans))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    VsBaseline,
    Layerwise,
    ModelVsModel,
}

/// Per-target `a.r_mean − b.r_mean`, with the fold-level differences.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastResult {
    pub delta_r: Vec<f64>,
    /// `folds × targets`; present when both operands have matching folds.
    pub delta_per_fold: Option<DMatrix<f64>>,
    pub kind: ContrastKind,
    /// Names of the two operands, `(a, b)`.
    pub operands: (String, String),
}

impl ContrastResult {
    pub fn mean(&self) -> f64 {
        self.delta_r.iter().sum::<f64>() / self.delta_r.len() as f64
    }
}

fn difference(a: &ScoreMap, b: &ScoreMap, kind: ContrastKind, names: (&str, &str)) -> Result<ContrastResult> {
    if a.n_targets() != b.n_targets() {
        return Err(Error::shape(format!(
            "score maps have {} and {} targets",
            a.n_targets(),
            b.n_targets()
        )));
    }
    let delta_r = a.r_mean.iter().zip(&b.r_mean).map(|(x, y)| x - y).collect();
    let delta_per_fold = (a.r_per_fold.shape() == b.r_per_fold.shape()).then(|| &a.r_per_fold - &b.r_per_fold);
    Ok(ContrastResult {
        delta_r,
        delta_per_fold,
        kind,
        operands: (names.0.to_string(), names.1.to_string()),
    })
}

/// ΔR of a richer feature set over the baseline.
pub fn delta_vs_baseline(full: &ScoreMap, baseline: &ScoreMap) -> Result<ContrastResult> {
    difference(full, baseline, ContrastKind::VsBaseline, ("full", "baseline"))
}

/// ΔR_L between consecutive concatenation levels, for L = 1..=L_max.
/// `levels[l]` must hold the score map of level `l`.
pub fn delta_layerwise(levels: &[Option<ScoreMap>]) -> Result<Vec<ContrastResult>> {
    if levels.len() < 2 {
        return Err(Error::invalid("layerwise contrasts need at least levels 0 and 1"));
    }
    if let Some(l) = levels.iter().position(Option::is_none) {
        return Err(Error::invalid(format!("score map for level {l} is missing")));
    }
    levels
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (prev, cur) = (w[0].as_ref().unwrap(), w[1].as_ref().unwrap());
            difference(
                cur,
                prev,
                ContrastKind::Layerwise,
                (&format!("level_{}", i + 1), &format!("level_{i}")),
            )
        })
        .collect()
}

/// ΔR of one model over another on the same feature level.
pub fn delta_models(a: &ScoreMap, b: &ScoreMap) -> Result<ContrastResult> {
    difference(a, b, ContrastKind::ModelVsModel, ("model_a", "model_b"))
}

/// Matched per-layer model comparison; `a[i]` is compared against `b[i]`.
pub fn delta_models_per_layer(a: &[ScoreMap], b: &[ScoreMap]) -> Result<Vec<ContrastResult>> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} layers against {} layers", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| {
            difference(
                x,
                y,
                ContrastKind::ModelVsModel,
                (&format!("model_a/layer_{i}"), &format!("model_b/layer_{i}")),
            )
        })
        .collect()
}

/// Elementwise mean of score maps, used to average runs over network seeds.
pub fn mean_score_maps(maps: &[ScoreMap]) -> Result<ScoreMap> {
    let first = maps.first().ok_or_else(|| Error::invalid("no score maps to average"))?;
    for m in maps {
        if m.r_per_fold.shape() != first.r_per_fold.shape() {
            return Err(Error::shape("score maps to average differ in shape"));
        }
    }
    let k = maps.len() as f64;
    let t = first.n_targets();
    let avg = |get: &dyn Fn(&ScoreMap) -> &DMatrix<f64>| {
        let mut acc = DMatrix::zeros(first.n_folds(), t);
        maps.iter().for_each(|m| acc += get(m));
        acc / k
    };
    Ok(ScoreMap {
        r_mean: (0..t).map(|j| maps.iter().map(|m| m.r_mean[j]).sum::<f64>() / k).collect(),
        r_per_fold: avg(&|m| &m.r_per_fold),
        fold_defined: DMatrix::from_fn(first.n_folds(), t, |f, j| maps.iter().any(|m| m.fold_defined[(f, j)])),
        chosen_lambda: avg(&|m| &m.chosen_lambda),
        mode: first.mode,
    })
}
