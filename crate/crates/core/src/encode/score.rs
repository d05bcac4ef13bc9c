use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pearson::pearson_unchecked;
use super::ridge::{LambdaGrid, RidgeSvd};
use super::split::SplitPlan;
use super::standardize::ColumnStats;
use crate::error::{Error, Result};
use crate::matrixio::{FeatureMatrix, ResponseMatrix};

/// Targets are processed in chunks of this many columns. The chunking is
/// fixed so the floating-point work, and therefore every output bit, is
/// independent of the number of worker threads.
pub const TARGET_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Correlate within each test fold, then average over folds.
    #[default]
    FoldMean,
    /// Correlate the concatenated out-of-fold predictions with the data.
    Concatenated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreOptions {
    pub mode: ScoringMode,
}

/// Cross-validated Pearson scores per target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    /// Fold-averaged r (or the concatenated-prediction r in
    /// [`ScoringMode::Concatenated`]). Undefined folds contribute 0.
    pub r_mean: Vec<f64>,
    /// `folds × targets`.
    pub r_per_fold: DMatrix<f64>,
    /// `folds × targets`; false where a fold's correlation was undefined.
    pub fold_defined: DMatrix<bool>,
    /// `folds × targets` penalties chosen inside each training fold.
    pub chosen_lambda: DMatrix<f64>,
    pub mode: ScoringMode,
}

impl ScoreMap {
    pub fn n_targets(&self) -> usize {
        self.r_mean.len()
    }

    pub fn n_folds(&self) -> usize {
        self.r_per_fold.nrows()
    }

    /// True if at least one fold produced a defined correlation.
    pub fn is_defined(&self, target: usize) -> bool {
        self.fold_defined.column(target).iter().any(|&d| d)
    }

    pub fn n_undefined(&self) -> usize {
        (0..self.n_targets()).filter(|&t| !self.is_defined(t)).count()
    }

    /// Rebuilds a map from a stored `(1 + folds) × targets` matrix whose
    /// first row holds `r_mean` (see [`ScoreMap::to_matrix`]). Fold validity
    /// and penalties are not stored; folds are marked defined.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() < 1 {
            return Err(Error::shape("score matrix has no rows"));
        }
        let folds = m.nrows() - 1;
        let t = m.ncols();
        Ok(Self {
            r_mean: m.row(0).iter().copied().collect(),
            r_per_fold: m.rows(1, folds).into_owned(),
            fold_defined: DMatrix::from_element(folds, t, true),
            chosen_lambda: DMatrix::from_element(folds, t, f64::NAN),
            mode: ScoringMode::FoldMean,
        })
    }

    /// `r_mean` stacked on top of the per-fold scores.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let (folds, t) = self.r_per_fold.shape();
        DMatrix::from_fn(folds + 1, t, |r, c| {
            if r == 0 {
                self.r_mean[c]
            } else {
                self.r_per_fold[(r - 1, c)]
            }
        })
    }
}

fn gather(m: &DMatrix<f64>, rows: &[usize], cols: std::ops::Range<usize>) -> DMatrix<f64> {
    let first = cols.start;
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], first + j)])
}

struct ChunkResult {
    r: Vec<f64>,
    defined: Vec<bool>,
    lambda: Vec<f64>,
    /// Test-row predictions in original units, when concatenating.
    predictions: Option<DMatrix<f64>>,
}

/// Nested cross-validated ridge brain score.
///
/// For each fold: standardize features and targets with training-row
/// statistics, fit per-target ridge with penalties picked by exact LOO on
/// the training rows, predict the held-out block and correlate.
pub fn brain_score(
    x: &FeatureMatrix,
    y: &ResponseMatrix,
    plan: &SplitPlan,
    grid: &LambdaGrid,
    opts: &ScoreOptions,
) -> Result<ScoreMap> {
    let n = y.n_scans();
    if x.n_rows() != n {
        return Err(Error::shape(format!(
            "features have {} rows, responses have {n}",
            x.n_rows()
        )));
    }
    let scan_rate = 1.0 / y.tr_seconds;
    if (x.sample_rate - scan_rate).abs() > 1e-6 * scan_rate {
        return Err(Error::invalid(format!(
            "features are sampled at {} Hz but scans arrive at {scan_rate} Hz; align them first",
            x.sample_rate
        )));
    }
    if plan.n_rows() > n {
        return Err(Error::shape(format!(
            "split plan covers {} rows, data has {n}",
            plan.n_rows()
        )));
    }

    let n_targets = y.n_targets();
    let n_folds = plan.n_folds();
    let n_chunks = n_targets.div_ceil(TARGET_CHUNK);
    let concat = opts.mode == ScoringMode::Concatenated;

    let mut r_per_fold = DMatrix::zeros(n_folds, n_targets);
    let mut fold_defined = DMatrix::from_element(n_folds, n_targets, false);
    let mut chosen_lambda = DMatrix::zeros(n_folds, n_targets);
    let mut oof = concat.then(|| DMatrix::<f64>::zeros(n, n_targets));

    for fold in 0..n_folds {
        let train = plan.train_rows(fold);
        let test = plan.test_rows(fold);
        if train.len() < 2 || test.len() < 3 {
            return Err(Error::invalid(format!(
                "fold {fold} has {} training and {} test rows; need at least 2 and 3",
                train.len(),
                test.len()
            )));
        }
        let p = x.n_features();
        let x_train = gather(&x.data, &train, 0..p);
        let x_stats = ColumnStats::fit(&x_train)?;
        let x_train = x_stats.apply(&x_train);
        let x_test = x_stats.apply(&gather(&x.data, &test, 0..p));
        let svd = RidgeSvd::new(&x_train)?;
        let factors = svd.prepare(grid);

        let chunks: Vec<ChunkResult> = (0..n_chunks)
            .into_par_iter()
            .map(|ci| {
                let cols = ci * TARGET_CHUNK..((ci + 1) * TARGET_CHUNK).min(n_targets);
                let y_train = gather(&y.data, &train, cols.clone());
                let y_stats = ColumnStats::fit(&y_train)?;
                let y_train = y_stats.apply(&y_train);
                let y_test = y_stats.apply(&gather(&y.data, &test, cols.clone()));
                let fit = svd.fit_prepared(&y_train, &factors)?;
                let pred = &x_test * &fit.weights;
                let (r, defined) = (0..cols.len())
                    .map(|j| {
                        let c = pearson_unchecked(y_test.column(j).as_slice(), pred.column(j).as_slice());
                        (c.r, c.defined)
                    })
                    .unzip();
                let predictions = concat.then(|| {
                    let mut raw = pred.clone();
                    for (j, mut col) in raw.column_iter_mut().enumerate() {
                        col.iter_mut().for_each(|v| *v = y_stats.invert_column(j, *v));
                    }
                    raw
                });
                Ok(ChunkResult {
                    r,
                    defined,
                    lambda: fit.chosen_lambda,
                    predictions,
                })
            })
            .collect::<Result<_>>()?;

        for (ci, chunk) in chunks.into_iter().enumerate() {
            let base = ci * TARGET_CHUNK;
            for j in 0..chunk.r.len() {
                r_per_fold[(fold, base + j)] = chunk.r[j];
                fold_defined[(fold, base + j)] = chunk.defined[j];
                chosen_lambda[(fold, base + j)] = chunk.lambda[j];
            }
            if let (Some(all), Some(pred)) = (oof.as_mut(), chunk.predictions) {
                for (i, &row) in test.iter().enumerate() {
                    for j in 0..pred.ncols() {
                        all[(row, base + j)] = pred[(i, j)];
                    }
                }
            }
        }
    }

    let r_mean = match &oof {
        None => (0..n_targets)
            .map(|t| r_per_fold.column(t).sum() / n_folds as f64)
            .collect(),
        Some(pred) => {
            let rows: Vec<usize> = (0..n_folds).flat_map(|f| plan.test_rows(f)).collect();
            (0..n_targets)
                .map(|t| {
                    let a: Vec<f64> = rows.iter().map(|&r| y.data[(r, t)]).collect();
                    let b: Vec<f64> = rows.iter().map(|&r| pred[(r, t)]).collect();
                    pearson_unchecked(&a, &b).r
                })
                .collect()
        }
    };

    Ok(ScoreMap {
        r_mean,
        r_per_fold,
        fold_defined,
        chosen_lambda,
        mode: opts.mode,
    })
}
