use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Column means and population standard deviations of a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    pub fn fit(train: &DMatrix<f64>) -> Result<Self> {
        let n = train.nrows();
        if n < 2 {
            return Err(Error::invalid(format!(
                "standardization needs at least 2 training rows, got {n}"
            )));
        }
        let (mean, std) = train
            .column_iter()
            .map(|col| {
                let m = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
                (m, var.sqrt())
            })
            .unzip();
        Ok(Self { mean, std })
    }

    /// Degenerate columns (zero or numerically negligible spread) map to zeros.
    fn is_degenerate(&self, c: usize) -> bool {
        self.std[c] <= 1e-12 * self.mean[c].abs().max(1e-300)
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.ncols(), self.mean.len(), "column count mismatch");
        let mut out = m.clone();
        for (c, mut col) in out.column_iter_mut().enumerate() {
            if self.is_degenerate(c) {
                col.fill(0.0);
            } else {
                let (mu, sd) = (self.mean[c], self.std[c]);
                col.iter_mut().for_each(|v| *v = (*v - mu) / sd);
            }
        }
        out
    }

    /// Maps standardized values back to the original units.
    pub fn invert_column(&self, c: usize, v: f64) -> f64 {
        if self.is_degenerate(c) {
            self.mean[c]
        } else {
            v * self.std[c] + self.mean[c]
        }
    }
}

/// Z-scores `train` and `apply_to` with statistics from `train` only.
pub fn standardize(
    train: &DMatrix<f64>,
    apply_to: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, ColumnStats)> {
    if train.ncols() != apply_to.ncols() {
        return Err(Error::shape(format!(
            "train has {} columns, apply_to has {}",
            train.ncols(),
            apply_to.ncols()
        )));
    }
    let stats = ColumnStats::fit(train)?;
    Ok((stats.apply(train), stats.apply(apply_to), stats))
}
