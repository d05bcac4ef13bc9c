//! Ridge regression through a thin SVD with closed-form leave-one-out λ
//! selection.
//!
//! With `X = U S Vᵀ` the ridge solution for penalty λ is
//! `w = V diag(s / (s² + λ)) Uᵀ y`, the fitted values are
//! `ŷ = U diag(f) Uᵀ y` with shrinkage factors `f = s² / (s² + λ)`, and the
//! hat-matrix diagonal is `h_i = Σ_k U_ik² f_k`. The leave-one-out residual
//! of row `i` is `(y_i − ŷ_i) / (1 − h_i)`, so every λ in the grid is scored
//! from one decomposition. No intercept is fit; inputs are expected to be
//! standardized.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::standardize::ColumnStats;

/// Strictly increasing positive ridge penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    /// 20 log-spaced penalties from 10 to 1e8.
    pub fn standard() -> Self {
        Self::log_spaced(10.0, 1e8, 20).expect("valid standard grid")
    }

    pub fn log_spaced(min: f64, max: f64, count: usize) -> Result<Self> {
        if count == 1 {
            return Self::from_values(vec![min]);
        }
        if !(min > 0.0 && max > min && max.is_finite()) || count == 0 {
            return Err(Error::invalid(format!(
                "log grid needs 0 < min < max and count >= 2, got [{min}, {max}] x {count}"
            )));
        }
        let (lo, hi) = (min.log10(), max.log10());
        let mut values: Vec<f64> = (0..count)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
            .collect();
        values[0] = min;
        values[count - 1] = max;
        Self::from_values(values)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("lambda values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("lambda values must be strictly increasing"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-target ridge weights with the penalty each target selected.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    /// `n_features × n_targets`.
    pub weights: DMatrix<f64>,
    pub chosen_lambda: Vec<f64>,
    pub chosen_index: Vec<usize>,
    /// Mean squared leave-one-out error, `grid × targets`.
    pub loo_mse: DMatrix<f64>,
}

/// Per-penalty quantities that depend on the design but not on the targets.
#[derive(Debug, Clone)]
pub struct GridFactors {
    lambdas: Vec<f64>,
    shrink: Vec<Vec<f64>>,
    inv_residual: Vec<Vec<f64>>,
}

/// Thin SVD of a design matrix, shared by every target.
#[derive(Debug, Clone)]
pub struct RidgeSvd {
    u: DMatrix<f64>,
    // stored explicitly so projections run as a plain GEMM
    ut: DMatrix<f64>,
    u_sq: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
}

impl RidgeSvd {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() < 2 || x.ncols() == 0 {
            return Err(Error::invalid(format!(
                "ridge needs at least 2 rows and 1 column, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge design matrix".into()));
        }
        let svd = x.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v = svd.v_t.expect("requested Vᵀ").transpose();
        let s = svd.singular_values.as_slice().to_vec();
        let u_sq = u.map(|e| e * e);
        let ut = u.transpose();
        Ok(Self { u, ut, u_sq, s, v })
    }

    pub fn n_rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    fn shrinkage(&self, lambda: f64) -> Vec<f64> {
        self.s.iter().map(|&s| s * s / (s * s + lambda)).collect()
    }

    /// Hat-matrix diagonal at `lambda`.
    pub fn leverage(&self, lambda: f64) -> Vec<f64> {
        let f = self.shrinkage(lambda);
        (0..self.n_rows())
            .map(|i| self.u_sq.row(i).iter().zip(&f).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn check_targets(&self, y: &DMatrix<f64>) -> Result<()> {
        if y.nrows() != self.n_rows() {
            return Err(Error::shape(format!(
                "targets have {} rows, design has {}",
                y.nrows(),
                self.n_rows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge targets".into()));
        }
        Ok(())
    }

    /// Closed-form leave-one-out residuals of one target at one penalty.
    pub fn loo_residuals(&self, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let y = DMatrix::from_column_slice(y.len(), 1, y);
        self.check_targets(&y)?;
        let f = self.shrinkage(lambda);
        let mut c = &self.ut * &y;
        for (k, fk) in f.iter().enumerate() {
            c[(k, 0)] *= fk;
        }
        let fitted = &self.u * c;
        let h = self.leverage(lambda);
        Ok((0..y.nrows())
            .map(|i| (y[(i, 0)] - fitted[(i, 0)]) / (1.0 - h[i]))
            .collect())
    }

    /// Shrinkage factors and leverages for every penalty in `grid`.
    pub fn prepare(&self, grid: &LambdaGrid) -> GridFactors {
        let shrink = grid.values().iter().map(|&l| self.shrinkage(l)).collect();
        let inv_residual = grid
            .values()
            .iter()
            .map(|&l| self.leverage(l).iter().map(|h| 1.0 / (1.0 - h)).collect())
            .collect();
        GridFactors {
            lambdas: grid.values().to_vec(),
            shrink,
            inv_residual,
        }
    }

    /// Mean squared LOO error for every penalty (rows) and target (columns).
    pub fn loo_mse(&self, y: &DMatrix<f64>, grid: &LambdaGrid) -> Result<DMatrix<f64>> {
        self.check_targets(y)?;
        Ok(self.loo_mse_unchecked(y, &(&self.ut * y), &self.prepare(grid)))
    }

    fn loo_mse_unchecked(&self, y: &DMatrix<f64>, c: &DMatrix<f64>, factors: &GridFactors) -> DMatrix<f64> {
        let (n, t) = y.shape();
        let k = c.nrows();
        let mut out = DMatrix::zeros(factors.lambdas.len(), t);
        let mut scaled = c.clone();
        let mut fitted = DMatrix::zeros(n, t);
        for (l, (f, inv)) in factors.shrink.iter().zip(&factors.inv_residual).enumerate() {
            for (dst, src) in scaled.as_mut_slice().chunks_exact_mut(k).zip(c.as_slice().chunks_exact(k)) {
                for ((d, s), fk) in dst.iter_mut().zip(src).zip(f) {
                    *d = s * fk;
                }
            }
            self.u.mul_to(&scaled, &mut fitted);
            for (j, (yc, fc)) in y.as_slice().chunks_exact(n).zip(fitted.as_slice().chunks_exact(n)).enumerate() {
                let sse: f64 = yc
                    .iter()
                    .zip(fc)
                    .zip(inv)
                    .map(|((a, b), w)| {
                        let e = (a - b) * w;
                        e * e
                    })
                    .sum();
                out[(l, j)] = sse / n as f64;
            }
        }
        out
    }

    /// Weights for each target at its own penalty.
    pub fn weights(&self, y: &DMatrix<f64>, lambdas: &[f64]) -> Result<DMatrix<f64>> {
        self.check_targets(y)?;
        if lambdas.len() != y.ncols() {
            return Err(Error::shape(format!(
                "{} penalties for {} targets",
                lambdas.len(),
                y.ncols()
            )));
        }
        Ok(self.weights_unchecked(&(&self.ut * y), lambdas))
    }

    fn weights_unchecked(&self, c: &DMatrix<f64>, lambdas: &[f64]) -> DMatrix<f64> {
        let mut g = c.clone();
        for (j, &lambda) in lambdas.iter().enumerate() {
            for (k, &s) in self.s.iter().enumerate() {
                g[(k, j)] *= s / (s * s + lambda);
            }
        }
        &self.v * g
    }

    /// Selects each target's penalty by minimum LOO error (ties go to the
    /// larger penalty) and returns the full-data weights at that penalty.
    pub fn fit(&self, y: &DMatrix<f64>, grid: &LambdaGrid) -> Result<RidgeFit> {
        self.fit_prepared(y, &self.prepare(grid))
    }

    /// As [`RidgeSvd::fit`], reusing factors from [`RidgeSvd::prepare`].
    pub fn fit_prepared(&self, y: &DMatrix<f64>, factors: &GridFactors) -> Result<RidgeFit> {
        self.check_targets(y)?;
        if factors.inv_residual.first().is_some_and(|h| h.len() != self.n_rows()) {
            return Err(Error::shape("grid factors were prepared for a different design"));
        }
        let c = &self.ut * y;
        let loo_mse = self.loo_mse_unchecked(y, &c, factors);
        let chosen_index: Vec<usize> = (0..y.ncols())
            .map(|j| select_index(loo_mse.column(j).as_slice()))
            .collect();
        let chosen_lambda: Vec<f64> = chosen_index.iter().map(|&i| factors.lambdas[i]).collect();
        let weights = self.weights_unchecked(&c, &chosen_lambda);
        Ok(RidgeFit {
            weights,
            chosen_lambda,
            chosen_index,
            loo_mse,
        })
    }
}

fn select_index(mse: &[f64]) -> usize {
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for (i, &e) in mse.iter().enumerate() {
        if e <= best_err {
            best = i;
            best_err = e;
        }
    }
    best
}

/// Ridge on already-standardized `x` and `y` with per-target LOO selection.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, grid: &LambdaGrid) -> Result<RidgeFit> {
    RidgeSvd::new(x)?.fit(y, grid)
}

/// A ridge fit together with the standardization learned on its training
/// data, usable on raw inputs.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    pub fit: RidgeFit,
    pub x_stats: ColumnStats,
    pub y_stats: ColumnStats,
}

impl RidgeModel {
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, grid: &LambdaGrid) -> Result<Self> {
        let x_stats = ColumnStats::fit(x)?;
        let y_stats = ColumnStats::fit(y)?;
        let fit = ridge_solve(&x_stats.apply(x), &y_stats.apply(y), grid)?;
        Ok(Self { fit, x_stats, y_stats })
    }

    /// Predictions in the original target units.
    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = self.x_stats.apply(x) * &self.fit.weights;
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.iter_mut().for_each(|v| *v = self.y_stats.invert_column(j, *v));
        }
        z
    }
}
