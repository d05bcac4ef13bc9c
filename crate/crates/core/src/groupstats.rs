//! Second-level statistics across subjects: Wilcoxon signed-rank tests per
//! target, Benjamini–Hochberg FDR across targets, and ROI averages.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Sample sizes up to this use the exact null distribution.
pub const EXACT_MAX_N: usize = 25;
/// Smallest cohort accepted by [`group_test`].
pub const MIN_SUBJECTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    Greater,
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater" => Ok(Self::Greater),
            "two_sided" | "two-sided" => Ok(Self::TwoSided),
            other => Err(Error::invalid(format!(
                "unknown alternative {other:?}; expected greater or two_sided"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive differences, W+.
    pub statistic: f64,
    pub p: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub n_zero: usize,
    /// False when every difference was zero; `p` is then 1.
    pub defined: bool,
    pub exact: bool,
}

/// Average ranks of `|d|`, doubled so ties stay integral, plus the tie
/// group sizes.
fn doubled_ranks(abs: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0; abs.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && abs[order[j]] == abs[order[i]] {
            j += 1;
        }
        // ranks i+1..=j averaged, times two
        let r2 = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            ranks[k] = r2;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

/// Exact upper tail `P(W+ ≥ w)` and lower tail `P(W+ ≤ w)` under the
/// sign-flip null, given doubled ranks and the doubled observed statistic.
pub fn wilcoxon_exact_tails(doubled: &[u64], w2: u64) -> (f64, f64) {
    let total: u64 = doubled.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0.0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    let all = 2f64.powi(doubled.len() as i32);
    let w = w2 as usize;
    let upper: f64 = counts[w.min(counts.len())..].iter().sum();
    let lower: f64 = counts[..=w.min(counts.len() - 1)].iter().sum();
    (upper / all, lower / all)
}

/// Normal approximation with tie and continuity corrections.
pub fn wilcoxon_normal_p(statistic: f64, n: usize, tie_sizes: &[usize], alternative: Alternative) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie;
    let sd = var.sqrt();
    let norm = Normal::standard();
    let p = match alternative {
        Alternative::Greater => norm.sf((statistic - mean - 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((statistic - mean).abs() - 0.5).max(0.0) / sd;
            2.0 * norm.sf(z)
        }
    };
    p.min(1.0)
}

/// Wilcoxon signed-rank test of `diffs` against zero.
///
/// Exact zeros are dropped. Samples of at most [`EXACT_MAX_N`] non-zero
/// differences use the exact distribution (tie-averaged ranks), larger ones
/// the normal approximation.
pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("wilcoxon differences".into()));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n_zero = diffs.len() - nz.len();
    let n = nz.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p: 1.0,
            n: 0,
            n_zero,
            defined: false,
            exact: true,
        });
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_ranks(&abs);
    let w2: u64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let statistic = w2 as f64 / 2.0;
    let exact = n <= EXACT_MAX_N;
    let p = if exact {
        let (upper, lower) = wilcoxon_exact_tails(&ranks, w2);
        match alternative {
            Alternative::Greater => upper,
            Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        }
    } else {
        wilcoxon_normal_p(statistic, n, &ties, alternative)
    };
    Ok(WilcoxonResult {
        statistic,
        p,
        n,
        n_zero,
        defined: true,
        exact,
    })
}

/// Benjamini–Hochberg step-up rejections at level `q`, in input order.
pub fn fdr_bh(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let k = order
        .iter()
        .enumerate()
        .filter(|(i, &j)| p_values[j] <= (i + 1) as f64 * q / m as f64)
        .map(|(i, _)| i + 1)
        .last()
        .unwrap_or(0);
    let mut mask = vec![false; m];
    for &j in &order[..k] {
        mask[j] = true;
    }
    mask
}

/// Mean of `values` over the targets listed in `roi`.
pub fn roi_mean(values: &[f64], roi: &[usize]) -> Result<f64> {
    if roi.is_empty() {
        return Err(Error::invalid("ROI is empty"));
    }
    if let Some(&bad) = roi.iter().find(|&&i| i >= values.len()) {
        return Err(Error::invalid(format!(
            "ROI index {bad} out of range for {} targets",
            values.len()
        )));
    }
    Ok(roi.iter().map(|&i| values[i]).sum::<f64>() / roi.len() as f64)
}

/// Subjects × targets matrix of per-subject scores or ΔR.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMatrix {
    pub values: DMatrix<f64>,
}

impl GroupMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("group matrix".into()));
        }
        if values.is_empty() {
            return Err(Error::shape("group matrix is empty"));
        }
        Ok(Self { values })
    }

    /// Stacks per-subject vectors as rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::shape("subjects have different target counts"));
        }
        Self::new(DMatrix::from_fn(rows.len(), t, |i, j| rows[i][j]))
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.values.ncols()
    }

    pub fn mean(&self) -> f64 {
        self.values.mean()
    }

    /// Per-subject means over an ROI.
    pub fn roi_means(&self, roi: &[usize]) -> Result<Vec<f64>> {
        (0..self.n_subjects())
            .map(|s| roi_mean(self.values.row(s).iter().copied().collect::<Vec<_>>().as_slice(), roi))
            .collect()
    }
}

/// Per-target test results with FDR significance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatMap {
    pub statistic: Vec<f64>,
    pub p_raw: Vec<f64>,
    pub significant: Vec<bool>,
    pub defined: Vec<bool>,
    pub n_zero: Vec<usize>,
    pub q: f64,
    pub alternative: Alternative,
}

impl StatMap {
    pub fn n_significant(&self) -> usize {
        self.significant.iter().filter(|&&s| s).count()
    }

    pub fn fraction_significant(&self) -> f64 {
        self.n_significant() as f64 / self.significant.len() as f64
    }
}

/// Wilcoxon test per target across subjects, then BH FDR across targets.
pub fn group_test(group: &GroupMatrix, alternative: Alternative, q: f64) -> Result<StatMap> {
    if group.n_subjects() < MIN_SUBJECTS {
        return Err(Error::invalid(format!(
            "group tests need at least {MIN_SUBJECTS} subjects, got {}",
            group.n_subjects()
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("FDR level must lie in (0, 1), got {q}")));
    }
    let results: Vec<WilcoxonResult> = (0..group.n_targets())
        .into_par_iter()
        .map(|t| {
            let col: Vec<f64> = group.values.column(t).iter().copied().collect();
            wilcoxon_signed_rank(&col, alternative)
        })
        .collect::<Result<_>>()?;
    let p_raw: Vec<f64> = results.iter().map(|r| r.p).collect();
    let mut significant = fdr_bh(&p_raw, q);
    for (s, r) in significant.iter_mut().zip(&results) {
        *s &= r.defined;
    }
    Ok(StatMap {
        statistic: results.iter().map(|r| r.statistic).collect(),
        p_raw,
        significant,
        defined: results.iter().map(|r| r.defined).collect(),
        n_zero: results.iter().map(|r| r.n_zero).collect(),
        q,
        alternative,
    })
}

/// Wilcoxon on per-subject ROI means, one test per ROI (no FDR).
pub fn roi_tests(
    group: &GroupMatrix,
    rois: &BTreeMap<String, Vec<usize>>,
    alternative: Alternative,
) -> Result<BTreeMap<String, (f64, WilcoxonResult)>> {
    rois.iter()
        .map(|(name, roi)| {
            let means = group.roi_means(roi)?;
            let avg = means.iter().sum::<f64>() / means.len() as f64;
            Ok((name.clone(), (avg, wilcoxon_signed_rank(&means, alternative)?)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_positive_is_one_in_32() {
        let r = wilcoxon_signed_rank(&[0.1, 0.4, 0.2, 0.3, 0.5], Alternative::Greater).unwrap();
        assert_eq!(r.p, 0.03125);
        assert_eq!(r.statistic, 15.0);
        assert!(r.exact);
    }

    #[test]
    fn symmetric_pairs_sit_at_the_center() {
        let d = [1.0, -1.0, 2.0, -2.0, 3.0, -3.0];
        let r = wilcoxon_signed_rank(&d, Alternative::TwoSided).unwrap();
        assert_eq!(r.statistic, 21.0 / 2.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn zeros_dropped_and_all_zero_flagged() {
        let r = wilcoxon_signed_rank(&[0.0, 1.0, 2.0, 0.0, 3.0, 4.0, 5.0], Alternative::Greater).unwrap();
        assert_eq!((r.n, r.n_zero), (5, 2));
        assert_eq!(r.p, 0.03125);
        let z = wilcoxon_signed_rank(&[0.0; 6], Alternative::Greater).unwrap();
        assert!(!z.defined);
        assert_eq!(z.p, 1.0);
    }

    #[test]
    fn ties_use_average_ranks() {
        let (r, t) = doubled_ranks(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(r, vec![2, 5, 5, 8]);
        assert_eq!(t, vec![1, 2, 1]);
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let d: Vec<f64> = (1..=30).map(|i| i as f64 * if i % 5 == 0 { -1.0 } else { 1.0 }).collect();
        let r = wilcoxon_signed_rank(&d, Alternative::Greater).unwrap();
        assert!(!r.exact);
        assert!(r.p > 0.0 && r.p < 0.05);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(fdr_bh(&[0.01, 0.02, 0.03, 0.04, 0.05], 0.05), vec![true; 5]);
        assert_eq!(fdr_bh(&[1.0; 4], 0.05), vec![false; 4]);
        assert_eq!(fdr_bh(&[0.04, 0.001, 0.9], 0.05), vec![false, true, false]);
        assert!(fdr_bh(&[], 0.05).is_empty());
    }

    #[test]
    fn roi_means() {
        let v = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(roi_mean(&v, &[0, 1, 2, 3]).unwrap(), 3.0);
        assert_eq!(roi_mean(&v, &[2]).unwrap(), 3.0);
        assert!(roi_mean(&v, &[]).is_err());
        assert!(roi_mean(&v, &[4]).is_err());
    }

    #[test]
    fn group_test_needs_five_subjects() {
        let g = GroupMatrix::new(DMatrix::from_element(4, 3, 1.0)).unwrap();
        assert!(group_test(&g, Alternative::Greater, 0.05).is_err());
        let g = GroupMatrix::new(DMatrix::from_fn(6, 3, |i, j| (i + 1) as f64 * (j as f64 - 1.0))).unwrap();
        let s = group_test(&g, Alternative::Greater, 0.05).unwrap();
        assert_eq!(s.defined, vec![true, false, true]);
        assert_eq!(s.significant, vec![false, false, true]);
    }
}
