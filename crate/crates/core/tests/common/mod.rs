//! Reference implementations used as test oracles. They share no code with
//! the library beyond plain matrix storage.
#![allow(dead_code)]

use nalgebra::DMatrix;

use brainscore::groupstats::Alternative;
use brainscore::rng::CounterRng;

pub fn normal(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = CounterRng::new(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.next_normal())
}

/// Dense Gaussian elimination with partial pivoting, `a x = b`.
pub fn gauss_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().chain(rb).copied().collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        for row in col + 1..n {
            let f = aug[row][col] / aug[col][col];
            if f != 0.0 {
                for k in col..n + m {
                    aug[row][k] -= f * aug[col][k];
                }
            }
        }
    }
    let mut x = vec![vec![0.0; m]; n];
    for row in (0..n).rev() {
        for j in 0..m {
            let mut s = aug[row][n + j];
            for k in row + 1..n {
                s -= aug[row][k] * x[k][j];
            }
            x[row][j] = s / aug[row][row];
        }
    }
    x
}

/// `(XᵀX + λI)⁻¹ Xᵀ Y` from explicit sums.
pub fn ridge_normal_equations(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let t = y.ncols();
    let gram: Vec<Vec<f64>> = (0..p)
        .map(|a| {
            (0..p)
                .map(|b| (0..n).map(|i| x[(i, a)] * x[(i, b)]).sum::<f64>() + if a == b { lambda } else { 0.0 })
                .collect()
        })
        .collect();
    let rhs: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..t).map(|j| (0..n).map(|i| x[(i, a)] * y[(i, j)]).sum()).collect())
        .collect();
    let w = gauss_solve(&gram, &rhs);
    DMatrix::from_fn(p, t, |a, j| w[a][j])
}

/// Residual of each row when the model is refit without that row.
pub fn loo_refit_residuals(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Vec<f64> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let xs = x.select_rows(&keep);
            let ys = DMatrix::from_fn(n - 1, 1, |r, _| y[keep[r]]);
            let w = ridge_normal_equations(&xs, &ys, lambda);
            let pred: f64 = (0..x.ncols()).map(|k| x[(i, k)] * w[(k, 0)]).sum();
            y[i] - pred
        })
        .collect()
}

fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (t, &c) in path.iter().enumerate() {
        if c != 0 && (t == 0 || path[t - 1] != c) {
            out.push(c);
        }
    }
    out
}

/// Sum over every length-T path that collapses to `targets`, in
/// probability space.
pub fn ctc_brute_force(log_probs: &DMatrix<f64>, targets: &[usize]) -> f64 {
    let (t, v) = log_probs.shape();
    let total = v.pow(t as u32);
    let mut sum = 0.0;
    let mut path = vec![0usize; t];
    for code in 0..total {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % v;
            c /= v;
        }
        if collapse(&path) == targets {
            sum += path.iter().enumerate().map(|(i, &k)| log_probs[(i, k)].exp()).product::<f64>();
        }
    }
    sum
}

/// Number of length-T paths that collapse to `targets`.
pub fn ctc_alignment_count(t: usize, v: usize, targets: &[usize]) -> usize {
    let mut count = 0;
    let mut path = vec![0usize; t];
    for code in 0..v.pow(t as u32) {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % v;
            c /= v;
        }
        if collapse(&path) == targets {
            count += 1;
        }
    }
    count
}

/// Signed-rank p-value by enumerating all 2ⁿ sign assignments of the
/// observed magnitudes.
pub fn wilcoxon_enumerate(diffs: &[f64], alternative: Alternative) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|&x| x != 0.0).collect();
    let n = d.len();
    // average rank of each |d_i|, by counting
    let ranks: Vec<f64> = d
        .iter()
        .map(|a| {
            let less = d.iter().filter(|b| b.abs() < a.abs()).count() as f64;
            let equal = d.iter().filter(|b| b.abs() == a.abs()).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w >= observed - 1e-9 {
            ge += 1;
        }
        if w <= observed + 1e-9 {
            le += 1;
        }
    }
    let total = (1u64 << n) as f64;
    let (upper, lower) = (ge as f64 / total, le as f64 / total);
    let p = match alternative {
        Alternative::Greater => upper,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    };
    (observed, p)
}

/// BH by checking every candidate cutoff.
pub fn bh_direct(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let mut best = None;
    for k in 1..=m {
        let threshold = k as f64 * q / m as f64;
        let count = p.iter().filter(|&&v| v <= threshold).count();
        if count >= k {
            best = Some(threshold);
        }
    }
    match best {
        Some(th) => p.iter().map(|&v| v <= th).collect(),
        None => vec![false; m],
    }
}

pub fn pearson_direct(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
