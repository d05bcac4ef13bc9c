//! Connectionist temporal classification: forward log-likelihood, greedy
//! decoding and edit-distance error rates.
//!
//! Class index 0 is the blank.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const BLANK: usize = 0;

/// Per-frame class log-probabilities (`frames × classes`) and a target
/// label sequence over `1..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcInstance {
    log_probs: DMatrix<f64>,
    targets: Vec<usize>,
}

impl CtcInstance {
    pub fn new(log_probs: DMatrix<f64>, targets: Vec<usize>) -> Result<Self> {
        let (t, v) = log_probs.shape();
        if t == 0 || v < 2 {
            return Err(Error::shape(format!(
                "log-probabilities must have at least 1 frame and 2 classes, got {t}x{v}"
            )));
        }
        if log_probs.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::NonFinite("CTC log-probabilities".into()));
        }
        for (i, row) in log_probs.row_iter().enumerate() {
            let total: f64 = row.iter().map(|x| x.exp()).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "frame {i} probabilities sum to {total}, expected 1"
                )));
            }
        }
        if let Some(&bad) = targets.iter().find(|&&l| l == BLANK || l >= v) {
            return Err(Error::invalid(format!(
                "target label {bad} outside 1..{v} (0 is the blank)"
            )));
        }
        Ok(Self { log_probs, targets })
    }

    /// Row-wise log-softmax of arbitrary scores.
    pub fn from_logits(logits: &DMatrix<f64>, targets: Vec<usize>) -> Result<Self> {
        Self::new(log_softmax(logits), targets)
    }

    pub fn log_probs(&self) -> &DMatrix<f64> {
        &self.log_probs
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn n_frames(&self) -> usize {
        self.log_probs.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.log_probs.ncols()
    }
}

pub fn log_softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let m = row.max();
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|x| *x -= lse);
    }
    out
}

/// Fewest frames able to emit `targets`: one per label plus a blank
/// between each pair of equal neighbours.
pub fn min_frames(targets: &[usize]) -> usize {
    targets.len() + targets.windows(2).filter(|w| w[0] == w[1]).count()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log of the total probability of all alignments that collapse to the
/// target. Returns negative infinity when the target needs more frames
/// than are available.
pub fn ctc_log_likelihood(inst: &CtcInstance) -> f64 {
    let lp = &inst.log_probs;
    let t_len = lp.nrows();
    let labels = &inst.targets;
    if min_frames(labels) > t_len {
        return f64::NEG_INFINITY;
    }
    // blank-augmented sequence: -, l1, -, l2, ..., lL, -
    let ext: Vec<usize> = std::iter::once(BLANK)
        .chain(labels.iter().flat_map(|&l| [l, BLANK]))
        .collect();
    let s_len = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; s_len];
    alpha[0] = lp[(0, BLANK)];
    if s_len > 1 {
        alpha[1] = lp[(0, ext[1])];
    }
    let mut next = alpha.clone();
    for t in 1..t_len {
        for s in 0..s_len {
            let mut a = alpha[s];
            if s >= 1 {
                a = log_add(a, alpha[s - 1]);
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                a = log_add(a, alpha[s - 2]);
            }
            next[s] = a + lp[(t, ext[s])];
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    if s_len == 1 {
        alpha[0]
    } else {
        log_add(alpha[s_len - 1], alpha[s_len - 2])
    }
}

/// CTC loss (negative log-likelihood) of each instance, in parallel.
pub fn ctc_batch_loss(batch: &[CtcInstance]) -> Vec<f64> {
    batch.par_iter().map(|i| -ctc_log_likelihood(i)).collect()
}

/// Collapses a frame-level path: merge repeats, then drop blanks.
pub fn collapse_path(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &c in path {
        if Some(c) != prev && c != BLANK {
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

/// Per-frame argmax (lowest index on ties), collapsed.
pub fn ctc_greedy_decode(log_probs: &DMatrix<f64>) -> Vec<usize> {
    let path: Vec<usize> = log_probs
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    collapse_path(&path)
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word-level edit distance over reference length.
pub fn word_error_rate<S: AsRef<str> + PartialEq>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::invalid("reference transcript is empty"));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// WER of whitespace-separated transcripts.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    word_error_rate(&r, &h)
}

/// Character-level error rate.
pub fn character_error_rate(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    if r.is_empty() {
        return Err(Error::invalid("reference transcript is empty"));
    }
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Parses space-separated label indices.
pub fn parse_targets(text: &str) -> Result<Vec<usize>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| Error::invalid(format!("target token {tok:?} is not a label index")))
        })
        .collect()
}
