//! Hemodynamic alignment of model activations.
//!
//! Each activation column is min-max normalized, convolved causally with a
//! canonical double-gamma ("Glover") HRF sampled at the activation rate, and
//! read out at scan times by nearest-sample lookup.

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matrixio::FeatureMatrix;

/// Glover model constants, as used by the common fMRI regressor tooling:
/// `h(t) = G(t - dt/d; a1) - RATIO * G(t - dt/d; a2)` where `G(x; a)` is the
/// unit-scale gamma density, `a1 = DELAY / d`, `a2 = UNDERSHOOT / d` and
/// `d = DISPERSION`. The main lobe peaks near 5.7 s, the undershoot near
/// 12.3 s.
pub mod glover {
    pub const DELAY: f64 = 6.0;
    pub const UNDERSHOOT: f64 = 12.0;
    pub const DISPERSION: f64 = 0.9;
    pub const RATIO: f64 = 0.35;
    pub const DURATION_SECONDS: f64 = 32.0;
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrfKernel {
    pub samples: Vec<f64>,
    pub oversample_hz: f64,
    pub duration_seconds: f64,
}

impl HrfKernel {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Kernel value at `t` seconds (nearest sample), zero outside support.
    pub fn at_seconds(&self, t: f64) -> f64 {
        let i = (t * self.oversample_hz).round();
        if i < 0.0 {
            return 0.0;
        }
        self.samples.get(i as usize).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleSpec {
    pub input_rate: f64,
    pub output_rate: f64,
    pub n_output: usize,
}

impl ResampleSpec {
    pub fn new(input_rate: f64, output_rate: f64, n_output: usize) -> Result<Self> {
        if !(output_rate > 0.0 && input_rate > output_rate && input_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "need input_rate > output_rate > 0, got {input_rate} and {output_rate}"
            )));
        }
        Ok(Self {
            input_rate,
            output_rate,
            n_output,
        })
    }

    /// Input-grid index nearest to scan `k`.
    pub fn source_index(&self, k: usize) -> usize {
        (k as f64 * self.input_rate / self.output_rate).round() as usize
    }
}

/// Maps each column to `[0, 1]` via `(v - min) / (max - min)`; constant
/// columns become zeros.
pub fn minmax_normalize(activations: &FeatureMatrix) -> FeatureMatrix {
    let mut out = activations.clone();
    for mut col in out.data.column_iter_mut() {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        if range > 0.0 {
            col.iter_mut().for_each(|v| *v = (*v - lo) / range);
        } else {
            col.fill(0.0);
        }
    }
    out
}

fn gamma_density(x: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        ((shape - 1.0) * x.ln() - x - ln_gamma(shape)).exp()
    }
}

/// Glover double-gamma HRF sampled at `oversample_hz` for `duration_seconds`,
/// scaled so its maximum is exactly 1.
pub fn glover_hrf(oversample_hz: f64, duration_seconds: f64) -> Result<HrfKernel> {
    if !(oversample_hz >= 10.0 && oversample_hz.is_finite()) {
        return Err(Error::invalid(format!("oversample rate {oversample_hz} Hz is below 10 Hz")));
    }
    if !(duration_seconds >= 20.0 && duration_seconds.is_finite()) {
        return Err(Error::invalid(format!("HRF duration {duration_seconds} s is below 20 s")));
    }
    use glover::*;
    let dt = 1.0 / oversample_hz;
    let n = (duration_seconds * oversample_hz).round() as usize;
    let loc = dt / DISPERSION;
    let (a1, a2) = (DELAY / DISPERSION, UNDERSHOOT / DISPERSION);
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 * dt - loc;
            gamma_density(x, a1) - RATIO * gamma_density(x, a2)
        })
        .collect();
    let peak = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    samples.iter_mut().for_each(|v| *v /= peak);
    Ok(HrfKernel {
        samples,
        oversample_hz,
        duration_seconds,
    })
}

/// Causal convolution of every column with `kernel`, sampled at the scan
/// times `k / output_rate`.
///
/// Only the sampled points of the full convolution are evaluated:
/// `out[k] = sum_m h[i_k - m] * x[m]` with `i_k = round(k * in / out)`.
pub fn convolve_downsample(
    activations: &FeatureMatrix,
    kernel: &HrfKernel,
    spec: &ResampleSpec,
) -> Result<FeatureMatrix> {
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
    if !rel(activations.sample_rate, spec.input_rate) {
        return Err(Error::invalid(format!(
            "activations are at {} Hz but the resample spec expects {} Hz",
            activations.sample_rate, spec.input_rate
        )));
    }
    if !rel(kernel.oversample_hz, spec.input_rate) {
        return Err(Error::invalid(format!(
            "kernel is sampled at {} Hz, activations at {} Hz",
            kernel.oversample_hz, spec.input_rate
        )));
    }
    if spec.n_output == 0 {
        return Err(Error::invalid("n_output must be at least 1"));
    }
    let n_in = activations.n_rows();
    let support = n_in + kernel.len() - 1;
    let last = spec.source_index(spec.n_output - 1);
    if last >= support {
        return Err(Error::invalid(format!(
            "{} scans need input sample {last}, beyond the convolved support of {support} samples",
            spec.n_output
        )));
    }

    let h = &kernel.samples;
    let columns: Vec<Vec<f64>> = activations
        .data
        .column_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|col| {
            let x = col.as_slice();
            (0..spec.n_output)
                .map(|k| {
                    let i = spec.source_index(k);
                    let lo = (i + 1).saturating_sub(h.len());
                    let hi = i.min(n_in - 1);
                    if lo > hi {
                        return 0.0;
                    }
                    (lo..=hi).map(|m| h[i - m] * x[m]).sum()
                })
                .collect()
        })
        .collect();

    let data = DMatrix::from_fn(spec.n_output, columns.len(), |r, c| columns[c][r]);
    let mut out = FeatureMatrix::new(data, spec.output_rate, activations.name.clone())?;
    out.layer_index = activations.layer_index;
    out.attributes = activations.attributes.clone();
    out.attributes.insert("hrf".into(), "glover".into());
    Ok(out)
}

/// Optional min-max normalization followed by HRF convolution at the given TR.
pub fn align_to_scans(
    activations: &FeatureMatrix,
    tr_seconds: f64,
    n_scans: usize,
    normalize: bool,
) -> Result<FeatureMatrix> {
    let kernel = glover_hrf(activations.sample_rate, glover::DURATION_SECONDS)?;
    let spec = ResampleSpec::new(activations.sample_rate, 1.0 / tr_seconds, n_scans)?;
    if normalize {
        convolve_downsample(&minmax_normalize(activations), &kernel, &spec)
    } else {
        convolve_downsample(activations, &kernel, &spec)
    }
}
