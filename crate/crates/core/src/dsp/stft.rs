use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::matrixio::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub sample_rate: f64,
    pub window_seconds: f64,
    pub stride_seconds: f64,
    pub n_fft: usize,
}

impl StftConfig {
    /// 20 ms Hann window, 10 ms stride, 320-point FFT at 16 kHz.
    pub fn speech_16k() -> Self {
        Self {
            sample_rate: 16_000.0,
            window_seconds: 0.020,
            stride_seconds: 0.010,
            n_fft: 320,
        }
    }

    pub fn window_len(&self) -> usize {
        (self.window_seconds * self.sample_rate).round() as usize
    }

    pub fn stride_len(&self) -> usize {
        (self.stride_seconds * self.sample_rate).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.window_len() == 0 || self.stride_len() == 0 {
            return Err(Error::invalid("window and stride must span at least one sample"));
        }
        if self.n_fft < self.window_len() {
            return Err(Error::invalid(format!(
                "n_fft {} is shorter than the {}-sample window",
                self.n_fft,
                self.window_len()
            )));
        }
        Ok(())
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// `floor((len - window) / stride) + 1`, or zero if the signal is shorter
/// than one window.
pub fn frame_count(len: usize, window: usize, stride: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / stride + 1
    }
}

/// Squared-magnitude STFT. Frame `t` covers samples
/// `[t * stride, t * stride + window)`, Hann-weighted and zero-padded to
/// `n_fft`. Output rows are frames, columns are the `n_fft / 2 + 1` bins.
pub fn power_spectrogram(signal: &[f64], cfg: &StftConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let (win, hop) = (cfg.window_len(), cfg.stride_len());
    let frames = frame_count(signal.len(), win, hop);
    if frames == 0 {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one {win}-sample window",
            signal.len()
        )));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("signal sample {i}")));
    }

    let window = hann_window(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let bins = cfg.n_bins();

    let rows: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map_init(
            || vec![Complex::new(0.0, 0.0); cfg.n_fft],
            |buf, t| {
                let start = t * hop;
                buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                for (i, (&x, &w)) in signal[start..start + win].iter().zip(&window).enumerate() {
                    buf[i].re = x * w;
                }
                fft.process(buf);
                buf[..bins].iter().map(|c| c.norm_sqr()).collect()
            },
        )
        .collect();

    let data = DMatrix::from_fn(frames, bins, |r, c| rows[r][c]);
    Ok(FeatureMatrix::new(data, cfg.sample_rate / hop as f64, "spectrogram")?
        .with_attribute("window", "hann")
        .with_attribute("window_samples", win.to_string())
        .with_attribute("n_fft", cfg.n_fft.to_string())
        .with_attribute("magnitude", "power"))
}
