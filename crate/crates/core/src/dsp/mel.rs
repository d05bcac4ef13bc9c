use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::stft::{power_spectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::matrixio::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MelVariant {
    /// `2595 log10(1 + f / 700)`.
    Htk,
    /// Linear below 1 kHz (`3f / 200`), logarithmic above.
    #[default]
    Slaney,
}

impl MelVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            MelVariant::Htk => "htk",
            MelVariant::Slaney => "slaney",
        }
    }
}

const SLANEY_F_SP: f64 = 200.0 / 3.0;
const SLANEY_MIN_LOG_HZ: f64 = 1000.0;
const SLANEY_MIN_LOG_MEL: f64 = SLANEY_MIN_LOG_HZ / SLANEY_F_SP;

fn slaney_logstep() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(hz: f64, variant: MelVariant) -> f64 {
    match variant {
        MelVariant::Htk => 2595.0 * (1.0 + hz / 700.0).log10(),
        MelVariant::Slaney if hz < SLANEY_MIN_LOG_HZ => hz / SLANEY_F_SP,
        MelVariant::Slaney => SLANEY_MIN_LOG_MEL + (hz / SLANEY_MIN_LOG_HZ).ln() / slaney_logstep(),
    }
}

pub fn mel_to_hz(mel: f64, variant: MelVariant) -> f64 {
    match variant {
        MelVariant::Htk => 700.0 * (10f64.powf(mel / 2595.0) - 1.0),
        MelVariant::Slaney if mel < SLANEY_MIN_LOG_MEL => mel * SLANEY_F_SP,
        MelVariant::Slaney => SLANEY_MIN_LOG_HZ * ((mel - SLANEY_MIN_LOG_MEL) * slaney_logstep()).exp(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub sample_rate: f64,
    pub window_seconds: f64,
    pub stride_seconds: f64,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub mel_variant: MelVariant,
    /// Defaults to the next power of two at or above the window length.
    pub n_fft: Option<usize>,
}

impl MelConfig {
    /// 25 ms windows at a 10 ms stride, 80 filters spanning 0–8 kHz.
    pub fn baseline_16k() -> Self {
        Self {
            sample_rate: 16_000.0,
            window_seconds: 0.025,
            stride_seconds: 0.010,
            n_mels: 80,
            f_min: 0.0,
            f_max: 8_000.0,
            mel_variant: MelVariant::Slaney,
            n_fft: None,
        }
    }

    pub fn stft(&self) -> StftConfig {
        let window = (self.window_seconds * self.sample_rate).round() as usize;
        StftConfig {
            sample_rate: self.sample_rate,
            window_seconds: self.window_seconds,
            stride_seconds: self.stride_seconds,
            n_fft: self.n_fft.unwrap_or_else(|| window.max(1).next_power_of_two()),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_mels == 0 {
            return Err(Error::invalid("n_mels must be at least 1"));
        }
        if !(0.0 <= self.f_min && self.f_min < self.f_max && self.f_max <= self.sample_rate / 2.0) {
            return Err(Error::invalid(format!(
                "need 0 <= f_min < f_max <= {}, got [{}, {}]",
                self.sample_rate / 2.0,
                self.f_min,
                self.f_max
            )));
        }
        Ok(())
    }
}

/// Triangular filters (`n_mels × n_fft/2+1`) with area normalization
/// `2 / (f_right - f_left)`. Filter edges are `n_mels + 2` points evenly
/// spaced on the mel scale between `f_min` and `f_max`.
pub fn mel_filter_matrix(cfg: &MelConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let n_fft = cfg.stft().n_fft;
    let bins = n_fft / 2 + 1;
    let lo = hz_to_mel(cfg.f_min, cfg.mel_variant);
    let hi = hz_to_mel(cfg.f_max, cfg.mel_variant);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64, cfg.mel_variant))
        .collect();

    Ok(DMatrix::from_fn(cfg.n_mels, bins, |m, k| {
        let f = k as f64 * cfg.sample_rate / n_fft as f64;
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let rising = (f - left) / (center - left);
        let falling = (right - f) / (right - center);
        rising.min(falling).max(0.0) * 2.0 / (right - left)
    }))
}

/// Mel filterbank energies: each output is the filter-weighted sum of STFT
/// power bins.
pub fn mel_filterbank(signal: &[f64], cfg: &MelConfig) -> Result<FeatureMatrix> {
    let filters = mel_filter_matrix(cfg)?;
    let spec = power_spectrogram(signal, &cfg.stft())?;
    let data = &spec.data * filters.transpose();
    Ok(FeatureMatrix::new(data, spec.sample_rate, "mel")?
        .with_layer(0)
        .with_attribute("window", "hann")
        .with_attribute("n_fft", cfg.stft().n_fft.to_string())
        .with_attribute("mel_variant", cfg.mel_variant.as_str())
        .with_attribute("n_mels", cfg.n_mels.to_string()))
}
