use crate::error::{Error, Result};

pub const TARGET_RATE: u32 = 16_000;

/// Zero crossings of the interpolating sinc kept on each side.
const ZERO_CROSSINGS: f64 = 16.0;
/// Passband edge as a fraction of the output Nyquist frequency.
const ROLLOFF: f64 = 0.94;

/// Multi-channel PCM audio normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            channels: vec![samples],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_mono(&self) -> Vec<f64> {
        let n = self.channels.len() as f64;
        (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect()
    }
}

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let t = std::f64::consts::PI * (x + 1.0);
    0.42 - 0.5 * t.cos() + 0.08 * (2.0 * t).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Averages channels, then converts to 16 kHz with a Blackman-windowed sinc.
/// Output length is `ceil(len * 16000 / rate)`. Upsampling is rejected.
pub fn resample_to_mono_16k(wave: &Waveform) -> Result<Vec<f64>> {
    if wave.channels.is_empty() || wave.channels.iter().any(|c| c.len() != wave.len()) {
        return Err(Error::invalid("waveform needs at least one channel, all of equal length"));
    }
    let rate = wave.sample_rate;
    if rate < TARGET_RATE {
        return Err(Error::invalid(format!(
            "upsampling from {rate} Hz is not supported"
        )));
    }
    let mono = wave.to_mono();
    if rate == TARGET_RATE {
        return Ok(mono);
    }

    let len = mono.len();
    let step = rate as f64 / TARGET_RATE as f64;
    let n_out = (len as u64 * TARGET_RATE as u64).div_ceil(rate as u64) as usize;
    // cutoff in cycles per input sample
    let fc = 0.5 / step * ROLLOFF;
    let half = ZERO_CROSSINGS / (2.0 * fc);

    let out = (0..n_out)
        .map(|m| {
            let t = m as f64 * step;
            let lo = (t - half).ceil().max(0.0) as usize;
            let hi = ((t + half).floor() as usize).min(len - 1);
            (lo..=hi)
                .map(|n| {
                    let d = t - n as f64;
                    mono[n] * 2.0 * fc * sinc(2.0 * fc * d) * blackman(d / half)
                })
                .sum()
        })
        .collect();
    Ok(out)
}
