use std::path::Path;

use hound::{SampleFormat, WavReader};

use super::resample::Waveform;
use crate::error::{Error, Result};

/// Reads integer PCM (8–32 bit) or 32-bit float WAV into `[-1, 1]` samples.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    let n_channels = spec.channels as usize;
    if n_channels == 0 {
        return Err(Error::Wav(format!("{}: zero channels", path.display())));
    }
    let wav_err = |e: hound::Error| Error::Wav(format!("{}: {e}", path.display()));

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Int, bits @ 1..=32) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
        (fmt, bits) => {
            return Err(Error::Wav(format!(
                "{}: unsupported sample format {fmt:?} with {bits} bits",
                path.display()
            )))
        }
    };

    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_channels); n_channels];
    for frame in interleaved.chunks_exact(n_channels) {
        for (c, &v) in frame.iter().enumerate() {
            channels[c].push(v);
        }
    }
    Ok(Waveform {
        channels,
        sample_rate: spec.sample_rate,
    })
}
