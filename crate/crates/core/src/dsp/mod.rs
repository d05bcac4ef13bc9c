//! Audio front-end: waveform loading, resampling to 16 kHz mono, squared-
//! magnitude STFT spectrograms and mel filterbank energies.

mod mel;
mod resample;
mod stft;
mod wav;

pub use mel::{hz_to_mel, mel_filter_matrix, mel_filterbank, mel_to_hz, MelConfig, MelVariant};
pub use resample::{resample_to_mono_16k, Waveform, TARGET_RATE};
pub use stft::{frame_count, hann_window, power_spectrogram, StftConfig};
pub use wav::read_wav;
