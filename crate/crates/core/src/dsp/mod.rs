//! Audio front end: WAV I/O, STFT/ISTFT, mel filterbank and log-mel features.

mod mel;
mod stft;
mod wav;

pub use mel::{
    hz_to_mel, log_mel, mel_filterbank, mel_to_hz, FeatureConfig, FeatureExtractor,
    LogMelSpectrogram, MelFilterbank,
};
pub use stft::{hann_window, istft, stft, ComplexSpectrogram};
pub use wav::{read_wav, write_wav, WavEncoding};

pub use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Waveform {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}
