//! Triangular mel filterbank and log-mel features.

use serde::{Deserialize, Serialize};

use super::stft::{hann_window, stft, ComplexSpectrogram};
use super::Waveform;
use crate::error::{Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_mels × n_bins`, row-major.
    pub weights: Vec<f64>,
    pub band_centers: Vec<f64>,
    pub n_mels: usize,
    pub n_bins: usize,
    pub sample_rate: u32,
    pub window_size: usize,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Center frequency in Hz of linear bin `k`.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * f64::from(self.sample_rate) / self.window_size as f64
    }
}

/// HTK-style triangular filters: `n_mels` peaks equally spaced in mel between
/// `f_min` and `f_max`, each rising linearly from the previous center and
/// falling to the next. Filters are not area-normalized.
pub fn mel_filterbank(
    sample_rate: u32,
    window_size: usize,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    let nyquist = f64::from(sample_rate) / 2.0;
    if n_mels == 0 {
        return Err(Error::InvalidArgument("n_mels must be at least 1".into()));
    }
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got f_min {f_min}, f_max {f_max}"
        )));
    }
    if window_size < 2 {
        return Err(Error::InvalidArgument("window_size must be at least 2".into()));
    }
    let n_bins = window_size / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / window_size as f64;
    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rise = (f - lo) / (center - lo);
            let fall = (hi - f) / (hi - center);
            *w = rise.min(fall).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::EmptyMelBand { band: m });
        }
    }
    Ok(MelFilterbank {
        weights,
        band_centers: edges[1..=n_mels].to_vec(),
        n_mels,
        n_bins,
        sample_rate,
        window_size,
    })
}

/// `n_frames × n_mels` natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub frame_rate: f64,
}

/// `values[t][m] = ln(max(Σ_f w[m][f] |X[t][f]|², floor))`.
pub fn log_mel(
    spec: &ComplexSpectrogram,
    filterbank: &MelFilterbank,
    log_floor: f64,
) -> Result<LogMelSpectrogram> {
    if filterbank.n_bins != spec.n_bins {
        return Err(Error::Shape(format!(
            "filterbank has {} bins, spectrogram has {}",
            filterbank.n_bins, spec.n_bins
        )));
    }
    let mut values = Vec::with_capacity(spec.n_frames * filterbank.n_mels);
    let mut power = vec![0.0; spec.n_bins];
    for t in 0..spec.n_frames {
        for (p, c) in power.iter_mut().zip(spec.frame(t)) {
            *p = c.norm_sqr();
        }
        for m in 0..filterbank.n_mels {
            let e: f64 = filterbank.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
            values.push(e.max(log_floor).ln());
        }
    }
    Ok(LogMelSpectrogram {
        values,
        n_frames: spec.n_frames,
        n_mels: filterbank.n_mels,
        frame_rate: f64::from(spec.sample_rate) / spec.hop as f64,
    })
}

/// Front-end settings shared by training, inference and separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl FeatureConfig {
    /// 32 kHz, 2048-point window, 1024 hop, 64 mel bands.
    pub fn paper() -> Self {
        FeatureConfig {
            sample_rate: 32000,
            window_size: 2048,
            hop: 1024,
            n_mels: 64,
            f_min: 0.0,
            f_max: 16000.0,
            log_floor: 1e-10,
        }
    }

    /// 16 kHz, 1024-point window, 512 hop, 40 mel bands.
    pub fn desk() -> Self {
        FeatureConfig {
            sample_rate: 16000,
            window_size: 1024,
            hop: 512,
            n_mels: 40,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-10,
        }
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Precomputed window and filterbank for one [`FeatureConfig`].
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub window: Vec<f64>,
    pub filterbank: MelFilterbank,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let filterbank = mel_filterbank(
            config.sample_rate,
            config.window_size,
            config.n_mels,
            config.f_min,
            config.f_max,
        )?;
        Ok(FeatureExtractor {
            window: hann_window(config.window_size),
            filterbank,
            config,
        })
    }

    pub fn spectrogram(&self, wave: &Waveform) -> Result<ComplexSpectrogram> {
        if wave.sample_rate != self.config.sample_rate {
            return Err(Error::UnsupportedAudio(format!(
                "sample rate {} Hz, features expect {} Hz (resampling is not supported)",
                wave.sample_rate, self.config.sample_rate
            )));
        }
        stft(wave, self.config.window_size, self.config.hop, &self.window)
    }

    pub fn log_mel(&self, wave: &Waveform) -> Result<LogMelSpectrogram> {
        log_mel(&self.spectrogram(wave)?, &self.filterbank, self.config.log_floor)
    }
}
