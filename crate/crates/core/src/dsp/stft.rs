//! Short-time Fourier transform and weighted overlap-add inverse.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::Waveform;
use crate::error::{Error, Result};

/// Periodic Hann window of `n` points.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex STFT frames, `n_frames × n_bins` row-major, `n_bins = window_size / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: Vec<Complex64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub sample_rate: u32,
    pub window_size: usize,
    pub hop: usize,
}

impl ComplexSpectrogram {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.frames[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.frames.iter().map(|c| c.norm()).collect()
    }

    /// Number of frames `stft` produces for a signal of `num_samples`.
    pub fn frame_count(num_samples: usize, window_size: usize, hop: usize) -> usize {
        if num_samples < window_size {
            0
        } else {
            (num_samples - window_size) / hop + 1
        }
    }

    pub(crate) fn same_grid(&self, other: &ComplexSpectrogram) -> Result<()> {
        if self.n_frames != other.n_frames || self.n_bins != other.n_bins {
            return Err(Error::Shape(format!(
                "spectrogram {}x{} vs {}x{}",
                self.n_frames, self.n_bins, other.n_frames, other.n_bins
            )));
        }
        Ok(())
    }
}

/// Frames fully inside the signal, no padding: frame `t` covers
/// samples `[t*hop, t*hop + window_size)`.
pub fn stft(
    wave: &Waveform,
    window_size: usize,
    hop: usize,
    window: &[f64],
) -> Result<ComplexSpectrogram> {
    if window.len() != window_size {
        return Err(Error::Shape(format!(
            "window has {} points, window_size is {window_size}",
            window.len()
        )));
    }
    if hop == 0 || window_size == 0 {
        return Err(Error::InvalidArgument("window_size and hop must be positive".into()));
    }
    let n = wave.samples.len();
    if n < window_size {
        return Err(Error::SignalTooShort {
            samples: n,
            window: window_size,
        });
    }
    let n_frames = ComplexSpectrogram::frame_count(n, window_size, hop);
    let n_bins = window_size / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_size);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); window_size];
    let mut frames = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let seg = &wave.samples[t * hop..t * hop + window_size];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(window) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        frames.extend_from_slice(&buf[..n_bins]);
    }
    Ok(ComplexSpectrogram {
        frames,
        n_frames,
        n_bins,
        sample_rate: wave.sample_rate,
        window_size,
        hop,
    })
}

/// Inverse STFT: per-frame inverse DFT, synthesis windowing, overlap-add, and
/// division by the accumulated squared-window envelope. Samples where the
/// envelope vanishes are set to zero.
pub fn istft(spec: &ComplexSpectrogram, window: &[f64]) -> Result<Waveform> {
    let w = spec.window_size;
    if spec.n_bins != w / 2 + 1 {
        return Err(Error::Shape(format!(
            "{} bins inconsistent with window_size {w}",
            spec.n_bins
        )));
    }
    if window.len() != w {
        return Err(Error::Shape(format!(
            "window has {} points, window_size is {w}",
            window.len()
        )));
    }
    if spec.frames.len() != spec.n_frames * spec.n_bins {
        return Err(Error::Shape(format!(
            "{} values for {}x{} frames",
            spec.frames.len(),
            spec.n_frames,
            spec.n_bins
        )));
    }
    if spec.hop == 0 || spec.hop > w {
        return Err(Error::InvalidArgument(format!(
            "hop {} must be in 1..={w}",
            spec.hop
        )));
    }
    if spec.n_frames == 0 {
        return Waveform::new(Vec::new(), spec.sample_rate);
    }
    let len = (spec.n_frames - 1) * spec.hop + w;
    let mut out = vec![0.0; len];
    let mut env = vec![0.0; len];
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(w);
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); w];
    let scale = 1.0 / w as f64;
    for t in 0..spec.n_frames {
        let frame = spec.frame(t);
        buf[..spec.n_bins].copy_from_slice(frame);
        // Hermitian extension for a real signal.
        for k in spec.n_bins..w {
            buf[k] = buf[w - k].conj();
        }
        buf[0].im = 0.0;
        if w % 2 == 0 {
            buf[w / 2].im = 0.0;
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * spec.hop;
        for (i, (b, &win)) in buf.iter().zip(window).enumerate() {
            out[start + i] += b.re * scale * win;
            env[start + i] += win * win;
        }
    }
    for (o, &e) in out.iter_mut().zip(&env) {
        *o = if e > 1e-10 { *o / e } else { 0.0 };
    }
    Waveform::new(out, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(rng: &mut ChaCha8Rng, n: usize, sr: u32) -> Waveform {
        Waveform::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), sr).unwrap()
    }

    fn brute_dft(seg: &[f64], k: usize) -> Complex64 {
        let n = seg.len() as f64;
        seg.iter()
            .enumerate()
            .map(|(i, &x)| {
                let ang = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n;
                Complex64::new(x * ang.cos(), x * ang.sin())
            })
            .sum()
    }

    #[test]
    fn frame_count_at_paper_settings() {
        assert_eq!(ComplexSpectrogram::frame_count(320_000, 2048, 1024), 311);
        let w = Waveform::new(vec![0.0; 320_000], 32000).unwrap();
        let s = stft(&w, 2048, 1024, &hann_window(2048)).unwrap();
        assert_eq!(s.n_frames, 311);
        assert_eq!(s.n_bins, 1025);
        assert!(s.frames.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn too_short_signal_errors() {
        let w = Waveform::new(vec![0.0; 100], 16000).unwrap();
        assert!(matches!(
            stft(&w, 256, 128, &hann_window(256)),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn matches_brute_force_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_wave(&mut rng, 200, 8000);
        let win = hann_window(64);
        let s = stft(&w, 64, 32, &win).unwrap();
        for t in [0, 2, s.n_frames - 1] {
            let seg: Vec<f64> = w.samples[t * 32..t * 32 + 64]
                .iter()
                .zip(&win)
                .map(|(a, b)| a * b)
                .collect();
            for k in 0..s.n_bins {
                let d = brute_dft(&seg, k) - s.frame(t)[k];
                assert!(d.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn sine_peak_bin() {
        let sr = 32000;
        let x: Vec<f64> = (0..sr as usize)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
            .collect();
        let w = Waveform::new(x, sr).unwrap();
        let s = stft(&w, 2048, 1024, &hann_window(2048)).unwrap();
        let expected = (440.0_f64 * 2048.0 / 32000.0).round() as usize;
        assert_eq!(expected, 28);
        for t in 0..s.n_frames {
            let mags: Vec<f64> = s.frame(t).iter().map(|c| c.norm()).collect();
            let argmax = (0..mags.len())
                .max_by(|&a, &b| mags[a].partial_cmp(&mags[b]).unwrap())
                .unwrap();
            assert_eq!(argmax, expected);
        }
    }

    #[test]
    fn zero_spectrogram_inverts_to_zero() {
        let spec = ComplexSpectrogram {
            frames: vec![Complex64::default(); 5 * 33],
            n_frames: 5,
            n_bins: 33,
            sample_rate: 8000,
            window_size: 64,
            hop: 32,
        };
        let w = istft(&spec, &hann_window(64)).unwrap();
        assert_eq!(w.samples.len(), 4 * 32 + 64);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_frame_recovers_segment_after_envelope_division() {
        let n = 64;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / n as f64).sin())
            .collect();
        let win = hann_window(n);
        let s = stft(&Waveform::new(x.clone(), 8000).unwrap(), n, n / 2, &win).unwrap();
        assert_eq!(s.n_frames, 1);
        let y = istft(&s, &win).unwrap();
        // One frame: out = x*w*w / (w*w) wherever the window is nonzero.
        for i in 1..n {
            assert!((y.samples[i] - x[i]).abs() < 1e-10, "sample {i}");
        }
        assert_eq!(y.samples[0], 0.0);
    }

    #[test]
    fn inconsistent_bins_rejected() {
        let spec = ComplexSpectrogram {
            frames: vec![Complex64::default(); 2 * 10],
            n_frames: 2,
            n_bins: 10,
            sample_rate: 8000,
            window_size: 64,
            hop: 32,
        };
        assert!(matches!(istft(&spec, &hann_window(64)), Err(Error::Shape(_))));
    }
}
