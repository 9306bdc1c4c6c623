//! Mask-based source separation: mel masks are stretched onto the linear STFT
//! grid, applied to the mixture magnitude, and resynthesized with the mixture phase.

use crate::dsp::{istft, ComplexSpectrogram, Complex64, MelFilterbank, Waveform};
use crate::error::{Error, Result};
use crate::network::MaskStack;

/// Default floor on the mixture magnitude in [`ideal_ratio_mask`].
pub const IRM_EPS: f64 = 1e-8;

/// A `[0, 1]` mask on the linear STFT grid, `n_frames × n_bins` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMask {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
}

/// Masked magnitudes `h̃ ⊙ |X|`, `n_frames × n_bins` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedSpectrogram {
    pub magnitudes: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
}

fn check_grid(mask: &LinearMask, spec: &ComplexSpectrogram) -> Result<()> {
    if mask.n_frames != spec.n_frames || mask.n_bins != spec.n_bins {
        return Err(Error::Shape(format!(
            "mask {}x{} vs spectrogram {}x{}",
            mask.n_frames, mask.n_bins, spec.n_frames, spec.n_bins
        )));
    }
    Ok(())
}

/// Per-frame linear interpolation over mel band centers, evaluated at every
/// linear bin frequency. Bins outside the outermost centers take the edge value.
pub fn upsample_mask(mask: &[f32], n_frames: usize, fb: &MelFilterbank) -> Result<LinearMask> {
    let n_mels = fb.n_mels;
    if mask.len() != n_frames * n_mels {
        return Err(Error::Shape(format!(
            "{} mask values for {n_frames} frames x {n_mels} mels",
            mask.len()
        )));
    }
    let centers = &fb.band_centers;
    // (lower band, upper band, weight on upper) for every linear bin.
    let taps: Vec<(usize, usize, f64)> = (0..fb.n_bins)
        .map(|k| {
            let f = fb.bin_frequency(k);
            let j = centers.partition_point(|&c| c <= f);
            if j == 0 {
                (0, 0, 0.0)
            } else if j == n_mels {
                (n_mels - 1, n_mels - 1, 0.0)
            } else {
                let (c0, c1) = (centers[j - 1], centers[j]);
                (j - 1, j, (f - c0) / (c1 - c0))
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n_frames * fb.n_bins);
    for row in mask.chunks(n_mels.max(1)).take(n_frames) {
        for &(a, b, t) in &taps {
            let (va, vb) = (f64::from(row[a]), f64::from(row[b]));
            values.push(va + t * (vb - va));
        }
    }
    Ok(LinearMask {
        values,
        n_frames,
        n_bins: fb.n_bins,
    })
}

/// Filterbank-weighted average of a linear mask into mel bands (`n_frames × n_mels`).
pub fn mask_to_mel(mask: &LinearMask, fb: &MelFilterbank) -> Result<Vec<f64>> {
    if mask.n_bins != fb.n_bins {
        return Err(Error::Shape(format!(
            "mask has {} bins, filterbank {}",
            mask.n_bins, fb.n_bins
        )));
    }
    let norms: Vec<f64> = (0..fb.n_mels).map(|m| fb.row(m).iter().sum()).collect();
    let mut out = Vec::with_capacity(mask.n_frames * fb.n_mels);
    for row in mask.values.chunks(mask.n_bins) {
        for (m, norm) in norms.iter().enumerate() {
            let s: f64 = fb.row(m).iter().zip(row).map(|(w, v)| w * v).sum();
            out.push(s / norm);
        }
    }
    Ok(out)
}

pub fn apply_mask(mask: &LinearMask, spec: &ComplexSpectrogram) -> Result<SegmentedSpectrogram> {
    check_grid(mask, spec)?;
    let magnitudes = mask
        .values
        .iter()
        .zip(&spec.frames)
        .map(|(m, x)| m * x.norm())
        .collect();
    Ok(SegmentedSpectrogram {
        magnitudes,
        n_frames: spec.n_frames,
        n_bins: spec.n_bins,
    })
}

/// Combines segmented magnitudes with the phase of `phase_source` and inverts.
pub fn synthesize(
    seg: &SegmentedSpectrogram,
    phase_source: &ComplexSpectrogram,
    window: &[f64],
) -> Result<Waveform> {
    if seg.n_frames != phase_source.n_frames || seg.n_bins != phase_source.n_bins {
        return Err(Error::Shape(format!(
            "segmented {}x{} vs phase source {}x{}",
            seg.n_frames, seg.n_bins, phase_source.n_frames, phase_source.n_bins
        )));
    }
    let frames = seg
        .magnitudes
        .iter()
        .zip(&phase_source.frames)
        .map(|(&m, x)| Complex64::from_polar(m, x.arg()))
        .collect();
    let spec = ComplexSpectrogram {
        frames,
        n_frames: phase_source.n_frames,
        n_bins: phase_source.n_bins,
        sample_rate: phase_source.sample_rate,
        window_size: phase_source.window_size,
        hop: phase_source.hop,
    };
    istft(&spec, window)
}

/// `|S| / max(|X|, eps)` clipped to `[0, 1]`.
pub fn ideal_ratio_mask(
    event: &ComplexSpectrogram,
    mixture: &ComplexSpectrogram,
    eps: f64,
) -> Result<LinearMask> {
    event.same_grid(mixture)?;
    let values = event
        .frames
        .iter()
        .zip(&mixture.frames)
        .map(|(s, x)| (s.norm() / x.norm().max(eps)).clamp(0.0, 1.0))
        .collect();
    Ok(LinearMask {
        values,
        n_frames: mixture.n_frames,
        n_bins: mixture.n_bins,
    })
}

/// Separates each listed class from the mixture. Outputs are zero-padded or
/// truncated to `len` samples (the STFT drops the tail that does not fill a frame).
pub fn separate_classes(
    masks: &MaskStack,
    classes: &[usize],
    mixture: &ComplexSpectrogram,
    fb: &MelFilterbank,
    window: &[f64],
    len: usize,
) -> Result<Vec<(usize, Waveform)>> {
    classes
        .iter()
        .map(|&k| {
            if k >= masks.n_classes {
                return Err(Error::InvalidArgument(format!(
                    "class {k} out of range for {} masks",
                    masks.n_classes
                )));
            }
            let lin = upsample_mask(masks.mask(k), masks.n_frames, fb)?;
            let seg = apply_mask(&lin, mixture)?;
            let mut wave = synthesize(&seg, mixture, window)?;
            wave.samples.resize(len, 0.0);
            Ok((k, wave))
        })
        .collect()
}

/// Output file name for a separated class.
pub fn separated_file_name(clip_id: &str, label: &str) -> String {
    format!("{clip_id}__{label}.wav")
}

/// `⟨a, b⟩ / (‖a‖‖b‖)`; 0 when either side is silent.
pub fn normalized_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa * bb).sqrt()
    }
}
