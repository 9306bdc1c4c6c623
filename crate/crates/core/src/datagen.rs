//! Synthetic weakly-labelled data: parametric event classes mixed into colored
//! noise backgrounds at a controlled SNR, three non-overlapping events per clip.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_manifest, ManifestEntry, ManifestEvent};
use crate::dsp::{write_wav, WavEncoding, Waveform};
use crate::error::{Error, Result};
use crate::postprocess::EventAnnotation;

/// Length of the raised-cosine fade at each end of an event.
pub const FADE_SECONDS: f64 = 0.010;
/// Longest event the mixing protocol allows.
pub const MAX_EVENT_SECONDS: f64 = 2.0;
/// Clips are scaled down as a whole when the mixture peak would exceed this.
pub const PEAK_LIMIT: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFamily {
    /// Pure tone at a frequency drawn from `freq`.
    Tone,
    /// Exponential sweep from `freq.0` to `freq.1`.
    Chirp,
    /// Four-harmonic tone (fundamental from `freq`) with sinusoidal amplitude
    /// modulation at a rate drawn from `rate`.
    AmTone,
    /// Harmonic stack with `1/√h` amplitudes up to 90 % of Nyquist.
    Harmonic,
    /// Gaussian noise band-limited to `freq`.
    NoiseBurst,
    /// Decaying broadband clicks at a rate drawn from `rate`.
    ClickTrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventClassSpec {
    pub name: String,
    pub family: EventFamily,
    /// Fundamental / tone / band range in Hz.
    pub freq: (f64, f64),
    /// Event duration range in seconds.
    pub duration: (f64, f64),
    /// Modulation or click rate range in Hz (unused by some families).
    pub rate: (f64, f64),
}

impl EventClassSpec {
    fn new(name: &str, family: EventFamily, freq: (f64, f64), rate: (f64, f64)) -> Self {
        EventClassSpec {
            name: name.into(),
            family,
            freq,
            duration: (0.4, 1.5),
            rate,
        }
    }
}

/// The built-in classes, in the order `make_dataset` takes them. The first four
/// all spread energy over much of the spectrum, so frame scores (frequency
/// means of the masks) can clear the detection threshold.
pub fn class_catalogue() -> Vec<EventClassSpec> {
    use EventFamily::*;
    vec![
        EventClassSpec::new("harmonic", Harmonic, (150.0, 250.0), (0.0, 0.0)),
        EventClassSpec::new("noise", NoiseBurst, (1500.0, 5000.0), (0.0, 0.0)),
        EventClassSpec::new("clicks", ClickTrain, (0.0, 0.0), (8.0, 20.0)),
        EventClassSpec::new("am_tone", AmTone, (500.0, 700.0), (4.0, 8.0)),
        EventClassSpec::new("chirp", Chirp, (300.0, 3000.0), (0.0, 0.0)),
        EventClassSpec::new("tone", Tone, (2000.0, 3000.0), (0.0, 0.0)),
        EventClassSpec::new("harmonic_high", Harmonic, (800.0, 1100.0), (0.0, 0.0)),
        EventClassSpec::new("noise_low", NoiseBurst, (200.0, 800.0), (0.0, 0.0)),
    ]
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Applies a real spectral gain `gain(f_hz)` to `x` via one forward and one
/// inverse FFT over the whole signal.
fn spectral_shape(x: &[f64], sample_rate: u32, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = f64::from(sample_rate) / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        // Mirror bins share the gain of their positive frequency.
        let kk = k.min(n - k);
        *c *= gain(kk as f64 * df);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }
}

/// Deterministic event of `duration` seconds with 10 ms raised-cosine fades,
/// scaled to unit RMS over the unfaded interior.
pub fn synth_event(
    spec: &EventClassSpec,
    seed: u64,
    duration: f64,
    sample_rate: u32,
) -> Result<Waveform> {
    let (dmin, dmax) = spec.duration;
    if !(duration > 0.0 && duration <= MAX_EVENT_SECONDS) || duration < dmin - 1e-9 || duration > dmax + 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "duration {duration} s outside [{dmin}, {dmax}] for class {}",
            spec.name
        )));
    }
    let sr = f64::from(sample_rate);
    let n = (duration * sr).round() as usize;
    let fade = (FADE_SECONDS * sr).round() as usize;
    if n <= 2 * fade {
        return Err(Error::InvalidArgument(format!(
            "duration {duration} s too short for the fades"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = |i: usize| i as f64 / sr;
    let nyq = sr / 2.0;
    let mut x: Vec<f64> = match spec.family {
        EventFamily::Tone => {
            let f = draw(&mut rng, spec.freq);
            let ph = rng.gen_range(0.0..2.0 * PI);
            (0..n).map(|i| (2.0 * PI * f * t(i) + ph).sin()).collect()
        }
        EventFamily::Chirp => {
            let (f0, f1) = spec.freq;
            let k = (f1 / f0).ln() / duration;
            (0..n)
                .map(|i| (2.0 * PI * f0 * ((k * t(i)).exp() - 1.0) / k).sin())
                .collect()
        }
        EventFamily::AmTone => {
            let f0 = draw(&mut rng, spec.freq);
            let m = draw(&mut rng, spec.rate);
            let phases: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            (0..n)
                .map(|i| {
                    let env = 1.0 + 0.9 * (2.0 * PI * m * t(i)).sin();
                    let s: f64 = phases
                        .iter()
                        .enumerate()
                        .filter(|(h, _)| (*h + 1) as f64 * f0 < 0.9 * nyq)
                        .map(|(h, ph)| (2.0 * PI * (h + 1) as f64 * f0 * t(i) + ph).sin())
                        .sum();
                    env * s
                })
                .collect()
        }
        EventFamily::Harmonic => {
            let f0 = draw(&mut rng, spec.freq);
            let n_h = ((0.9 * nyq) / f0).floor().max(1.0) as usize;
            let phases: Vec<f64> = (0..n_h).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            (0..n)
                .map(|i| {
                    phases
                        .iter()
                        .enumerate()
                        .map(|(h, ph)| {
                            let h = (h + 1) as f64;
                            (2.0 * PI * h * f0 * t(i) + ph).sin() / h.sqrt()
                        })
                        .sum()
                })
                .collect()
        }
        EventFamily::NoiseBurst => {
            let (lo, hi) = spec.freq;
            let white = gaussian(&mut rng, n);
            spectral_shape(&white, sample_rate, |f| if f >= lo && f <= hi { 1.0 } else { 0.0 })
        }
        EventFamily::ClickTrain => {
            let rate = draw(&mut rng, spec.rate);
            let period = (sr / rate).round().max(1.0) as usize;
            let click_len = (0.004 * sr).round() as usize;
            let tau = 0.001 * sr;
            let mut x = vec![0.0; n];
            let mut start = rng.gen_range(0..period.min(n));
            while start < n {
                for j in 0..click_len.min(n - start) {
                    let v: f64 = rng.sample(StandardNormal);
                    x[start + j] += v * (-(j as f64) / tau).exp();
                }
                start += period;
            }
            x
        }
    };
    let interior = rms(&x[fade..n - fade]);
    if interior == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "class {} produced a silent event",
            spec.name
        )));
    }
    for v in &mut x {
        *v /= interior;
    }
    for i in 0..fade {
        let g = 0.5 - 0.5 * (PI * i as f64 / fade as f64).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
    Waveform::new(x, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    /// Power falling 3 dB per octave.
    Pink,
    /// Power falling 6 dB per octave.
    Brown,
    /// Noise band-limited to 100 Hz – 4 kHz with slow amplitude fluctuation.
    Band,
}

pub const BACKGROUND_KINDS: [BackgroundKind; 3] =
    [BackgroundKind::Pink, BackgroundKind::Brown, BackgroundKind::Band];

/// Unit-RMS colored noise.
pub fn synth_background(
    kind: BackgroundKind,
    seed: u64,
    duration: f64,
    sample_rate: u32,
) -> Result<Waveform> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!("background duration {duration}")));
    }
    let sr = f64::from(sample_rate);
    let n = (duration * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white = gaussian(&mut rng, n);
    // Amplitude gains; power goes with their square.
    let lowest = 20.0;
    let mut x = match kind {
        BackgroundKind::Pink => {
            spectral_shape(&white, sample_rate, |f| 1.0 / f.max(lowest).sqrt())
        }
        BackgroundKind::Brown => spectral_shape(&white, sample_rate, |f| 1.0 / f.max(lowest)),
        BackgroundKind::Band => {
            let band =
                spectral_shape(&white, sample_rate, |f| if (100.0..=4000.0).contains(&f) { 1.0 } else { 0.0 });
            let rate = rng.gen_range(0.2..0.6);
            let ph = rng.gen_range(0.0..2.0 * PI);
            band.iter()
                .enumerate()
                .map(|(i, v)| v * (1.0 + 0.5 * (2.0 * PI * rate * i as f64 / sr + ph).sin()))
                .collect()
        }
    };
    let r = rms(&x);
    for v in &mut x {
        *v /= r;
    }
    Waveform::new(x, sample_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPlacement {
    pub class: usize,
    pub onset: f64,
    pub duration: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecipe {
    pub duration: f64,
    pub background: BackgroundKind,
    pub background_seed: u64,
    pub events: Vec<EventPlacement>,
    pub snr_db: f64,
}

#[derive(Debug, Clone)]
pub struct MixedClip {
    pub mixture: Waveform,
    /// The (possibly peak-limited) background actually present in the mixture.
    pub background: Waveform,
    pub annotations: Vec<EventAnnotation>,
    pub weak_labels: Vec<bool>,
    /// Scaled event waveforms, event length, in placement order.
    pub sources: Vec<Waveform>,
    /// First sample of each source inside the mixture.
    pub source_starts: Vec<usize>,
}

fn sample_span(p: &EventPlacement, sr: f64) -> (usize, usize) {
    let start = (p.onset * sr).round() as usize;
    (start, start + (p.duration * sr).round() as usize)
}

/// Mixes the recipe's events into its background. Each event is scaled so its
/// power equals the background power over the same samples times `10^(snr/10)`;
/// afterwards the whole clip is scaled down if the mixture peak exceeds 0.99.
pub fn mix_clip(
    recipe: &ClipRecipe,
    classes: &[EventClassSpec],
    sample_rate: u32,
) -> Result<MixedClip> {
    let sr = f64::from(sample_rate);
    let mut bg = synth_background(recipe.background, recipe.background_seed, recipe.duration, sample_rate)?;
    let n = bg.samples.len();
    let mut spans: Vec<(usize, usize)> = recipe.events.iter().map(|p| sample_span(p, sr)).collect();
    for (p, &(s, e)) in recipe.events.iter().zip(&spans) {
        if p.onset < 0.0 || e > n {
            return Err(Error::InvalidArgument(format!(
                "event at {:.3}+{:.3} s does not fit in {:.3} s",
                p.onset, p.duration, recipe.duration
            )));
        }
        if p.class >= classes.len() {
            return Err(Error::InvalidArgument(format!("class {} out of range", p.class)));
        }
        if s >= e {
            return Err(Error::InvalidArgument("empty event".into()));
        }
    }
    spans.sort_unstable();
    if spans.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::InvalidArgument("events overlap".into()));
    }

    let mut mixture = bg.samples.clone();
    let mut sources = Vec::with_capacity(recipe.events.len());
    let mut starts = Vec::with_capacity(recipe.events.len());
    let mut weak_labels = vec![false; classes.len()];
    for p in &recipe.events {
        let (s, e) = sample_span(p, sr);
        let mut ev = synth_event(&classes[p.class], p.seed, p.duration, sample_rate)?;
        let len = (e - s).min(ev.samples.len());
        ev.samples.truncate(len);
        let p_bg = mean_power(&bg.samples[s..s + len]);
        let p_ev = mean_power(&ev.samples);
        let gain = (p_bg * 10f64.powf(recipe.snr_db / 10.0) / p_ev).sqrt();
        for (m, v) in mixture[s..s + len].iter_mut().zip(ev.samples.iter_mut()) {
            *v *= gain;
            *m += *v;
        }
        weak_labels[p.class] = true;
        sources.push(ev);
        starts.push(s);
    }
    let peak = mixture.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > PEAK_LIMIT {
        let g = PEAK_LIMIT / peak;
        for v in mixture
            .iter_mut()
            .chain(bg.samples.iter_mut())
            .chain(sources.iter_mut().flat_map(|w| w.samples.iter_mut()))
        {
            *v *= g;
        }
    }
    let annotations = recipe
        .events
        .iter()
        .zip(&sources)
        .zip(&starts)
        .map(|((p, src), &s)| EventAnnotation {
            label: p.class,
            onset: s as f64 / sr,
            offset: (s + src.samples.len()) as f64 / sr,
        })
        .collect();
    Ok(MixedClip {
        mixture: Waveform::new(mixture, sample_rate)?,
        background: bg,
        annotations,
        weak_labels,
        sources,
        source_starts: starts,
    })
}

fn mean_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Event-to-background power ratio in dB over the event's samples.
pub fn measured_snr_db(clip: &MixedClip, event: usize) -> f64 {
    let s = clip.source_starts[event];
    let src = &clip.sources[event].samples;
    let bg = &clip.background.samples[s..s + src.len()];
    10.0 * (mean_power(src) / mean_power(bg)).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_classes: usize,
    pub n_clips: usize,
    pub snr_db: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub events_per_clip: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_classes: 4,
            n_clips: 400,
            snr_db: vec![0.0],
            folds: 4,
            seed: 0,
            sample_rate: 16000,
            clip_seconds: 5.0,
            events_per_clip: 3,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let max = class_catalogue().len();
        if self.n_classes == 0 || self.n_classes > max {
            return Err(Error::InvalidArgument(format!(
                "{} classes requested, the catalogue has 1..={max}",
                self.n_classes
            )));
        }
        if self.folds == 0 || self.snr_db.is_empty() || self.events_per_clip == 0 {
            return Err(Error::InvalidArgument(
                "folds, snr list and events per clip must be non-empty".into(),
            ));
        }
        let longest = class_catalogue()[..self.n_classes]
            .iter()
            .map(|c| c.duration.1)
            .fold(0.0, f64::max);
        if longest * self.events_per_clip as f64 > self.clip_seconds {
            return Err(Error::InvalidArgument(format!(
                "{} events of up to {longest} s do not fit in {} s",
                self.events_per_clip, self.clip_seconds
            )));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer over `(master, index)`: the per-clip seed.
pub fn clip_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random non-overlapping placement: classes uniform with replacement,
/// durations uniform in each class range, leftover time split into random gaps.
/// `cfg` must pass [`DatasetConfig::validate`] so the events fit.
pub fn random_recipe(
    cfg: &DatasetConfig,
    classes: &[EventClassSpec],
    seed: u64,
    snr_db: f64,
) -> ClipRecipe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = f64::from(cfg.sample_rate);
    let total = (cfg.clip_seconds * sr).round() as usize;
    let picks: Vec<(usize, usize, u64)> = (0..cfg.events_per_clip)
        .map(|_| {
            let class = rng.gen_range(0..cfg.n_classes);
            let d = draw(&mut rng, classes[class].duration);
            (class, (d * sr).round() as usize, rng.gen())
        })
        .collect();
    let busy: usize = picks.iter().map(|p| p.1).sum();
    let free = total - busy;
    // n+1 gaps from sorted uniform cut points.
    let mut cuts: Vec<usize> = (0..cfg.events_per_clip).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut events = Vec::with_capacity(picks.len());
    let (mut pos, mut prev_cut) = (0usize, 0usize);
    for (&(class, len, seed), &cut) in picks.iter().zip(&cuts) {
        pos += cut - prev_cut;
        prev_cut = cut;
        events.push(EventPlacement {
            class,
            onset: pos as f64 / sr,
            duration: len as f64 / sr,
            seed,
        });
        pos += len;
    }
    ClipRecipe {
        duration: cfg.clip_seconds,
        background: BACKGROUND_KINDS[rng.gen_range(0..BACKGROUND_KINDS.len())],
        background_seed: rng.gen(),
        events,
        snr_db,
    }
}

/// The recipe and fold of clip `index`. Folds are round-robin by index; the SNR
/// cycles through the list once per full round of folds.
pub fn clip_plan(
    cfg: &DatasetConfig,
    classes: &[EventClassSpec],
    index: usize,
) -> (ClipRecipe, usize) {
    let snr = cfg.snr_db[(index / cfg.folds) % cfg.snr_db.len()];
    let recipe = random_recipe(cfg, classes, clip_seed(cfg.seed, index as u64), snr);
    (recipe, index % cfg.folds)
}

pub fn clip_id(index: usize) -> String {
    format!("clip_{index:05}")
}

/// Writes mixtures, per-event sources and `manifest.jsonl` under `out_dir`.
pub fn make_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    let classes: Vec<EventClassSpec> = class_catalogue()[..cfg.n_classes].to_vec();
    for sub in ["audio", "sources"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(cfg.n_clips);
    for i in 0..cfg.n_clips {
        let (recipe, fold) = clip_plan(cfg, &classes, i);
        let clip = mix_clip(&recipe, &classes, cfg.sample_rate)?;
        let id = clip_id(i);
        let mixture = format!("audio/{id}.wav");
        write_wav(out_dir.join(&mixture), &clip.mixture, WavEncoding::Float32)?;
        let mut events = Vec::with_capacity(clip.sources.len());
        for (j, (ann, src)) in clip.annotations.iter().zip(&clip.sources).enumerate() {
            let label = classes[ann.label].name.clone();
            let source = format!("sources/{id}_e{j}_{label}.wav");
            write_wav(out_dir.join(&source), src, WavEncoding::Float32)?;
            events.push(ManifestEvent {
                label,
                onset: ann.onset,
                offset: ann.offset,
                source: Some(source),
            });
        }
        entries.push(ManifestEntry {
            clip_id: id,
            mixture,
            fold,
            snr_db: recipe.snr_db,
            events,
        });
    }
    write_manifest(&out_dir.join("manifest.jsonl"), &entries)?;
    Ok(entries)
}
