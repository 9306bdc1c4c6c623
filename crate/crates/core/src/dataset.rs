//! JSON-lines manifests and the per-clip references derived from them.
//!
//! One line per clip:
//! `{"clip_id", "mixture", "fold", "snr_db", "events": [{"label", "onset", "offset", "source"}]}`,
//! paths relative to the manifest's directory.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{read_wav, ComplexSpectrogram, FeatureConfig, FeatureExtractor, LogMelSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::postprocess::EventAnnotation;
use crate::separation::{ideal_ratio_mask, mask_to_mel, IRM_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEvent {
    pub label: String,
    pub onset: f64,
    pub offset: f64,
    /// Isolated event audio, starting at `onset`. Needed only for T-F references.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub mixture: String,
    pub fold: usize,
    pub snr_db: f64,
    pub events: Vec<ManifestEvent>,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for e in entries {
        let line = serde_json::to_string(e)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A parsed manifest. Classes are the sorted set of labels it mentions; a
/// label's position in that list is its class index.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub class_names: Vec<String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
                Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            for ev in &entry.events {
                if !(ev.onset >= 0.0 && ev.onset < ev.offset) {
                    return Err(Error::Dataset(format!(
                        "{}:{}: event {} has onset {} >= offset {}",
                        path.display(),
                        i + 1,
                        ev.label,
                        ev.onset,
                        ev.offset
                    )));
                }
            }
            entries.push(entry);
        }
        if entries.is_empty() {
            return Err(Error::Dataset(format!("{} lists no clips", path.display())));
        }
        let class_names: Vec<String> = entries
            .iter()
            .flat_map(|e| e.events.iter().map(|ev| ev.label.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest {
            root,
            entries,
            class_names,
        })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// `fold` is held out for testing; every other fold trains.
    pub fn split(&self, fold: usize) -> (Vec<&ManifestEntry>, Vec<&ManifestEntry>) {
        self.entries.iter().partition(|e| e.fold != fold)
    }

    pub fn class_index(&self, label: &str) -> Result<usize> {
        index_of(&self.class_names, label)
    }
}

pub fn index_of(class_names: &[String], label: &str) -> Result<usize> {
    class_names
        .iter()
        .position(|c| c == label)
        .ok_or_else(|| Error::Dataset(format!("unknown class label {label:?}")))
}

/// Class-index annotations for one manifest entry.
pub fn annotations(entry: &ManifestEntry, class_names: &[String]) -> Result<Vec<EventAnnotation>> {
    entry
        .events
        .iter()
        .map(|e| {
            Ok(EventAnnotation {
                label: index_of(class_names, &e.label)?,
                onset: e.onset,
                offset: e.offset,
            })
        })
        .collect()
}

pub fn weak_labels(events: &[EventAnnotation], n_classes: usize) -> Vec<bool> {
    let mut y = vec![false; n_classes];
    for e in events {
        y[e.label] = true;
    }
    y
}

/// Time of the center of frame `t`'s analysis window.
pub fn frame_center_seconds(t: usize, cfg: &FeatureConfig) -> f64 {
    (t * cfg.hop) as f64 / f64::from(cfg.sample_rate)
        + cfg.window_size as f64 / 2.0 / f64::from(cfg.sample_rate)
}

/// `n_classes × n_frames` reference activity: frame `t` is active for class `k`
/// when its window center lies in `[onset, offset)` of a class-`k` event.
pub fn reference_frames(
    events: &[EventAnnotation],
    n_classes: usize,
    n_frames: usize,
    cfg: &FeatureConfig,
) -> Vec<bool> {
    let mut out = vec![false; n_classes * n_frames];
    for t in 0..n_frames {
        let c = frame_center_seconds(t, cfg);
        for e in events {
            if e.onset <= c && c < e.offset {
                out[e.label * n_frames + t] = true;
            }
        }
    }
    out
}

/// A clip with its features and labels resolved against a class list.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub clip_id: String,
    pub wave: Waveform,
    pub logmel: LogMelSpectrogram,
    pub events: Vec<EventAnnotation>,
    pub weak: Vec<bool>,
}

pub fn load_clip(
    manifest: &Manifest,
    entry: &ManifestEntry,
    class_names: &[String],
    fx: &FeatureExtractor,
) -> Result<LoadedClip> {
    let wave = read_wav(manifest.resolve(&entry.mixture))?;
    let logmel = fx.log_mel(&wave)?;
    let events = annotations(entry, class_names)?;
    let weak = weak_labels(&events, class_names.len());
    Ok(LoadedClip {
        clip_id: entry.clip_id.clone(),
        wave,
        logmel,
        events,
        weak,
    })
}

/// Per-class reference IRM at mel resolution, `n_classes × n_frames × n_mels`.
/// Each class's sources are placed at their onsets, summed, and compared with
/// the mixture spectrogram.
pub fn reference_irm_mel(
    manifest: &Manifest,
    entry: &ManifestEntry,
    class_names: &[String],
    fx: &FeatureExtractor,
    mixture: &Waveform,
    mixture_spec: &ComplexSpectrogram,
) -> Result<Vec<f64>> {
    let k = class_names.len();
    let sr = f64::from(mixture.sample_rate);
    let mut class_signals: Vec<Option<Vec<f64>>> = vec![None; k];
    for ev in &entry.events {
        let rel = ev.source.as_ref().ok_or_else(|| {
            Error::Dataset(format!(
                "clip {}: event {} has no source file (needed for T-F references)",
                entry.clip_id, ev.label
            ))
        })?;
        let src = read_wav(manifest.resolve(rel))?;
        let ci = index_of(class_names, &ev.label)?;
        let sig = class_signals[ci].get_or_insert_with(|| vec![0.0; mixture.samples.len()]);
        let start = (ev.onset * sr).round() as usize;
        for (d, s) in sig.iter_mut().skip(start).zip(&src.samples) {
            *d += s;
        }
    }
    let per_class = mixture_spec.n_frames * fx.config.n_mels;
    let mut out = vec![0.0; k * per_class];
    for (ci, sig) in class_signals.into_iter().enumerate() {
        if let Some(sig) = sig {
            let spec = fx.spectrogram(&Waveform::new(sig, mixture.sample_rate)?)?;
            let irm = ideal_ratio_mask(&spec, mixture_spec, IRM_EPS)?;
            let mel = mask_to_mel(&irm, &fx.filterbank)?;
            out[ci * per_class..(ci + 1) * per_class].copy_from_slice(&mel);
        }
    }
    Ok(out)
}
