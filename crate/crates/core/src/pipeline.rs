//! Manifest-level glue: train on a fold, run inference, evaluate a held-out fold.

use serde::Serialize;

use crate::dataset::{load_clip, reference_frames, reference_irm_mel, Manifest, ManifestEntry};
use crate::dsp::{FeatureConfig, FeatureExtractor};
use crate::error::{Error, Result};
use crate::metrics::{build_report, ClipEvaluation, MetricThresholds, MetricsReport};
use crate::network::{predict_tags, MaskStack, NetworkConfig, SegmentationNet, TagProbabilities};
use crate::postprocess::{events_from_masks, frame_scores, DetectedEvent, DetectionParams};
use crate::pooling::Pooling;
use crate::training::{train, Checkpoint, TrainConfig, Trainer, TrainingSet};

/// Network sizes selectable by name.
pub fn network_preset(name: &str, n_mels: usize, n_classes: usize) -> Result<NetworkConfig> {
    match name {
        "desk" => Ok(NetworkConfig::desk(n_mels, n_classes)),
        "paper" => Ok(NetworkConfig::paper(n_mels, n_classes)),
        other => Err(Error::InvalidArgument(format!(
            "unknown network preset {other:?} (expected desk or paper)"
        ))),
    }
}

/// Features and weak labels of every clip outside `fold`.
pub fn load_training_set(manifest: &Manifest, fold: usize, fx: &FeatureExtractor) -> Result<TrainingSet> {
    let (train_entries, _) = manifest.split(fold);
    if train_entries.is_empty() {
        return Err(Error::Dataset(format!("no training clips outside fold {fold}")));
    }
    let mut feats = Vec::with_capacity(train_entries.len());
    let mut weak = Vec::with_capacity(train_entries.len());
    for e in train_entries {
        let clip = load_clip(manifest, e, &manifest.class_names, fx)?;
        feats.push(clip.logmel);
        weak.push(clip.weak);
    }
    TrainingSet::new(feats, &weak)
}

/// Trains a fresh network on every fold except `train.fold`.
pub fn train_on_manifest(
    manifest: &Manifest,
    features: &FeatureConfig,
    network: &str,
    train_cfg: &TrainConfig,
    run: serde_json::Value,
    on_epoch: impl FnMut(usize, f64),
) -> Result<Checkpoint> {
    let fx = FeatureExtractor::new(features.clone())?;
    let data = load_training_set(manifest, train_cfg.fold, &fx)?;
    let net_cfg = network_preset(network, features.n_mels, manifest.class_names.len())?;
    let mut trainer = Trainer::new(net_cfg, train_cfg.clone())?;
    train(&mut trainer, &data, on_epoch)?;
    Ok(Checkpoint::capture(&mut trainer, features, &manifest.class_names, run))
}

/// A trained model ready for inference.
#[derive(Debug, Clone)]
pub struct Model {
    pub net: SegmentationNet<f32>,
    pub fx: FeatureExtractor,
    pub pooling: Pooling,
    pub class_names: Vec<String>,
}

impl Model {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Model {
            net: ckpt.network()?,
            fx: FeatureExtractor::new(ckpt.meta.features.clone())?,
            pooling: ckpt.meta.train.pooling.clone(),
            class_names: ckpt.meta.class_names.clone(),
        })
    }

    pub fn hop_seconds(&self) -> f64 {
        self.fx.config.hop_seconds()
    }
}

/// Inference output for one clip.
#[derive(Debug, Clone)]
pub struct ClipInference {
    pub clip_id: String,
    pub masks: MaskStack,
    pub tags: TagProbabilities,
    pub events: Vec<DetectedEvent>,
}

pub fn infer_entry(
    model: &mut Model,
    manifest: &Manifest,
    entry: &ManifestEntry,
    params: &DetectionParams,
) -> Result<ClipInference> {
    let wave = crate::dsp::read_wav(manifest.resolve(&entry.mixture))?;
    let logmel = model.fx.log_mel(&wave)?;
    let masks = model.net.infer(&logmel)?;
    let tags = predict_tags(&masks, &model.pooling)?;
    let events = events_from_masks(&masks, &tags, model.hop_seconds(), params)?;
    Ok(ClipInference {
        clip_id: entry.clip_id.clone(),
        masks,
        tags,
        events,
    })
}

/// The clips of `fold`, in manifest order.
pub fn fold_entries(manifest: &Manifest, fold: usize) -> Result<Vec<&ManifestEntry>> {
    let (_, test) = manifest.split(fold);
    if test.is_empty() {
        return Err(Error::Dataset(format!("fold {fold} has no clips")));
    }
    Ok(test)
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldEvaluation {
    pub metrics: MetricsReport,
    #[serde(skip)]
    pub inferences: Vec<ClipInference>,
}

/// Evaluates `model` on the held-out `fold` at all four levels. Event and T-F
/// references come from the manifest annotations and source files.
pub fn evaluate_fold(
    model: &mut Model,
    manifest: &Manifest,
    fold: usize,
    params: &DetectionParams,
    thresholds: &MetricThresholds,
) -> Result<FoldEvaluation> {
    let names = model.class_names.clone();
    let k = names.len();
    let mut clips = Vec::new();
    let mut inferences = Vec::new();
    for entry in fold_entries(manifest, fold)? {
        let loaded = load_clip(manifest, entry, &names, &model.fx)?;
        let masks = model.net.infer(&loaded.logmel)?;
        let tags = predict_tags(&masks, &model.pooling)?;
        let events = events_from_masks(&masks, &tags, model.hop_seconds(), params)?;
        let scores = frame_scores(&masks, model.hop_seconds());
        let spec = model.fx.spectrogram(&loaded.wave)?;
        let ref_irm_mel = reference_irm_mel(manifest, entry, &names, &model.fx, &loaded.wave, &spec)?;
        let gated = tags.0.iter().map(|&p| p > thresholds.tag_threshold).collect();
        clips.push(ClipEvaluation {
            tags: tags.0.clone(),
            weak_labels: loaded.weak.clone(),
            gated,
            frame_scores: scores.v.clone(),
            frame_reference: reference_frames(&loaded.events, k, masks.n_frames, &model.fx.config),
            masks: masks.data.clone(),
            ref_irm_mel,
            ref_events: loaded.events,
            est_events: events.iter().map(|e| e.event.clone()).collect(),
        });
        inferences.push(ClipInference {
            clip_id: entry.clip_id.clone(),
            masks,
            tags,
            events,
        });
    }
    Ok(FoldEvaluation {
        metrics: build_report(&clips, &names, thresholds)?,
        inferences,
    })
}
