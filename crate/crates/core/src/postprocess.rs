//! From masks to event lists: frame-wise scores, the tagging gate, two-threshold
//! segment extraction, and gap joining / duration filtering.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dsp::{FeatureExtractor, Waveform};
use crate::error::{Error, Result};
use crate::network::{predict_tags, MaskStack, SegmentationNet, TagProbabilities};
use crate::pooling::Pooling;

/// Frame-wise activity scores `v[k][t]`: the frequency mean of mask `k` at frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    /// `n_classes × n_frames`
    pub v: Vec<f64>,
    pub n_classes: usize,
    pub n_frames: usize,
    pub frame_hop_seconds: f64,
}

impl FrameScores {
    pub fn class(&self, k: usize) -> &[f64] {
        &self.v[k * self.n_frames..(k + 1) * self.n_frames]
    }
}

pub fn frame_scores(masks: &MaskStack, frame_hop_seconds: f64) -> FrameScores {
    let mut v = Vec::with_capacity(masks.n_classes * masks.n_frames);
    for k in 0..masks.n_classes {
        for row in masks.mask(k).chunks(masks.n_mels) {
            let s: f64 = row.iter().map(|&x| f64::from(x)).sum();
            v.push(s / masks.n_mels as f64);
        }
    }
    FrameScores {
        v,
        n_classes: masks.n_classes,
        n_frames: masks.n_frames,
        frame_hop_seconds,
    }
}

/// Classes whose clip probability is strictly above `threshold`.
pub fn tagging_gate(tags: &TagProbabilities, threshold: f64) -> Vec<usize> {
    tags.0
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(k, _)| k)
        .collect()
}

/// Half-open frame range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Maximal runs of frames `>= lo` that contain at least one frame `>= hi`.
pub fn double_threshold(scores: &[f64], hi: f64, lo: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < scores.len() {
        if scores[t] < lo {
            t += 1;
            continue;
        }
        let start = t;
        let mut seeded = false;
        while t < scores.len() && scores[t] >= lo {
            seeded |= scores[t] >= hi;
            t += 1;
        }
        if seeded {
            out.push(Segment { start, end: t });
        }
    }
    out
}

/// Order in which gap joining and short-segment removal are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PostOrder {
    #[default]
    JoinThenFilter,
    FilterThenJoin,
}

fn join_gaps(segments: &[Segment], min_gap: usize) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for &s in segments {
        match out.last_mut() {
            Some(prev) if s.start - prev.end < min_gap => prev.end = prev.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Joins segments separated by fewer than `min_gap_frames` and drops segments
/// shorter than `min_frames`. Input must be sorted and disjoint.
pub fn duration_filter_join(
    segments: &[Segment],
    min_frames: usize,
    min_gap_frames: usize,
    order: PostOrder,
) -> Vec<Segment> {
    let keep = |v: Vec<Segment>| -> Vec<Segment> {
        v.into_iter().filter(|s| s.len() >= min_frames).collect()
    };
    match order {
        PostOrder::JoinThenFilter => keep(join_gaps(segments, min_gap_frames)),
        PostOrder::FilterThenJoin => join_gaps(&keep(segments.to_vec()), min_gap_frames),
    }
}

/// Thresholds of the detection pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub tag_threshold: f64,
    pub hi: f64,
    pub lo: f64,
    pub min_frames: usize,
    pub min_gap_frames: usize,
    pub order: PostOrder,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            tag_threshold: 0.5,
            hi: 0.2,
            lo: 0.1,
            min_frames: 10,
            min_gap_frames: 10,
            order: PostOrder::JoinThenFilter,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tag_threshold > 0.0 && self.tag_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tag threshold {} outside (0, 1)",
                self.tag_threshold
            )));
        }
        if !(0.0 <= self.lo && self.lo <= self.hi && self.hi <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= lo <= hi <= 1, got lo {} hi {}",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// One detected or annotated event. Times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub label: usize,
    pub onset: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedEvent {
    pub event: EventAnnotation,
    pub confidence: f64,
}

/// Frame `t` starts at `t * hop`; a segment ends after its last frame.
pub fn segment_to_seconds(seg: Segment, hop_seconds: f64) -> (f64, f64) {
    (seg.start as f64 * hop_seconds, seg.end as f64 * hop_seconds)
}

/// Gate → frame scores → double threshold → join/filter → seconds, from masks.
pub fn events_from_masks(
    masks: &MaskStack,
    tags: &TagProbabilities,
    hop_seconds: f64,
    params: &DetectionParams,
) -> Result<Vec<DetectedEvent>> {
    params.validate()?;
    if tags.0.len() != masks.n_classes {
        return Err(Error::Shape(format!(
            "{} tag probabilities for {} masks",
            tags.0.len(),
            masks.n_classes
        )));
    }
    let scores = frame_scores(masks, hop_seconds);
    let mut out = Vec::new();
    for k in tagging_gate(tags, params.tag_threshold) {
        let segs = double_threshold(scores.class(k), params.hi, params.lo);
        for seg in duration_filter_join(&segs, params.min_frames, params.min_gap_frames, params.order)
        {
            let (onset, offset) = segment_to_seconds(seg, hop_seconds);
            out.push(DetectedEvent {
                event: EventAnnotation {
                    label: k,
                    onset,
                    offset,
                },
                confidence: tags.0[k],
            });
        }
    }
    Ok(out)
}

/// Full inference for one waveform: features, masks, tags and events.
pub fn detect_events(
    net: &mut SegmentationNet<f32>,
    features: &FeatureExtractor,
    pooling: &Pooling,
    wave: &Waveform,
    params: &DetectionParams,
) -> Result<(MaskStack, TagProbabilities, Vec<DetectedEvent>)> {
    let logmel = features.log_mel(wave)?;
    let masks = net.infer(&logmel)?;
    let tags = predict_tags(&masks, pooling)?;
    let events = events_from_masks(&masks, &tags, features.config.hop_seconds(), params)?;
    Ok((masks, tags, events))
}

pub const EVENT_CSV_HEADER: &str = "clip_id,label,onset,offset,confidence";

/// Writes `clip_id,label,onset,offset,confidence` rows, times with 3 decimals.
pub fn write_event_csv<W: Write>(
    mut w: W,
    rows: &[(String, Vec<DetectedEvent>)],
    class_names: &[String],
) -> std::io::Result<()> {
    writeln!(w, "{EVENT_CSV_HEADER}")?;
    for (clip, events) in rows {
        for e in events {
            let name = class_names
                .get(e.event.label)
                .map(String::as_str)
                .unwrap_or("?");
            writeln!(
                w,
                "{clip},{name},{:.3},{:.3},{:.6}",
                e.event.onset, e.event.offset, e.confidence
            )?;
        }
    }
    Ok(())
}
