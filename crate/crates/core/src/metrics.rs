//! Evaluation at four levels: clip tagging, frames, time-frequency units and
//! collar-matched events (with the S/D/I error-rate decomposition).

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postprocess::EventAnnotation;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl ConfusionCounts {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `(precision, recall, f1)`, with every `0/0` taken as 0.
pub fn precision_recall_f1(c: &ConfusionCounts) -> (f64, f64, f64) {
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, ratio(2.0 * p * r, p + r))
}

/// Area under the ROC curve as the Mann-Whitney statistic (ties count ½).
/// `None` unless both classes are present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "auc: scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg_rank * pos as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean precision at the rank of each positive, after a stable sort by
/// descending score. `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "ap: scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

/// Mean of the defined values; `None` if there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Per-class counts of `score > threshold` against binary references, both
/// `n_classes × n` row-major.
pub fn binary_counts(
    scores: &[f64],
    reference: &[bool],
    n_classes: usize,
    threshold: f64,
) -> Result<Vec<ConfusionCounts>> {
    if scores.len() != reference.len() || n_classes == 0 || scores.len() % n_classes != 0 {
        return Err(Error::Shape(format!(
            "{} scores vs {} references for {n_classes} classes",
            scores.len(),
            reference.len()
        )));
    }
    let n = scores.len() / n_classes;
    Ok((0..n_classes)
        .map(|k| {
            let mut c = ConfusionCounts::default();
            for i in k * n..(k + 1) * n {
                c.record(scores[i] > threshold, reference[i]);
            }
            c
        })
        .collect())
}

/// Frame-level counts; `pred` and `reference` are `n_classes × n_frames`.
pub fn frame_counts(
    pred: &[f64],
    reference: &[bool],
    n_classes: usize,
    threshold: f64,
) -> Result<Vec<ConfusionCounts>> {
    binary_counts(pred, reference, n_classes, threshold)
}

/// T-F unit counts at mel resolution: prediction `> threshold` against
/// reference IRM `> 0.5`. Both `n_classes × n_frames × n_mels`.
pub fn tf_counts(
    pred: &[f32],
    ref_irm: &[f64],
    n_classes: usize,
    threshold: f64,
) -> Result<Vec<ConfusionCounts>> {
    let scores: Vec<f64> = pred.iter().map(|&v| f64::from(v)).collect();
    let reference: Vec<bool> = ref_irm.iter().map(|&v| v > 0.5).collect();
    binary_counts(&scores, &reference, n_classes, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollarSpec {
    pub onset_collar: f64,
    pub offset_collar_abs: f64,
    pub offset_collar_rel: f64,
}

impl Default for CollarSpec {
    fn default() -> Self {
        CollarSpec {
            onset_collar: 0.2,
            offset_collar_abs: 0.2,
            offset_collar_rel: 0.5,
        }
    }
}

impl CollarSpec {
    pub fn matches(&self, r: &EventAnnotation, e: &EventAnnotation) -> bool {
        let off_collar = self
            .offset_collar_abs
            .max(self.offset_collar_rel * (r.offset - r.onset));
        r.label == e.label
            && (r.onset - e.onset).abs() <= self.onset_collar
            && (r.offset - e.offset).abs() <= off_collar
    }
}

/// Greedy one-to-one matching in ascending onset difference (ties by reference,
/// then estimate index). Returns the matched `(ref, est)` index pairs.
pub fn greedy_matches(
    refs: &[EventAnnotation],
    ests: &[EventAnnotation],
    collars: &CollarSpec,
) -> Vec<(usize, usize)> {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, r) in refs.iter().enumerate() {
        for (j, e) in ests.iter().enumerate() {
            if collars.matches(r, e) {
                cands.push(((r.onset - e.onset).abs(), i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut ref_used = vec![false; refs.len()];
    let mut est_used = vec![false; ests.len()];
    let mut out = Vec::new();
    for (_, i, j) in cands {
        if !ref_used[i] && !est_used[j] {
            ref_used[i] = true;
            est_used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Per-class counts for one clip.
pub fn match_events(
    refs: &[EventAnnotation],
    ests: &[EventAnnotation],
    collars: &CollarSpec,
    n_classes: usize,
) -> Result<Vec<ConfusionCounts>> {
    if let Some(e) = refs.iter().chain(ests).find(|e| e.label >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "event label {} out of range for {n_classes} classes",
            e.label
        )));
    }
    let mut counts = vec![ConfusionCounts::default(); n_classes];
    for r in refs {
        counts[r.label].fn_ += 1;
    }
    for e in ests {
        counts[e.label].fp += 1;
    }
    for (i, _) in greedy_matches(refs, ests, collars) {
        let c = &mut counts[refs[i].label];
        c.tp += 1;
        c.fn_ -= 1;
        c.fp -= 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErComponents {
    pub s: u64,
    pub d: u64,
    pub i: u64,
    pub n_ref: u64,
    /// `None` when there are no reference events.
    pub er: Option<f64>,
}

/// Substitutions, deletions and insertions from each clip's FN/FP, summed over
/// clips and normalized by the total number of reference events.
pub fn error_rate(per_clip: &[ConfusionCounts]) -> ErComponents {
    let mut out = ErComponents::default();
    for c in per_clip {
        out.s += c.fn_.min(c.fp);
        out.d += c.fn_.saturating_sub(c.fp);
        out.i += c.fp.saturating_sub(c.fn_);
        out.n_ref += c.tp + c.fn_;
    }
    out.er = (out.n_ref > 0).then(|| (out.s + out.d + out.i) as f64 / out.n_ref as f64);
    out
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ap: Option<f64>,
}

/// One evaluation level: macro averages plus the per-class breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub er: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub i: Option<u64>,
    pub per_class: Vec<ClassMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tagging: LevelReport,
    pub frame: LevelReport,
    pub event: LevelReport,
    pub tf: LevelReport,
}

/// Everything the report needs about one evaluated clip.
#[derive(Debug, Clone)]
pub struct ClipEvaluation {
    /// Clip probabilities, one per class.
    pub tags: Vec<f64>,
    pub weak_labels: Vec<bool>,
    /// Classes that passed the tagging gate.
    pub gated: Vec<bool>,
    /// `n_classes × n_frames` frame scores.
    pub frame_scores: Vec<f64>,
    /// `n_classes × n_frames` reference activity.
    pub frame_reference: Vec<bool>,
    /// `n_classes × n_frames × n_mels` predicted masks.
    pub masks: Vec<f32>,
    /// `n_classes × n_frames × n_mels` reference IRM at mel resolution.
    pub ref_irm_mel: Vec<f64>,
    pub ref_events: Vec<EventAnnotation>,
    pub est_events: Vec<EventAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricThresholds {
    pub tag_threshold: f64,
    pub frame_threshold: f64,
    pub tf_threshold: f64,
    pub collars: CollarSpec,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        MetricThresholds {
            tag_threshold: 0.5,
            frame_threshold: 0.2,
            tf_threshold: 0.5,
            collars: CollarSpec::default(),
        }
    }
}

/// Pools per-class scores/labels across clips and summarizes one level.
struct LevelAccumulator {
    counts: Vec<ConfusionCounts>,
    scores: Vec<Vec<f64>>,
    labels: Vec<Vec<bool>>,
}

impl LevelAccumulator {
    fn new(k: usize) -> Self {
        LevelAccumulator {
            counts: vec![ConfusionCounts::default(); k],
            scores: vec![Vec::new(); k],
            labels: vec![Vec::new(); k],
        }
    }

    /// `gate[k] = false` forces the binary decision for class `k` to "inactive";
    /// threshold-free scores are left as they are.
    fn add(&mut self, scores: &[f64], labels: &[bool], gate: &[bool], threshold: f64) {
        let k_count = self.counts.len();
        let n = scores.len() / k_count;
        for k in 0..k_count {
            for i in k * n..(k + 1) * n {
                self.counts[k].record(gate[k] && scores[i] > threshold, labels[i]);
            }
            self.scores[k].extend_from_slice(&scores[k * n..(k + 1) * n]);
            self.labels[k].extend_from_slice(&labels[k * n..(k + 1) * n]);
        }
    }

    fn finish(self, names: &[String], ranked: bool) -> LevelReport {
        let per_class: Vec<ClassMetrics> = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let (precision, recall, f1) = precision_recall_f1(c);
                ClassMetrics {
                    label: names[k].clone(),
                    counts: *c,
                    precision,
                    recall,
                    f1,
                    auc: if ranked { auc(&self.scores[k], &self.labels[k]) } else { None },
                    ap: if ranked {
                        average_precision(&self.scores[k], &self.labels[k])
                    } else {
                        None
                    },
                }
            })
            .collect();
        summarize(per_class, ranked)
    }
}

fn summarize(per_class: Vec<ClassMetrics>, ranked: bool) -> LevelReport {
    let f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len().max(1) as f64;
    LevelReport {
        f1,
        auc: if ranked { mean_defined(per_class.iter().map(|c| c.auc)) } else { None },
        map: if ranked { mean_defined(per_class.iter().map(|c| c.ap)) } else { None },
        er: None,
        s: None,
        d: None,
        i: None,
        per_class,
    }
}

/// Builds the four-level report. Binary decisions at the frame, event and T-F
/// levels only count classes that passed the tagging gate; AUC and AP rank the
/// raw scores.
pub fn build_report(
    clips: &[ClipEvaluation],
    class_names: &[String],
    th: &MetricThresholds,
) -> Result<MetricsReport> {
    let k = class_names.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no classes to evaluate".into()));
    }
    let mut tagging = LevelAccumulator::new(k);
    let mut frame = LevelAccumulator::new(k);
    let mut tf = LevelAccumulator::new(k);
    let mut event_counts = vec![ConfusionCounts::default(); k];
    let mut per_clip = Vec::with_capacity(clips.len());
    let all = vec![true; k];
    for (ci, c) in clips.iter().enumerate() {
        let shape_ok = c.tags.len() == k
            && c.weak_labels.len() == k
            && c.gated.len() == k
            && c.frame_scores.len() == c.frame_reference.len()
            && c.frame_scores.len() % k == 0
            && c.masks.len() == c.ref_irm_mel.len()
            && c.masks.len() % k == 0;
        if !shape_ok {
            return Err(Error::Shape(format!("clip {ci}: inconsistent evaluation inputs")));
        }
        tagging.add(&c.tags, &c.weak_labels, &all, th.tag_threshold);
        frame.add(&c.frame_scores, &c.frame_reference, &c.gated, th.frame_threshold);
        let masks: Vec<f64> = c.masks.iter().map(|&v| f64::from(v)).collect();
        let irm: Vec<bool> = c.ref_irm_mel.iter().map(|&v| v > 0.5).collect();
        tf.add(&masks, &irm, &c.gated, th.tf_threshold);

        let counts = match_events(&c.ref_events, &c.est_events, &th.collars, k)?;
        let mut clip_total = ConfusionCounts::default();
        for (acc, c) in event_counts.iter_mut().zip(&counts) {
            *acc += *c;
            clip_total += *c;
        }
        per_clip.push(clip_total);
    }
    let per_class: Vec<ClassMetrics> = event_counts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let (precision, recall, f1) = precision_recall_f1(c);
            ClassMetrics {
                label: class_names[k].clone(),
                counts: *c,
                precision,
                recall,
                f1,
                auc: None,
                ap: None,
            }
        })
        .collect();
    let er = error_rate(&per_clip);
    let mut event = summarize(per_class, false);
    event.er = er.er;
    event.s = Some(er.s);
    event.d = Some(er.d);
    event.i = Some(er.i);
    Ok(MetricsReport {
        tagging: tagging.finish(class_names, true),
        frame: frame.finish(class_names, true),
        event,
        tf: tf.finish(class_names, true),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(label: usize, onset: f64, offset: f64) -> EventAnnotation {
        EventAnnotation {
            label,
            onset,
            offset,
        }
    }

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_ }
    }

    #[test]
    fn prf_examples() {
        let (p, r, f) = precision_recall_f1(&counts(2, 1, 1));
        for v in [p, r, f] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
        assert!((precision_recall_f1(&counts(1, 1, 1)).2 - 0.5).abs() < 1e-15);
        assert_eq!(precision_recall_f1(&counts(0, 0, 0)), (0.0, 0.0, 0.0));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]), Some(1.0));
        assert_eq!(auc(&[0.9, 0.1], &[false, true]), Some(0.0));
        assert_eq!(auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), None);
    }

    /// Direct pairwise definition of the rank statistic.
    fn auc_pairs(s: &[f64], l: &[bool]) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn auc_of_random_scores_is_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4000;
        let s: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let l: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let a = auc(&s, &l).unwrap();
        let (p, q) = (
            l.iter().filter(|&&x| x).count() as f64,
            l.iter().filter(|&&x| !x).count() as f64,
        );
        // Standard deviation of the Mann-Whitney statistic under the null.
        let sigma = ((p + q + 1.0) / (12.0 * p * q)).sqrt();
        assert!((a - 0.5).abs() < 3.0 * sigma, "auc {a}, sigma {sigma}");
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[0.9, 0.5, 0.1], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
        let n = 7;
        let s: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 / n as f64).collect();
        let mut l = vec![false; n];
        l[n - 1] = true;
        assert!((average_precision(&s, &l).unwrap() - 1.0 / n as f64).abs() < 1e-15);
        assert_eq!(average_precision(&[0.3], &[false]), None);
        // Ties keep input order.
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]), Some(0.5));
    }

    #[test]
    fn mean_defined_skips_missing() {
        assert_eq!(mean_defined([Some(1.0), None, Some(0.5)]), Some(0.75));
        assert_eq!(mean_defined([None, None]), None);
    }

    #[test]
    fn frame_count_examples() {
        let r = vec![true, false, true, true];
        let c = frame_counts(&[0.9, 0.0, 0.5, 0.3], &r, 1, 0.2).unwrap();
        assert_eq!(c[0], counts(3, 0, 0));
        let c = frame_counts(&[0.0; 4], &[true; 4], 1, 0.2).unwrap();
        assert_eq!(c[0].fn_, 4);
        // Strict threshold.
        let c = frame_counts(&[0.2, 0.3], &[true, true], 1, 0.2).unwrap();
        assert_eq!(c[0], counts(1, 0, 1));
        assert!(frame_counts(&[0.1; 3], &[true; 4], 1, 0.2).is_err());
        assert!(frame_counts(&[0.1; 3], &[true; 3], 2, 0.2).is_err());
    }

    #[test]
    fn tf_count_examples() {
        let irm = [0.9, 0.1, 0.7, 0.0];
        let pred: Vec<f32> = irm.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        let c = tf_counts(&pred, &irm, 2, 0.5).unwrap();
        assert!(c.iter().all(|c| precision_recall_f1(c).2 == 1.0));
        let c = tf_counts(&[0.0; 4], &irm, 1, 0.5).unwrap();
        assert_eq!(precision_recall_f1(&c[0]).2, 0.0);
        let s: Vec<f64> = irm.to_vec();
        let l: Vec<bool> = irm.iter().map(|&v| v > 0.5).collect();
        assert_eq!(auc(&s, &l), Some(1.0));
    }

    #[test]
    fn collar_examples() {
        let cs = CollarSpec::default();
        let c = match_events(&[ev(0, 1.0, 3.0)], &[ev(0, 1.15, 2.8)], &cs, 1).unwrap();
        assert_eq!(c[0], counts(1, 0, 0));
        let c = match_events(&[ev(0, 1.0, 3.0)], &[ev(0, 1.3, 3.0)], &cs, 1).unwrap();
        assert_eq!(c[0], counts(0, 1, 1));
        let refs = [ev(0, 0.0, 1.0), ev(1, 1.5, 2.0), ev(0, 3.0, 4.0)];
        let c = match_events(&refs, &[], &cs, 2).unwrap();
        assert_eq!(c[0].fn_ + c[1].fn_, 3);
        // Wrong class never matches.
        let c = match_events(&[ev(0, 1.0, 2.0)], &[ev(1, 1.0, 2.0)], &cs, 2).unwrap();
        assert_eq!((c[0], c[1]), (counts(0, 0, 1), counts(0, 1, 0)));
        assert!(match_events(&[ev(3, 0.0, 1.0)], &[], &cs, 2).is_err());
    }

    #[test]
    fn offset_collar_scales_with_duration() {
        let cs = CollarSpec::default();
        // 0.4 s event: offset collar is the absolute 0.2 s.
        assert!(!cs.matches(&ev(0, 1.0, 1.4), &ev(0, 1.0, 1.65)));
        assert!(cs.matches(&ev(0, 1.0, 1.4), &ev(0, 1.0, 1.59)));
        // 2 s event: offset collar grows to 1 s.
        assert!(cs.matches(&ev(0, 1.0, 3.0), &ev(0, 1.0, 3.9)));
    }

    #[test]
    fn er_examples() {
        let e = error_rate(&[counts(0, 1, 2)]);
        assert_eq!((e.s, e.d, e.i), (1, 1, 0));
        assert_eq!(e.er, Some(1.0));
        let e = error_rate(&[counts(3, 0, 0)]);
        assert_eq!((e.s, e.d, e.i, e.er), (0, 0, 0, Some(0.0)));
        let e = error_rate(&[counts(0, 0, 3), counts(0, 0, 2)]);
        assert_eq!((e.d, e.er), (5, Some(1.0)));
        assert_eq!(error_rate(&[counts(0, 2, 0)]).er, None);
    }

    /// Largest one-to-one matching by exhaustive search.
    pub(crate) fn brute_force_tp(
        refs: &[EventAnnotation],
        ests: &[EventAnnotation],
        cs: &CollarSpec,
    ) -> usize {
        fn go(i: usize, refs: &[EventAnnotation], ests: &[EventAnnotation], used: &mut [bool], cs: &CollarSpec) -> usize {
            if i == refs.len() {
                return 0;
            }
            let mut best = go(i + 1, refs, ests, used, cs);
            for j in 0..ests.len() {
                if !used[j] && cs.matches(&refs[i], &ests[j]) {
                    used[j] = true;
                    best = best.max(1 + go(i + 1, refs, ests, used, cs));
                    used[j] = false;
                }
            }
            best
        }
        go(0, refs, ests, &mut vec![false; ests.len()], cs)
    }

    fn random_events(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<EventAnnotation> {
        (0..n)
            .map(|_| {
                let on = rng.gen_range(0.0..4.0);
                ev(rng.gen_range(0..k), on, on + rng.gen_range(0.1..1.5))
            })
            .collect()
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_definition(
            data in prop::collection::vec((0u8..5, any::<bool>()), 2..40)
        ) {
            let s: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let l: Vec<bool> = data.iter().map(|d| d.1).collect();
            match (auc(&s, &l), auc_pairs(&s, &l)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn ranking_metrics_invariant_to_monotone_transform(
            data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..60)
        ) {
            let s: Vec<f64> = data.iter().map(|d| d.0).collect();
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            let l: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assert_eq!(auc(&s, &l), auc(&t, &l));
            prop_assert_eq!(average_precision(&s, &l), average_precision(&t, &l));
        }

        #[test]
        fn f1_bounds(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let f = precision_recall_f1(&counts(tp, fp, fn_)).2;
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(f == 1.0, tp > 0 && fp == 0 && fn_ == 0);
        }

        #[test]
        fn matching_invariants(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (nr, ne) = (rng.gen_range(0..=6), rng.gen_range(0..=6));
            let refs = random_events(&mut rng, nr, 2);
            let ests = random_events(&mut rng, ne, 2);
            let cs = CollarSpec::default();
            let fwd = match_events(&refs, &ests, &cs, 2).unwrap();
            let tp: u64 = fwd.iter().map(|c| c.tp).sum();
            prop_assert!(tp as usize <= brute_force_tp(&refs, &ests, &cs));
            for c in &fwd {
                let e = error_rate(&[*c]);
                prop_assert_eq!(e.s + e.d, c.fn_);
                prop_assert_eq!(e.s + e.i, c.fp);
            }
            // Swapping roles swaps FP and FN when the collar is symmetric.
            let sym = CollarSpec { offset_collar_rel: 0.0, ..cs };
            let a = match_events(&refs, &ests, &sym, 2).unwrap();
            let b = match_events(&ests, &refs, &sym, 2).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fn_, y.fp));
            }
        }
    }

    #[test]
    fn report_has_all_levels() {
        let names = vec!["a".to_string(), "b".to_string()];
        let clip = ClipEvaluation {
            tags: vec![0.9, 0.2],
            weak_labels: vec![true, false],
            gated: vec![true, false],
            frame_scores: vec![0.5, 0.5, 0.0, 0.9, 0.9, 0.0],
            frame_reference: vec![true, true, false, false, false, false],
            masks: vec![0.9, 0.1, 0.0, 0.0],
            ref_irm_mel: vec![0.8, 0.2, 0.0, 0.0],
            ref_events: vec![ev(0, 0.0, 1.0)],
            est_events: vec![ev(0, 0.05, 1.0)],
        };
        let silent = ClipEvaluation {
            tags: vec![0.1, 0.3],
            weak_labels: vec![false, true],
            gated: vec![false, false],
            frame_scores: vec![0.0; 6],
            frame_reference: vec![false, false, false, true, true, false],
            masks: vec![0.0; 4],
            ref_irm_mel: vec![0.0, 0.0, 0.9, 0.0],
            ref_events: vec![ev(1, 0.0, 0.5)],
            est_events: vec![],
        };
        let r = build_report(&[clip.clone(), silent], &names, &MetricThresholds::default()).unwrap();
        assert_eq!(r.tagging.per_class[0].counts, counts(1, 0, 0));
        assert_eq!(r.tagging.per_class[1].counts, counts(0, 0, 1));
        assert_eq!(r.tagging.f1, 0.5);
        assert_eq!(r.tagging.per_class[0].auc, Some(1.0));
        assert_eq!(r.tagging.per_class[1].auc, Some(1.0));
        assert_eq!(r.frame.per_class[0].counts, counts(2, 0, 0));
        // Class b is gated out in the first clip, so its high frame scores are not counted.
        assert_eq!(r.frame.per_class[1].counts, counts(0, 0, 2));
        assert_eq!(r.event.per_class[0].counts, counts(1, 0, 0));
        assert_eq!(r.event.per_class[1].counts, counts(0, 0, 1));
        assert_eq!((r.event.s, r.event.d, r.event.i), (Some(0), Some(1), Some(0)));
        assert_eq!(r.event.er, Some(0.5));
        assert_eq!(r.tf.per_class[0].f1, 1.0);
        assert!(build_report(&[clip], &names[..1], &MetricThresholds::default()).is_err());
        let json = serde_json::to_value(&r).unwrap();
        for level in ["tagging", "frame", "event", "tf"] {
            assert!(json[level]["f1"].is_number(), "{level}");
        }
        for key in ["er", "s", "d", "i"] {
            assert!(json["event"][key].is_number(), "{key}");
        }
        assert!(json["tagging"]["auc"].is_number() && json["tagging"]["map"].is_number());
        assert_eq!(json["event"]["per_class"][0]["fn"], 0);
    }
}
