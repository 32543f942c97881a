//! Precision/recall evaluation of one channel against ground truth.
//!
//! Matching is class-aware: predictions are visited in descending
//! confidence and each claims the still-unmatched ground truth of its class
//! with the highest IoU at or above `iou_min`. Average precision integrates
//! the all-points precision envelope over recall.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channels::{fixture_lines, ChannelId, Detection, FrameRecord, SignClass};
use crate::geometry::{iou, BoundingBox};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BoundingBox,
    pub class: SignClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub frame_id: u64,
    pub annotations: Vec<Annotation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthLine {
    frame: u64,
    class: SignClass,
    bbox: BoundingBox,
}

/// Parse a ground-truth fixture (`frame`, `class`, `bbox` per line).
pub fn parse_truth<R: BufRead>(reader: R, source: &str) -> Result<Vec<GroundTruthRecord>> {
    let mut frames: BTreeMap<u64, Vec<Annotation>> = BTreeMap::new();
    for item in fixture_lines(reader, source) {
        let (line_no, text) = item?;
        let rec: TruthLine = serde_json::from_str(&text)
            .map_err(|e| Error::parse(source, line_no, e.to_string()))?;
        frames.entry(rec.frame).or_default().push(Annotation {
            bbox: rec.bbox,
            class: rec.class,
        });
    }
    Ok(frames
        .into_iter()
        .map(|(frame_id, annotations)| GroundTruthRecord {
            frame_id,
            annotations,
        })
        .collect())
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_truth(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_truth<W: std::io::Write>(mut out: W, truth: &[GroundTruthRecord]) -> Result<()> {
    for rec in truth {
        for ann in &rec.annotations {
            let line = serde_json::json!({
                "frame": rec.frame_id,
                "class": ann.class,
                "bbox": ann.bbox,
            });
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Outcome for one prediction, in the caller's original indexing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionOutcome {
    pub prediction: usize,
    pub confidence: f64,
    /// Index of the matched ground truth, `None` for a false positive.
    pub truth: Option<usize>,
}

/// Order in which predictions are processed: descending confidence, then
/// original index.
pub fn confidence_order(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| {
        preds[j]
            .confidence()
            .total_cmp(&preds[i].confidence())
            .then(i.cmp(&j))
    });
    order
}

/// Greedy confidence-ordered matching; outcomes are listed in processing order.
pub fn match_frame(
    preds: &[Detection],
    truth: &[Annotation],
    iou_min: f64,
) -> Vec<PredictionOutcome> {
    let mut taken = vec![false; truth.len()];
    confidence_order(preds)
        .into_iter()
        .map(|p| {
            let pred = &preds[p];
            let mut best: Option<(usize, f64)> = None;
            for (t, ann) in truth.iter().enumerate() {
                if taken[t] || ann.class != pred.class {
                    continue;
                }
                let v = iou(&pred.bbox, &ann.bbox);
                if v >= iou_min && best.is_none_or(|(_, b)| v > b) {
                    best = Some((t, v));
                }
            }
            if let Some((t, _)) = best {
                taken[t] = true;
            }
            PredictionOutcome {
                prediction: p,
                confidence: pred.confidence(),
                truth: best.map(|(t, _)| t),
            }
        })
        .collect()
}

pub fn match_predictions(preds: &[Detection], truth: &[Annotation], iou_min: f64) -> MatchCounts {
    let outcomes = match_frame(preds, truth, iou_min);
    let tp = outcomes.iter().filter(|o| o.truth.is_some()).count();
    MatchCounts {
        true_positives: tp,
        false_positives: outcomes.len() - tp,
        false_negatives: truth.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub confidence_cutoff: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl PRPoint {
    fn from_counts(confidence_cutoff: f64, tp: usize, fp: usize, total_truth: usize) -> Self {
        // Zero predictions count as perfectly precise, zero truths as fully recalled.
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if total_truth == 0 {
            1.0
        } else {
            tp as f64 / total_truth as f64
        };
        Self {
            confidence_cutoff,
            precision,
            recall,
            true_positives: tp,
            false_positives: fp,
            false_negatives: total_truth - tp,
        }
    }
}

fn check_iou_min(iou_min: f64) -> Result<()> {
    if iou_min > 0.0 && iou_min <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!(
            "iou_min {iou_min} must lie in (0, 1]"
        )))
    }
}

/// Pair each frame's predictions with that frame's ground truth. Frames present
/// on only one side contribute only predictions or only truths.
pub fn align<'a>(
    preds: &'a [(u64, Vec<Detection>)],
    truth: &'a [GroundTruthRecord],
) -> Vec<(&'a [Detection], &'a [Annotation])> {
    let mut by_frame: BTreeMap<u64, (&[Detection], &[Annotation])> = BTreeMap::new();
    for (id, p) in preds {
        by_frame.entry(*id).or_insert((&[], &[])).0 = p.as_slice();
    }
    for t in truth {
        by_frame.entry(t.frame_id).or_insert((&[], &[])).1 = t.annotations.as_slice();
    }
    by_frame.into_values().collect()
}

/// One channel's predictions per frame.
pub fn channel_predictions(
    frames: &[FrameRecord],
    channel: ChannelId,
) -> Vec<(u64, Vec<Detection>)> {
    frames
        .iter()
        .map(|f| (f.frame_id, f.channel(channel).to_vec()))
        .collect()
}

/// Precision/recall at every distinct confidence value, from the highest
/// cutoff to the lowest.
pub fn pr_curve(
    preds: &[(u64, Vec<Detection>)],
    truth: &[GroundTruthRecord],
    iou_min: f64,
) -> Result<Vec<PRPoint>> {
    check_iou_min(iou_min)?;
    let mut outcomes: Vec<(f64, bool)> = Vec::new();
    let mut total_truth = 0;
    for (p, t) in align(preds, truth) {
        total_truth += t.len();
        outcomes.extend(
            match_frame(p, t, iou_min)
                .into_iter()
                .map(|o| (o.confidence, o.truth.is_some())),
        );
    }
    // Greedy matching per frame in confidence order means the matches made by
    // predictions above any cutoff do not depend on those below it.
    outcomes.sort_by(|x, y| y.0.total_cmp(&x.0));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, &(conf, hit)) in outcomes.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_at_cutoff = outcomes.get(i + 1).is_none_or(|next| next.0 != conf);
        if last_at_cutoff {
            points.push(PRPoint::from_counts(conf, tp, fp, total_truth));
        }
    }
    Ok(points)
}

/// Area under the all-points interpolated precision/recall curve.
pub fn average_precision(curve: &[PRPoint]) -> f64 {
    let Some(last) = curve.last() else {
        return 0.0;
    };
    let total_truth = last.true_positives + last.false_negatives;
    if total_truth == 0 {
        return 0.0;
    }
    // Envelope: best precision at this or any later (higher-recall) point.
    let mut envelope = vec![0.0; curve.len()];
    let mut best: f64 = 0.0;
    for (i, p) in curve.iter().enumerate().rev() {
        best = best.max(p.precision);
        envelope[i] = best;
    }
    // Integrate in units of matched truths so a perfect curve sums exactly.
    let mut area = 0.0;
    let mut prev_tp = 0;
    for (p, env) in curve.iter().zip(envelope) {
        let step = p.true_positives.saturating_sub(prev_tp);
        area += step as f64 * env;
        prev_tp = prev_tp.max(p.true_positives);
    }
    (area / total_truth as f64).clamp(0.0, 1.0)
}

/// Precision/recall when only predictions with confidence `>= cutoff` are kept.
pub fn operating_point(curve: &[PRPoint], cutoff: f64, total_truth: usize) -> PRPoint {
    curve
        .iter()
        .rev()
        .find(|p| p.confidence_cutoff >= cutoff)
        .copied()
        .map(|p| PRPoint {
            confidence_cutoff: cutoff,
            ..p
        })
        .unwrap_or_else(|| PRPoint::from_counts(cutoff, 0, 0, total_truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub channel: ChannelId,
    pub iou_min: f64,
    pub confidence_min: f64,
    pub total_predictions: usize,
    pub total_truth: usize,
    pub average_precision: f64,
    pub operating_point: PRPoint,
    pub curve: Vec<PRPoint>,
}

pub fn evaluate_channel(
    frames: &[FrameRecord],
    channel: ChannelId,
    truth: &[GroundTruthRecord],
    iou_min: f64,
    confidence_min: f64,
) -> Result<EvaluationReport> {
    let preds = channel_predictions(frames, channel);
    let curve = pr_curve(&preds, truth, iou_min)?;
    let total_truth = truth.iter().map(|t| t.annotations.len()).sum();
    Ok(EvaluationReport {
        channel,
        iou_min,
        confidence_min,
        total_predictions: preds.iter().map(|(_, p)| p.len()).sum(),
        total_truth,
        average_precision: average_precision(&curve),
        operating_point: operating_point(&curve, confidence_min, total_truth),
        curve,
    })
}
