//! Runtime safety monitor comparing the two channels frame by frame.
//!
//! A frame passes when both channels report the same number of detections,
//! every greedily matched pair agrees on class, and every pair's IoU reaches
//! the configured threshold. On a pass the channel-A detections are
//! forwarded; otherwise the output is inhibited. Channel-B detections are
//! never forwarded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channels::{Detection, FrameRecord};
use crate::geometry::iou;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    iou_threshold: f64,
    pub require_class_match: bool,
}

impl MonitorConfig {
    pub fn new(iou_threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&iou_threshold) {
            return Err(Error::InvalidValue(format!(
                "IoU threshold {iou_threshold} outside [0, 1]"
            )));
        }
        Ok(Self {
            iou_threshold,
            require_class_match: true,
        })
    }

    pub fn iou_threshold(&self) -> f64 {
        self.iou_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    Agree,
    AgreeEmpty,
    ClassMismatch,
    IouBelowThreshold,
    CardinalityMismatch,
}

impl Reason {
    pub const ALL: [Reason; 5] = [
        Reason::Agree,
        Reason::AgreeEmpty,
        Reason::ClassMismatch,
        Reason::IouBelowThreshold,
        Reason::CardinalityMismatch,
    ];

    pub fn is_valid(self) -> bool {
        matches!(self, Reason::Agree | Reason::AgreeEmpty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub index_a: usize,
    pub index_b: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorDecision {
    pub frame_id: u64,
    pub valid: bool,
    pub reason: Reason,
    pub output: Vec<Detection>,
    pub matched_pairs: Vec<MatchedPair>,
}

/// Greedy one-to-one matching in descending IoU order.
///
/// Ties go to the lower `(index_a, index_b)`. Pairs with zero overlap are
/// still matched once everything else is used, so with equal counts every
/// detection ends up paired.
pub fn greedy_match(a: &[Detection], b: &[Detection]) -> Vec<MatchedPair> {
    let mut candidates: Vec<MatchedPair> = a
        .iter()
        .enumerate()
        .flat_map(|(i, da)| {
            b.iter().enumerate().map(move |(j, db)| MatchedPair {
                index_a: i,
                index_b: j,
                iou: iou(&da.bbox, &db.bbox),
            })
        })
        .collect();
    candidates.sort_by(|x, y| {
        y.iou
            .total_cmp(&x.iou)
            .then(x.index_a.cmp(&y.index_a))
            .then(x.index_b.cmp(&y.index_b))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::with_capacity(a.len().min(b.len()));
    for c in candidates {
        if !used_a[c.index_a] && !used_b[c.index_b] {
            used_a[c.index_a] = true;
            used_b[c.index_b] = true;
            pairs.push(c);
        }
    }
    pairs
}

pub fn decide(frame: &FrameRecord, cfg: &MonitorConfig) -> MonitorDecision {
    let (a, b) = (&frame.detections_a, &frame.detections_b);
    let verdict = |reason: Reason, matched_pairs: Vec<MatchedPair>| MonitorDecision {
        frame_id: frame.frame_id,
        valid: reason.is_valid(),
        output: if reason == Reason::Agree {
            a.clone()
        } else {
            Vec::new()
        },
        reason,
        matched_pairs,
    };

    if a.is_empty() && b.is_empty() {
        return verdict(Reason::AgreeEmpty, Vec::new());
    }
    if a.len() != b.len() {
        return verdict(Reason::CardinalityMismatch, Vec::new());
    }
    let pairs = greedy_match(a, b);
    let class_mismatch = cfg.require_class_match
        && pairs
            .iter()
            .any(|p| a[p.index_a].class != b[p.index_b].class);
    let reason = if class_mismatch {
        Reason::ClassMismatch
    } else if pairs.iter().any(|p| p.iou < cfg.iou_threshold) {
        Reason::IouBelowThreshold
    } else {
        Reason::Agree
    };
    verdict(reason, pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityReport {
    pub iou_threshold: f64,
    pub total_frames: usize,
    pub valid_frames: usize,
    pub availability: f64,
    pub reasons: BTreeMap<Reason, usize>,
}

impl AvailabilityReport {
    pub fn from_decisions(iou_threshold: f64, decisions: &[MonitorDecision]) -> Self {
        let mut reasons: BTreeMap<Reason, usize> = Reason::ALL.iter().map(|&r| (r, 0)).collect();
        for d in decisions {
            *reasons.entry(d.reason).or_default() += 1;
        }
        let total_frames = decisions.len();
        let valid_frames = decisions.iter().filter(|d| d.valid).count();
        let availability = if total_frames == 0 {
            1.0
        } else {
            valid_frames as f64 / total_frames as f64
        };
        Self {
            iou_threshold,
            total_frames,
            valid_frames,
            availability,
            reasons,
        }
    }
}

pub fn run_monitor(
    frames: &[FrameRecord],
    cfg: &MonitorConfig,
) -> (Vec<MonitorDecision>, AvailabilityReport) {
    let decisions: Vec<MonitorDecision> = frames.iter().map(|f| decide(f, cfg)).collect();
    let report = AvailabilityReport::from_decisions(cfg.iou_threshold, &decisions);
    (decisions, report)
}

/// Per-frame calibration sample: the largest IoU among matched pairs of
/// frames where both channels report the same non-zero number of detections
/// and the matched classes agree.
pub fn agreement_samples(frames: &[FrameRecord]) -> Vec<f64> {
    let cfg = MonitorConfig::new(0.0).expect("zero threshold is valid");
    frames
        .iter()
        .map(|f| decide(f, &cfg))
        .filter(|d| d.reason == Reason::Agree)
        .filter_map(|d| d.matched_pairs.iter().map(|p| p.iou).reduce(f64::max))
        .collect()
}
