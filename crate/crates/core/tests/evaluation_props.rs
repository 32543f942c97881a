mod common;

use assurance_core::channels::Detection;
use assurance_core::evaluation::{
    average_precision, match_frame, pr_curve, Annotation, GroundTruthRecord,
};
use common::{ann, brute_force_match, det};
use proptest::prelude::*;

fn coords() -> impl Strategy<Value = [f64; 4]> {
    (0..4u8, 0..3u8, 1..3u8, 1..3u8).prop_map(|(x, y, w, h)| {
        let (x, y) = (x as f64, y as f64);
        [x, y, x + w as f64, y + h as f64]
    })
}

fn class() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["hold", "rwy"])
}

fn prediction() -> impl Strategy<Value = Detection> {
    (
        coords(),
        class(),
        prop::sample::select(vec![0.3, 0.6, 0.6, 0.9]),
    )
        .prop_map(|(c, class, conf)| det(c, class, conf))
}

fn annotation() -> impl Strategy<Value = Annotation> {
    (coords(), class()).prop_map(|(c, class)| ann(c, class))
}

fn dataset() -> impl Strategy<Value = (Vec<(u64, Vec<Detection>)>, Vec<GroundTruthRecord>)> {
    prop::collection::vec(
        (
            prop::collection::vec(prediction(), 0..4),
            prop::collection::vec(annotation(), 0..3),
        ),
        1..6,
    )
    .prop_map(|frames| {
        let mut preds = Vec::new();
        let mut truth = Vec::new();
        for (i, (p, t)) in frames.into_iter().enumerate() {
            preds.push((i as u64, p));
            truth.push(GroundTruthRecord {
                frame_id: i as u64,
                annotations: t,
            });
        }
        (preds, truth)
    })
}

fn rescale(d: &Detection, f: impl Fn(f64) -> f64) -> Detection {
    Detection::new(d.bbox, d.class.clone(), f(d.confidence())).unwrap()
}

proptest! {
    #[test]
    fn greedy_matches_exhaustive_search(
        preds in prop::collection::vec(prediction(), 0..5),
        truth in prop::collection::vec(annotation(), 0..4),
        iou_min in prop::sample::select(vec![0.2, 0.5, 1.0]),
    ) {
        let brute = brute_force_match(&preds, &truth, iou_min);
        let mut greedy = vec![None; preds.len()];
        for o in match_frame(&preds, &truth, iou_min) {
            greedy[o.prediction] = o.truth;
        }
        prop_assert_eq!(greedy, brute.assignment);
    }

    #[test]
    fn ap_ignores_monotone_confidence_transforms((preds, truth) in dataset()) {
        let squashed: Vec<_> = preds
            .iter()
            .map(|(id, p)| (*id, p.iter().map(|d| rescale(d, |c| c * c * 0.5)).collect()))
            .collect();
        let a = average_precision(&pr_curve(&preds, &truth, 0.5).unwrap());
        let b = average_precision(&pr_curve(&squashed, &truth, 0.5).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn duplicate_prediction_adds_one_false_positive((mut preds, truth) in dataset(), pick in any::<prop::sample::Index>()) {
        let all: Vec<(usize, usize)> = preds
            .iter()
            .enumerate()
            .flat_map(|(f, (_, p))| (0..p.len()).map(move |i| (f, i)))
            .collect();
        prop_assume!(!all.is_empty());
        let (f, i) = *pick.get(&all);
        let before = pr_curve(&preds, &truth, 0.5).unwrap();
        // Slightly lower confidence so the original keeps its match.
        let dup = rescale(&preds[f].1[i], |c| c * 0.99);
        preds[f].1.push(dup);
        let after = pr_curve(&preds, &truth, 0.5).unwrap();
        let (b, a) = (before.last().unwrap(), after.last().unwrap());
        prop_assert_eq!(a.true_positives, b.true_positives);
        prop_assert_eq!(a.false_positives, b.false_positives + 1);
        prop_assert!(average_precision(&after) <= average_precision(&before) + 1e-12);
    }

    #[test]
    fn curve_is_well_formed((preds, truth) in dataset()) {
        let curve = pr_curve(&preds, &truth, 0.5).unwrap();
        let total: usize = truth.iter().map(|t| t.annotations.len()).sum();
        for w in curve.windows(2) {
            prop_assert!(w[0].confidence_cutoff > w[1].confidence_cutoff);
            prop_assert!(w[0].recall <= w[1].recall);
        }
        for p in &curve {
            prop_assert_eq!(p.true_positives + p.false_negatives, total);
            prop_assert!((0.0..=1.0).contains(&p.precision) && (0.0..=1.0).contains(&p.recall));
        }
        let ap = average_precision(&curve);
        prop_assert!((0.0..=1.0).contains(&ap));
    }
}

#[test]
fn perfect_detector_scores_exactly_one() {
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for id in 0..40u64 {
        let c = [0.0, id as f64, 2.0, id as f64 + 2.0];
        let extra = [5.0, id as f64, 6.0, id as f64 + 1.0];
        preds.push((id, vec![det(c, "hold", 0.99), det(extra, "rwy", 0.7)]));
        truth.push(GroundTruthRecord {
            frame_id: id,
            annotations: vec![ann(c, "hold"), ann(extra, "rwy")],
        });
    }
    assert_eq!(
        average_precision(&pr_curve(&preds, &truth, 0.5).unwrap()),
        1.0
    );
}

#[test]
fn unmatched_frames_on_either_side_count() {
    let preds = vec![(1, vec![det([0.0, 0.0, 1.0, 1.0], "hold", 0.9)])];
    let truth = vec![GroundTruthRecord {
        frame_id: 2,
        annotations: vec![ann([0.0, 0.0, 1.0, 1.0], "hold")],
    }];
    let curve = pr_curve(&preds, &truth, 0.5).unwrap();
    let last = curve.last().unwrap();
    assert_eq!(
        (
            last.true_positives,
            last.false_positives,
            last.false_negatives
        ),
        (0, 1, 1)
    );
    assert_eq!(average_precision(&curve), 0.0);
}
