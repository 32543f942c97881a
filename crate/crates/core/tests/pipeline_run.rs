mod common;

use std::path::Path;

use assurance_core::channels::{load_detections, write_detections};
use assurance_core::compliance::{ArchAssertion, AssertionResult};
use assurance_core::pipeline::{artifacts, run_pipeline, RunConfig};
use common::{copy_dir, demo_dir, snapshot};

/// Copy of the demo tree in a temp dir, so tests can modify inputs.
fn demo_copy() -> (tempfile::TempDir, RunConfig) {
    let tmp = tempfile::tempdir().unwrap();
    for entry in ["datasets", "detections.jsonl", "truth.jsonl", "run.toml"] {
        let from = demo_dir().join(entry);
        let to = tmp.path().join(entry);
        if from.is_dir() {
            copy_dir(&from, &to);
        } else {
            std::fs::copy(&from, &to).unwrap();
        }
    }
    let cfg = RunConfig::load(tmp.path().join("run.toml")).unwrap();
    (tmp, cfg)
}

fn assertion(out: &Path, id: &str) -> ArchAssertion {
    let text = std::fs::read_to_string(out.join(artifacts::ARCHITECTURE)).unwrap();
    let all: Vec<ArchAssertion> = serde_json::from_str(&text).unwrap();
    all.into_iter().find(|a| a.id == id).unwrap()
}

#[test]
fn demo_run_passes_and_writes_every_artifact() {
    let (_tmp, cfg) = demo_copy();
    let summary = run_pipeline(&cfg).unwrap();
    assert!(summary.passed, "{:?}", summary.failures);
    assert!(summary.availability >= 0.95);
    assert!(summary.uncovered_requirements.is_empty());
    assert_eq!(summary.collisions, 0);
    assert_eq!(summary.missing_evidence, 0);
    for name in [
        artifacts::CALIBRATION,
        artifacts::DECISIONS,
        artifacts::AVAILABILITY,
        artifacts::EVALUATION,
        artifacts::MANIFEST_A,
        artifacts::MANIFEST_B,
        artifacts::TRACE_MATRIX_JSON,
        artifacts::TRACE_MATRIX_TEXT,
        artifacts::COVERAGE_JSON,
        artifacts::COVERAGE_TEXT,
        artifacts::INDEPENDENCE,
        artifacts::ARCHITECTURE,
        artifacts::COMPLIANCE_JSON,
        artifacts::COMPLIANCE_TEXT,
        artifacts::SUMMARY,
    ] {
        assert!(cfg.output.join(name).is_file(), "missing {name}");
    }
    let decisions = std::fs::read_to_string(cfg.output.join(artifacts::DECISIONS)).unwrap();
    assert_eq!(decisions.lines().count(), summary.frames);
}

#[test]
fn strict_availability_target_fails() {
    let (_tmp, mut cfg) = demo_copy();
    cfg.availability = 0.999;
    let summary = run_pipeline(&cfg).unwrap();
    assert!(!summary.passed);
    assert!(summary.availability < 0.999);
    assert!(summary
        .failures
        .iter()
        .any(|f| f.starts_with("availability")));
}

#[test]
fn planted_duplicate_fails_independence() {
    let (_tmp, cfg) = demo_copy();
    std::fs::copy(
        cfg.dataset_a.join("images/fg_0002.pgm"),
        cfg.dataset_b.join("images/copied.pgm"),
    )
    .unwrap();
    let summary = run_pipeline(&cfg).unwrap();
    assert!(!summary.passed);
    assert_eq!(summary.collisions, 1);
    assert_eq!(
        assertion(&cfg.output, "RSC-A4").result,
        AssertionResult::Fail
    );
    assert!(summary.failures.iter().any(|f| f.starts_with("RSC-A4")));
}

#[test]
fn channel_b_outage_fails_the_run() {
    let (tmp, mut cfg) = demo_copy();
    let mut frames = load_detections(cfg.detections.as_ref().unwrap()).unwrap();
    for f in &mut frames {
        f.detections_b.clear();
    }
    let path = tmp.path().join("one_channel.jsonl");
    let mut buf = Vec::new();
    write_detections(&mut buf, &frames).unwrap();
    std::fs::write(&path, buf).unwrap();
    cfg.detections = Some(path);
    // No agreeing frames leaves nothing to calibrate on.
    assert!(run_pipeline(&cfg).is_err());

    // Keep a handful of agreeing frames so calibration can proceed.
    let mut frames = load_detections(demo_dir().join("detections.jsonl")).unwrap();
    for f in frames.iter_mut().skip(20) {
        f.detections_b.clear();
    }
    let path = tmp.path().join("mostly_one_channel.jsonl");
    let mut buf = Vec::new();
    write_detections(&mut buf, &frames).unwrap();
    std::fs::write(&path, buf).unwrap();
    cfg.detections = Some(path);
    let summary = run_pipeline(&cfg).unwrap();
    assert!(!summary.passed);
    assert_eq!(
        assertion(&cfg.output, "RSC-A1").result,
        AssertionResult::Pass
    );
}

#[test]
fn missing_attestation_fails() {
    let (_tmp, mut cfg) = demo_copy();
    cfg.attestations.remove("RSC-A6");
    let summary = run_pipeline(&cfg).unwrap();
    assert!(!summary.passed);
    assert_eq!(
        assertion(&cfg.output, "RSC-A6").result,
        AssertionResult::Fail
    );
}

#[test]
fn synthesized_runs_are_reproducible() {
    let (tmp, mut cfg) = demo_copy();
    cfg.detections = None;
    cfg.synthesis.frames = 300;
    cfg.output = tmp.path().join("one");
    run_pipeline(&cfg).unwrap();
    let first = snapshot(&cfg.output);
    cfg.output = tmp.path().join("two");
    run_pipeline(&cfg).unwrap();
    assert_eq!(first, snapshot(&cfg.output));
    assert!(first.iter().any(|(name, _)| name == artifacts::DETECTIONS));

    cfg.seed += 1;
    cfg.output = tmp.path().join("three");
    run_pipeline(&cfg).unwrap();
    let other = snapshot(&cfg.output);
    let detections = |s: &[(String, Vec<u8>)]| {
        s.iter()
            .find(|(n, _)| n == artifacts::DETECTIONS)
            .unwrap()
            .1
            .clone()
    };
    assert_ne!(detections(&first), detections(&other));
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let bad = RunConfig::from_toml("truth = 'x'\n", base, Path::new("r.toml"));
    assert!(bad.is_err());
    let unknown = RunConfig::from_toml(
        "truth='t'\ndataset_a='a'\ndataset_b='b'\noutput='o'\ncolour='red'\n",
        base,
        Path::new("r.toml"),
    );
    assert!(unknown.is_err());
    let out_of_range = RunConfig::from_toml(
        "truth='t'\ndataset_a='a'\ndataset_b='b'\noutput='o'\navailability=1.5\n",
        base,
        Path::new("r.toml"),
    );
    assert!(out_of_range.is_err());
}
