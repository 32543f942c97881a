use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn assure(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_assure"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

#[test]
fn synth_calibrate_monitor_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let det = tmp.path().join("d.jsonl");
    let truth = tmp.path().join("t.jsonl");
    let out = assure(&[
        "synth",
        "--frames",
        "500",
        "--seed",
        "3",
        "--out",
        s(&det),
        "--truth-out",
        s(&truth),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = assure(&[
        "calibrate",
        "--detections",
        s(&det),
        "--availability",
        "0.9",
    ]);
    assert!(out.status.success());
    let calib = json(&out.stdout);
    let threshold = calib["threshold"].as_f64().unwrap();
    assert!(threshold > 0.0 && threshold < 1.0);
    assert_eq!(calib["sample_count"], 500);

    let report = tmp.path().join("avail.json");
    let out = assure(&[
        "monitor",
        "--detections",
        s(&det),
        "--threshold",
        &threshold.to_string(),
        "--report",
        s(&report),
    ]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 500);
    assert_eq!(lines[0]["frame_id"], 0);
    let avail = json(&std::fs::read(&report).unwrap());
    assert_eq!(avail["total_frames"], 500);

    let out = assure(&[
        "evaluate",
        "--detections",
        s(&det),
        "--channel",
        "B",
        "--truth",
        s(&truth),
    ]);
    assert!(out.status.success());
    assert_eq!(json(&out.stdout)["average_precision"], 1.0);
}

#[test]
fn trace_commands_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = demo().join("datasets");
    let (ma, mb) = (tmp.path().join("a.txt"), tmp.path().join("b.txt"));
    for (root, out) in [(data.join("flightgear"), &ma), (data.join("xplane"), &mb)] {
        assert!(
            assure(&["trace", "build", "--root", s(&root), "--out", s(out)])
                .status
                .success()
        );
    }

    let out = assure(&["trace", "independence", "--a", s(&ma), "--b", s(&mb)]);
    assert_eq!(out.status.code(), Some(0));
    let out = assure(&["trace", "independence", "--a", s(&ma), "--b", s(&ma)]);
    assert_eq!(out.status.code(), Some(1));

    let partial = tmp.path().join("partial");
    std::fs::create_dir(&partial).unwrap();
    std::fs::write(partial.join("x.pgm"), "x").unwrap();
    std::fs::write(partial.join("x.pgm.tags"), "SNOW\n").unwrap();
    let mp = tmp.path().join("partial.txt");
    assert!(
        assure(&["trace", "build", "--root", s(&partial), "--out", s(&mp)])
            .status
            .success()
    );
    let out = assure(&[
        "trace",
        "coverage",
        "--manifest",
        s(&mp),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stdout)["uncovered"].as_array().unwrap().len(), 19);

    let all = tmp.path().join("all.txt");
    assert!(
        assure(&["trace", "build", "--root", s(&data), "--out", s(&all)])
            .status
            .success()
    );
    assert_eq!(
        assure(&["trace", "coverage", "--manifest", s(&all)])
            .status
            .code(),
        Some(0)
    );
    let out = assure(&["trace", "matrix", "--manifest", s(&all)]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("SNOW"));
}

#[test]
fn comply_report_flags_missing_evidence() {
    let tmp = tempfile::tempdir().unwrap();
    let out = assure(&[
        "comply",
        "report",
        "--evidence",
        s(tmp.path()),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out.stdout);
    assert_eq!(report["total"], 23);
    assert!(report["missing_evidence"].as_u64().unwrap() > 0);
}

#[test]
fn run_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = demo().join("run.toml");
    let out_dir = tmp.path().join("ok");
    let out = assure(&["run", "--config", s(&config), "--out", s(&out_dir)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(out_dir.join("summary.json").is_file());

    let strict = tmp.path().join("strict");
    let out = assure(&[
        "run",
        "--config",
        s(&config),
        "--out",
        s(&strict),
        "--availability",
        "0.999",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stdout)["passed"], false);

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "truth = 'missing.jsonl'\n").unwrap();
    let out = assure(&["run", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset_a"));

    // A config that loads but points at a missing truth file fails mid-run.
    let demo_dir = demo().canonicalize().unwrap();
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace(
            "\"detections.jsonl",
            &format!("\"{}/detections.jsonl", s(&demo_dir)),
        )
        .replace("\"datasets/", &format!("\"{}/datasets/", s(&demo_dir)));
    let moved = tmp.path().join("broken.toml");
    std::fs::write(&moved, text).unwrap();
    let out_dir = tmp.path().join("broken");
    let out = assure(&["run", "--config", s(&moved), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let summary = json(&out.stdout);
    assert_eq!(summary["passed"], false);
    assert!(summary["failures"][0]
        .as_str()
        .unwrap()
        .contains("truth.jsonl"));
    assert_eq!(
        json(&std::fs::read(out_dir.join("summary.json")).unwrap()),
        summary
    );
}

#[test]
fn bad_input_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let det = tmp.path().join("d.jsonl");
    std::fs::write(&det, "{\"frame_id\": 0, \"channel\": \"A\"\n").unwrap();
    let out = assure(&["monitor", "--detections", s(&det), "--threshold", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}
