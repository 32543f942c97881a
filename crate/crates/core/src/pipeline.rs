//! End-to-end assurance run.
//!
//! Stages run in order: calibrate the monitor threshold, replay the monitor,
//! evaluate one channel, build dataset manifests, trace requirements, check
//! dataset independence, evaluate the architecture requirements and write
//! the compliance report. Every artifact lands in the output directory under
//! a fixed name and is a pure function of the configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{self, BetaParams, CalibrationResult, Histogram, HISTOGRAM_BINS};
use crate::channels::{self, ChannelId, FrameRecord, SignClass};
use crate::compliance::{self, ArchAssertion, ArchitectureInputs, AssertionResult, Resolution};
use crate::datatrace::{self, Collision, DataItem};
use crate::evaluation;
use crate::monitor::{self, MonitorConfig};
use crate::{Error, Result};

pub mod artifacts {
    pub const DETECTIONS: &str = "detections.jsonl";
    pub const CALIBRATION: &str = "calibration.json";
    pub const DECISIONS: &str = "monitor_decisions.jsonl";
    pub const AVAILABILITY: &str = "availability.json";
    pub const EVALUATION: &str = "evaluation.json";
    pub const MANIFEST_A: &str = "manifest_a.txt";
    pub const MANIFEST_B: &str = "manifest_b.txt";
    pub const TRACE_MATRIX_JSON: &str = "trace_matrix.json";
    pub const TRACE_MATRIX_TEXT: &str = "trace_matrix.txt";
    pub const COVERAGE_JSON: &str = "coverage.json";
    pub const COVERAGE_TEXT: &str = "coverage.txt";
    pub const INDEPENDENCE: &str = "independence.json";
    pub const ARCHITECTURE: &str = "architecture.json";
    pub const COMPLIANCE_JSON: &str = "compliance.json";
    pub const COMPLIANCE_TEXT: &str = "compliance.txt";
    pub const SUMMARY: &str = "summary.json";
}

/// Catalog selector: the builtin table or a file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum CatalogSource {
    #[default]
    Builtin,
    File(PathBuf),
}

impl From<String> for CatalogSource {
    fn from(s: String) -> Self {
        if s == "builtin" {
            CatalogSource::Builtin
        } else {
            CatalogSource::File(PathBuf::from(s))
        }
    }
}

impl From<CatalogSource> for String {
    fn from(c: CatalogSource) -> Self {
        match c {
            CatalogSource::Builtin => "builtin".into(),
            CatalogSource::File(p) => p.display().to_string(),
        }
    }
}

fn default_availability() -> f64 {
    0.95
}
fn default_iou_min() -> f64 {
    0.5
}
fn default_eval_channel() -> ChannelId {
    ChannelId::B
}
fn default_synth_frames() -> usize {
    2000
}
fn default_synth_params() -> (f64, f64) {
    (5.88, 3.01)
}
fn default_synth_class() -> String {
    "sign".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    #[serde(default = "default_synth_frames")]
    pub frames: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_synth_class")]
    pub class: String,
}

fn default_alpha() -> f64 {
    default_synth_params().0
}
fn default_beta() -> f64 {
    default_synth_params().1
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            frames: default_synth_frames(),
            alpha: default_alpha(),
            beta: default_beta(),
            class: default_synth_class(),
        }
    }
}

/// Run configuration, usually read from a TOML file. Relative paths are
/// resolved against the directory holding that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Detections fixture. When absent, frames are synthesized from `seed`.
    #[serde(default)]
    pub detections: Option<PathBuf>,
    pub truth: PathBuf,
    #[serde(default = "default_availability")]
    pub availability: f64,
    #[serde(default = "default_iou_min")]
    pub iou_min: f64,
    /// Confidence cutoff for the reported operating point; defaults to `iou_min`.
    #[serde(default)]
    pub confidence_min: Option<f64>,
    #[serde(default = "default_eval_channel")]
    pub eval_channel: ChannelId,
    #[serde(default)]
    pub requirements: CatalogSource,
    #[serde(default)]
    pub objectives: CatalogSource,
    pub dataset_a: PathBuf,
    pub dataset_b: PathBuf,
    #[serde(default)]
    pub attestations: BTreeMap<String, String>,
    /// Reported threshold to compare the calibrated one against.
    #[serde(default)]
    pub reference_threshold: Option<f64>,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path, source: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: source.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate().map_err(|e| Error::Config {
            path: source.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = self.detections.as_mut() {
            fix(d);
        }
        fix(&mut self.truth);
        fix(&mut self.dataset_a);
        fix(&mut self.dataset_b);
        fix(&mut self.output);
        for cat in [&mut self.requirements, &mut self.objectives] {
            if let CatalogSource::File(p) = cat {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.availability > 0.0 && self.availability < 1.0) {
            return Err(Error::InvalidValue(format!(
                "availability {} must lie strictly inside (0, 1)",
                self.availability
            )));
        }
        if !(self.iou_min > 0.0 && self.iou_min <= 1.0) {
            return Err(Error::InvalidValue(format!(
                "iou_min {} must lie in (0, 1]",
                self.iou_min
            )));
        }
        if let Some(c) = self.confidence_min {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidValue(format!(
                    "confidence_min {c} outside [0, 1]"
                )));
            }
        }
        if self.detections.is_none() && self.synthesis.frames == 0 {
            return Err(Error::InvalidValue(
                "synthesis.frames must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    #[serde(flatten)]
    pub result: CalibrationResult,
    pub model_mean: f64,
    pub model_std_dev: f64,
    pub histogram: Histogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceComparison>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub reference_threshold: f64,
    pub calibrated_threshold: f64,
    pub difference: f64,
    /// Availability the fitted model predicts at the reference threshold.
    pub model_availability_at_reference: f64,
}

pub fn calibration_artifact(
    samples: &[f64],
    availability: f64,
    reference_threshold: Option<f64>,
) -> Result<CalibrationArtifact> {
    let result = calibration::calibrate_threshold(samples, availability)?;
    let reference = reference_threshold.map(|r| ReferenceComparison {
        reference_threshold: r,
        calibrated_threshold: result.threshold,
        difference: result.threshold - r,
        model_availability_at_reference: result.model_availability(r),
    });
    Ok(CalibrationArtifact {
        model_mean: result.params.mean(),
        model_std_dev: result.params.std_dev(),
        histogram: calibration::unit_histogram(samples, HISTOGRAM_BINS),
        result,
        reference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceArtifact {
    pub independent: bool,
    pub items_a: usize,
    pub items_b: usize,
    pub collisions: Vec<Collision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub passed: bool,
    pub failures: Vec<String>,
    pub frames: usize,
    pub threshold: f64,
    pub target_availability: f64,
    pub availability: f64,
    pub average_precision: f64,
    pub uncovered_requirements: Vec<String>,
    pub collisions: usize,
    pub objectives: BTreeMap<String, usize>,
    pub missing_evidence: usize,
}

/// Machine-readable summary for a run that stopped on an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub passed: bool,
    pub failures: Vec<String>,
}

impl FailureSummary {
    pub fn from_error(err: &Error) -> Self {
        Self {
            passed: false,
            failures: vec![format!("error: {err}")],
        }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn prefixed(items: Vec<DataItem>, prefix: &str) -> Vec<DataItem> {
    items
        .into_iter()
        .map(|mut i| {
            i.path = format!("{prefix}/{}", i.path);
            i
        })
        .collect()
}

fn load_frames(cfg: &RunConfig, out: &Path) -> Result<(Vec<FrameRecord>, String)> {
    match &cfg.detections {
        Some(path) => {
            let label = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            Ok((channels::load_detections(path)?, label))
        }
        None => {
            let s = &cfg.synthesis;
            let params = BetaParams::new(s.alpha, s.beta)?;
            let class = SignClass::new(s.class.clone())?;
            let frames = channels::synthesize_frames(&params, s.frames, cfg.seed, &class)?;
            let mut buf = Vec::new();
            channels::write_detections(&mut buf, &frames)?;
            let path = out.join(artifacts::DETECTIONS);
            std::fs::write(&path, buf).map_err(|e| Error::io(path, e))?;
            Ok((frames, format!("synthesized (seed {})", cfg.seed)))
        }
    }
}

/// Execute every stage and write all artifacts into `cfg.output`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.output.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut failures = Vec::new();

    // Channel replay and calibration.
    let (frames, source) = load_frames(cfg, out)?;
    let samples = monitor::agreement_samples(&frames);
    let calib = calibration_artifact(&samples, cfg.availability, cfg.reference_threshold)?;
    write_json(out, artifacts::CALIBRATION, &calib)?;
    let threshold = calib.result.threshold;

    // Monitor replay.
    let mon_cfg = MonitorConfig::new(threshold)?;
    let (decisions, availability) = monitor::run_monitor(&frames, &mon_cfg);
    let mut log = String::new();
    for d in &decisions {
        log.push_str(&serde_json::to_string(d)?);
        log.push('\n');
    }
    write_text(out, artifacts::DECISIONS, &log)?;
    write_json(out, artifacts::AVAILABILITY, &availability)?;
    if availability.availability < cfg.availability {
        failures.push(format!(
            "availability {:.4} below target {:.4} at threshold {:.6}",
            availability.availability, cfg.availability, threshold
        ));
    }

    // Channel evaluation.
    let truth = evaluation::load_truth(&cfg.truth)?;
    let eval = evaluation::evaluate_channel(
        &frames,
        cfg.eval_channel,
        &truth,
        cfg.iou_min,
        cfg.confidence_min.unwrap_or(cfg.iou_min),
    )?;
    write_json(out, artifacts::EVALUATION, &eval)?;

    // Data management and traceability.
    let catalog = match &cfg.requirements {
        CatalogSource::Builtin => datatrace::builtin_catalog(),
        CatalogSource::File(p) => datatrace::load_catalog(p)?,
    };
    let manifest_a = datatrace::build_manifest(&cfg.dataset_a)?;
    let manifest_b = datatrace::build_manifest(&cfg.dataset_b)?;
    write_text(
        out,
        artifacts::MANIFEST_A,
        &datatrace::write_manifest(&manifest_a),
    )?;
    write_text(
        out,
        artifacts::MANIFEST_B,
        &datatrace::write_manifest(&manifest_b),
    )?;
    let collisions = datatrace::check_independence(&manifest_a, &manifest_b);
    let combined: Vec<DataItem> = prefixed(manifest_a.clone(), "a")
        .into_iter()
        .chain(prefixed(manifest_b.clone(), "b"))
        .collect();
    let (matrix, coverage) = datatrace::trace(&catalog, &combined);
    write_json(out, artifacts::TRACE_MATRIX_JSON, &matrix)?;
    write_text(
        out,
        artifacts::TRACE_MATRIX_TEXT,
        &datatrace::render_matrix(&matrix),
    )?;
    write_json(out, artifacts::COVERAGE_JSON, &coverage)?;
    write_text(
        out,
        artifacts::COVERAGE_TEXT,
        &datatrace::render_coverage(&coverage),
    )?;
    write_json(
        out,
        artifacts::INDEPENDENCE,
        &IndependenceArtifact {
            independent: collisions.is_empty(),
            items_a: manifest_a.len(),
            items_b: manifest_b.len(),
            collisions: collisions.clone(),
        },
    )?;

    // Architecture requirements.
    let mut channel_sources = BTreeMap::new();
    for id in [ChannelId::A, ChannelId::B] {
        if frames.iter().any(|f| !f.channel(id).is_empty()) {
            channel_sources.insert(id, format!("{source} channel {id}"));
        }
    }
    let arch_inputs = ArchitectureInputs {
        channel_sources,
        monitor_threshold: Some(threshold),
        monitor_executed: true,
        attestations: cfg.attestations.clone(),
    };
    let assertions: Vec<ArchAssertion> =
        compliance::check_architecture(&arch_inputs, Some(&collisions));
    write_json(out, artifacts::ARCHITECTURE, &assertions)?;
    for a in assertions
        .iter()
        .filter(|a| a.result == AssertionResult::Fail)
    {
        failures.push(format!("{} FAIL: {}", a.id, a.detail));
    }

    // Compliance report over the artifacts written so far.
    let objectives = match &cfg.objectives {
        CatalogSource::Builtin => compliance::builtin_objectives(),
        CatalogSource::File(p) => compliance::load_objectives(p)?,
    };
    let report = compliance::compliance_report(&objectives, &assertions, out);
    write_json(out, artifacts::COMPLIANCE_JSON, &report)?;
    write_text(
        out,
        artifacts::COMPLIANCE_TEXT,
        &compliance::render_report_text(&report),
    )?;
    for row in report
        .objectives
        .iter()
        .filter(|r| r.resolution == Resolution::Missing)
    {
        let missing: Vec<&str> = row
            .evidence
            .iter()
            .filter(|e| e.resolution == Resolution::Missing)
            .map(|e| e.path.as_str())
            .collect();
        failures.push(format!(
            "{} missing evidence: {}",
            row.id,
            missing.join(", ")
        ));
    }

    let summary = RunSummary {
        passed: failures.is_empty(),
        failures,
        frames: frames.len(),
        threshold,
        target_availability: cfg.availability,
        availability: availability.availability,
        average_precision: eval.average_precision,
        uncovered_requirements: coverage.uncovered.clone(),
        collisions: collisions.len(),
        objectives: report
            .histogram
            .iter()
            .map(|(s, n)| (s.to_string(), *n))
            .collect(),
        missing_evidence: report.missing_evidence,
    };
    write_json(out, artifacts::SUMMARY, &summary)?;
    Ok(summary)
}
