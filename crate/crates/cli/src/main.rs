use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use assurance_core::calibration::BetaParams;
use assurance_core::channels::{self, ChannelId, SignClass};
use assurance_core::compliance::{self, ArchAssertion};
use assurance_core::datatrace;
use assurance_core::evaluation::{self, Annotation, GroundTruthRecord};
use assurance_core::monitor::{self, MonitorConfig};
use assurance_core::pipeline::{self, CatalogSource, FailureSummary, RunConfig};
use clap::{Parser, Subcommand, ValueEnum};

/// Assurance toolkit for a dual-channel detector guarded by an IoU safety monitor.
#[derive(Parser)]
#[command(name = "assure", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Channel {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

impl From<Channel> for ChannelId {
    fn from(c: Channel) -> Self {
        match c {
            Channel::A => ChannelId::A,
            Channel::B => ChannelId::B,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded detections fixture whose pair IoUs follow a Beta distribution.
    Synth {
        #[arg(long, default_value_t = 2000)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.88)]
        alpha: f64,
        #[arg(long, default_value_t = 3.01)]
        beta: f64,
        #[arg(long, default_value = "sign")]
        class: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write ground truth equal to the channel-B boxes.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Fit the IoU distribution and derive the monitor threshold.
    Calibrate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        availability: f64,
        #[arg(long)]
        reference_threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the safety monitor; one decision per line on stdout.
    Monitor {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        threshold: f64,
        /// Write the availability report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        ignore_class: bool,
    },
    /// Precision/recall and average precision of one channel against ground truth.
    Evaluate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, value_enum)]
        channel: Channel,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou_min: f64,
        /// Confidence cutoff of the reported operating point (defaults to --iou-min).
        #[arg(long)]
        confidence_min: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Dataset manifests, traceability and independence.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Certification objectives report.
    Comply {
        #[command(subcommand)]
        command: ComplyCommand,
    },
    /// Run the whole pipeline from a TOML configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        availability: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Hash a dataset tree and write its manifest.
    Build {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Requirement-to-item traceability matrix.
    Matrix {
        #[arg(long, default_value = "builtin")]
        catalog: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Coverage histogram and gaps. Exits 1 when a requirement is uncovered.
    Coverage {
        #[arg(long, default_value = "builtin")]
        catalog: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Shared content between two manifests. Exits 1 on any collision.
    Independence {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Subcommand)]
enum ComplyCommand {
    Report {
        #[arg(long, default_value = "builtin")]
        objectives: String,
        #[arg(long)]
        evidence: PathBuf,
        /// Architecture assertions (JSON) to include, e.g. from a pipeline run.
        #[arg(long)]
        assertions: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn catalog(spec: &str) -> Result<Vec<datatrace::Requirement>> {
    Ok(match CatalogSource::from(spec.to_string()) {
        CatalogSource::Builtin => datatrace::builtin_catalog(),
        CatalogSource::File(p) => datatrace::load_catalog(p)?,
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth {
            frames,
            seed,
            alpha,
            beta,
            class,
            out,
            truth_out,
        } => {
            let params = BetaParams::new(alpha, beta)?;
            let class = SignClass::new(class)?;
            let records = channels::synthesize_frames(&params, frames, seed, &class)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            channels::write_detections(BufWriter::new(file), &records)?;
            if let Some(path) = truth_out {
                let truth: Vec<GroundTruthRecord> = records
                    .iter()
                    .map(|f| GroundTruthRecord {
                        frame_id: f.frame_id,
                        annotations: f
                            .detections_b
                            .iter()
                            .map(|d| Annotation {
                                bbox: d.bbox,
                                class: d.class.clone(),
                            })
                            .collect(),
                    })
                    .collect();
                let file =
                    File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                evaluation::write_truth(BufWriter::new(file), &truth)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate {
            detections,
            availability,
            reference_threshold,
            out,
        } => {
            let frames = channels::load_detections(&detections)?;
            let samples = monitor::agreement_samples(&frames);
            let artifact =
                pipeline::calibration_artifact(&samples, availability, reference_threshold)?;
            write_output(out.as_deref(), &pretty(&artifact)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Monitor {
            detections,
            threshold,
            report,
            ignore_class,
        } => {
            let frames = channels::load_detections(&detections)?;
            let mut cfg = MonitorConfig::new(threshold)?;
            cfg.require_class_match = !ignore_class;
            let (decisions, availability) = monitor::run_monitor(&frames, &cfg);
            let mut stdout = BufWriter::new(io::stdout().lock());
            for d in &decisions {
                serde_json::to_writer(&mut stdout, d)?;
                stdout.write_all(b"\n")?;
            }
            stdout.flush()?;
            match report {
                Some(path) => write_output(Some(&path), &pretty(&availability)?)?,
                None => eprintln!(
                    "availability {:.4} ({}/{} frames valid)",
                    availability.availability, availability.valid_frames, availability.total_frames
                ),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            detections,
            channel,
            truth,
            iou_min,
            confidence_min,
            format,
        } => {
            let frames = channels::load_detections(&detections)?;
            let truth = evaluation::load_truth(&truth)?;
            let report = evaluation::evaluate_channel(
                &frames,
                channel.into(),
                &truth,
                iou_min,
                confidence_min.unwrap_or(iou_min),
            )?;
            let text = match format {
                Format::Json => pretty(&report)?,
                Format::Text => {
                    let mut s = format!(
                        "channel {}  AP {:.6}  predictions {}  truths {}\n",
                        report.channel,
                        report.average_precision,
                        report.total_predictions,
                        report.total_truth
                    );
                    let op = &report.operating_point;
                    s += &format!(
                        "at confidence >= {}: precision {:.6} recall {:.6}\n",
                        op.confidence_cutoff, op.precision, op.recall
                    );
                    s
                }
            };
            write_output(None, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace { command } => trace(command),
        Command::Comply {
            command:
                ComplyCommand::Report {
                    objectives,
                    evidence,
                    assertions,
                    format,
                },
        } => {
            let objectives = match CatalogSource::from(objectives) {
                CatalogSource::Builtin => compliance::builtin_objectives(),
                CatalogSource::File(p) => compliance::load_objectives(p)?,
            };
            let assertions: Vec<ArchAssertion> = match assertions {
                Some(p) => serde_json::from_str(
                    &std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => Vec::new(),
            };
            let report = compliance::compliance_report(&objectives, &assertions, &evidence);
            let text = match format {
                Format::Json => pretty(&report)?,
                Format::Text => compliance::render_report_text(&report),
            };
            write_output(None, &text)?;
            Ok(if report.missing_evidence == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Run {
            config,
            availability,
            seed,
            out,
            format,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(a) = availability {
                cfg.availability = a;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            match pipeline::run_pipeline(&cfg) {
                Ok(summary) => {
                    match format {
                        Format::Json => write_output(None, &pretty(&summary)?)?,
                        Format::Text => {
                            let status = if summary.passed { "PASS" } else { "FAIL" };
                            println!(
                                "{status}: availability {:.4} (target {}), threshold {:.6}, AP {:.6}",
                                summary.availability,
                                summary.target_availability,
                                summary.threshold,
                                summary.average_precision
                            );
                            for f in &summary.failures {
                                println!("  {f}");
                            }
                            println!("artifacts in {}", cfg.output.display());
                        }
                    }
                    Ok(if summary.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    })
                }
                Err(err) => {
                    let summary = FailureSummary::from_error(&err);
                    let text = pretty(&summary)?;
                    if cfg.output.is_dir() {
                        let _ =
                            std::fs::write(cfg.output.join(pipeline::artifacts::SUMMARY), &text);
                    }
                    print!("{text}");
                    Ok(ExitCode::from(2))
                }
            }
        }
    }
}

fn trace(command: TraceCommand) -> Result<ExitCode> {
    match command {
        TraceCommand::Build { root, out } => {
            let items = datatrace::build_manifest(&root)?;
            write_output(out.as_deref(), &datatrace::write_manifest(&items))?;
            Ok(ExitCode::SUCCESS)
        }
        TraceCommand::Matrix {
            catalog: spec,
            manifest,
            format,
        } => {
            let (matrix, _) =
                datatrace::trace(&catalog(&spec)?, &datatrace::load_manifest(&manifest)?);
            let text = match format {
                Format::Json => pretty(&matrix)?,
                Format::Text => datatrace::render_matrix(&matrix),
            };
            write_output(None, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        TraceCommand::Coverage {
            catalog: spec,
            manifest,
            format,
        } => {
            let (_, report) =
                datatrace::trace(&catalog(&spec)?, &datatrace::load_manifest(&manifest)?);
            let text = match format {
                Format::Json => pretty(&report)?,
                Format::Text => datatrace::render_coverage(&report),
            };
            write_output(None, &text)?;
            Ok(if report.uncovered.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        TraceCommand::Independence { a, b } => {
            let collisions = datatrace::check_independence(
                &datatrace::load_manifest(&a)?,
                &datatrace::load_manifest(&b)?,
            );
            write_output(None, &pretty(&collisions)?)?;
            Ok(if collisions.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
