//! `miprobe`: mutual-information lower bounds for layered feature dumps.

mod commands;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use miprobe_core::probe::ProbeKind;
use miprobe_core::validation::ValidationScale;
use miprobe_core::views::MaskPositions;
use miprobe_core::Error;

use commands::{checkpoint_csv, emit_masks, layer_csv, run_config, summarize};
use report::{MetricMode, ProbeSettings, ReportConfig, RunReport, ViewParams, TOOLKIT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProbeArg {
    Logistic,
    Mlp,
}

impl std::fmt::Display for ProbeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProbeArg::Logistic => write!(f, "logistic"),
            ProbeArg::Mlp => write!(f, "mlp"),
        }
    }
}

impl From<ProbeArg> for ProbeKind {
    fn from(value: ProbeArg) -> Self {
        match value {
            ProbeArg::Logistic => ProbeKind::Logistic,
            ProbeArg::Mlp => ProbeKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Supervised,
    Shift,
    Mask,
}

impl From<ModeArg> for MetricMode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::Supervised => MetricMode::Supervised,
            ModeArg::Shift => MetricMode::Shift,
            ModeArg::Mask => MetricMode::Mask,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UnsupModeArg {
    Shift,
    Mask,
}

impl From<UnsupModeArg> for MetricMode {
    fn from(value: UnsupModeArg) -> Self {
        match value {
            UnsupModeArg::Shift => MetricMode::Shift,
            UnsupModeArg::Mask => MetricMode::Mask,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PositionsArg {
    Masked,
    All,
}

impl From<PositionsArg> for MaskPositions {
    fn from(value: PositionsArg) -> Self {
        match value {
            PositionsArg::Masked => MaskPositions::MaskedOnly,
            PositionsArg::All => MaskPositions::AllFrames,
        }
    }
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(raw: &str) -> Result<SeedList, String> {
    let seeds: Result<Vec<u64>, String> = raw
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| format!("'{t}' is not a seed"))
        })
        .collect();
    let seeds = seeds?;
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(SeedList(seeds))
}

#[derive(Args, Debug, Clone)]
struct ProbeFlags {
    /// Probe family to fit (repeat the flag for several).
    #[arg(long = "probe", value_enum, default_values_t = [ProbeArg::Mlp])]
    probe: Vec<ProbeArg>,
    /// Hidden width of MLP probes.
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    /// Dropout rate inside MLP probes during training.
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// SGD learning rate.
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Training epochs.
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Minibatch size.
    #[arg(long, default_value_t = 256)]
    batch: usize,
    /// Comma-separated seeds aggregated into each estimate.
    #[arg(long, default_value = "0,1,2,3,4", value_parser = parse_seeds)]
    seeds: SeedList,
}

impl ProbeFlags {
    fn settings(&self) -> ProbeSettings {
        let mut kinds: Vec<ProbeKind> = Vec::new();
        for arg in &self.probe {
            let kind = (*arg).into();
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
        ProbeSettings {
            kinds,
            hidden_dim: self.hidden,
            dropout_rate: self.dropout,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seeds: self.seeds.0.clone(),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ViewFlags {
    /// Frames between the two views in shift mode.
    #[arg(long = "shift-frames", default_value_t = 3)]
    shift_frames: usize,
    /// Block length of the masking rule.
    #[arg(long = "mask-period", default_value_t = 40)]
    mask_period: usize,
    /// Masked frames at the end of each block.
    #[arg(long = "mask-frames", default_value_t = 30)]
    mask_frames: usize,
    /// Which positions mask pairing keeps.
    #[arg(long, value_enum, default_value_t = PositionsArg::Masked)]
    positions: PositionsArg,
    /// Number of clusters for the target quantizer.
    #[arg(long, default_value_t = 50)]
    k: usize,
}

impl ViewFlags {
    fn params(&self) -> ViewParams {
        ViewParams {
            shift_frames: self.shift_frames,
            mask_period: self.mask_period,
            mask_frames: self.mask_frames,
            positions: self.positions.into(),
            k: self.k,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "miprobe",
    version,
    about = "Mutual-information lower bounds for layered feature dumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Supervised bound I(Z;Y) on one layer of a labeled manifest.
    ProbeSupervised {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        layer: u32,
        #[command(flatten)]
        probe: ProbeFlags,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Unsupervised bound I(Za;Zb) on one layer, views built by shift or mask.
    ProbeUnsupervised {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        layer: u32,
        /// View pairing to use.
        #[arg(long, value_enum)]
        mode: UnsupModeArg,
        #[command(flatten)]
        view: ViewFlags,
        #[command(flatten)]
        probe: ProbeFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one mask-spec file per utterance into a directory.
    EmitMask {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "mask-period", default_value_t = 40)]
        mask_period: usize,
        #[arg(long = "mask-frames", default_value_t = 30)]
        mask_frames: usize,
        /// Output directory for the <utt_id>.mask files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Bound curve over every layer in the manifest, with the best layer
    /// per metric; writes a plot-ready CSV next to the JSON report.
    LayerScan {
        #[arg(long)]
        manifest: PathBuf,
        /// Metric to scan (repeat the flag for several).
        #[arg(long = "mode", value_enum, required = true)]
        modes: Vec<ModeArg>,
        #[command(flatten)]
        view: ViewFlags,
        #[command(flatten)]
        probe: ProbeFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bound curve across training checkpoints, one manifest each.
    CheckpointScan {
        /// Checkpoint manifests in curve order (repeat per checkpoint).
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        /// Bisect each manifest's records into fit/eval halves by sorted
        /// utterance id instead of using its split tags.
        #[arg(long = "half-split")]
        half_split: bool,
        /// Checkpoint index the curve is differenced against.
        #[arg(long)]
        baseline: Option<usize>,
        #[arg(long = "mode", value_enum, required = true)]
        modes: Vec<ModeArg>,
        #[command(flatten)]
        view: ViewFlags,
        #[command(flatten)]
        probe: ProbeFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle-backed validation suite and report each check.
    SynthValidate {
        /// Cut frame counts 10× and widen tolerances to 0.15 bits.
        #[arg(long)]
        quick: bool,
        /// Base seed for the synthetic data.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a report from its embedded config and verify the results
    /// subtree is byte-identical.
    Replay {
        /// Report produced by any other command.
        #[arg(long)]
        report: PathBuf,
        /// Write the regenerated report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> miprobe_core::Result<()> {
    let Ok(value) = std::env::var("MIPROBE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        Error::invalid_config(format!(
            "MIPROBE_THREADS must be a positive integer, got '{value}'"
        ))
    })?;
    if threads == 0 {
        return Err(Error::invalid_config("MIPROBE_THREADS must be ≥ 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::invalid_config(format!("thread pool setup failed: {e}")))
}

fn write_text(path: &Path, text: &str) -> miprobe_core::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Emit a finished report: JSON to `--out` (with a sibling CSV for scan
/// curves) and summary lines to stdout, or the JSON itself to stdout when
/// no path was given.
fn emit_report(report: &RunReport, out: Option<&Path>) -> miprobe_core::Result<ExitCode> {
    let json = report.to_pretty_json();
    match out {
        Some(path) => {
            write_text(path, &json)?;
            let csv = match &report.config {
                ReportConfig::LayerScan { .. } => Some(layer_csv(&report.results)),
                ReportConfig::CheckpointScan { .. } => Some(checkpoint_csv(&report.results)),
                _ => None,
            };
            if let Some(csv) = csv {
                write_text(&path.with_extension("csv"), &csv)?;
            }
            for line in summarize(&report.results) {
                println!("{line}");
            }
            println!("report written to {}", path.display());
        }
        None => {
            for line in summarize(&report.results) {
                eprintln!("{line}");
            }
            print!("{json}");
        }
    }
    let failed_checks = matches!(report.config, ReportConfig::SynthValidate { .. })
        && report.results["passed"] != serde_json::Value::Bool(true);
    Ok(if failed_checks {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn replay(report_path: &Path, out: Option<&Path>) -> miprobe_core::Result<ExitCode> {
    let text = std::fs::read_to_string(report_path).map_err(|e| Error::io(report_path, e))?;
    let stored: RunReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: report_path.to_path_buf(),
        line: e.line(),
        detail: e.to_string(),
    })?;
    let started = Instant::now();
    let fresh = run_config(&stored.config)?;
    let old_bytes = serde_json::to_string(&stored.results).expect("results serialize");
    let new_bytes = serde_json::to_string(&fresh).expect("results serialize");
    if let Some(path) = out {
        let wall_clock_ms = match stored.config {
            ReportConfig::SynthValidate { .. } => None,
            _ => Some(started.elapsed().as_millis() as u64),
        };
        let regenerated = RunReport {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            config: stored.config.clone(),
            results: fresh.clone(),
            wall_clock_ms,
        };
        write_text(path, &regenerated.to_pretty_json())?;
    }
    if old_bytes == new_bytes {
        println!(
            "replay: results identical ({} bytes of canonical JSON)",
            new_bytes.len()
        );
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "replay: results differ (stored {} bytes, reproduced {} bytes)",
            old_bytes.len(),
            new_bytes.len()
        );
        let at = old_bytes
            .bytes()
            .zip(new_bytes.bytes())
            .position(|(a, b)| a != b)
            .unwrap_or(old_bytes.len().min(new_bytes.len()));
        let snippet = |s: &str| {
            let lo = at.saturating_sub(40);
            s[lo..(at + 40).min(s.len())].to_string()
        };
        eprintln!("  stored:     …{}…", snippet(&old_bytes));
        eprintln!("  reproduced: …{}…", snippet(&new_bytes));
        Ok(ExitCode::from(1))
    }
}

fn run(cli: Cli) -> miprobe_core::Result<ExitCode> {
    init_threads()?;
    let (config, out) = match cli.command {
        Command::Replay { report, out } => return replay(&report, out.as_deref()),
        Command::EmitMask {
            manifest,
            mask_period,
            mask_frames,
            out,
        } => {
            let written = emit_masks(&manifest, mask_period, mask_frames, &out)?;
            println!("wrote {} mask files to {}", written.len(), out.display());
            return Ok(ExitCode::SUCCESS);
        }
        Command::ProbeSupervised {
            manifest,
            layer,
            probe,
            out,
        } => (
            ReportConfig::ProbeSupervised {
                manifest,
                layer,
                probe: probe.settings(),
            },
            out,
        ),
        Command::ProbeUnsupervised {
            manifest,
            layer,
            mode,
            view,
            probe,
            out,
        } => (
            ReportConfig::ProbeUnsupervised {
                manifest,
                layer,
                mode: mode.into(),
                view: view.params(),
                probe: probe.settings(),
            },
            out,
        ),
        Command::LayerScan {
            manifest,
            modes,
            view,
            probe,
            out,
        } => (
            ReportConfig::LayerScan {
                manifest,
                modes: modes.into_iter().map(Into::into).collect(),
                view: view.params(),
                probe: probe.settings(),
            },
            out,
        ),
        Command::CheckpointScan {
            manifests,
            half_split,
            baseline,
            modes,
            view,
            probe,
            out,
        } => (
            ReportConfig::CheckpointScan {
                manifests,
                half_split,
                baseline,
                modes: modes.into_iter().map(Into::into).collect(),
                view: view.params(),
                probe: probe.settings(),
            },
            out,
        ),
        Command::SynthValidate { quick, seed, out } => (
            ReportConfig::SynthValidate {
                quick,
                seed,
                scale: if quick {
                    ValidationScale::quick()
                } else {
                    ValidationScale::full()
                },
            },
            out,
        ),
    };
    let started = Instant::now();
    let results = run_config(&config)?;
    let wall_clock_ms = match config {
        ReportConfig::SynthValidate { .. } => None,
        _ => Some(started.elapsed().as_millis() as u64),
    };
    let report = RunReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config,
        results,
        wall_clock_ms,
    };
    emit_report(&report, out.as_deref())
}

fn main() -> ExitCode {
    // Usage errors are validation failures (exit 1); clap's default of 2
    // would collide with the data-error code.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
