//! Self-contained run reports: every report embeds the full configuration
//! needed to reproduce its results, and `replay` verifies that claim.

use std::path::PathBuf;

use miprobe_core::probe::{ProbeConfig, ProbeKind};
use miprobe_core::validation::ValidationScale;
use miprobe_core::views::MaskPositions;
use serde::{Deserialize, Serialize};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Probe hyperparameters plus the seed list they are swept over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub kinds: Vec<ProbeKind>,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
}

impl ProbeSettings {
    /// Concrete training config for one probe family; the seed is filled
    /// in per run by the seeded wrappers.
    pub fn config(&self, kind: ProbeKind) -> ProbeConfig {
        ProbeConfig {
            kind,
            hidden_dim: self.hidden_dim,
            dropout_rate: self.dropout_rate,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: 0,
        }
    }
}

/// View-construction parameters for the unsupervised estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewParams {
    pub shift_frames: usize,
    pub mask_period: usize,
    pub mask_frames: usize,
    pub positions: MaskPositions,
    pub k: usize,
}

/// Which estimator a scan point uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    Supervised,
    Shift,
    Mask,
}

impl std::fmt::Display for MetricMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricMode::Supervised => write!(f, "supervised"),
            MetricMode::Shift => write!(f, "shift"),
            MetricMode::Mask => write!(f, "mask"),
        }
    }
}

/// Embedded configuration, tagged by the command that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum ReportConfig {
    ProbeSupervised {
        manifest: PathBuf,
        layer: u32,
        probe: ProbeSettings,
    },
    ProbeUnsupervised {
        manifest: PathBuf,
        layer: u32,
        mode: MetricMode,
        view: ViewParams,
        probe: ProbeSettings,
    },
    LayerScan {
        manifest: PathBuf,
        modes: Vec<MetricMode>,
        view: ViewParams,
        probe: ProbeSettings,
    },
    CheckpointScan {
        manifests: Vec<PathBuf>,
        half_split: bool,
        baseline: Option<usize>,
        modes: Vec<MetricMode>,
        view: ViewParams,
        probe: ProbeSettings,
    },
    SynthValidate {
        quick: bool,
        seed: u64,
        scale: ValidationScale,
    },
}

/// A complete run artifact. Reports from `synth-validate` omit the wall
/// clock so that fixed-seed runs are byte-identical end to end; for all
/// commands the `results` subtree is the reproducible part that `replay`
/// compares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub toolkit_version: String,
    #[serde(flatten)]
    pub config: ReportConfig,
    pub results: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
}

impl RunReport {
    pub fn to_pretty_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}
