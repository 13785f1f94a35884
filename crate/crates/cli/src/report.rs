//! Versioned JSON report schemas. Unknown fields are rejected on load.

use anchorgae::clustering::Route;
use anchorgae::refine::{CollapseDiagnostics, LoopMode, SparsitySchedule};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Echo of everything that determines a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<String>,
    pub format: String,
    pub label_col: Option<usize>,
    pub samples: Option<usize>,
    pub dim: Option<usize>,
    pub separation: Option<f64>,
    pub noise: Option<f64>,
    pub scale: bool,
    pub clusters: usize,
    pub anchors: usize,
    pub layers: Vec<usize>,
    pub k0: usize,
    pub outer_epochs: usize,
    pub inner_epochs: usize,
    pub lr: f64,
    pub optimizer: String,
    pub mode: LoopMode,
    pub ns: Option<usize>,
    pub route: Route,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSummary {
    pub name: String,
    pub samples: usize,
    pub features: usize,
    pub classes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterReport {
    pub schema_version: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    /// Present when the dataset has labels.
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub runtime_seconds: f64,
    pub cluster_sizes: Vec<usize>,
    pub schedule: SparsitySchedule,
    /// Loss before every step, one list per training round.
    pub loss_traces: Vec<Vec<f64>>,
    pub diagnostics: CollapseDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSeries {
    pub mode: LoopMode,
    /// ACC of the labels read off each snapshot, when labels exist.
    pub acc: Vec<Option<f64>>,
    pub diagnostics: CollapseDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseReport {
    pub schema_version: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    pub runtime_seconds: f64,
    pub series: Vec<ModeSeries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOutput {
    pub schema_version: u32,
    pub code_version: String,
    pub samples: usize,
    pub acc: f64,
    pub nmi: f64,
    pub runtime_seconds: f64,
}
