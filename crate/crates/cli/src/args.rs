use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "anchorgae", version, about = "Anchor-based graph auto-encoder clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a dataset and write a JSON report, labels and embedding.
    Fit(FitArgs),
    /// Time the factored forward pass against a dense reference as n grows.
    Bench(BenchArgs),
    /// Run full and fixed-k modes side by side and write per-iteration collapse measures.
    CollapseDemo(CollapseArgs),
    /// Score an existing label file against ground truth.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    /// MNIST-style IDX; `--input images,labels[,images,labels...]`.
    Idx,
    /// Synthetic Gaussian blobs.
    Blobs,
    /// Synthetic two moons.
    Moons,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Gd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Refit the graph and grow k each outer epoch.
    Full,
    /// Keep the initial graph ("Ours-A").
    FixedB,
    /// Refit but keep k fixed ("Ours-B").
    FixedK,
    /// Unweighted kNN anchor graph ("Ours-C").
    Knn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RouteArg {
    /// Spectral clustering of the final bipartite graph.
    Spectral,
    /// k-means on the final embedding.
    Kmeans,
}

#[derive(Clone, Debug, Args)]
pub struct DataArgs {
    /// Data file(s); comma-separated image/label pairs for idx.
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Zero-based CSV column holding class labels.
    #[arg(long)]
    pub label_col: Option<usize>,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// Sample count for synthetic data.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Feature count for blobs.
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Distance between blob centers, in noise standard deviations.
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    /// Noise level for moons.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Min-max scale every feature to [0, 1].
    #[arg(long, value_enum, default_value = "on")]
    pub scale: Switch,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    /// Cluster count; defaults to the number of label classes.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub anchors: usize,
    /// Output width of each encoder layer.
    #[arg(long, value_delimiter = ',', default_value = "128,64")]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub k0: usize,
    #[arg(long, default_value_t = 5)]
    pub outer_epochs: usize,
    #[arg(long, default_value_t = 200)]
    pub inner_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    /// Size of the smallest cluster used to plan k growth; defaults to n/c.
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long, value_enum, default_value = "spectral")]
    pub route: RouteArg,
}

#[derive(Clone, Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// One predicted label per line.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Final sample embedding as CSV.
    #[arg(long)]
    pub embedding_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct CollapseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Per-iteration CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    /// Ascending sample counts.
    #[arg(long, value_delimiter = ',', default_value = "10000,20000,40000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub anchors: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "128,64")]
    pub layers: Vec<usize>,
    /// Nonzeros per row of the random graph.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Largest n timed on the dense path; larger sizes record inf.
    #[arg(long, default_value_t = 4000)]
    pub dense_cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    /// Predicted labels, one per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// True labels, one per line, or a CSV with --label-col.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub label_col: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}
