//! Command implementations behind the `anchorgae` binary.

pub mod args;
pub mod output;
pub mod report;

use std::fmt::Write as _;
use std::path::Path;

use anchorgae::bench::{run_scaling, spot_check, ScalingConfig};
use anchorgae::clustering::{assign_clusters, Route};
use anchorgae::data::{concat, load_csv, load_idx, make_blobs, make_two_moons, minmax_scale, write_csv, CsvOptions, Dataset};
use anchorgae::metrics::{acc, nmi, Stopwatch};
use anchorgae::refine::{run_anchorgae, AnchorGaeConfig, AnchorGaeOutput, LoopMode};
use anchorgae::training::{Optimizer, TrainConfig};
use anchorgae::SeededRng;
use anyhow::anyhow;

use args::{BenchArgs, CollapseArgs, Command, DataArgs, EvalArgs, FitArgs, Format, ModeArg, ModelArgs, OptimizerArg, RouteArg, Switch};
use output::{emit, StagedOutputs};
use report::{ClusterReport, CollapseReport, DatasetSummary, EvalOutput, ModeSeries, RunConfig, CODE_VERSION, SCHEMA_VERSION};

/// A failed command: bad configuration (exit 1) or a runtime failure (exit 2).
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anchorgae::Error> for Failure {
    fn from(e: anchorgae::Error) -> Self {
        use anchorgae::Error as E;
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::Parse { .. } => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow!(msg.into()))
}

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Fit(a) => fit(&a),
        Command::Bench(a) => bench(&a),
        Command::CollapseDemo(a) => collapse_demo(&a),
        Command::Eval(a) => eval(&a),
    }
}

fn require_file(path: &str) -> CmdResult {
    if Path::new(path).is_file() {
        Ok(())
    } else {
        Err(config_error(format!("input file {path} does not exist")))
    }
}

fn load_data(data: &DataArgs, clusters: Option<usize>) -> CmdResult<Dataset> {
    let mut rng = SeededRng::new(data.seed);
    let ds = match data.format {
        Format::Csv => {
            let path = data.input.as_deref().ok_or_else(|| config_error("--input is required for csv"))?;
            require_file(path)?;
            if !data.delimiter.is_ascii() {
                return Err(config_error("--delimiter must be a single ASCII character"));
            }
            let opts = CsvOptions {
                label_col: data.label_col,
                delimiter: data.delimiter as u8,
            };
            load_csv(path, &opts)?
        }
        Format::Idx => {
            let list = data.input.as_deref().ok_or_else(|| config_error("--input is required for idx"))?;
            let paths: Vec<&str> = list.split(',').map(str::trim).collect();
            if !paths.len().is_multiple_of(2) {
                return Err(config_error("idx input must list image,label file pairs"));
            }
            paths.iter().try_for_each(|p| require_file(p))?;
            let parts = paths
                .chunks(2)
                .map(|pair| load_idx(pair[0], pair[1]))
                .collect::<Result<Vec<_>, _>>()?;
            let name = parts[0].name.clone();
            concat(&parts, name)?
        }
        Format::Blobs => {
            let c = clusters.ok_or_else(|| config_error("--clusters is required for blobs"))?;
            make_blobs(data.samples, data.dim, c, data.separation, &mut rng)?
        }
        Format::Moons => make_two_moons(data.samples, data.noise, &mut rng)?,
    };
    Ok(match data.scale {
        Switch::On => Dataset {
            x: minmax_scale(&ds.x),
            ..ds
        },
        Switch::Off => ds,
    })
}

fn cluster_count(model: &ModelArgs, ds: &Dataset) -> CmdResult<usize> {
    let c = model
        .clusters
        .or_else(|| ds.n_classes())
        .ok_or_else(|| config_error("--clusters is required when the data has no labels"))?;
    if c < 2 {
        return Err(config_error(format!("need at least 2 clusters, got {c}")));
    }
    Ok(c)
}

fn loop_mode(mode: ModeArg) -> LoopMode {
    match mode {
        ModeArg::Full => LoopMode::Full,
        ModeArg::FixedB => LoopMode::FixedB,
        ModeArg::FixedK => LoopMode::FixedK,
        ModeArg::Knn => LoopMode::Knn,
    }
}

fn route(r: RouteArg) -> Route {
    match r {
        RouteArg::Spectral => Route::Spectral,
        RouteArg::Kmeans => Route::Kmeans,
    }
}

fn model_config(model: &ModelArgs, c: usize, seed: u64, mode: LoopMode, keep_history: bool) -> AnchorGaeConfig {
    AnchorGaeConfig {
        n_clusters: c,
        n_anchors: model.anchors,
        layers: model.layers.clone(),
        k0: model.k0,
        outer_epochs: model.outer_epochs,
        train: TrainConfig {
            inner_epochs: model.inner_epochs,
            learning_rate: model.lr,
            optimizer: match model.optimizer {
                OptimizerArg::Gd => Optimizer::Gd,
                OptimizerArg::Adam => Optimizer::adam(),
            },
            grad_clip: None,
        },
        mode,
        smallest_cluster: model.ns,
        seed,
        keep_history,
    }
}

fn run_config(data: &DataArgs, model: &ModelArgs, c: usize, mode: LoopMode) -> RunConfig {
    let synthetic = matches!(data.format, Format::Blobs | Format::Moons);
    RunConfig {
        input: if synthetic { None } else { data.input.clone() },
        format: format!("{:?}", data.format).to_lowercase(),
        label_col: data.label_col,
        samples: synthetic.then_some(data.samples),
        dim: (data.format == Format::Blobs).then_some(data.dim),
        separation: (data.format == Format::Blobs).then_some(data.separation),
        noise: (data.format == Format::Moons).then_some(data.noise),
        scale: data.scale == Switch::On,
        clusters: c,
        anchors: model.anchors,
        layers: model.layers.clone(),
        k0: model.k0,
        outer_epochs: model.outer_epochs,
        inner_epochs: model.inner_epochs,
        lr: model.lr,
        optimizer: format!("{:?}", model.optimizer).to_lowercase(),
        mode,
        ns: model.ns,
        route: route(model.route),
        seed: data.seed,
    }
}

fn summary(ds: &Dataset) -> DatasetSummary {
    DatasetSummary {
        name: ds.name.clone(),
        samples: ds.n_samples(),
        features: ds.n_features(),
        classes: ds.n_classes(),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> CmdResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.into()))?;
    s.push('\n');
    Ok(s)
}

fn fit(a: &FitArgs) -> CmdResult {
    let ds = load_data(&a.data, a.model.clusters)?;
    let c = cluster_count(&a.model, &ds)?;
    let mode = loop_mode(a.model.mode);
    let cfg = model_config(&a.model, c, a.data.seed, mode, false);
    cfg.validate(ds.n_samples())?;

    let sw = Stopwatch::start();
    let out = run_anchorgae(&ds.x, &cfg)?;
    let mut rng = SeededRng::new(a.data.seed).fork(2);
    let assignment = assign_clusters(route(a.model.route), &out.graph, &out.embedding, c, &mut rng)?;
    let runtime_seconds = sw.seconds();

    let (acc_v, nmi_v) = match &ds.labels {
        Some(truth) => (Some(acc(&assignment.labels, truth)?), Some(nmi(&assignment.labels, truth)?)),
        None => (None, None),
    };
    let report = ClusterReport {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        config: run_config(&a.data, &a.model, c, mode),
        dataset: summary(&ds),
        acc: acc_v,
        nmi: nmi_v,
        runtime_seconds,
        cluster_sizes: assignment.sizes(),
        schedule: out.schedule,
        loss_traces: out.loss_traces.iter().map(|t| t.values.clone()).collect(),
        diagnostics: out.diagnostics.clone(),
    };

    let mut outputs = StagedOutputs::default();
    emit(&mut outputs, a.report.as_deref(), &to_json(&report)?)?;
    if let Some(path) = &a.labels_out {
        outputs.stage(path, |w| {
            for l in &assignment.labels {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })?;
    }
    if let Some(path) = &a.embedding_out {
        outputs.stage(path, |w| Ok(write_csv(w, &out.embedding, None)?))?;
    }
    outputs.commit()?;
    if let (Some(ac), Some(nm)) = (acc_v, nmi_v) {
        log::info!("ACC {ac:.4}, NMI {nm:.4}, {runtime_seconds:.1} s");
    }
    Ok(())
}

fn series(
    out: &AnchorGaeOutput,
    mode: LoopMode,
    r: Route,
    c: usize,
    seed: u64,
    truth: Option<&[usize]>,
) -> CmdResult<ModeSeries> {
    let acc_series = out
        .graph_history
        .iter()
        .zip(&out.history)
        .map(|(g, z)| -> CmdResult<Option<f64>> {
            let Some(truth) = truth else { return Ok(None) };
            let labels = assign_clusters(r, g, z, c, &mut SeededRng::new(seed).fork(2))?;
            Ok(Some(acc(&labels.labels, truth)?))
        })
        .collect::<CmdResult<Vec<_>>>()?;
    Ok(ModeSeries {
        mode,
        acc: acc_series,
        diagnostics: out.diagnostics.clone(),
    })
}

fn collapse_demo(a: &CollapseArgs) -> CmdResult {
    let ds = load_data(&a.data, a.model.clusters)?;
    let c = cluster_count(&a.model, &ds)?;
    let r = route(a.model.route);
    let sw = Stopwatch::start();
    let mut all = Vec::new();
    for mode in [LoopMode::Full, LoopMode::FixedK] {
        let cfg = model_config(&a.model, c, a.data.seed, mode, true);
        cfg.validate(ds.n_samples())?;
        let out = run_anchorgae(&ds.x, &cfg)?;
        all.push(series(&out, mode, r, c, a.data.seed, ds.labels.as_deref())?);
    }
    let runtime_seconds = sw.seconds();

    let mut csv = String::from("mode,iteration,k,uniformity_gap,mean_uniformity_gap,component_count,reconstruction_gap,acc\n");
    for s in &all {
        let name = if s.mode == LoopMode::Full { "full" } else { "fixed-k" };
        for (t, (snap, ac)) in s.diagnostics.snapshots.iter().zip(&s.acc).enumerate() {
            let ac = ac.map_or_else(String::new, |v| v.to_string());
            writeln!(
                csv,
                "{name},{t},{},{},{},{},{},{ac}",
                snap.k, snap.uniformity_gap, snap.mean_uniformity_gap, snap.component_count, snap.reconstruction_gap
            )
            .expect("writing to a String");
        }
    }
    let last_acc = |s: &ModeSeries| s.acc.last().copied().flatten();
    let last_cc = |s: &ModeSeries| s.diagnostics.last().map_or(0, |d| d.component_count);
    let line = format!(
        "final ACC: full {} vs fixed-k {}; final components: full {} vs fixed-k {}",
        last_acc(&all[0]).map_or("n/a".into(), |v| format!("{v:.4}")),
        last_acc(&all[1]).map_or("n/a".into(), |v| format!("{v:.4}")),
        last_cc(&all[0]),
        last_cc(&all[1]),
    );

    let report = CollapseReport {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        config: run_config(&a.data, &a.model, c, LoopMode::Full),
        dataset: summary(&ds),
        runtime_seconds,
        series: all,
    };
    let mut outputs = StagedOutputs::default();
    emit(&mut outputs, a.out.as_deref(), &csv)?;
    if let Some(path) = &a.report {
        let body = to_json(&report)?;
        outputs.stage(path, |w| Ok(w.write_all(body.as_bytes())?))?;
    }
    outputs.commit()?;
    if a.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

/// Largest n for the dense correctness check inside the benchmark.
const SPOT_CHECK_N: usize = 200;

fn bench(a: &BenchArgs) -> CmdResult {
    let cfg = ScalingConfig {
        sizes: a.sizes.clone(),
        n_anchors: a.anchors,
        dim: a.dim,
        layers: a.layers.clone(),
        k: a.k,
        reps: a.reps,
        dense_cap: a.dense_cap,
        seed: a.seed,
    };
    if a.anchors == 0 || a.dim == 0 || a.layers.is_empty() || a.layers.contains(&0) {
        return Err(config_error("anchors, dim and layer widths must be positive"));
    }
    let check = spot_check(SPOT_CHECK_N.max(a.anchors), &cfg)?;
    if check > 1e-8 {
        return Err(Failure::Runtime(anyhow!("factored and dense forward passes differ by {check:e}")));
    }
    eprintln!("dense spot check: max abs diff {check:.2e}");
    let rows = run_scaling(&cfg)?;
    let mut csv = String::from("n,t_factored,t_dense\n");
    for r in rows {
        let dense = r.t_dense.map_or_else(|| "inf".to_string(), |t| t.to_string());
        writeln!(csv, "{},{},{dense}", r.n, r.t_factored).expect("writing to a String");
    }
    let mut outputs = StagedOutputs::default();
    emit(&mut outputs, a.out.as_deref(), &csv)?;
    outputs.commit()?;
    Ok(())
}

/// Label tokens from a file, as ids in order of first appearance.
fn read_labels(path: &Path, label_col: Option<usize>) -> CmdResult<Vec<usize>> {
    require_file(&path.to_string_lossy())?;
    let text = std::fs::read_to_string(path)?;
    let mut ids = std::collections::HashMap::new();
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let token = match label_col {
            None => line,
            Some(c) => line.split(',').nth(c).map(str::trim).ok_or_else(|| {
                config_error(format!("{}: line {} has no column {c}", path.display(), line_no + 1))
            })?,
        };
        let next = ids.len();
        out.push(*ids.entry(token.to_string()).or_insert(next));
    }
    Ok(out)
}

fn eval(a: &EvalArgs) -> CmdResult {
    let sw = Stopwatch::start();
    let pred = read_labels(&a.pred, None)?;
    let truth = read_labels(&a.truth, a.label_col)?;
    let result = EvalOutput {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        samples: pred.len(),
        acc: acc(&pred, &truth)?,
        nmi: nmi(&pred, &truth)?,
        runtime_seconds: sw.seconds(),
    };
    let mut outputs = StagedOutputs::default();
    emit(&mut outputs, a.report.as_deref(), &to_json(&result)?)?;
    outputs.commit()?;
    Ok(())
}
