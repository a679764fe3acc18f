//! Command-line driver: training runs with metric export, throughput
//! benchmarks, dataset validation and synthetic dataset dumps.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or file
//! error, 3 numeric failure. Log verbosity comes from `SLICEGCN_LOG`
//! (`env_logger` syntax, default `warn`).

pub mod artifact;
pub mod bench;
pub mod spec;

use std::ffi::OsString;
use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use slicegcn_core::engine::{train, MetricKind, TrainOutcome, Variant};
use slicegcn_core::graph::{load_dataset, synth_graph, write_dataset, AttributedGraph, LoadOptions, Split, SynthConfig};
use slicegcn_core::nn::LayerForm;
use thiserror::Error;

use artifact::{ConfigEcho, EpochRecord, MetricsArtifact, SummaryRecord, TimingArtifact, SCHEMA_VERSION};
use bench::{BenchRow, Cell};
use spec::{Precision, RunSpec, SynthSpec};

pub const LOG_ENV: &str = "SLICEGCN_LOG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Spec { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] slicegcn_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use slicegcn_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Spec { .. } => 1,
            CliError::Output { .. } => 2,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::SliceStrategy(_) => 1,
                E::Io { .. } | E::Dataset { .. } | E::InvalidGraph(_) | E::Empty(_) => 2,
                E::NonFinite(_) | E::Shape { .. } | E::Worker { .. } => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "slicegcn", version, about = "Feature-sliced parallel GCN training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and write metrics.json, epochs.csv and timing.json
    Train(TrainArgs),
    /// Train several (variant, p) cells for a fixed epoch budget and compare them
    Bench(BenchArgs),
    /// Load a dataset directory and print its statistics
    Validate(ValidateArgs),
    /// Generate a planted-partition graph and write it as a dataset directory
    Synth(SynthCommand),
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

/// Generator flags shared by every command that can build a synthetic graph.
#[derive(Debug, Default, Clone, Args)]
pub struct SynthArgs {
    /// Nodes of the synthetic graph [default: 400]
    #[arg(id = "synth-nodes", long = "synth-nodes", value_name = "N", value_parser = positive)]
    pub nodes: Option<usize>,
    /// Classes of the synthetic graph [default: 2]
    #[arg(id = "synth-classes", long = "synth-classes", value_name = "N", value_parser = positive)]
    pub classes: Option<usize>,
    /// Feature width of the synthetic graph [default: 16]
    #[arg(id = "synth-features", long = "synth-features", value_name = "N", value_parser = positive)]
    pub features: Option<usize>,
    /// Same-class edge probability [default: 0.05]
    #[arg(id = "synth-p-in", long = "synth-p-in", value_name = "P")]
    pub p_in: Option<f64>,
    /// Cross-class edge probability [default: 0.005]
    #[arg(id = "synth-p-out", long = "synth-p-out", value_name = "P")]
    pub p_out: Option<f64>,
    /// Target average degree; overrides the edge probabilities
    #[arg(id = "synth-avg-degree", long = "synth-avg-degree", value_name = "DEG")]
    pub avg_degree: Option<f64>,
    /// Share of the average degree inside a node's class [default: 0.9]
    #[arg(id = "synth-intra-fraction", long = "synth-intra-fraction", value_name = "F")]
    pub intra_fraction: Option<f64>,
    /// Class-centroid magnitude in the features [default: 1.0]
    #[arg(id = "synth-signal", long = "synth-signal", value_name = "F")]
    pub signal: Option<f64>,
    /// Graph seed [default: the run seed]
    #[arg(id = "synth-seed", long = "synth-seed", value_name = "SEED")]
    pub seed: Option<u64>,
}

impl SynthArgs {
    fn apply(&self, s: &mut SynthSpec) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { s.$f = v; } )*};
        }
        set!(nodes, classes, features, p_in, p_out, intra_fraction, signal);
        if self.avg_degree.is_some() {
            s.avg_degree = self.avg_degree;
        }
        if self.seed.is_some() {
            s.seed = self.seed;
        }
    }
}

/// Model and data flags shared by `train` and `bench`.
#[derive(Debug, Default, Clone, Args)]
pub struct ModelArgs {
    /// TOML run spec; flags given on the command line override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory, or `synth` for a generated planted-partition graph [default: synth]
    #[arg(long)]
    pub dataset: Option<String>,
    /// Training epochs [default: 500]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Full hidden width; each device gets ceil(hidden / p) [default: 256]
    #[arg(long, value_parser = positive)]
    pub hidden: Option<usize>,
    /// GCN layers per device [default: 2]
    #[arg(long, value_parser = positive)]
    pub layers: Option<usize>,
    /// Peak learning rate of the cosine schedule [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Final learning rate of the cosine schedule [default: 0]
    #[arg(long)]
    pub lr_min: Option<f64>,
    /// Dropout on hidden representations, in [0, 1) [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Slice width multiplier for the direct slicing variants [default: 1.0]
    #[arg(long)]
    pub slice_scale: Option<f64>,
    /// Seed for initialization, dropout and the synthetic graph [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Floating point precision: f32 or f64 [default: f32]
    #[arg(long)]
    pub precision: Option<Precision>,
    /// GCN layer form: eq1 (aggregation only) or eq6 (aggregation plus self path) [default: eq6]
    #[arg(long)]
    pub layer_form: Option<LayerForm>,
    /// Apply the layer ReLU to the sum of both paths instead of the aggregation path only
    #[arg(long)]
    pub relu_over_sum: bool,
    /// Layers of the classifier MLP [default: 2]
    #[arg(long, value_parser = positive)]
    pub classifier_layers: Option<usize>,
    /// Reported metric: auto (AUC-ROC for two classes), accuracy or auc_roc [default: auto]
    #[arg(long)]
    pub metric: Option<MetricKind>,
    /// Worker threads; 0 runs devices inline. Results do not depend on it [default: p]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Keep edge direction of directed datasets instead of symmetrizing
    #[arg(long)]
    pub preserve_direction: bool,
    /// Add a self-loop to every node before normalization
    #[arg(long)]
    pub self_loops: bool,
    #[command(flatten)]
    pub synth: SynthArgs,
}

impl ModelArgs {
    /// Spec file (if any) with the command-line values laid over it.
    pub fn spec(&self) -> Result<RunSpec, CliError> {
        let mut s = match &self.config {
            Some(path) => RunSpec::load(path)?,
            None => RunSpec::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f.clone() { s.$f = v; } )*};
        }
        set!(dataset, epochs, hidden, layers, lr, lr_min, dropout, slice_scale, seed, precision, layer_form, classifier_layers, metric);
        if self.threads.is_some() {
            s.threads = self.threads;
        }
        s.relu_over_sum |= self.relu_over_sum;
        s.preserve_direction |= self.preserve_direction;
        s.self_loops |= self.self_loops;
        self.synth.apply(&mut s.synth);
        Ok(s)
    }
}

#[derive(Debug, Default, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Variant: baseline, slice, slice_se, slice_ff or slice_ffse [default: baseline]
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Number of simulated devices [default: 1]
    #[arg(short = 'p', long = "devices", value_parser = positive)]
    pub devices: Option<usize>,
    /// Directory for the run artifacts [default: slicegcn-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    pub fn spec(&self) -> Result<RunSpec, CliError> {
        let mut s = self.model.spec()?;
        if let Some(v) = self.variant {
            s.variant = v;
        }
        if let Some(p) = self.devices {
            s.devices = p;
        }
        if self.out.is_some() {
            s.out = self.out.clone();
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated cells `variant[:p]`, e.g. baseline,slice:2,slice:3
    #[arg(long, required = true, value_delimiter = ',')]
    pub cells: Vec<Cell>,
    /// Also write the rows as JSON to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Dataset directory
    pub path: PathBuf,
    /// Count edges of a directed dataset without symmetrizing
    #[arg(long)]
    pub preserve_direction: bool,
}

/// The statistics `validate` reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetStats {
    pub nodes: usize,
    /// Distinct edges: unordered pairs for a symmetric adjacency, directed
    /// pairs otherwise. Self-loops count once.
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl DatasetStats {
    pub fn of(graph: &AttributedGraph) -> Self {
        let adj = graph.adjacency();
        let entries = adj.num_entries();
        let edges = if adj.is_symmetric() {
            let loops = adj.entries().filter(|(r, c)| r == c).count();
            (entries + loops) / 2
        } else {
            entries
        };
        let count = |s: Split| graph.split().iter().filter(|&&x| x == s).count();
        Self {
            nodes: graph.num_nodes(),
            edges,
            features: graph.num_features(),
            classes: graph.num_classes(),
            train: count(Split::Train),
            val: count(Split::Val),
            test: count(Split::Test),
        }
    }

    pub fn render(&self, name: &str) -> String {
        format!(
            "{:<16} {:>10} {:>12} {:>9} {:>8}\n{:<16} {:>10} {:>12} {:>9} {:>8}\nsplit: train {} / val {} / test {}\n",
            "dataset", "nodes", "edges", "features", "classes",
            name, self.nodes, self.edges, self.features, self.classes,
            self.train, self.val, self.test,
        )
    }
}

/// The graph a spec refers to, plus the generator settings when synthetic.
pub fn load_graph(spec: &RunSpec) -> Result<(AttributedGraph, Option<SynthConfig>), CliError> {
    if spec.is_synthetic() {
        let cfg = spec.synth.resolve(spec.seed);
        let mut g = synth_graph(&cfg)?;
        if spec.self_loops {
            g = g.with_self_loops();
        }
        return Ok((g, Some(cfg)));
    }
    let opts = LoadOptions {
        preserve_direction: spec.preserve_direction,
        add_self_loops: spec.self_loops,
    };
    Ok((load_dataset(&spec.dataset, opts)?, None))
}

pub fn train_with(graph: &AttributedGraph, spec: &RunSpec) -> Result<TrainOutcome, CliError> {
    let config = spec.train_config();
    config.validate()?;
    Ok(match spec.precision {
        Precision::F32 => train::<f32>(graph, &config)?,
        Precision::F64 => train::<f64>(graph, &config)?,
    })
}

/// Artifacts of a finished run.
pub fn artifacts(spec: &RunSpec, synth: Option<SynthConfig>, out: &TrainOutcome) -> (MetricsArtifact, TimingArtifact) {
    let metrics = MetricsArtifact {
        schema_version: SCHEMA_VERSION,
        seed: spec.seed,
        config: ConfigEcho::new(spec, synth),
        summary: SummaryRecord::from(&out.summary),
        epochs: out.reports.iter().map(EpochRecord::from).collect(),
    };
    let timing = TimingArtifact {
        schema_version: SCHEMA_VERSION,
        throughput: out.summary.throughput,
        train_seconds: out.summary.train_seconds,
        threads: spec.threads,
        epoch_wall_ms: out.reports.iter().map(|r| r.wall_ms).collect(),
    };
    (metrics, timing)
}

pub fn cmd_train(args: &TrainArgs) -> Result<(MetricsArtifact, TimingArtifact, PathBuf), CliError> {
    let spec = args.spec()?;
    spec.train_config().validate()?;
    let (graph, synth) = load_graph(&spec)?;
    let outcome = train_with(&graph, &spec)?;
    let (metrics, timing) = artifacts(&spec, synth, &outcome);
    let dir = spec.out.clone().unwrap_or_else(|| PathBuf::from("slicegcn-out"));
    artifact::write_run(&dir, &metrics, &timing)?;
    let s = &metrics.summary;
    println!(
        "{} p={}: best val {} {:.4} (epoch {}), test {:.4}, {} params, {:.3} epochs/s -> {}",
        spec.variant,
        spec.devices,
        s.metric,
        s.best_val,
        s.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        s.test_at_best_val,
        s.param_count,
        timing.throughput,
        dir.display()
    );
    Ok((metrics, timing, dir))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    let spec = args.model.spec()?;
    let (graph, _) = load_graph(&spec)?;
    let rows = bench::run_cells(&graph, &spec.train_config(), &args.cells, spec.precision)?;
    print!("{}", bench::render(&rows));
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
        std::fs::write(path, json + "\n").map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
    }
    Ok(rows)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<DatasetStats, CliError> {
    let opts = LoadOptions {
        preserve_direction: args.preserve_direction,
        add_self_loops: false,
    };
    let graph = load_dataset(&args.path, opts)?;
    let stats = DatasetStats::of(&graph);
    let name = args
        .path
        .file_name()
        .map_or_else(|| args.path.display().to_string(), |n| n.to_string_lossy().into_owned());
    print!("{}", stats.render(&name));
    Ok(stats)
}

#[derive(Debug, Clone, Args)]
pub struct SynthCommand {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Generator seed, unless --synth-seed is given
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset directory to write
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_synth(args: &SynthCommand) -> Result<DatasetStats, CliError> {
    let mut s = SynthSpec::default();
    args.synth.apply(&mut s);
    let graph = synth_graph(&s.resolve(args.seed))?;
    write_dataset(&args.out, &graph)?;
    let stats = DatasetStats::of(&graph);
    print!("{}", stats.render(&args.out.display().to_string()));
    Ok(stats)
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Bench(a) => cmd_bench(a).map(drop),
        Command::Validate(a) => cmd_validate(a).map(drop),
        Command::Synth(a) => cmd_synth(a).map(drop),
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
