//! Command implementations behind the `gssc` binary.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gssc_core::graph::{
    generate_sbm, inject_label_noise, load_graph, perturb_edges, save_graph, EDGES_FILE, NODES_FILE, SPLITS_FILE,
};
use gssc_core::nn::Checkpoint;
use gssc_core::study::{correlation_csv, correlation_study, default_ladder, evolution_csv, evolution_study, spearman};
use gssc_core::trainer::{bench_latency, evaluate, train_with, LatencyStats, MetricsRecord, Split};
use gssc_core::{EdgeNoiseSplit, NoiseKind, NoiseSpec, ObjectiveMode, SbmParams, TrainConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BEST_CKPT: &str = "best.ckpt";
pub const FINAL_CKPT: &str = "final.ckpt";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Environment variable pinning the worker count for parallel studies.
pub const THREADS_ENV: &str = "GSSC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gssc", version, about = "MLP node classification supervised by a learned sparsified graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a stochastic block model dataset.
    Generate(GenerateArgs),
    /// Write a corrupted copy of a dataset (label or edge noise).
    Corrupt(CorruptArgs),
    /// Train a model; writes a manifest, metrics.jsonl and checkpoints.
    Train(TrainArgs),
    /// Print split accuracy of a checkpoint as JSON.
    Eval(EvalArgs),
    /// Print inference latency statistics as JSON.
    Bench(BenchArgs),
    /// Experiments that emit CSV plot data.
    #[command(subcommand)]
    Study(StudyCommand),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub p_in: f64,
    #[arg(long)]
    pub p_out: f64,
    #[arg(long)]
    pub dim: usize,
    /// Standard deviation of the Gaussian noise added to class-mean features.
    #[arg(long, default_value_t = 1.0)]
    pub feature_noise: f64,
    #[arg(long, default_value_t = 20)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 60)]
    pub val_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelNoiseArg {
    Sym,
    Asym,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EdgeSplitArg {
    Half,
    Each,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, conflicts_with = "edge_noise")]
    pub label_noise: Option<LabelNoiseArg>,
    #[arg(long)]
    pub edge_noise: bool,
    /// Corruption ratio in [0, 1].
    #[arg(long)]
    pub ratio: f64,
    /// For edge noise: remove and add ratio/2 each (half) or ratio each.
    #[arg(long, value_enum, default_value = "half")]
    pub edge_noise_split: EdgeSplitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Flags that override fields of the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct ConfigOverrides {
    /// JSON file with any subset of the training config fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr_theta: Option<f64>,
    #[arg(long)]
    pub lr_psi: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub fusion: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long)]
    pub fixed_beta: Option<f64>,
    #[arg(long)]
    pub no_negatives: bool,
    #[arg(long)]
    pub freeze_sparsifier: bool,
    /// Replace pseudo-labels of training nodes by their known labels.
    #[arg(long)]
    pub truth_pseudo_labels: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Homophily,
    ExplicitWeight,
}

impl From<ObjectiveArg> for ObjectiveMode {
    fn from(a: ObjectiveArg) -> Self {
        match a {
            ObjectiveArg::Homophily => ObjectiveMode::Homophily,
            ObjectiveArg::ExplicitWeight => ObjectiveMode::ExplicitWeight,
        }
    }
}

impl ConfigOverrides {
    /// Config file values, then flags; the result is validated.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let cfg = self.merge()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn merge(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<TrainConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v.into(); }
            )*};
        }
        set!(epochs, warmup_epochs, seed, lr_theta, lr_psi, hidden, layers, batch_size, fusion, temperature, negatives, dropout, margin, weight_decay, objective);
        if self.fixed_beta.is_some() {
            cfg.fixed_beta = self.fixed_beta;
        }
        if self.no_negatives {
            cfg.use_negatives = false;
        }
        if self.freeze_sparsifier {
            cfg.freeze_sparsifier = true;
        }
        if self.truth_pseudo_labels {
            cfg.truth_pseudo_labels = true;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub repeats: usize,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Accuracy against homophily over an edge-removal ladder.
    Correlation(CorrelationArgs),
    /// Edge count, homophily and accuracy over a bi-level run.
    Evolution(EvolutionArgs),
}

#[derive(Debug, Args)]
pub struct CorrelationArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for edge removal.
    #[arg(long, default_value_t = 0)]
    pub removal_seed: u64,
    /// Run rungs concurrently (worker count from GSSC_THREADS, else all cores).
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Debug, Args)]
pub struct EvolutionArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a).map(|_| ()),
        Command::Corrupt(a) => cmd_corrupt(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Eval(a) => {
            let report = cmd_eval(&a)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Command::Bench(a) => {
            let stats = cmd_bench(&a)?;
            println!("{}", serde_json::to_string(&stats)?);
            Ok(())
        }
        Command::Study(StudyCommand::Correlation(a)) => {
            let rho = cmd_study_correlation(&a)?;
            println!("{}", serde_json::json!({ "spearman": rho }));
            Ok(())
        }
        Command::Study(StudyCommand::Evolution(a)) => cmd_study_evolution(&a),
    }
}

#[derive(Debug, Serialize)]
struct Provenance<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    params: T,
    edges: usize,
    homophily: f64,
}

fn write_provenance<T: Serialize>(dir: &Path, command: &str, params: T, g: &gssc_core::Graph) -> Result<()> {
    let p = Provenance {
        command,
        version: env!("CARGO_PKG_VERSION"),
        params,
        edges: g.n_edges(),
        homophily: g.homophily_ratio(g.labels()).ratio,
    };
    let path = dir.join(PROVENANCE_FILE);
    fs::write(&path, serde_json::to_string_pretty(&p)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<gssc_core::Graph> {
    let params = SbmParams::new(a.nodes, a.classes, a.p_in, a.p_out, a.dim, a.feature_noise, a.seed)
        .with_split_sizes(a.train_per_class, a.val_per_class);
    let g = generate_sbm(&params)?;
    save_graph(&g, &a.out)?;
    write_provenance(&a.out, "generate", &params, &g)?;
    log::info!("wrote {} nodes, {} edges to {}", g.n_nodes(), g.n_edges(), a.out.display());
    Ok(g)
}

#[derive(Debug, Serialize)]
struct CorruptionParams<'a> {
    source_sha256: &'a str,
    spec: &'a NoiseSpec,
}

pub fn cmd_corrupt(a: &CorruptArgs) -> Result<()> {
    if same_path(&a.data, &a.out) {
        bail!("--out must differ from --data: inputs are never modified");
    }
    let kind = match (a.label_noise, a.edge_noise) {
        (Some(LabelNoiseArg::Sym), false) => NoiseKind::LabelSymmetric,
        (Some(LabelNoiseArg::Asym), false) => NoiseKind::LabelAsymmetric,
        (None, true) => NoiseKind::EdgePerturb,
        _ => bail!("choose exactly one of --label-noise sym|asym or --edge-noise"),
    };
    let split = match a.edge_noise_split {
        EdgeSplitArg::Half => EdgeNoiseSplit::Half,
        EdgeSplitArg::Each => EdgeNoiseSplit::Each,
    };
    let spec = NoiseSpec::new(kind, a.ratio, a.seed)?.with_split(split);
    let g = load_graph(&a.data)?;
    let noisy = match kind {
        NoiseKind::EdgePerturb => perturb_edges(&g, &spec)?,
        _ => inject_label_noise(&g, &spec)?,
    };
    save_graph(&noisy, &a.out)?;
    let fingerprint = dataset_fingerprint(&a.data)?;
    let params = CorruptionParams {
        source_sha256: &fingerprint,
        spec: &spec,
    };
    write_provenance(&a.out, "corrupt", params, &noisy)
}

fn same_path(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// SHA-256 over the three dataset files, in a fixed order.
pub fn dataset_fingerprint(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in [NODES_FILE, EDGES_FILE, SPLITS_FILE] {
        let path = dir.join(name);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Serialize)]
struct DatasetRef {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct OutputPaths {
    metrics: PathBuf,
    best_checkpoint: PathBuf,
    final_checkpoint: PathBuf,
    summary: PathBuf,
}

/// Everything needed to rerun a training job bit for bit.
#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    config: TrainConfig,
    dataset: DatasetRef,
    seed: u64,
    threads: Option<String>,
    outputs: OutputPaths,
    created_unix_secs: u64,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_test_acc: f64,
    pub final_test_acc: f64,
    pub epochs: usize,
}

pub fn cmd_train(a: &TrainArgs) -> Result<TrainSummary> {
    let cfg = a.overrides.resolve()?;
    let graph = load_graph(&a.data)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let manifest = RunManifest {
        tool: "gssc",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        dataset: DatasetRef {
            path: a.data.clone(),
            sha256: dataset_fingerprint(&a.data)?,
        },
        seed: cfg.seed,
        threads: std::env::var(THREADS_ENV).ok(),
        outputs: OutputPaths {
            metrics: a.out.join(METRICS_FILE),
            best_checkpoint: a.out.join(BEST_CKPT),
            final_checkpoint: a.out.join(FINAL_CKPT),
            summary: a.out.join(SUMMARY_FILE),
        },
        created_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    fs::write(a.out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;

    let metrics_path = a.out.join(METRICS_FILE);
    let file = fs::File::create(&metrics_path).with_context(|| format!("creating {}", metrics_path.display()))?;
    let mut metrics = BufWriter::new(file);
    let outcome = train_with(&graph, &cfg, |r: &MetricsRecord| {
        serde_json::to_writer(&mut metrics, r)?;
        metrics
            .write_all(b"\n")
            .and_then(|_| metrics.flush())
            .map_err(|e| gssc_core::Error::Io {
                path: metrics_path.clone(),
                source: e,
            })
    })?;
    drop(metrics);

    let best = &outcome.best;
    Checkpoint::new(best.epoch, &cfg, &best.backbone, &best.sparsifier).save(a.out.join(BEST_CKPT))?;
    let last = cfg.epochs - 1;
    Checkpoint::new(last, &cfg, &outcome.backbone, &outcome.sparsifier).save(a.out.join(FINAL_CKPT))?;
    let summary = TrainSummary {
        best_epoch: best.epoch,
        best_val_acc: best.val_acc,
        best_test_acc: best.test_acc,
        final_test_acc: outcome.history.last().map_or(0.0, |r| r.test_acc),
        epochs: cfg.epochs,
    };
    fs::write(a.out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub split: &'static str,
    pub accuracy: f64,
    pub epoch: usize,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let graph = load_graph(&a.data)?;
    let split: Split = a.split.into();
    Ok(EvalReport {
        split: match split {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        },
        accuracy: evaluate(&ckpt.backbone()?, &graph, split)?,
        epoch: ckpt.epoch,
    })
}

pub fn cmd_bench(a: &BenchArgs) -> Result<LatencyStats> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let graph = load_graph(&a.data)?;
    Ok(bench_latency(&ckpt.backbone()?, &graph, a.repeats)?)
}

fn study_threads(parallel: bool) -> usize {
    if !parallel {
        return 1;
    }
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Writes the ladder CSV and returns the Spearman correlation.
///
/// Rungs train on their fixed subgraph only, so the warm-up length always
/// equals the epoch count here.
pub fn cmd_study_correlation(a: &CorrelationArgs) -> Result<Option<f64>> {
    let mut cfg = a.overrides.merge()?;
    cfg.warmup_epochs = cfg.epochs;
    cfg.validate()?;
    let graph = load_graph(&a.data)?;
    let rows = correlation_study(&graph, &cfg, &default_ladder(), a.removal_seed, study_threads(a.parallel))?;
    write_output(&a.out, &correlation_csv(&rows))?;
    let h: Vec<f64> = rows.iter().map(|r| r.homophily).collect();
    let acc: Vec<f64> = rows.iter().map(|r| r.test_acc).collect();
    Ok(spearman(&h, &acc))
}

pub fn cmd_study_evolution(a: &EvolutionArgs) -> Result<()> {
    let cfg = a.overrides.resolve()?;
    let graph = load_graph(&a.data)?;
    let history = evolution_study(&graph, &cfg)?;
    write_output(&a.out, &evolution_csv(&history))
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
