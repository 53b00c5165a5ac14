//! Command-line front end: `gen-data`, `train`, `eval` and `dcam`.
//!
//! Exit codes: 0 on success, 1 for usage, configuration and I/O errors,
//! 2 when a request is refused on domain grounds (dense maps from the
//! baseline network).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::clustering::{KMeansConfig, PreprocessConfig};
use crate::dcam::{compute_dcam, export_slices, save_channel, Axis};
use crate::error::{Error, Result};
use crate::evaluation::{write_metrics_csv, MetricsReport};
use crate::nn::{Checkpoint, CheckpointMeta, Variant, CHECKPOINT_FORMAT_VERSION};
use crate::pipeline::{evaluate, train, write_epochs_csv, TrainConfig};
use crate::seed::Seeds;
use crate::volume::{check_dims, generate_dataset, load_manifest, save_dataset, Dims, MAX_PHANTOM_CLASSES};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RUN_MANIFEST_FILE: &str = "run.json";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_RAW_FILE: &str = "metrics_raw.csv";

pub fn version_string() -> String {
    format!("dense-cluster {TOOL_VERSION} (checkpoint format {CHECKPOINT_FORMAT_VERSION}, volumes f32le)")
}

#[derive(Debug, Parser)]
#[command(name = "dense-cluster", about = "Unsupervised clustering of 3-D scans with dense activation maps")]
#[command(disable_version_flag = true)]
struct Cli {
    /// Worker threads (1 gives bit-stable runs on any machine).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Print tool and file format versions.
    #[arg(long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic phantom dataset with a manifest.
    GenData(GenDataArgs),
    /// Train a feature network with alternating clustering and classification.
    Train(TrainArgs),
    /// Cluster a dataset with frozen checkpoints and write metrics.csv.
    Eval(EvalArgs),
    /// Export dense activation map slices for one subject.
    Dcam(DcamArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    per_class: usize,
    /// `16` for a cube or `DxHxW`.
    #[arg(long, value_parser = parse_dims)]
    dims: Dims,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Network the data is meant for; its divisibility rule is enforced.
    #[arg(long, default_value = "proposed", value_parser = parse_variant)]
    variant: Variant,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON training configuration; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint to evaluate; repeat for several methods.
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Row label per checkpoint; defaults to the checkpoint's variant.
    #[arg(long)]
    method: Vec<String>,
    /// Number of clusters; defaults to the checkpoint's k.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = PreprocessConfig::default().pca_dim)]
    pca_dim: usize,
    /// k-means seed; defaults to the checkpoint's k-means seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write pooled features and cluster labels per method as CSV.
    #[arg(long)]
    dump_features: bool,
}

#[derive(Debug, Args)]
struct DcamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    subject: String,
    /// Cluster channel; defaults to the subject's assigned cluster.
    #[arg(long)]
    channel: Option<usize>,
    #[arg(long, default_value = "z", value_parser = parse_axis)]
    axis: Axis,
    #[arg(long)]
    out: PathBuf,
    /// Also dump the raw channel as f32raw with sidecar.
    #[arg(long)]
    raw: bool,
}

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let values = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad dimension {p:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match values[..] {
        [n] => Ok([n, n, n]),
        [d, h, w] => Ok([d, h, w]),
        _ => Err("expected N or DxHxW".into()),
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> std::result::Result<Axis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Everything needed to rerun a training invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub checkpoint_format_version: u32,
    pub config: TrainConfig,
    pub seeds: Seeds,
    pub data: String,
    pub out: String,
    pub epochs_completed: usize,
    pub final_checkpoint: String,
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("ckpt_e{epoch:03}")
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    if args.classes < 2 || args.classes > MAX_PHANTOM_CLASSES {
        return Err(Error::InvalidParameter(format!(
            "--classes must be between 2 and {MAX_PHANTOM_CLASSES}, got {}",
            args.classes
        )));
    }
    if args.per_class == 0 {
        return Err(Error::InvalidParameter("--per-class must be at least 1".into()));
    }
    let topology = args.variant.topology();
    check_dims(args.dims, topology.downsample_factor(), &format!("{} variant", args.variant.name()))?;
    let dataset = generate_dataset(args.classes, args.per_class, args.dims, args.seed)?;
    save_dataset(&dataset, &args.out)?;
    log::info!("wrote {} subjects to {}", dataset.len(), args.out.display());
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    let dataset = load_manifest(&args.data)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let topology = config.topology();
    let mut logs = Vec::new();
    let outcome = train(&config, &dataset, |epoch, net, head, log| {
        let meta = CheckpointMeta::new(config.variant, topology, config.k, epoch, config.seeds);
        let checkpoint = Checkpoint {
            meta,
            net: net.clone(),
            head: head.clone(),
        };
        checkpoint.save(args.out.join(checkpoint_name(epoch)))?;
        if let Some(log) = log {
            logs.push(log.clone());
            write_epochs_csv(&logs, args.out.join(EPOCHS_FILE))?;
        }
        Ok(())
    })?;
    write_epochs_csv(&outcome.logs, args.out.join(EPOCHS_FILE))?;
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        checkpoint_format_version: CHECKPOINT_FORMAT_VERSION,
        config: config.clone(),
        seeds: config.seeds,
        data: args.data.display().to_string(),
        out: args.out.display().to_string(),
        epochs_completed: outcome.logs.len(),
        final_checkpoint: checkpoint_name(outcome.logs.len()),
    };
    let path = args.out.join(RUN_MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    if !args.method.is_empty() && args.method.len() != args.checkpoint.len() {
        return Err(Error::InvalidParameter(format!(
            "{} --method labels for {} checkpoints",
            args.method.len(),
            args.checkpoint.len()
        )));
    }
    let dataset = load_manifest(&args.data)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut reports: Vec<MetricsReport> = Vec::new();
    let mut raw_reports = Vec::new();
    for (i, path) in args.checkpoint.iter().enumerate() {
        let checkpoint = Checkpoint::load(path)?;
        if let Some(dims) = dataset.dims() {
            checkpoint.net.check_input_dims(dims)?;
        }
        let method = args
            .method
            .get(i)
            .cloned()
            .unwrap_or_else(|| checkpoint.meta.variant.name().to_string());
        let preprocess = PreprocessConfig {
            pca_dim: args.pca_dim,
            ..PreprocessConfig::default()
        };
        let k = args.k.unwrap_or(checkpoint.meta.k);
        let seed = args.seed.unwrap_or(checkpoint.meta.seeds.kmeans);
        let result = evaluate(&checkpoint.net, &dataset, k, preprocess, KMeansConfig::default(), seed, &method)?;
        if args.dump_features {
            result
                .features
                .write_csv(args.out.join(format!("features_{method}.csv")), Some(&result.labels))?;
        }
        reports.push(result.report);
        raw_reports.push(result.raw_report);
    }
    write_metrics_csv(&reports, args.out.join(METRICS_FILE))?;
    write_metrics_csv(&raw_reports, args.out.join(METRICS_RAW_FILE))
}

fn dcam_cmd(args: &DcamArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let dataset = load_manifest(&args.data)?;
    let subject = dataset.find(&args.subject).ok_or_else(|| {
        let ids: Vec<&str> = dataset.subjects.iter().map(|s| s.id.as_str()).collect();
        Error::InvalidParameter(format!("no subject {:?}; available: {}", args.subject, ids.join(", ")))
    })?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let dcam = match compute_dcam(&checkpoint.net, &checkpoint.head, subject) {
        Err(e @ Error::BaselineDcam { .. }) => {
            let path = args.out.join(format!("{}_dcam_refused.txt", subject.id));
            std::fs::write(&path, format!("{e}\n")).map_err(|io| Error::io(&path, io))?;
            return Err(e);
        }
        other => other?,
    };
    let channel = args.channel.unwrap_or(dcam.assigned_cluster);
    let paths = export_slices(&dcam, channel, args.axis, &args.out)?;
    if args.raw {
        save_channel(&dcam, channel, args.out.join(format!("{}_c{channel}.f32raw", subject.id)))?;
    }
    log::info!(
        "subject {} assigned to cluster {}; wrote {} slices",
        subject.id,
        dcam.assigned_cluster,
        paths.len()
    );
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BaselineDcam { .. } => 2,
        _ => 1,
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Dcam(a) => dcam_cmd(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if cli.version {
        println!("{}", version_string());
        return 0;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (gen-data, train, eval, dcam); see --help");
        return 1;
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return 1;
        }
    };
    match pool.install(|| dispatch(&command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Stem of the last checkpoint written by a finished training run.
pub fn final_checkpoint(run_dir: &Path) -> Result<PathBuf> {
    let path = run_dir.join(RUN_MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    Ok(run_dir.join(manifest.final_checkpoint))
}
