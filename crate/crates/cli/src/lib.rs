//! `gnncca` command line: synthetic data, training, inference, evaluation
//! and baselines over the on-disk dataset formats.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gnncca::baselines::{sweep_thresholds, threshold_assoc, top1_assoc, BaselineMethod};
use gnncca::io::{clusterings_for, load_checkpoint, load_clustering, save_checkpoint, save_clustering, ClusterMap};
use gnncca::mpn::train;
use gnncca::{associate, evaluate_sequence, generate_scene, Checkpoint, Clustering, Dataset, Error, FrameGraph, Result, SequenceReport};

pub use config::RunConfig;

/// Environment variable capping worker threads; 0 means automatic.
pub const THREADS_ENV: &str = "GNNCCA_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gnncca", version, about = "Cross-camera pedestrian association with a message passing network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `KEY=VALUE` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Frames `START:END`, end exclusive.
    #[arg(long, value_name = "START:END")]
    frame_range: Option<String>,
    #[arg(long)]
    descriptor_dim: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-camera dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<String>,
        #[arg(long)]
        cameras: Option<String>,
        #[arg(long)]
        identities: Option<String>,
        #[arg(long)]
        noise_sigma: Option<String>,
        #[arg(long)]
        bias_sigma: Option<String>,
        #[arg(long)]
        miss_prob: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a labelled dataset and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch `epoch,lr,mean_loss` CSV.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<String>,
        #[arg(long)]
        batch: Option<String>,
        #[arg(long)]
        lr: Option<String>,
        #[arg(long)]
        warmup: Option<String>,
        #[arg(long)]
        momentum: Option<String>,
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        message_source: Option<String>,
        #[arg(long)]
        aggregation: Option<String>,
        #[arg(long)]
        grad_clip: Option<String>,
        #[arg(long)]
        positive_weight: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Cluster every frame of a dataset with a trained model.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<String>,
        #[arg(long)]
        no_prune: bool,
        #[arg(long)]
        no_split: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score a clustering file against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth clustering file.
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        truth: Option<PathBuf>,
        /// Dataset whose identities give the ground truth.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Writes `key=value` metrics here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a non-learned associator.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        appearance_threshold: Option<String>,
        #[arg(long)]
        spatial_threshold: Option<String>,
        #[arg(long)]
        no_normalize: bool,
        #[arg(long)]
        per_frame_normalization: bool,
        /// Prune and split the thresholded graph.
        #[arg(long)]
        post: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep a baseline threshold and report the score at each value.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure of one invocation, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Messages go to stdout, errors to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(argv) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("gnncca: {e}");
            e.exit_code()
        }
    }
}

/// Like [`run_cli`] but returns the text meant for stdout.
pub fn run<I, T>(argv: I) -> std::result::Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(e.render().to_string()),
                _ => Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
            };
        }
    };
    Ok(match cli.command {
        Command::Synth { out, frames, cameras, identities, noise_sigma, bias_sigma, miss_prob, common } => {
            let cfg = build_config(
                &common,
                &[
                    ("frames", "--frames", frames),
                    ("cameras", "--cameras", cameras),
                    ("identities", "--identities", identities),
                    ("noise_sigma", "--noise-sigma", noise_sigma),
                    ("bias_sigma", "--bias-sigma", bias_sigma),
                    ("miss_prob", "--miss-prob", miss_prob),
                ],
            )?;
            cmd_synth(&cfg, &out)?
        }
        Command::Train {
            data,
            out,
            loss_log,
            epochs,
            batch,
            lr,
            warmup,
            momentum,
            steps,
            message_source,
            aggregation,
            grad_clip,
            positive_weight,
            common,
        } => {
            let cfg = build_config(
                &common,
                &[
                    ("epochs", "--epochs", epochs),
                    ("batch_size", "--batch", batch),
                    ("lr", "--lr", lr),
                    ("warmup_epochs", "--warmup", warmup),
                    ("momentum", "--momentum", momentum),
                    ("steps", "--steps", steps),
                    ("message_source", "--message-source", message_source),
                    ("aggregation", "--aggregation", aggregation),
                    ("grad_clip", "--grad-clip", grad_clip),
                    ("positive_weight", "--positive-weight", positive_weight),
                ],
            )?;
            cmd_train(&cfg, &data, &out, loss_log.as_deref())?
        }
        Command::Infer { data, checkpoint, out, threshold, no_prune, no_split, common } => {
            let mut cfg = build_config(&common, &[("threshold", "--threshold", threshold)])?;
            cfg.prune &= !no_prune;
            cfg.split &= !no_split;
            cmd_infer(&cfg, &data, &checkpoint, &out)?
        }
        Command::Eval { pred, truth, data, report, common } => {
            let cfg = build_config(&common, &[])?;
            cmd_eval(&cfg, &pred, truth.as_deref(), data.as_deref(), report.as_deref())?
        }
        Command::Baseline {
            data,
            method,
            out,
            report,
            appearance_threshold,
            spatial_threshold,
            no_normalize,
            per_frame_normalization,
            post,
            common,
        } => {
            let mut cfg = build_config(
                &common,
                &[
                    ("method", "--method", method),
                    ("appearance_threshold", "--appearance-threshold", appearance_threshold),
                    ("spatial_threshold", "--spatial-threshold", spatial_threshold),
                ],
            )?;
            cfg.normalize &= !no_normalize;
            cfg.per_frame_normalization |= per_frame_normalization;
            cfg.baseline_post |= post;
            cmd_baseline(&cfg, &data, &out, report.as_deref())?
        }
        Command::Sweep { data, method, report, common } => {
            let cfg = build_config(&common, &[("method", "--method", method)])?;
            cmd_sweep(&cfg, &data, report.as_deref())?
        }
    })
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
fn build_config(common: &Common, flags: &[(&str, &str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for a in &common.set {
        cfg.apply_assignment(a)?;
    }
    let shared = [
        ("seed", "--seed", common.seed.clone()),
        ("frame_range", "--frame-range", common.frame_range.clone()),
        ("descriptor_dim", "--descriptor-dim", common.descriptor_dim.clone()),
    ];
    for (key, flag, value) in shared.iter().chain(flags) {
        if let Some(v) = value {
            cfg.set(key, v)
                .map_err(|e| Error::Config(format!("{flag}{}", e.strip_prefix(key).unwrap_or(&e))))?;
        }
    }
    Ok(cfg)
}

/// Worker count from the config, capped by [`THREADS_ENV`].
pub fn effective_threads(configured: usize) -> Result<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}: expected a whole number, got `{v}`")))?,
        Err(_) => 0,
    };
    Ok(match (configured, cap) {
        (c, 0) => c,
        (0, cap) => cap,
        (c, cap) => c.min(cap),
    })
}

fn load_dataset(cfg: &RunConfig, dir: &Path) -> Result<Dataset> {
    let mut ds = Dataset::load(dir, cfg.descriptor_dim)?;
    if cfg.normalize_descriptors {
        ds.store = ds.store.unit_normalized();
    }
    Ok(ds)
}

fn selected_frames(cfg: &RunConfig, ds: &Dataset) -> Vec<FrameGraph> {
    match cfg.frame_range {
        Some((a, b)) => ds.frames_in_range(a, b),
        None => ds.frames(),
    }
}

fn num_cameras(ds: &Dataset) -> usize {
    let mut cams: Vec<_> = ds.detections.iter().map(|d| d.camera).collect();
    cams.extend(ds.calibs.keys().copied());
    cams.sort_unstable();
    cams.dedup();
    cams.len().max(2)
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<String> {
    let scene = generate_scene(&cfg.scene_spec())?;
    let stats = scene.stats;
    let ds: Dataset = scene.into();
    ds.save(out)?;
    Ok(format!(
        "wrote {} detections over {} frames to {} (miss fraction {:.4}, {} out of view)\n",
        ds.detections.len(),
        cfg.frames,
        out.display(),
        stats.miss_fraction(),
        stats.out_of_view
    ))
}

fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, loss_log: Option<&Path>) -> Result<String> {
    let ds = load_dataset(cfg, data)?;
    let frames = selected_frames(cfg, &ds);
    let threads = effective_threads(cfg.threads)?;
    let outcome = train(&frames, &ds.store, &ds.calibs, &cfg.train_config(threads))?;
    save_checkpoint(out, &Checkpoint { params: outcome.params, seed: cfg.seed })?;
    let mut log = String::from("epoch,lr,mean_loss\n");
    let mut text = String::new();
    for h in &outcome.history {
        let _ = writeln!(log, "{},{},{}", h.epoch, h.lr, h.mean_loss);
        let _ = writeln!(text, "epoch {:>3}  lr {:.3e}  loss {:.6}", h.epoch, h.lr, h.mean_loss);
    }
    if let Some(path) = loss_log {
        write_file(path, log.as_bytes())?;
    }
    let _ = writeln!(text, "checkpoint written to {}", out.display());
    Ok(text)
}

fn cmd_infer(cfg: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<String> {
    let ds = load_dataset(cfg, data)?;
    let ckpt = load_checkpoint(checkpoint)?;
    if ckpt.params.descriptor_dim() != ds.store.dim() {
        return Err(Error::Config(format!(
            "{}: model expects {}-dim descriptors but {} has {}",
            checkpoint.display(),
            ckpt.params.descriptor_dim(),
            data.display(),
            ds.store.dim()
        )));
    }
    let frames = selected_frames(cfg, &ds);
    let post = cfg.post_processing();
    let clusterings = frames
        .iter()
        .map(|g| associate(g, &ckpt.params, &ds.store, &ds.calibs, &post))
        .collect::<Result<Vec<_>>>()?;
    save_clustering(out, &frames, &clusterings)?;
    let mut text = format!("clustered {} frames into {}\n", frames.len(), out.display());
    if let Some(report) = truth_report(&frames, &clusterings) {
        text.push_str(&report?.to_table());
    }
    Ok(text)
}

/// Scores against dataset identities when every detection has one.
fn truth_report(frames: &[FrameGraph], pred: &[Clustering]) -> Option<Result<SequenceReport>> {
    let labelled = frames.iter().all(|g| g.nodes.iter().all(|d| d.identity.is_some()));
    if !labelled || frames.is_empty() {
        return None;
    }
    Some(
        frames
            .iter()
            .map(FrameGraph::truth_clustering)
            .collect::<Result<Vec<_>>>()
            .and_then(|truth| evaluate_sequence(&truth, pred)),
    )
}

fn in_range(cfg: &RunConfig, map: ClusterMap) -> ClusterMap {
    match cfg.frame_range {
        Some((a, b)) => map.into_iter().filter(|((f, _, _), _)| *f >= a && *f < b).collect(),
        None => map,
    }
}

/// Per-frame clusterings of two maps over the same detections.
fn align(pred: &ClusterMap, truth: &ClusterMap, pred_origin: &str, truth_origin: &str) -> Result<(Vec<Clustering>, Vec<Clustering>)> {
    if let Some(k) = pred.keys().find(|k| !truth.contains_key(k)) {
        return Err(Error::Data(format!(
            "{pred_origin}: detection (frame {}, camera {}, det {}) missing from {truth_origin}",
            k.0, k.1, k.2
        )));
    }
    if let Some(k) = truth.keys().find(|k| !pred.contains_key(k)) {
        return Err(Error::Data(format!(
            "{truth_origin}: detection (frame {}, camera {}, det {}) missing from {pred_origin}",
            k.0, k.1, k.2
        )));
    }
    let mut frames: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (k, &p) in pred {
        let entry = frames.entry(k.0).or_default();
        entry.0.push(p);
        entry.1.push(truth[k]);
    }
    Ok(frames
        .into_values()
        .map(|(p, t)| (Clustering::from_labels(&p), Clustering::from_labels(&t)))
        .unzip())
}

fn cmd_eval(cfg: &RunConfig, pred: &Path, truth: Option<&Path>, data: Option<&Path>, report: Option<&Path>) -> Result<String> {
    let pred_map = in_range(cfg, load_clustering(pred)?);
    let pred_origin = pred.display().to_string();
    let (p, t) = match (truth, data) {
        (Some(truth), _) => {
            let truth_map = in_range(cfg, load_clustering(truth)?);
            align(&pred_map, &truth_map, &pred_origin, &truth.display().to_string())?
        }
        (None, Some(dir)) => {
            let ds = load_dataset(cfg, dir)?;
            let frames = selected_frames(cfg, &ds);
            let p = clusterings_for(&frames, &pred_map, &pred_origin)?;
            let t = frames
                .iter()
                .map(FrameGraph::truth_clustering)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
            (p, t)
        }
        (None, None) => return Err(Error::Config("eval needs --truth or --data".into())),
    };
    let result = evaluate_sequence(&t, &p)?;
    if let Some(path) = report {
        write_file(path, result.to_key_values().as_bytes())?;
    }
    Ok(result.to_table())
}

fn cmd_baseline(cfg: &RunConfig, data: &Path, out: &Path, report: Option<&Path>) -> Result<String> {
    let ds = load_dataset(cfg, data)?;
    let frames = selected_frames(cfg, &ds);
    let base = cfg.baseline_config(num_cameras(&ds));
    base.validate()?;
    let clusterings = match cfg.method {
        BaselineMethod::Top1 => top1_assoc(&frames, &ds.store)?,
        _ => threshold_assoc(&frames, &ds.store, &ds.calibs, &base)?,
    };
    save_clustering(out, &frames, &clusterings)?;
    let mut text = format!("{}: clustered {} frames into {}\n", cfg.method.as_str(), frames.len(), out.display());
    if let Some(r) = truth_report(&frames, &clusterings) {
        let r = r?;
        if let Some(path) = report {
            write_file(path, r.to_key_values().as_bytes())?;
        }
        text.push_str(&r.to_table());
    } else if report.is_some() {
        return Err(Error::Data(format!("{}: --report needs identities on every detection", data.display())));
    }
    Ok(text)
}

fn cmd_sweep(cfg: &RunConfig, data: &Path, report: Option<&Path>) -> Result<String> {
    let ds = load_dataset(cfg, data)?;
    let frames = selected_frames(cfg, &ds);
    let base = cfg.baseline_config(num_cameras(&ds));
    base.validate()?;
    let sweep = sweep_thresholds(&frames, &ds.store, &ds.calibs, &base)?;
    let mut csv = String::from("threshold,ari,ami,homogeneity,completeness,v_measure\n");
    let mut text = format!("{} sweep over {} frames\n{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}\n", cfg.method.as_str(), frames.len(), "th", "ARI", "AMI", "H", "C", "V-m");
    for (th, r) in &sweep.entries {
        let v = r.mean.values();
        let _ = writeln!(csv, "{th},{},{},{},{},{}", v[0], v[1], v[2], v[3], v[4]);
        let _ = write!(text, "{th:>9.2}");
        for x in v {
            let _ = write!(text, "{:>9.2}", 100.0 * x);
        }
        text.push('\n');
    }
    let _ = writeln!(text, "best threshold {} (V-m {:.2})", sweep.best_threshold, 100.0 * sweep.best().mean.v_measure);
    if let Some(path) = report {
        write_file(path, csv.as_bytes())?;
    }
    Ok(text)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
