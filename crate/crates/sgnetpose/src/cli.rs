//! Command-line entry point: synthetic data, dataset preparation,
//! training, evaluation, feature-mode ablation, live prediction, and a
//! finite-difference gradient audit. One subcommand per process; log
//! verbosity comes from `RUST_LOG`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::autodiff::RngState;
use crate::data::window::DEFAULT_POSE_CONFIDENCE;
use crate::data::{
    build_prepared, ingest, observation_windows, synth_generate, to_wire_line, FeatureMode,
    PrepareOptions, PreparedDataset, Split, SynthConfig,
};
use crate::error::{Error, Result};
use crate::model::load_checkpoint;
use crate::train::{
    ablation_run, evaluate_params, full_model_check, predict_sample, train, write_metrics_csv,
    CornerMode, TrainConfig, ABLATION_FILE,
};
use crate::util::sig6;

#[derive(Parser)]
#[command(
    name = "sgnetpose",
    version,
    about = "Stepwise-goal pedestrian trajectory prediction from bounding boxes and body pose"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotation JSONL with planted turn/stop events
    Synth(SynthArgs),
    /// Window, split, and optionally mirror-augment annotations into a dataset directory
    Prepare(PrepareArgs),
    /// Train a model on a prepared dataset and write a checkpoint
    Train(TrainArgs),
    /// Score a checkpoint on one split of a prepared dataset
    Evaluate(EvaluateArgs),
    /// Train and evaluate several feature modes across seeds
    Ablate(AblateArgs),
    /// Predict future boxes from each track's freshest observation window
    Predict(PredictArgs),
    /// Audit reverse-mode gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output JSONL path
    #[arg(long)]
    out: PathBuf,
    /// Number of pedestrian tracks
    #[arg(long, default_value_t = 100)]
    tracks: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Frame width in pixels
    #[arg(long, default_value_t = 1920)]
    width: u32,
    /// Frame height in pixels
    #[arg(long, default_value_t = 1080)]
    height: u32,
    /// Frames per track
    #[arg(long, default_value_t = 60)]
    track_len: usize,
    /// Frames of anticipatory shoulder lean before each event
    #[arg(long, default_value_t = 8)]
    lean_lead: usize,
    /// Constant-velocity tracks only, no turn/stop events
    #[arg(long)]
    no_events: bool,
}

#[derive(Args)]
struct PrepareArgs {
    /// Annotation JSONL to ingest
    #[arg(long)]
    input: PathBuf,
    /// Dataset directory to create
    #[arg(long)]
    out: PathBuf,
    /// Observed frames per sample
    #[arg(long, default_value_t = 15)]
    obs_len: usize,
    /// Future frames per sample
    #[arg(long, default_value_t = 45)]
    pred_len: usize,
    /// Frames between consecutive window starts
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Double the training split with horizontally mirrored copies
    #[arg(long)]
    flip_augment: bool,
    /// Mirror val/test too (counts every scene twice in evaluation)
    #[arg(long)]
    flip_all_splits: bool,
    /// Keep windows whose observed frames lack usable keypoints
    #[arg(long)]
    allow_missing_pose: bool,
    /// Mean keypoint confidence below which a pose counts as missing
    #[arg(long, default_value_t = DEFAULT_POSE_CONFIDENCE)]
    pose_conf: f64,
}

/// Model and optimization flags shared by `train` and `ablate`.
#[derive(Args)]
struct FitArgs {
    /// Embedding width for boxes, goals, and pose features
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    /// GRU hidden width
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    /// CVAE latent width
    #[arg(long, default_value_t = 16)]
    latent_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Latent samples per training forward pass (best-of-K when > 1)
    #[arg(long, default_value_t = 1)]
    k_train: usize,
    /// Latent samples for validation and test metrics
    #[arg(long, default_value_t = 20)]
    k_eval: usize,
    /// Weight of the stepwise goal term
    #[arg(long, default_value_t = 1.0)]
    lambda_goal: f64,
    /// Weight of the latent divergence term
    #[arg(long, default_value_t = 1.0)]
    lambda_kl: f64,
    /// Epochs over which the divergence weight ramps from 0 to --lambda-kl
    #[arg(long, default_value_t = 10)]
    kl_warmup: usize,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 10)]
    patience: usize,
}

impl FitArgs {
    /// Window lengths always come from the dataset manifest, never flags,
    /// so a checkpoint can only be trained on data it matches.
    fn train_config(&self, mode: FeatureMode, obs_len: usize, pred_len: usize) -> TrainConfig {
        let mut model = crate::model::ModelConfig::for_mode(mode);
        model.obs_len = obs_len;
        model.pred_len = pred_len;
        model.embed_dim = self.embed_dim;
        model.hidden_dim = self.hidden_dim;
        model.latent_dim = self.latent_dim;
        model.dropout = self.dropout;
        model.k_samples = self.k_eval;
        let mut cfg = TrainConfig::new(model);
        cfg.epochs = self.epochs;
        cfg.lr = self.lr;
        cfg.batch_size = self.batch_size;
        cfg.seed = self.seed;
        cfg.k_train = self.k_train;
        cfg.k_eval = self.k_eval;
        cfg.lambda_goal = self.lambda_goal;
        cfg.lambda_kl = self.lambda_kl;
        cfg.kl_warmup_epochs = self.kl_warmup;
        cfg.patience = self.patience;
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint and training curve
    #[arg(long)]
    out: PathBuf,
    /// Input features: bbox, bbox+pose, or bbox+angle
    #[arg(long, default_value = "bbox+pose")]
    features: String,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint directory written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Prepared dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Split to score: train, val, or test
    #[arg(long, default_value = "test")]
    split: String,
    /// Latent samples per window (default: the checkpoint's K)
    #[arg(long)]
    k: Option<usize>,
    /// Tracked point for corner metrics: top-left or centroid
    #[arg(long, default_value = "top-left")]
    corner: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the metrics CSV here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Prepared dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Output directory for per-run artifacts and the summary CSV
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated feature modes to compare
    #[arg(long, default_value = "bbox,bbox+pose,bbox+angle")]
    modes: String,
    /// Comma-separated training seeds per mode
    #[arg(long, default_value = "1,2,3")]
    seeds: String,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint directory written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Annotation JSONL with observed history per track
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL of predicted trajectories
    #[arg(long)]
    out: PathBuf,
    /// Latent draws per window; 1 predicts the prior mean deterministically
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Mean keypoint confidence below which a pose counts as missing
    #[arg(long, default_value_t = DEFAULT_POSE_CONFIDENCE)]
    pose_conf: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Seed for the checked parameters and probe batch
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Maximum tolerated relative error per coordinate
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

pub fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => cmd_synth(a),
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn require_file(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Usage(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::Usage(format!(
            "unknown split '{}' (expected train, val, or test)",
            other
        ))),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_tracks: a.tracks,
        frame_width: a.width,
        frame_height: a.height,
        track_len: a.track_len,
        events: !a.no_events,
        lean_lead: a.lean_lead,
    };
    let annotations = synth_generate(&cfg, &RngState::new(a.seed))?;
    let mut out = String::new();
    for ann in &annotations {
        out.push_str(&to_wire_line(ann));
        out.push('\n');
    }
    ensure_parent(&a.out)?;
    fs::write(&a.out, out)?;
    println!(
        "wrote {} annotations across {} tracks to {}",
        annotations.len(),
        a.tracks,
        a.out.display()
    );
    Ok(())
}

fn cmd_prepare(a: PrepareArgs) -> Result<()> {
    let (annotations, stats) = ingest(require_file(&a.input)?)?;
    let opts = PrepareOptions {
        obs_len: a.obs_len,
        pred_len: a.pred_len,
        stride: a.stride,
        require_pose: !a.allow_missing_pose,
        min_mean_confidence: a.pose_conf,
        flip_augment: a.flip_augment,
        flip_all_splits: a.flip_all_splits,
    };
    let dataset = build_prepared(&annotations, &opts)?;
    dataset.write(&a.out)?;
    let m = &dataset.manifest;
    println!(
        "ingested {} lines: {} accepted, {} rejected, {} clamped",
        stats.lines,
        stats.accepted,
        stats.rejected(),
        stats.clamped
    );
    println!(
        "samples: {} train / {} val / {} test (config {})",
        m.counts.train, m.counts.val, m.counts.test, m.config_hash
    );
    println!("dataset written to {}", a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mode: FeatureMode = a.features.parse()?;
    let dataset = PreparedDataset::load(&a.data)?;
    let cfg = a
        .fit
        .train_config(mode, dataset.manifest.obs_len, dataset.manifest.pred_len);
    let report = train(&dataset, &cfg, &a.out)?;
    println!(
        "trained {} epochs, best epoch {} (val mse_45 {})",
        report.epochs_run,
        report.best_epoch,
        sig6(report.best_val_mse45)
    );
    println!("checkpoint and curve written to {}", a.out.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let split = parse_split(&a.split)?;
    let corner: CornerMode = a.corner.parse()?;
    let (cfg, params) = load_checkpoint(&a.checkpoint)?;
    let dataset = PreparedDataset::load(&a.data)?;
    let k = a.k.unwrap_or(cfg.k_samples);
    let report = evaluate_params(&cfg, &params, dataset.samples(split), k, corner, a.seed)?;
    println!(
        "{} split, {} samples, best-of-{}, {} corner (config {})",
        a.split, report.samples, k, corner, report.config_hash
    );
    for (name, value) in report.rows() {
        println!("{:>6}  {} px^2", name, sig6(value));
    }
    if let Some(path) = &a.out {
        ensure_parent(path)?;
        write_metrics_csv(path, &report, &a.split)?;
        println!("metrics CSV written to {}", path.display());
    }
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let modes = a
        .modes
        .split(',')
        .map(|s| s.trim().parse::<FeatureMode>())
        .collect::<Result<Vec<_>>>()?;
    let seeds = a
        .seeds
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Usage(format!("bad seed '{}'", s.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = PreparedDataset::load(&a.data)?;
    let base = a.fit.train_config(
        modes[0],
        dataset.manifest.obs_len,
        dataset.manifest.pred_len,
    );
    let rows = ablation_run(&dataset, &base, &modes, &seeds, &a.out)?;
    println!(
        "{:<12} {:>4}  {:>26}  {:>26}",
        "mode", "runs", "mse_45 (mean ± sd)", "cfmse (mean ± sd)"
    );
    for r in &rows {
        println!(
            "{:<12} {:>4}  {:>14} ± {:>9}  {:>14} ± {:>9}",
            r.mode.to_string(),
            r.runs,
            sig6(r.mse_45.mean),
            sig6(r.mse_45.spread),
            sig6(r.cfmse.mean),
            sig6(r.cfmse.spread)
        );
    }
    println!(
        "per-run checkpoints and {} written to {}",
        ABLATION_FILE,
        a.out.display()
    );
    Ok(())
}

/// One output line per observation window.
#[derive(Serialize)]
struct PredictionRecord<'a> {
    video_id: &'a str,
    track_id: &'a str,
    last_observed_frame: i64,
    /// K trajectories, each `pred_len` boxes of `[x_min, y_min, x_max, y_max]`.
    predictions: &'a [Vec<[f64; 4]>],
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let (cfg, params) = load_checkpoint(&a.checkpoint)?;
    let (annotations, stats) = ingest(require_file(&a.input)?)?;
    if stats.rejected() > 0 {
        log::warn!("{} annotation lines rejected", stats.rejected());
    }
    let windows = observation_windows(
        &annotations,
        cfg.obs_len,
        cfg.feature_mode.uses_pose(),
        a.pose_conf,
    );
    let deterministic = a.k == 1;
    let root = RngState::new(a.seed);
    let mut out = String::new();
    for window in &windows {
        let mut rng = root.fork(window.provenance.stream_label());
        let predictions = predict_sample(&cfg, &params, window, a.k, deterministic, &mut rng)?;
        let record = PredictionRecord {
            video_id: &window.provenance.video_id,
            track_id: &window.provenance.track_id,
            last_observed_frame: window.provenance.start_frame + cfg.obs_len as i64 - 1,
            predictions: &predictions,
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    ensure_parent(&a.out)?;
    fs::write(&a.out, out)?;
    println!(
        "predicted {} windows, {} frames ahead, K={}, to {}",
        windows.len(),
        cfg.pred_len,
        a.k,
        a.out.display()
    );
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let report = full_model_check(a.seed, a.tolerance)?;
    println!(
        "gradient check passed: seed {}, {} coordinates, max rel err {:.3e}",
        report.seed, report.coordinates, report.max_rel_err
    );
    Ok(())
}
