//! Adam training loop with KL warm-up, early stopping on validation
//! mse_45, best-checkpoint retention, and a per-epoch CSV curve.

use std::path::Path;

use serde::Serialize;

use crate::autodiff::graph::Graph;
use crate::autodiff::{stable_hash, AdamHyper, AdamState, RngState, Tensor};
use crate::data::{make_batches, PreparedDataset, Split};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, ModelConfig, Network, ParamSet};
use crate::train::loss::{compute_loss, LossWeights};
use crate::train::metrics::{evaluate_params, CornerMode};
use crate::util::sig6;

pub const CURVE_FILE: &str = "curve.csv";
const CURVE_HEADER: &str = "epoch,train_total,train_traj,train_goal,train_kl,val_mse45";

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Latent samples per training forward (best-of-K applies when > 1).
    pub k_train: usize,
    /// Latent samples for the validation metric.
    pub k_eval: usize,
    pub lambda_goal: f64,
    pub lambda_kl: f64,
    /// λ_KL ramps linearly from 0 to `lambda_kl` over this many epochs.
    pub kl_warmup_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            k_eval: model.k_samples,
            model,
            epochs: 50,
            lr: 1e-3,
            batch_size: 32,
            seed: 1,
            k_train: 1,
            lambda_goal: 1.0,
            lambda_kl: 1.0,
            kl_warmup_epochs: 10,
            patience: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.k_train == 0 || self.k_eval == 0 {
            return Err(Error::Config("latent sample counts must be at least 1".into()));
        }
        if self.lambda_goal < 0.0 || self.lambda_kl < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// NaN when the validation split is empty.
    pub best_val_mse45: f64,
    pub final_train_total: f64,
    pub final_train_trajectory: f64,
}

/// Patience-based stopping on a to-be-minimized metric. NaN metrics
/// (empty validation split) count as improvements so training runs to the
/// last epoch and keeps it.
struct EarlyStop {
    best: Option<f64>,
    stale: usize,
}

impl EarlyStop {
    fn new() -> Self {
        EarlyStop { best: None, stale: 0 }
    }

    /// Returns true when this value improves on the best so far.
    fn improved(&mut self, value: f64) -> bool {
        let better = value.is_nan() || self.best.map_or(true, |b| value < b);
        if better {
            self.best = Some(value);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        better
    }

    fn exhausted(&self, patience: usize) -> bool {
        self.stale >= patience
    }
}

fn check_dataset(dataset: &PreparedDataset, model: &ModelConfig) -> Result<()> {
    let m = &dataset.manifest;
    if m.obs_len != model.obs_len || m.pred_len != model.pred_len {
        return Err(Error::Config(format!(
            "dataset windows are {}+{} frames but the model expects {}+{}",
            m.obs_len, m.pred_len, model.obs_len, model.pred_len
        )));
    }
    if model.feature_mode.uses_pose() && !m.require_pose {
        return Err(Error::Config(format!(
            "feature mode {} needs pose, but the dataset was prepared without pose filtering",
            model.feature_mode
        )));
    }
    Ok(())
}

/// Trains on the prepared dataset and writes the best checkpoint plus
/// `curve.csv` into `out_dir`. Fully deterministic for a given seed.
pub fn train(dataset: &PreparedDataset, cfg: &TrainConfig, out_dir: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    check_dataset(dataset, &cfg.model)?;
    let train_samples = dataset.samples(Split::Train);
    if train_samples.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let val_samples = dataset.samples(Split::Val);

    let root = RngState::new(cfg.seed);
    let mut params = ParamSet::init(&cfg.model, &root.fork(stable_hash(b"params")))?;
    let mut adam = AdamState::new(params.tensors());
    let hyper = AdamHyper { lr: cfg.lr as f32, ..AdamHyper::default() };

    let mut csv = vec![CURVE_HEADER.to_string()];
    let mut stopper = EarlyStop::new();
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_val = f64::NAN;
    let mut last_total = f64::NAN;
    let mut last_traj = f64::NAN;
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let warm = if cfg.kl_warmup_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / cfg.kl_warmup_epochs as f64).min(1.0)
        };
        let weights = LossWeights { goal: cfg.lambda_goal, kl: cfg.lambda_kl * warm };

        let mut shuffle_rng = root.fork(stable_hash(format!("shuffle.{}", epoch).as_bytes()));
        let batches = make_batches(
            train_samples,
            cfg.model.feature_mode,
            cfg.batch_size,
            &mut shuffle_rng,
            true,
        )?;

        let mut sums = [0.0f64; 4];
        let mut n_samples = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let mut g = Graph::<f32>::new();
            let net = Network::<f32>::bind(&mut g, &cfg.model, &params)?;
            let mut fwd_rng = root.fork(stable_hash(format!("fwd.{}.{}", epoch, bi).as_bytes()));
            let out = net.forward(&mut g, batch, true, cfg.k_train, false, &mut fwd_rng)?;
            let losses = compute_loss(&mut g, &out, batch, &weights)?;
            g.backward(losses.total)?;

            let grads: Vec<Tensor> = net
                .param_nodes()
                .iter()
                .map(|&id| {
                    g.grad(id)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(g.value(id).shape().to_vec()))
                })
                .collect();
            adam.step(params.tensors_mut(), &grads, hyper)?;

            let b = batch.batch_size() as f64;
            for (slot, node) in [losses.total, losses.trajectory, losses.goal, losses.kl]
                .into_iter()
                .enumerate()
            {
                sums[slot] += g.value(node).item() as f64 * b;
            }
            n_samples += batch.batch_size();
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n_samples as f64).collect();
        last_total = means[0];
        last_traj = means[1];

        let val_mse45 = if val_samples.is_empty() {
            f64::NAN
        } else {
            evaluate_params(
                &cfg.model,
                &params,
                val_samples,
                cfg.k_eval,
                CornerMode::TopLeft,
                cfg.seed,
            )?
            .mse_45
        };

        csv.push(format!(
            "{},{},{},{},{},{}",
            epoch,
            sig6(means[0]),
            sig6(means[1]),
            sig6(means[2]),
            sig6(means[3]),
            sig6(val_mse45)
        ));

        if stopper.improved(val_mse45) {
            best_params = params.clone();
            best_epoch = epoch;
            best_val = val_mse45;
        }
        if stopper.exhausted(cfg.patience) {
            log::info!("early stop at epoch {} (best epoch {})", epoch, best_epoch);
            break;
        }
    }

    std::fs::create_dir_all(out_dir)?;
    save_checkpoint(out_dir, &cfg.model, &best_params)?;
    std::fs::write(out_dir.join(CURVE_FILE), csv.join("\n") + "\n")?;

    Ok(TrainReport {
        epochs_run,
        best_epoch,
        best_val_mse45: best_val,
        final_train_total: last_total,
        final_train_trajectory: last_traj,
    })
}
