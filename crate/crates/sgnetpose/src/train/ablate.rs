//! Feature-mode comparison: train each mode across a seed list and report
//! mean ± spread per metric, one row per mode.

use std::path::Path;

use crate::data::{FeatureMode, PreparedDataset, Split};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, ModelConfig};
use crate::train::metrics::{evaluate_params, CornerMode, MetricsReport};
use crate::train::trainer::{train, TrainConfig};
use crate::util::sig6;

pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Debug, Clone, Copy)]
pub struct AblationCell {
    pub mean: f64,
    /// Sample standard deviation over seeds; 0 for a single run.
    pub spread: f64,
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub mode: FeatureMode,
    pub runs: usize,
    pub mse_15: AblationCell,
    pub mse_30: AblationCell,
    pub mse_45: AblationCell,
    pub fmse: AblationCell,
    pub cmse: AblationCell,
    pub cfmse: AblationCell,
}

fn cell(values: &[f64]) -> AblationCell {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let spread = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    AblationCell { mean, spread }
}

fn summarize(mode: FeatureMode, reports: &[MetricsReport]) -> AblationRow {
    let pick = |f: fn(&MetricsReport) -> f64| cell(&reports.iter().map(f).collect::<Vec<_>>());
    AblationRow {
        mode,
        runs: reports.len(),
        mse_15: pick(|r| r.mse_15),
        mse_30: pick(|r| r.mse_30),
        mse_45: pick(|r| r.mse_45),
        fmse: pick(|r| r.fmse),
        cmse: pick(|r| r.cmse),
        cfmse: pick(|r| r.cfmse),
    }
}

fn model_for(base: &ModelConfig, mode: FeatureMode) -> ModelConfig {
    let mut m = base.clone();
    m.feature_mode = mode;
    m.pose_width = mode.pose_width();
    m
}

/// Trains every mode × seed combination (checkpoints land in per-run
/// subdirectories of `out_dir`), evaluates each run on the test split, and
/// writes `ablation.csv`.
pub fn ablation_run(
    dataset: &PreparedDataset,
    base: &TrainConfig,
    modes: &[FeatureMode],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<AblationRow>> {
    if modes.is_empty() || seeds.is_empty() {
        return Err(Error::Usage("ablation needs at least one mode and one seed".into()));
    }
    let test_samples = dataset.samples(Split::Test);
    if test_samples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }

    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.model = model_for(&base.model, mode);
            cfg.seed = seed;
            let run_dir = out_dir.join(format!("{}-s{}", mode.to_string().replace('+', "_"), seed));
            train(dataset, &cfg, &run_dir)?;
            let (model_cfg, params) = load_checkpoint(&run_dir)?;
            reports.push(evaluate_params(
                &model_cfg,
                &params,
                test_samples,
                cfg.k_eval,
                CornerMode::TopLeft,
                seed,
            )?);
        }
        rows.push(summarize(mode, &reports));
    }

    let mut csv = String::from(
        "mode,runs,mse_15_mean,mse_15_spread,mse_30_mean,mse_30_spread,mse_45_mean,mse_45_spread,\
         fmse_mean,fmse_spread,cmse_mean,cmse_spread,cfmse_mean,cfmse_spread\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.mode,
            r.runs,
            sig6(r.mse_15.mean),
            sig6(r.mse_15.spread),
            sig6(r.mse_30.mean),
            sig6(r.mse_30.spread),
            sig6(r.mse_45.mean),
            sig6(r.mse_45.spread),
            sig6(r.fmse.mean),
            sig6(r.fmse.spread),
            sig6(r.cmse.mean),
            sig6(r.cmse.spread),
            sig6(r.cfmse.mean),
            sig6(r.cfmse.spread),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(ABLATION_FILE), csv)?;
    Ok(rows)
}
