//! Loss assembly, Adam training loop, best-of-K metric evaluation, and
//! feature-mode ablation reporting.

mod ablate;
mod check;
mod loss;
mod metrics;
mod trainer;

pub use ablate::{ablation_run, AblationCell, AblationRow, ABLATION_FILE};
pub use check::{check_config, full_model_check, GradCheckReport};
pub use loss::{compute_loss, LossBreakdown, LossWeights};
pub use metrics::{
    best_of_k, evaluate_params, predict_sample, score_samples, write_metrics_csv, CornerMode,
    MetricsReport, SampleEval,
};
pub use trainer::{train, TrainConfig, TrainReport, CURVE_FILE};
