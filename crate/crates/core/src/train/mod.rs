//! Focal loss, the training loop, metrics, feature ablation and reports.

mod ablate;
mod gradsuite;
mod loss;
mod metrics;
mod report;
mod trainer;

pub use ablate::{ablate_features, Ablation, AblationRow};
pub use gradsuite::{run_gradcheck_suite, toy_cloud, toy_spec, GradCheckLine, GradSuiteConfig, SUITE_OPS};
pub use loss::{focal_loss, focal_term, targets, FocalLossParams, FocalOutput, PROB_CLAMP};
pub use metrics::{
    confusion, f1_score, macro_average, precision_recall_f1, ClassMetrics, ConfusionMatrix, Metrics,
};
pub use report::{format_confusion, format_table, human_count, ConfusionReport, Report};
pub use trainer::{
    coverage_passes, evaluate, predict_cloud, train, train_with, CloudPrediction, EpochRecord, Evaluation,
    TrainConfig, TrainOutcome,
};
