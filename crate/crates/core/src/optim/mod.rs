//! Adam, the training loop and held-out evaluation.

pub mod adam;
pub mod eval;
pub mod train;

pub use adam::{adam_step, params_per_gaussian, AdamState, GroupRates, ParamGroup};
pub use eval::{evaluate, view_metrics, EvalOptions, EvalReport, ViewMetrics};
pub use train::{
    initial_cloud, loss_decreased, median, train, LearningRates, MetricRecord, TrainConfig, TrainObserver, TrainOutcome,
};
