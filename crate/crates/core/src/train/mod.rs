//! Optimization, evaluation, checkpoints and the low-resource harness.

pub mod checkpoint;
pub mod metrics;
pub mod optim;
pub mod sweep;
pub mod trainer;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use metrics::{
    cumulative_tp_diff, micro_f1, predict_labels, EvalReport, LabelCounts, ThresholdMode, ThresholdPolicy,
};
pub use optim::{OptimConfig, Optimizer, OptimizerKind, StepStats};
pub use sweep::{low_resource_sweep, SweepConfig, SweepPoint, SweepRun, SweepTable};
pub use trainer::{
    evaluate, prepare_language, train, DataConfig, EpochRecord, Evaluation, LanguageData, TrainConfig, TrainOutcome,
};
