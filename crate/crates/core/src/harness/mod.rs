//! Training, cross-validation, ablations and reports.

mod ablate;
mod config;
mod dataset;
mod protocol;
mod train;

pub use ablate::{ablate, ablation_configs, AblationAxis, AblationReport, AblationRow, POSITION_SETS};
pub use config::TrainConfig;
pub use dataset::{scan_name, synthetic_subjects, Dataset, Item, Needs};
pub use protocol::{build_folds, mean_std, run_protocol, FoldPlan, FoldResult, ProtocolReport};
pub use train::{
    argmax, batches, echo, evaluate, evaluate_on, predict, train, train_on, ConfusionMatrix, EpochLog, RunLog,
    NUM_CLASSES,
};
