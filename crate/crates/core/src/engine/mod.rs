//! The training orchestrator.
//!
//! The master scatters per-device inputs, each device runs its GCN stack over
//! the full graph, the master gathers and concatenates the device outputs and
//! runs the classifier. On the way back the representation gradient is split
//! into column blocks, one per device. Devices own their parameters and
//! optimizer state and never exchange data with one another.

mod config;
mod metrics;
mod runtime;
mod trainer;
mod worker;

pub use config::{MetricKind, TrainConfig, Variant};
pub use metrics::{accuracy, auc_roc, evaluate};
pub use trainer::{
    build_run, expected_params, model_shape, train, EpochReport, Evaluation, ForwardPass, Run, RunSummary,
    TrainOutcome, MASTER_STREAM,
};
