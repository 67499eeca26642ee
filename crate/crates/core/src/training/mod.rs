//! Losses, the Adam optimizer, the bag-per-step training loop, metrics and
//! the finite-difference gradient oracle.

mod adam;
pub mod gradcheck;
mod loss;
mod metrics;
mod train;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use loss::{loss, Target};
pub use metrics::{micro_f1, MetricCounts};
pub use train::{
    evaluate, evaluate_counts, metric_name, train, train_step, EpochRecord, TrainConfig,
    TrainReport,
};
