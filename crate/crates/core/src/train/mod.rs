//! Loss, optimiser, sampling, metrics, the training loop and the ablation harness.

mod ablation;
mod metrics;
mod optim;
mod sampling;
mod trainer;

pub use ablation::{ablation_csv, run_ablation, AblationRow, Variant, ABLATION_CSV_HEADER};
pub use metrics::{compute_metrics, MetricsReport};
pub use optim::Adam;
pub use sampling::{resample_epoch, split_train_val};
pub use trainer::{evaluate, predict_all, train, train_with, EpochLog, TrainOutcome};
