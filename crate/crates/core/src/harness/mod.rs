//! Configuration, training loop, evaluation and artifacts.

pub mod config;
pub mod eval;
pub mod export;
pub mod sweep;
pub mod train;

pub use config::{Method, Precision, TrainConfig};
pub use eval::{evaluate, evaluate_adversarial, evaluate_corrupted, predict_all};
pub use sweep::{run_motivation_sweep, sweep_csv, SweepRow};
pub use train::{
    prepare_data, run_training, run_training_with, DataSplits, EpochRecord, FinalMetrics, Hooks,
    RunOutcome, RunReport,
};
