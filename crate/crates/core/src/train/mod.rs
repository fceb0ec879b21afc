//! Optimisation, training and evaluation loops, checkpoints, experiments and
//! gradient checking.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod gradcheck;
pub mod optim;
pub mod report;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::TrainConfig;
pub use experiments::{run_experiment, ExperimentKind, ALPHA_GRID, GRAIN_GRID, NATIVE_FUSION};
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport};
pub use optim::{adam_step, lr_schedule, AdamConfig, AdamState};
pub use report::{fmt_sig, read_matrix, write_matrix, write_psd_matrix, Report};
pub use trainer::{evaluate, mean_std, predict_dataset, repeated_runs, train, train_until, Metrics, RunSummary, TrainState};
