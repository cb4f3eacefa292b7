//! Training configuration, the optimization loop with early stopping,
//! repeated-run experiments and a logistic-regression baseline.

mod baseline;
mod config;
mod experiment;
mod trainer;

pub use baseline::{majority_rate, train_logistic, BaselineOutcome, LogisticConfig};
pub use config::{EffectiveSetup, TrainConfig, Variant};
pub use experiment::{
    mean_std, prepare_tables, run_experiment, run_experiment_with, run_seeds, ExperimentResult, RunRecord,
    INIT_SEED_OFFSET,
};
pub use trainer::{evaluate, predict_logits, sequences_for, train_one, EpochRecord, Evaluation, TrainOutcome, EVAL_CHUNK};
