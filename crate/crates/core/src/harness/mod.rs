//! Configuration, persistence, training, evaluation and the canned experiments.

mod checkpoint;
mod config;
mod evaluate;
mod gradcheck;
mod reproduce;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_HEADER};
pub use config::{ExperimentConfig, FeatureSubset};
pub use evaluate::{evaluate, evaluate_checkpoint, predict_all, EvalSpec};
pub use gradcheck::{gradcheck_batch, gradcheck_model, model_config, GRADCHECK_BATCH};
pub use reproduce::{
    reproduce, reproduce_all, run_cell, timing_text, Cell, CellResult, Check, Claim, ClaimReport,
    CHECK_K, SEEDS,
};
pub use train::{steps_per_epoch, train, training_records, TrainOutcome};
