//! Experiment driver: configuration, the training loop, evaluation, the
//! expert × learner matrix and learning-curve plots.

mod config;
mod matrix;
mod plot;
mod train;

pub use config::{ConfigError, EarlyStop, ExperimentConfig};
pub use matrix::{
    load_matrix_metrics, run_matrix, summary_from_csv, summary_to_csv, Matrix, Method, Relation, RunResult, RunSpec,
    SUMMARY_HEADER,
};
pub use plot::{aggregate, emit_curves, Band, CurveInput, PlotError};
pub use train::{
    evaluate, evaluate_planner, evaluate_with, metrics_from_csv, metrics_to_csv, prepare_dataset, train,
    train_observed, write_outputs, EvalReport, MetricsRow, TrainError, TrainObserver, TrainOutcome, METRICS_HEADER,
};
