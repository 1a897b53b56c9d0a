//! Config-driven experiment orchestration: training on the base layout,
//! few-shot transfer to the shifted variants, frozen evaluation, metrics
//! CSVs, checkpoints and learning-curve plots.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use metrics::{read_metrics_csv, MetricsRecord, MetricsWriter, RunTags};
pub use plot::{emit_plots, PlotError};
pub use run::{
    evaluate, save_checkpoint, train, transfer, EvalOutput, HarnessError, Runner, TrainOutput,
    TransferOutput,
};
