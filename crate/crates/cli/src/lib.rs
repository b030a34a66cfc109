//! Library surface of the command-line tool, so integration tests can call
//! commands directly.

pub mod commands;
pub mod config;
pub mod datasets;
pub mod error;
pub mod ingest;
pub mod manifest;

pub use commands::circles::{cmd_circles_sweep, CirclesSweepArgs, CirclesSweepOutputs};
pub use commands::evaluate::{cmd_evaluate, EvaluateArgs, EvaluateOutputs};
pub use commands::finetune::{cmd_finetune, FinetuneArgs, FinetuneOutputs};
pub use commands::priorfit::{cmd_priorfit, PriorFitOutputs};
pub use config::ExperimentConfig;
pub use error::{CliError, ErrorKind};
