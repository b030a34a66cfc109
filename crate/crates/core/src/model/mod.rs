//! The in-context tabular classifier.

pub mod checkpoint;
pub mod config;
pub mod encode;
pub mod net;
pub mod params;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::ModelConfig;
pub use encode::Encoding;
pub use net::{
    forward_sequence, predict, predict_batched, predict_chunked, predict_ensemble, predict_local,
    sequence_loss, sequences_loss_and_grads, BoundParams, ContextBatch, TrainSequence, EVAL_BATCH,
};
pub use params::{LayerParams, ModelParams};
