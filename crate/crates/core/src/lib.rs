//! Retrieval-augmented tabular in-context learning, desk scale.
//!
//! A small prior-fitted transformer classifies tabular rows by attending
//! over labelled context examples. Prediction can use the full training set
//! as context or each query's k nearest neighbours; per-task fine-tuning
//! trains through shared local contexts. Everything is `f64`, seeded, and
//! bitwise reproducible on a given build.

pub mod data;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod training;

pub use data::{Dataset, Splits};
pub use error::{CoreError, Result};
pub use numerics::{BitMatrix, Tensor};
