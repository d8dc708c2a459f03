//! Drift-aware in-context classification: a synthetic prior over temporally
//! shifting tabular tasks, a transformer trained on it, and an evaluation
//! harness for domain-indexed benchmarks.

pub mod benchmarks;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod optim;
pub mod prior;
pub mod rng;
pub mod scm;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
