//! Parameter sweeps over the pricing models, producing CSV and JSON
//! artifacts. Cells run in parallel; every file is assembled in cell order
//! so the bytes do not depend on the worker count.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod experiments;
pub mod grid;
pub mod table;

use thiserror::Error;

pub use config::{ExperimentKind, MarketSpec, Settings, SweepConfig};
pub use experiments::{run_experiment, ExperimentOutput, RunOptions};

#[derive(Debug, Error)]
pub enum SweepError {
    /// Malformed or inconsistent configuration; nothing was run.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
