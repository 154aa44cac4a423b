//! Configuration, training loops, metrics, checkpoints and verification.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{ConfigError, RunConfig, RunMode, Variant};
pub use metrics::{MetricsEvent, WinRate};
pub use train::{ablate, evaluate_checkpoint, evaluate_params, train, RunError, RunReport};
