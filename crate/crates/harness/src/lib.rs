//! Experiment harness for the implicit delta method: JSON configs, CSV
//! datasets, replicate fan-out, and the `idm` command line.

pub mod config;
pub mod csvio;
pub mod error;
pub mod experiments;
pub mod pipeline;
pub mod pool;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::{run, Outcome};
