//! Experiment harness for the `tdadc` model: spec files, command dispatch and
//! self-describing artifacts.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{load_spec, parse_spec, Command, ExperimentSpec, OutputFormat};
pub use error::{HarnessError, Result};
pub use output::{encode, Outcome};
pub use run::run;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "TDADC_WORKERS";
