//! Library side of the `rulediff` command: configuration, run directories and the staged pipeline.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{ProviderConfig, RunConfig};
pub use error::{CliError, CliResult};
pub use pipeline::{run_pipeline, RunOptions, Stage};
