//! Library side of the `ftu` command: configuration, manifests, staged
//! output directories, and the command implementations.

pub mod commands;
pub mod config;
pub mod errors;
pub mod manifest;
pub mod stack;
pub mod stage;

pub use config::PipelineConfig;
pub use errors::{CliError, Result};
