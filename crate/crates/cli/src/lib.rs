//! Stage commands and end-to-end pipeline for context-aware safety
//! monitoring. Each stage reads and writes artifacts in one output
//! directory; the in-memory steps live in [`workflow`].

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;
pub mod workflow;

pub use config::{ContextSource, PipelineConfig};
pub use error::{CliError, CliResult};
