//! Command-line workflows and the moderation service.

pub mod commands;
pub mod config;
pub mod service;
pub mod workspace;

use std::path::PathBuf;

pub use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] toxcl_core::Error),

    #[error("config error: {0}")]
    Config(String),

    /// A required earlier stage has not been run.
    #[error("missing prerequisite: {0} (run the earlier stage first)")]
    MissingPrerequisite(String),

    #[error("output directory {} is locked by another run", .0.display())]
    Locked(PathBuf),
}
