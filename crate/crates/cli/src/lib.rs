//! Files, configuration and commands around `sthsl-core`.

pub mod archive;
pub mod blob;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod events;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, Result};
