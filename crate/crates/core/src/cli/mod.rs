//! Command-line interface.

pub mod commands;
pub mod csvio;
pub mod report;

pub use commands::{run, Cli, ExitCode};
