//! Command-line driver for the `lowrank-sdp` solver: instance generation,
//! solving, baselines, diagnostics and rank comparison.

pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;
pub mod trace;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
