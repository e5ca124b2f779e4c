//! Command implementations behind the `emcc` binary.
//!
//! Every command computes its outputs in memory first and only then writes
//! them, each through a temporary file renamed into place, so a failing
//! command leaves no partial output behind.

pub mod commands;
pub mod error;
pub mod output;

pub use commands::{Command, EmOverrides};
pub use error::{CliError, ExitCode};
