//! Command-line plumbing: run configuration, CSV/JSON formats, the seeded
//! noise generator and the command implementations behind the `bjj` binary.

pub mod commands;
pub mod config;
pub mod report;
pub mod rng;
pub mod series;

pub use commands::CliError;
pub use config::{Mode, RunConfig};
