//! Reproducible command-line runs on top of `vclass_core`: pump sweeps,
//! single-point criteria, homodyne sampling and squeezer fits.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::Format;
pub use config::RunConfig;
pub use error::{exit, CliError};
