//! Command-line front end for partial-ner: corpus generation, masking, training,
//! evaluation and the experiment matrix.

pub mod commands;
pub mod config;
mod error;
pub mod experiment;
pub mod summary;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
