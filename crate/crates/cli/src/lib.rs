//! Library side of the `referkit` command: file formats, run configuration,
//! the analysis pipeline, and the toy-model commands.

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;
pub mod toy;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{analyze, run};
pub use report::Report;
