//! Library side of the `trmf` command-line tool: configuration, file
//! formats, and the subcommand implementations. The binary in `main.rs` is a
//! thin argument-parsing wrapper over these.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::ReconcileMode;
pub use config::{MethodSpec, RunConfig};
pub use error::{CliError, CliResult};
