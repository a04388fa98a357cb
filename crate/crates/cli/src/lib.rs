//! Library side of the `randcoef` command-line tool: data loading, run
//! configuration, artifact writing and the subcommand implementations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod output;

pub use error::{CliError, CliResult};
