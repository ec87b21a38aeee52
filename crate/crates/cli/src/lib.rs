//! Command-line front end: configuration, outcome bundles and the subcommands.
//!
//! Exit codes: 0 success, 2 input error, 3 failed internal certificate, 4 failed
//! mathematical check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod commands;
pub mod config;

pub use commands::{run, Cli, Command, ExitStatus};
pub use config::{Overrides, RunConfig};
