//! Experiment harness for the `psept` library: configuration, the
//! benchmark computations and the subcommands of the `psept` binary.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;
pub mod synthetic;
pub mod validate;

pub use commands::{run, Outcome};
pub use config::{Method, RunConfig};
