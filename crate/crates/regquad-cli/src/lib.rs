//! Library surface of the experiment harness: config parsing, experiment
//! drivers, and the log-log slope fit. The `regquad` binary is a thin clap
//! wrapper over these modules.

pub mod config;
pub mod experiments;
pub mod slope;
