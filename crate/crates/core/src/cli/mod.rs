//! Batch driver behind the `nodal-tangency` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod run;
pub mod suites;

pub use commands::main;
pub use config::RunConfig;
