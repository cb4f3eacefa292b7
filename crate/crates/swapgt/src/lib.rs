//! File formats, caches, reports and command implementations around
//! `swapgt-core`.

pub mod cache;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod oracle;
pub mod report;
pub mod selftest;

pub use config::RunConfig;
pub use error::{CliError, Result};
