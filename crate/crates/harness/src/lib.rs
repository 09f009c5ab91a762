//! Experiments, file formats and the `suot` command line for `suot-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod formats;

pub use error::{HarnessError, Result};
