//! Command-line pipeline for the crack segmentation laboratory: synthesize
//! or load a corpus, train, evaluate under a decision strategy, tune the
//! optimizer and compare strategies.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use config::{RunConfig, Strategy};
pub use error::{CliError, Result};
