//! Experiment harness for `mimo-core`: Monte Carlo driving on common random
//! numbers, result aggregation, CSV/JSON output and the property suite.

pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod output;
pub mod validate;

pub use error::{Result, SimError};
