pub mod cli;
pub mod config;
pub mod data;
pub mod evaluation;
mod error;
pub mod model;
pub mod forecaster;
pub mod objective;
pub mod seeds;
pub mod trainer;

pub use error::{Error, Result};
