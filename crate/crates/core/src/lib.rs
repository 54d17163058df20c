pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod physics;
pub mod setup;
pub mod synth;
pub mod thermometry;

pub use error::{Error, Result};
