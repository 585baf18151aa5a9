pub mod booster;
pub mod cli;
pub mod data;
pub mod distributions;
pub mod error;
pub mod explain;
pub mod scoring;
pub mod simulation;
pub mod special;
pub mod tree;

pub use error::{Error, Result};
