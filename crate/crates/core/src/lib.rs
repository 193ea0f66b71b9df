pub mod backtest;
pub mod config;
pub mod error;
pub mod market_data;
pub mod models;
pub mod preprocess;
pub mod segment;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
