pub mod activity;
pub mod circular;
pub mod cli;
pub mod config;
pub mod cosinor;
pub mod error;
pub mod features;
pub mod ingest;
pub mod pipeline;
pub mod sleep;
pub mod stats;
pub mod synth;
pub mod time;
pub mod windowing;

pub use error::{Error, Result};
