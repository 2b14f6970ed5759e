pub mod dsp;
pub mod codec;
pub mod config;
pub mod error;
pub mod features;
pub mod latency;
pub mod nn;
pub mod real;
pub mod rvq;
pub mod tts;

pub use error::{Error, Result};
