pub mod cli;
pub mod codec;
pub mod coding_meta;
pub mod enhance;
pub mod error;
pub mod frame_io;
pub mod ilf;
pub mod metrics;
pub mod nn;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
