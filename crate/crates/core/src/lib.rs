pub mod agents;
pub mod config;
pub mod encoder;
pub mod error;
pub mod gain;
pub mod gate;
pub mod graph;
pub mod lm;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod retrieval;
pub mod selector;
pub mod synth;
pub mod util;
pub mod verbalize;

pub use error::{Error, Result};
