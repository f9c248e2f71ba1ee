pub mod encoder;
pub mod error;
pub mod graph;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
