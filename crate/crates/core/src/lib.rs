//! Graph-to-text generation with a transformer whose graph self-attention is
//! biased by learned scalars per signed shortest-path relative position.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decode;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod relpos;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
