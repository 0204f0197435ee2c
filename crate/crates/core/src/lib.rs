pub mod chunkers;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod distance;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod generation;
pub(crate) mod http;
pub mod retrieval;
pub mod segmenter;

pub use error::{Error, Result};
pub use http::RetryPolicy;
