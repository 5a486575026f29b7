//! Sampling-based hallucination detection for LLM responses.
//!
//! Each query comes with several sampled responses. NLI scores between the
//! query and each response, and between every pair of responses, become
//! per-response features; a tree ensemble labels each response, and the
//! labels are aggregated into a query-level verdict with a confidence and a
//! pick of the most reliable response.

pub mod aggregation;
pub mod classifier;
pub mod cli;
pub mod dataset;
mod error;
pub mod features;
mod http;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nli;

pub use error::{Error, Result};
pub use http::{RetryPolicy, DEFAULT_INITIAL_BACKOFF};
