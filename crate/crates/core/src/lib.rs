//! Retrieval-augmented few-shot named entity recognition.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod harness;
pub mod modelclient;
pub(crate) mod parallel;
pub mod recognition;
pub mod retrieval;

pub use error::{Error, Result};
