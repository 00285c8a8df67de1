//! Classifier chains over tabular multi-output data, with Shapley-value
//! explanations that split each feature's influence on an output into a
//! direct part and an indirect part carried through earlier outputs.

pub mod attribution;
pub mod chain;
pub mod chart;
pub mod data;
pub mod error;
pub mod experiment;
pub mod learner;
pub mod shapley;

pub use error::{Error, ErrorCategory, Result};
