//! Sentence-level content planning plus style-controlled surface realization
//! for conditional text generation.
//!
//! A planner selects keyphrases and a style per sentence; a realizer decodes
//! text conditioned on the plan through dual attention and a copy mechanism.
//! Everything runs on a small f64 tape with reverse-mode differentiation, and
//! evaluation metrics are self-contained.

pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod planner;
pub mod realizer;
pub mod stylelab;
pub mod training;

pub use config::{RunConfig, Task};
pub use error::{Error, Result};
