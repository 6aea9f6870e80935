//! Sentiment classification of sentences by constrained completion: a grid of
//! prompts, a fixed set of reply strings per prompt, and an argmax over
//! likelihood scores returned by a language-model backend.
//!
//! Alongside the model-based classifier the crate ships a naive Bayes and a
//! random baseline, macro-F1 and Cohen's kappa, and seeded synthetic data.

pub mod baseline;
pub mod commands;
pub mod corpus;
pub mod error;
pub mod fewshot;
pub mod label;
pub mod metrics;
pub mod promptgrid;
pub mod remote;
pub mod report;
pub mod scoring;
pub mod synthetic;

pub use error::{BackendError, Error, Result};
pub use label::{Mode, SentimentLabel};
