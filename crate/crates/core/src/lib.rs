//! Sparse autoencoders over transformer activations, and the measurements
//! used to see how fine-tuning reshapes each layer: cosine-similarity
//! profiles, variance-ranked features and token-level feature reports.

pub mod actstore;
pub mod analysis;
pub mod charts;
pub mod cli;
pub mod error;
pub mod fsio;
pub mod numkit;
pub mod report;
pub mod sae;

pub use error::{Error, Result};
