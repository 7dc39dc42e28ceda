//! Byte-level binary classification toolkit: image encoders, a minimal
//! dense-tensor CNN engine, corpus tooling, and evaluation metrics.
//!
//! The pipeline turns arbitrary binary files into fixed-size image
//! representations (raw-byte grayscale or Hilbert-mapped windowed entropy),
//! trains a small three-class convolutional network on them, and scores the
//! result with per-class recall/precision/F1.

pub mod data;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
