//! Synthesis, whitening and classification of low-SNR gravitational-wave
//! transients.
//!
//! The crate generates eight transient morphologies, injects them into white
//! noise at a chosen matched-filter SNR, whitens and standardizes the result,
//! and trains a suite of nine classifiers on the labeled windows.

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod nn;
pub mod noise;
pub mod rng;
pub mod spectral;
pub mod waveforms;

pub use error::{Error, Result};
