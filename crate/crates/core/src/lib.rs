//! Curriculum training for image steganography.
//!
//! The crate contains a small reverse-mode autodiff engine, differentiable
//! image quality metrics, an encoder/decoder steganography model, a teacher
//! ladder that sorts cover images by how hard they are to hide data in, a
//! knee detector for stage transitions, and a CNN steganalyzer used to check
//! detectability of the resulting stego images.

pub mod cli;
pub mod config;
pub mod data;
pub mod difficulty;
pub mod error;
pub mod knee;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod schedule;
pub mod steganalysis;
pub mod tensor;

pub use error::{Error, Result};
