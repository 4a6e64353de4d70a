//! Spatial memory networks for visual question answering.
//!
//! Words of a question attend over the cells of an image grid; the attended
//! evidence plus a bag-of-words question vector predicts the answer. The
//! crate covers the whole loop: synthetic data, grid features, a small
//! reverse-mode autodiff tape, SGD training, evaluation and attention
//! visualization.

pub mod autograd;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod heuristic;
pub mod image;
pub mod manifest;
pub mod model;
pub mod optim;
pub mod param;
pub mod pipeline;
pub mod repro;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
