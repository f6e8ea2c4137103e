//! Patch-based land-cover classification.
//!
//! Square `p × p × B` windows are cut around labeled pixels of a multiband
//! raster and fed to three classifiers: a one-vs-one RBF support vector
//! machine trained by SMO, a fully-connected ReLU network and a small 2D
//! convolutional network. The [`eval`] module scores them by overall
//! accuracy, sweeps patch sizes and renders classified maps; [`synth`]
//! produces labeled scenes for desk-scale experiments.

pub mod cnn;
pub mod config;
pub mod dense;
pub mod error;
pub mod eval;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod raster;
pub mod real;
pub mod svm;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
