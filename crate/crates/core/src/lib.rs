//! Compressive learning from mean-embedding sketches.
//!
//! A dataset is compressed to the empirical mean of a feature map, either a
//! data-adaptive Nyström map built from landmark points or random Fourier
//! features. k-means centers or diagonal Gaussian mixtures are then recovered
//! from the sketch alone by greedy moment matching ([`decoder::cl_ompr`]).
//!
//! The [`theory`] module computes the spectral quantities that govern how many
//! landmarks are needed (effective dimension, maximal leverage, projection
//! defect) on desk-scale datasets.

pub mod decoder;
pub mod error;
pub mod features;
pub mod kernel;
pub mod landmarks;
pub mod linalg;
pub mod rng;
pub mod sketch;
pub mod tasks;
pub mod theory;

mod codec;

pub use error::{Error, Result};
pub use features::{build_nystrom, build_rff, FeatureMap, MapFamily, NystromMap, RffMap};
pub use kernel::{GaussianKernel, SymMatrix};
pub use landmarks::{LandmarkSet, SamplingMethod};
pub use linalg::Matrix;
pub use sketch::{sketch_dataset, Sketch};
