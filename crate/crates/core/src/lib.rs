//! Dictionary learning with correlated-sparsity constraints.
//!
//! Three learners share the same building blocks: OMP sparse coding, the
//! K-SVD atom-by-atom dictionary update, and (for the elastic-net learner) a
//! proximal-gradient coder. Around them sit a synthetic fMRI-like data
//! generator, recovery metrics, and an ℓ1 K-means segmentation of
//! per-voxel coefficient vectors.

pub mod dictionary_update;
pub mod error;
pub mod io;
pub mod learners;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod segmentation;
pub mod sparse_coding;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::{
    gram, normalize_columns, reconstruction_error, spectral_norm, CoefficientMatrix, Dictionary,
    GramMatrix, SignalMatrix,
};
