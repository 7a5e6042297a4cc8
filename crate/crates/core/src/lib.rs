//! Differentially private synthetic data generation for labeled tabular data.
//!
//! The crate bundles five generators (RON-Gauss, conditional VAE, conditional
//! Wasserstein GAN, a star-shaped graphical model over noisy marginals, and a
//! PrivSyn-style marginal synthesizer), Gaussian-mechanism / RDP privacy
//! accounting, and an evaluation harness covering downstream utility,
//! statistical fidelity, co-expression-style structure metrics, and a
//! black-box membership-inference audit.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gen;
pub mod linalg;
pub mod marginals;
pub mod nn;
pub mod privacy;

pub use error::{Error, Result};
