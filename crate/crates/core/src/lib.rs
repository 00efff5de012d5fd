//! Multiscale spectral graph wavelet descriptors for triangulated surfaces.
//!
//! The crate is organised along the processing chain:
//!
//! * [`mesh`] loads, validates and measures surfaces (OFF, ASCII PLY and
//!   FreeSurfer binary).
//! * [`laplacian`] builds the cotangent Laplace-Beltrami discretisation,
//!   solves the generalized eigenproblem and provides the manifold harmonic
//!   transform and the ShapeDNA baseline.
//! * [`sgwt`] turns an eigensystem into per-vertex wavelet signatures.
//! * [`bof`] learns a vocabulary, soft-assigns signatures and pools them into
//!   per-surface histograms and per-subject descriptor columns.
//! * [`learn`] holds the evaluation harness: linear SVM with cross-validation,
//!   PLS regression with leave-one-out, and fold-paired significance tests.
//! * [`synth`] generates icospheres and bumped spheres with known spectra.
//! * [`pipeline`] wires everything into a cached, manifest-driven batch run.

pub mod bof;
pub mod error;
pub mod laplacian;
pub mod learn;
pub mod mesh;
pub mod pipeline;
pub mod sgwt;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};

/// Version string echoed into every emitted report.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
