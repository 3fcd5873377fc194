//! Bayesian-network style classifiers for peptide activity.
//!
//! Descriptors are transformed into ranks relative to a combinatorial chemical
//! space ([`chemspace`]), modeled with two-state Gaussian mixtures ([`qspr`]),
//! and combined with a sparse motif model over raw sequences ([`motif`]).
//! [`eval`] holds ROC/cutoff/confusion machinery and a linear SVM baseline.

pub mod chemspace;
pub mod combined;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod motif;
pub mod qspr;
pub mod rng;
pub mod seq;

pub use error::{Error, Result};
