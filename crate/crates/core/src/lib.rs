//! High-order graph structure learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense matrices, a symmetric eigensolver and the proximal
//!   operators used by the structure learner.
//! * [`graph`]: graph representation, normalisations, Laplacians, feature
//!   smoothness and spectral diagnostics.
//! * [`datasets`]: edge-list ingestion, the canonical on-disk graph format,
//!   stochastic block model generation and train/val/test splits.
//! * [`attacks`]: structure poisoning under an edge budget.
//! * [`gcn`]: a two-layer GCN with hand-written backpropagation, including
//!   the gradient with respect to the normalised adjacency.
//! * [`learner`]: alternating proximal optimisation of the learned structure
//!   and the GCN parameters.
//! * [`gradcheck`]: finite-difference verification of the analytic
//!   gradients.

pub mod attacks;
pub mod datasets;
pub mod error;
pub mod gcn;
pub mod gradcheck;
pub mod graph;
pub mod learner;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, SymmetricEigen};
