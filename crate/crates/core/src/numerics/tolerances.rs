//! Numerical tolerances shared across the crate.

/// Maximum `|m_ij - m_ji|` accepted by routines that require symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Relative Frobenius tolerance for `Q diag(λ) Qᵀ ≈ M` and `QᵀQ ≈ I`.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Slack allowed around the `[-1, 1]` spectrum of a normalised adjacency.
pub const SPECTRAL_TOL: f64 = 1e-8;

/// Symmetry guaranteed for stored graph adjacencies.
pub const GRAPH_SYMMETRY_TOL: f64 = 1e-12;
