//! Spectral diagnostics of the normalised adjacency and the second-order
//! Laplacian trace gap.

use serde::{Deserialize, Serialize};

use super::normalize::{normalized_power, NormalizedAdjacency};
use super::Graph;
use crate::error::{Error, Result};
use crate::numerics::tolerances::SPECTRAL_TOL;
use crate::numerics::{sym_eigenvalues, DenseMatrix};

/// Slack for `|λᵏ| ≤ |λ|`.
const POWER_TOL: f64 = 1e-10;
/// Slack for comparing the spectrum of `Âᵏ` with `λᵏ`.
const MAPPING_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Spectrum of `Â`, sorted descending.
    pub eigenvalues: Vec<f64>,
    pub max_abs: f64,
    pub max_eigenvalue: f64,
    /// `|λᵏ| ≤ |λ|` for every eigenvalue and `k = 2, 3`.
    pub power_contraction: bool,
    /// Largest deviation between the sorted spectrum of `Âᵏ` (computed
    /// directly) and the sorted `λᵏ`, for `k = 2, 3`.
    pub power_mapping_error: [f64; 2],
}

impl SpectralReport {
    pub fn bounded(&self) -> bool {
        self.max_abs <= 1.0 + SPECTRAL_TOL
    }

    pub fn attains_one(&self) -> bool {
        (self.max_eigenvalue - 1.0).abs() <= SPECTRAL_TOL
    }

    pub fn mapping_holds(&self) -> bool {
        self.power_mapping_error.iter().all(|&e| e <= MAPPING_TOL)
    }

    /// Every spectral property holds.
    pub fn verify(&self) -> Result<()> {
        if !self.bounded() {
            return Err(Error::Numerical(format!(
                "normalised adjacency has |λ| = {} > 1",
                self.max_abs
            )));
        }
        if !self.attains_one() {
            return Err(Error::Numerical(format!(
                "largest eigenvalue {} differs from 1",
                self.max_eigenvalue
            )));
        }
        if !self.power_contraction {
            return Err(Error::Numerical("|λᵏ| > |λ| for some eigenvalue".into()));
        }
        if !self.mapping_holds() {
            return Err(Error::Numerical(format!(
                "spectrum of Âᵏ deviates from λᵏ by {:?}",
                self.power_mapping_error
            )));
        }
        Ok(())
    }
}

pub fn spectral_check(na: &NormalizedAdjacency) -> Result<SpectralReport> {
    let eigenvalues = sym_eigenvalues(&na.matrix)?;
    let max_abs = eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let max_eigenvalue = eigenvalues.first().copied().unwrap_or(f64::NAN);
    let power_contraction = eigenvalues
        .iter()
        .all(|&l| (2..=3).all(|k| l.powi(k).abs() <= l.abs() + POWER_TOL));

    let mut power_mapping_error = [0.0; 2];
    for (slot, k) in power_mapping_error.iter_mut().zip([2usize, 3]) {
        let direct = sym_eigenvalues(&normalized_power(na, k)?)?;
        let mut mapped: Vec<f64> = eigenvalues.iter().map(|l| l.powi(k as i32)).collect();
        mapped.sort_by(|a, b| b.total_cmp(a));
        *slot = direct
            .iter()
            .zip(&mapped)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    }

    Ok(SpectralReport {
        eigenvalues,
        max_abs,
        max_eigenvalue,
        power_contraction,
        power_mapping_error,
    })
}

/// `tr(L − L₂)` for `L = D̃ − Ã` and a second-order Laplacian `L₂`.
///
/// Two degree conventions are evaluated. With self-loop degrees,
/// `L₂ = D̃ − Ã D̃⁻¹ Ã`, the gap is identically zero on binary graphs because
/// `(Ã D̃⁻¹ Ã)ᵢᵢ = Σⱼ Ãᵢⱼ / d̃ⱼ` sums to `N` overall. With raw degrees inside
/// the inverse, `L₂ = D̃ − Ã D⁻¹ Ã`, the gap equals the closed form
/// `Σᵢ 1/dᵢ`, which needs every node to have at least one neighbour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceGapReport {
    /// Direct trace with `D⁻¹` (raw degrees); `None` when isolated nodes exist.
    pub direct: Option<f64>,
    /// Closed form `Σᵢ 1/dᵢ`; `None` when isolated nodes exist.
    pub closed_form: Option<f64>,
    /// Direct trace with `D̃⁻¹` (self-loop degrees).
    pub direct_self_loop: f64,
    pub isolated_nodes: usize,
}

impl TraceGapReport {
    pub fn positive(&self) -> bool {
        self.direct.is_some_and(|d| d > 0.0)
    }

    pub fn closed_form_error(&self) -> Option<f64> {
        Some((self.direct? - self.closed_form?).abs())
    }
}

pub fn trace_gap(g: &Graph) -> Result<TraceGapReport> {
    let a = g.adjacency();
    let n = g.n();
    let degree = g.degrees();
    let isolated_nodes = degree.iter().filter(|&&d| d == 0.0).count();

    let direct_self_loop = gap_with(a, &degree.iter().map(|d| d + 1.0).collect::<Vec<_>>())?;
    let (direct, closed_form) = if isolated_nodes == 0 && n > 0 {
        (
            Some(gap_with(a, &degree)?),
            Some(degree.iter().map(|d| 1.0 / d).sum()),
        )
    } else {
        (None, None)
    };
    Ok(TraceGapReport {
        direct,
        closed_form,
        direct_self_loop,
        isolated_nodes,
    })
}

/// `tr(L) − tr(D̃ − Ã diag(1/inner) Ã)` computed from the matrices.
fn gap_with(a: &DenseMatrix, inner: &[f64]) -> Result<f64> {
    let n = a.rows();
    let mut tilde = a.clone();
    for i in 0..n {
        tilde[(i, i)] += 1.0;
    }
    let d_tilde = tilde.row_sums();
    let ones = vec![1.0; n];
    let inv: Vec<f64> = inner.iter().map(|d| 1.0 / d).collect();
    let second = tilde.scale_rows_cols(&ones, &inv)?.matmul(&tilde)?;
    let l_trace: f64 = (0..n).map(|i| d_tilde[i] - tilde.get(i, i)).sum();
    let l2_trace: f64 = (0..n).map(|i| d_tilde[i] - second.get(i, i)).sum();
    Ok(l_trace - l2_trace)
}
