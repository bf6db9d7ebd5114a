//! Share-concentration diagnostics.
//!
//! AKM-type inference relies on every sector being asymptotically small; with
//! heterogeneous treatment effects it additionally relies on regions not
//! spreading large shares over many sectors. These statistics quantify both
//! conditions on a concrete share matrix. No pass/fail verdict is attached:
//! the values are reported raw.

use super::SharesMatrix;
use crate::error::{Error, Result};
use serde::Serialize;

/// Concentration statistics of a share matrix.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    /// `max_s n_s / Σ_t n_t` — share of the largest sector.
    pub max_sector_share: f64,
    /// `max_s n_s² / Σ_t n_t²` — the largest sector's contribution to the
    /// variance normalization.
    pub max_sector_share_sq: f64,
    /// `T_N = Σ_{s≠t} (Σ_i w_is w_it)² / Σ_s n_s²`; small values support
    /// validity of the AKM standard error under heterogeneous effects.
    pub t_n: f64,
    /// `Σ_{s≠t} Σ_i w²_is w²_it / Σ_s n_s²` — alternative sufficient
    /// statistic for the same condition.
    pub overlap_sq: f64,
}

/// Computes [`DiagnosticsReport`] for a share matrix.
pub fn diagnostics(shares: &SharesMatrix) -> Result<DiagnosticsReport> {
    let n_s = shares.sector_sizes();
    let total: f64 = n_s.sum();
    if total == 0.0 {
        return Err(Error::Data("all shares are zero".into()));
    }
    let sum_sq: f64 = n_s.iter().map(|v| v * v).sum();
    let max_n = n_s.iter().copied().fold(0.0_f64, f64::max);

    let w = shares.weights();
    // T_N via the Gram matrix: Σ_{s≠t} (W'W)_{st}² = ||W'W||_F² − Σ_s (W'W)_ss².
    let gram = w.transpose() * w;
    let fro_sq: f64 = gram.iter().map(|v| v * v).sum();
    let diag_sq: f64 = (0..gram.nrows()).map(|i| gram[(i, i)] * gram[(i, i)]).sum();
    let t_n = (fro_sq - diag_sq) / sum_sq;

    // Σ_{s≠t} Σ_i w²_is w²_it via the Gram matrix of element-wise squares.
    let w_sq = w.map(|v| v * v);
    let gram_sq = w_sq.transpose() * w_sq;
    let total_sq: f64 = gram_sq.iter().sum();
    let trace_sq: f64 = (0..gram_sq.nrows()).map(|i| gram_sq[(i, i)]).sum();
    let overlap_sq = (total_sq - trace_sq) / sum_sq;

    Ok(DiagnosticsReport {
        max_sector_share: max_n / total,
        max_sector_share_sq: max_n * max_n / sum_sq,
        t_n,
        overlap_sq,
    })
}
