//! Exposure-robust (AKM) standard errors, with optional sector clustering and
//! the estimated-shifter (leave-one-out) variance correction.

use super::{confset::ConfidenceSet, z_critical, InferenceResult, Method, SectorProjection, SectorTerms};
use crate::data::SharesMatrix;
use crate::error::{Error, Result};
use crate::estimate::{FitMode, FitResult, LooInstrument};
use crate::linalg;
use nalgebra::DMatrix;

/// AKM standard error `√(Σ_c (Σ_{s∈c} 𝒳̂_s R̂_s)²) / |denom|`.
///
/// Without `sector_cluster` every sector is its own cluster, which recovers
/// the independent-shifter formula. In IV mode the residuals are structural
/// and the denominator is `|Σ ω x̋ y2|`.
pub fn se_akm(
    fit: &FitResult,
    shares: &SharesMatrix,
    projection: &SectorProjection,
    sector_cluster: Option<&[String]>,
    level: f64,
) -> Result<InferenceResult> {
    let s = shares.n_sectors();
    if projection.x_hat_sector.len() != s {
        return Err(Error::Dimension("sector projection length differs from S".into()));
    }
    if let Some(labels) = sector_cluster {
        if labels.len() != s {
            return Err(Error::Dimension("sector cluster labels length differs from S".into()));
        }
    }
    let r_s = super::sector_sums(shares, &fit.residuals, fit.obs_weight());
    let terms = projection.x_hat_sector.component_mul(&r_s);
    let meat: f64 = super::cluster_groups(sector_cluster, s)
        .iter()
        .map(|g| {
            let t: f64 = g.iter().map(|&j| terms[j]).sum();
            t * t
        })
        .sum();
    let se = meat.sqrt() / fit.denom.abs();
    let z = z_critical(level)?;
    Ok(InferenceResult {
        method: if sector_cluster.is_some() { Method::AkmCluster } else { Method::Akm },
        estimate: fit.estimate(),
        se: Some(se),
        confset: ConfidenceSet::centered(fit.estimate(), se, level, z),
        se_no_correction: None,
        sector_terms: Some(SectorTerms {
            r_s: r_s.iter().copied().collect(),
            x_hat_sector: projection.x_hat_sector.iter().copied().collect(),
        }),
    })
}

/// Pairwise leave-one-out terms
/// `S_ij = Σ_s 1{i≠j} w_is w̌_js ψ̂_js ω_i ε̂_i / ň_{s,−i}`
/// and their aggregate `Σ_j (Σ_i S_ij)² + Σ_{i,j} S_ij S_ji`.
pub fn loo_pairwise_terms(
    fit: &FitResult,
    shares: &SharesMatrix,
    loo: &LooInstrument,
) -> Result<(DMatrix<f64>, f64)> {
    let (n, s) = (shares.n_regions(), shares.n_sectors());
    if loo.psi_hat.shape() != (n, s) {
        return Err(Error::Dimension(
            "leave-one-out instrument does not match the share matrix".into(),
        ));
    }
    let w = shares.weights();
    let ratio = DMatrix::from_fn(n, s, |i, j| {
        if w[(i, j)] > 0.0 { w[(i, j)] / loo.loo_totals[(i, j)] } else { 0.0 }
    });
    let shock = loo.agg_weights.component_mul(&loo.psi_hat);
    let mut pair = ratio * shock.transpose();
    let eps = linalg::wscale(&fit.residuals, fit.obs_weight());
    for i in 0..n {
        pair.row_mut(i).scale_mut(eps[i]);
        pair[(i, i)] = 0.0;
    }

    let mut extra = 0.0;
    for j in 0..n {
        let colsum: f64 = pair.column(j).sum();
        extra += colsum * colsum;
    }
    for i in 0..n {
        for j in 0..n {
            extra += pair[(i, j)] * pair[(j, i)];
        }
    }
    Ok((pair, extra))
}

/// AKM standard error for the leave-one-out IV estimator, adding the
/// variance contributed by estimating the shifters themselves.
///
/// The extra term comes from [`loo_pairwise_terms`]; the total variance is
/// `(Σ_s (𝒳̂_s R̂_s)² + extra) / denom²`, floored at zero since the
/// plug-in cross products can be negative in finite samples. The result also
/// carries the uncorrected standard error for comparison.
pub fn se_akm_loo(
    fit: &FitResult,
    shares: &SharesMatrix,
    projection: &SectorProjection,
    loo: &LooInstrument,
    level: f64,
) -> Result<InferenceResult> {
    if fit.mode != FitMode::Iv {
        return Err(Error::Data("leave-one-out correction is defined for IV fits".into()));
    }
    let base = se_akm(fit, shares, projection, None, level)?;
    let meat = {
        let se = base.se.expect("akm se");
        se * se * fit.denom * fit.denom
    };
    let (_, extra) = loo_pairwise_terms(fit, shares, loo)?;
    let variance = ((meat + extra) / (fit.denom * fit.denom)).max(0.0);
    let se = variance.sqrt();
    let z = z_critical(level)?;
    Ok(InferenceResult {
        method: Method::AkmLoo,
        estimate: fit.estimate(),
        se: Some(se),
        confset: ConfidenceSet::centered(fit.estimate(), se, level, z),
        se_no_correction: base.se,
        sector_terms: base.sector_terms,
    })
}
