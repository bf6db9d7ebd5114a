//! Heteroskedasticity-robust and region-clustered sandwich standard errors.

use super::{confset::ConfidenceSet, z_critical, InferenceResult, Method};
use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::linalg;

/// Options for [`se_conventional`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ConventionalOptions {
    /// Apply the usual small-sample factors (HC1 for robust, `G/(G−1) ·
    /// (N−1)/(N−p)` for clusters). Off by default: the asymptotic formulas
    /// are reproduced as printed.
    pub small_sample: bool,
}

/// Sandwich standard error: robust (each observation its own cluster) when
/// `region_cluster` is `None`, cluster-robust otherwise.
///
/// The meat is `Σ_g (Σ_{i∈g} ω_i x̋_i ε̂_i)²` and the bread the squared
/// denominator of the fit (`Σ ω x̋²` for OLS, `Σ ω x̋ y2` for IV, where the
/// residuals are the structural ones).
pub fn se_conventional(
    fit: &FitResult,
    region_cluster: Option<&[String]>,
    level: f64,
    options: ConventionalOptions,
) -> Result<InferenceResult> {
    let n = fit.residuals.len();
    let phi = linalg::wscale(&fit.x_dotdot.component_mul(&fit.residuals), fit.obs_weight());

    let meat = match region_cluster {
        None => phi.iter().map(|v| v * v).sum::<f64>(),
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::Dimension("cluster labels length differs from N".into()));
            }
            let groups = super::cluster_groups(Some(labels), n);
            if groups.len() < 2 {
                return Err(Error::Cluster(format!(
                    "need at least 2 clusters, got {}",
                    groups.len()
                )));
            }
            groups
                .iter()
                .map(|g| {
                    let s: f64 = g.iter().map(|&i| phi[i]).sum();
                    s * s
                })
                .sum()
        }
    };

    let p = fit.delta_hat.len() + 1;
    let factor = if options.small_sample {
        match region_cluster {
            None => n as f64 / (n - p) as f64,
            Some(labels) => {
                let g = super::cluster_groups(Some(labels), n).len() as f64;
                g / (g - 1.0) * (n as f64 - 1.0) / (n - p) as f64
            }
        }
    } else {
        1.0
    };

    let se = (meat * factor).sqrt() / fit.denom.abs();
    let z = z_critical(level)?;
    Ok(InferenceResult {
        method: if region_cluster.is_some() { Method::Cluster } else { Method::Robust },
        estimate: fit.estimate(),
        se: Some(se),
        confset: ConfidenceSet::centered(fit.estimate(), se, level, z),
        se_no_correction: None,
        sector_terms: None,
    })
}
