//! Variance estimation and confidence sets.
//!
//! Every procedure consumes a [`crate::FitResult`] and reports an
//! [`InferenceResult`] with a standard error (when the method defines one)
//! and a confidence set. The AKM standard error sums per-sector products
//! `𝒳̂_s R̂_s`, where `𝒳̂` projects the partialled-out regressor onto the
//! share columns and `R̂_s = Σ_i w_is ω_i ε̂_i`; AKM0 inverts the same test
//! with residuals recomputed under each hypothesized null.

mod akm;
mod akm0;
mod confset;
mod conventional;

pub use akm::{loo_pairwise_terms, se_akm, se_akm_loo};
pub use akm0::{ci_akm0, ci_akm0_weak_iv};
pub use confset::{ConfidenceSet, ConfidenceSetShape};
pub(crate) use confset::Endpoint;
pub use conventional::{se_conventional, ConventionalOptions};

use crate::data::SharesMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::DVector;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};

/// Inference procedures understood by the placebo engine and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Robust,
    Cluster,
    Akm,
    Akm0,
    AkmCluster,
    Akm0Cluster,
    AkmLoo,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Robust => "robust",
            Method::Cluster => "cluster",
            Method::Akm => "akm",
            Method::Akm0 => "akm0",
            Method::AkmCluster => "akm_cluster",
            Method::Akm0Cluster => "akm0_cluster",
            Method::AkmLoo => "akm_loo",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(Method::Robust),
            "cluster" => Ok(Method::Cluster),
            "akm" => Ok(Method::Akm),
            "akm0" => Ok(Method::Akm0),
            "akm_cluster" => Ok(Method::AkmCluster),
            "akm0_cluster" => Ok(Method::Akm0Cluster),
            "akm_loo" => Ok(Method::AkmLoo),
            other => Err(Error::Data(format!("unknown method: {other}"))),
        }
    }
}

/// Least-squares coefficients of the partialled-out regressor on the share
/// columns, `𝒳̂ = (W'ΩW)⁻¹ W'Ω x̋`. Defined only when N ≥ S and W has full
/// column rank.
#[derive(Debug, Clone)]
pub struct SectorProjection {
    pub x_hat_sector: DVector<f64>,
}

/// Projects `x_dotdot` onto the sectoral space.
pub fn sector_project(
    shares: &SharesMatrix,
    x_dotdot: &DVector<f64>,
    obs_weight: Option<&DVector<f64>>,
) -> Result<SectorProjection> {
    let (n, s) = (shares.n_regions(), shares.n_sectors());
    if x_dotdot.len() != n {
        return Err(Error::Dimension("x_dotdot length differs from N".into()));
    }
    if n < s {
        return Err(Error::AkmInfeasible(format!(
            "N < S ({n} regions, {s} sectors): the sector projection is underdetermined"
        )));
    }
    let b = nalgebra::DMatrix::from_column_slice(n, 1, x_dotdot.as_slice());
    let coef = linalg::ls_solve_weighted(shares.weights(), &b, obs_weight).map_err(|d| {
        Error::AkmInfeasible(format!(
            "share matrix is rank deficient (rank {} < {}, sector {})",
            d.rank,
            s,
            shares.sectors()[d.dependent_column]
        ))
    })?;
    Ok(SectorProjection { x_hat_sector: DVector::from_column_slice(coef.as_slice()) })
}

/// Per-sector audit terms retained by AKM-type procedures.
#[derive(Debug, Clone, Serialize)]
pub struct SectorTerms {
    /// `R̂_s = Σ_i w_is ω_i ε̂_i`, aligned with the share matrix's sectors.
    pub r_s: Vec<f64>,
    /// Sector projection `𝒳̂_s`.
    pub x_hat_sector: Vec<f64>,
}

/// A standard error (when defined) plus confidence set for one method.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub method: Method,
    pub estimate: f64,
    /// Conventional/AKM standard error; `None` for AKM0, which reports only
    /// the effective standard error implied by its confidence set.
    pub se: Option<f64>,
    pub confset: ConfidenceSet,
    /// For [`se_akm_loo`]: the standard error without the estimated-shifter
    /// variance term, for comparison.
    pub se_no_correction: Option<f64>,
    /// Per-sector audit terms (AKM-type methods only).
    pub sector_terms: Option<SectorTerms>,
}

impl InferenceResult {
    pub fn effective_se(&self) -> f64 {
        self.confset.effective_se
    }
}

impl Serialize for InferenceResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = 6 + usize::from(self.se_no_correction.is_some());
        let mut s = serializer.serialize_struct("InferenceResult", n)?;
        s.serialize_field("method", &self.method)?;
        s.serialize_field("estimate", &self.estimate)?;
        s.serialize_field("se", &self.se)?;
        s.serialize_field("ci", &self.confset)?;
        s.serialize_field("effective_se", &confset::Endpoint(self.confset.effective_se))?;
        s.serialize_field("level", &self.confset.level)?;
        if let Some(v) = self.se_no_correction {
            s.serialize_field("se_no_correction", &v)?;
        }
        s.end()
    }
}

/// Two-sided standard normal critical value for a confidence level in (0,1).
pub(crate) fn z_critical(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Data(format!("confidence level must be in (0,1), got {level}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// `W' (ω ∘ v)`, the per-sector share-weighted sums used throughout.
pub(crate) fn sector_sums(
    shares: &SharesMatrix,
    v: &DVector<f64>,
    obs_weight: Option<&DVector<f64>>,
) -> DVector<f64> {
    let weighted = linalg::wscale(v, obs_weight);
    shares.weights().transpose() * weighted
}

/// Groups sector indices by cluster label, in first-appearance order. With no
/// labels every sector is its own singleton.
pub(crate) fn cluster_groups(labels: Option<&[String]>, s: usize) -> Vec<Vec<usize>> {
    match labels {
        None => (0..s).map(|i| vec![i]).collect(),
        Some(labels) => {
            let mut order: Vec<&str> = Vec::new();
            let mut map: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for (i, l) in labels.iter().enumerate() {
                let idx = *map.entry(l.as_str()).or_insert_with(|| {
                    order.push(l.as_str());
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[idx].push(i);
            }
            groups
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Design, Shifters};
    use crate::estimate::{build_shift_share, ols_fit, partial_out_vec};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    pub(crate) fn shares_from(w: DMatrix<f64>) -> SharesMatrix {
        let regions = (0..w.nrows()).map(|i| format!("r{}", i + 1)).collect();
        let sectors = (0..w.ncols()).map(|j| format!("s{}", j + 1)).collect();
        SharesMatrix::new(regions, sectors, w).unwrap()
    }

    #[test]
    fn identity_projection_returns_input() {
        let shares = shares_from(DMatrix::identity(3, 3));
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let proj = sector_project(&shares, &x, None).unwrap();
        assert!((proj.x_hat_sector - x).amax() < 1e-12);
    }

    #[test]
    fn concentrated_projection_takes_group_means() {
        let shares = shares_from(DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        ));
        let x = DVector::from_vec(vec![1.0, 3.0, -2.0, -4.0]);
        let proj = sector_project(&shares, &x, None).unwrap();
        assert_relative_eq!(proj.x_hat_sector[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(proj.x_hat_sector[1], -3.0, epsilon = 1e-12);
    }

    #[test]
    fn full_rank_shares_recover_exact_shifters() {
        let w = DMatrix::from_row_slice(3, 2, &[0.7, 0.1, 0.2, 0.6, 0.4, 0.4]);
        let shares = shares_from(w);
        let shifters = Shifters::new(vec![2.0, -1.0]).unwrap();
        let x = build_shift_share(&shares, &shifters).unwrap();
        let proj = sector_project(&shares, &x, None).unwrap();
        assert_relative_eq!(proj.x_hat_sector[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(proj.x_hat_sector[1], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn infeasible_when_fewer_regions_than_sectors() {
        let shares = shares_from(DMatrix::from_row_slice(2, 3, &[0.5, 0.3, 0.2, 0.1, 0.4, 0.5]));
        let x = DVector::zeros(2);
        assert!(matches!(
            sector_project(&shares, &x, None),
            Err(Error::AkmInfeasible(_))
        ));
    }

    #[test]
    fn weighted_projection_matches_row_replication() {
        // Weight 2 on the first region must match duplicating that row.
        let w = DMatrix::from_row_slice(3, 2, &[0.7, 0.1, 0.2, 0.6, 0.4, 0.4]);
        let shares = shares_from(w.clone());
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let weights = DVector::from_vec(vec![2.0, 1.0, 1.0]);
        let proj = sector_project(&shares, &x, Some(&weights)).unwrap();

        let w_dup = DMatrix::from_row_slice(4, 2, &[0.7, 0.1, 0.7, 0.1, 0.2, 0.6, 0.4, 0.4]);
        let shares_dup = shares_from(w_dup);
        let x_dup = DVector::from_vec(vec![1.0, 1.0, 2.0, 3.0]);
        let proj_dup = sector_project(&shares_dup, &x_dup, None).unwrap();
        assert!((proj.x_hat_sector - proj_dup.x_hat_sector).amax() < 1e-10);
    }

    #[test]
    fn fwl_identity_on_random_instances() {
        use rand::prelude::*;
        use rand::rngs::StdRng;
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..25 {
            let n = rng.random_range(8..=50);
            let s = rng.random_range(2..=4);
            let k = rng.random_range(1..=5);
            let mut w = DMatrix::zeros(n, s);
            for i in 0..n {
                let raw: Vec<f64> = (0..s).map(|_| rng.random::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                for j in 0..s {
                    w[(i, j)] = raw[j] / total;
                }
            }
            let shares = shares_from(w);
            let shifters =
                Shifters::new((0..s).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).unwrap();
            let mut z = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            z.column_mut(0).fill(1.0);
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let design = Design::new(y.clone()).with_controls(z.clone());
            let fit = ols_fit(&design, &shares, &shifters).unwrap();

            // Joint least squares of y on [x z].
            let x = build_shift_share(&shares, &shifters).unwrap();
            let mut xz = DMatrix::zeros(n, k + 1);
            xz.column_mut(0).copy_from(&x);
            xz.view_mut((0, 1), (n, k)).copy_from(&z);
            let yv = DMatrix::from_column_slice(n, 1, &y);
            let joint = crate::linalg::ls_solve(&xz, &yv).unwrap();
            assert_relative_eq!(fit.beta_hat, joint[(0, 0)], max_relative = 1e-10);

            // Residuals orthogonal to controls and to x̋.
            let checks = z.transpose() * &fit.residuals;
            assert!(checks.amax() < 1e-8 * fit.residuals.norm().max(1.0));
            let xr = fit.x_dotdot.dot(&fit.residuals);
            assert!(xr.abs() < 1e-8 * fit.residuals.norm().max(1.0));

            // x̋ itself is orthogonal to the controls.
            let xo = z.transpose() * &fit.x_dotdot;
            assert!(xo.amax() < 1e-8 * fit.x_dotdot.norm().max(1.0));

            // Idempotence of the partialling map on x̋.
            let again = partial_out_vec(&z, &fit.x_dotdot, None).unwrap();
            assert!((&again - &fit.x_dotdot).amax() < 1e-10);
        }
    }
}
