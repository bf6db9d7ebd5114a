//! Data-generating processes for the placebo engine: shifter distributions,
//! synthetic share matrices, outcome construction, and the nonlinear
//! estimand.

use crate::data::{SharesMatrix, Shifters};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

/// A scalar shock distribution for residual add-ons and factor noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockDist {
    Normal { variance: f64 },
}

impl ShockDist {
    fn validate(&self) -> Result<()> {
        match self {
            ShockDist::Normal { variance } => {
                if !variance.is_finite() || *variance < 0.0 {
                    return Err(Error::Dgp(format!("invalid shock variance {variance}")));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ShockDist::Normal { variance } => {
                Normal::new(0.0, variance.sqrt()).expect("validated").sample(rng)
            }
        }
    }
}

/// Distribution of the sector-level shifters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShifterDgp {
    /// Independent `N(0, variance)` draws.
    IidNormal { variance: f64 },
    /// Independent log-normal draws, recentered to mean zero and rescaled to
    /// the target variance.
    LognormalRecentered { variance: f64 },
    /// Independent normals with `var_s = base + lambda · (n_s − S/N)`,
    /// where `n_s` is the sector size from the share matrix. Variances below
    /// `−1e-6` are errors; smaller negatives are floored at `1e-8`.
    Heteroskedastic { base: f64, lambda: f64 },
    /// Jointly normal with covariance
    /// `Σ_sk = (1−rho)·variance·1{s=k} + rho·variance·1{c(s)=c(k)}`,
    /// sampled exactly via a per-cluster common factor.
    ClusterMvn { variance: f64, rho: f64, clusters: Vec<String> },
    /// Factor structure `𝒳_s = kappa · loading_s · delta_xbar + u_s`.
    Factor { kappa: f64, loadings: Vec<f64>, delta_xbar: f64, noise: ShockDist },
}

/// Draws one shifter vector. The share matrix supplies the sector count and,
/// for the heteroskedastic design, the sector sizes.
pub fn draw_shifters<R: Rng + ?Sized>(
    dgp: &ShifterDgp,
    shares: &SharesMatrix,
    rng: &mut R,
) -> Result<Shifters> {
    let s = shares.n_sectors();
    let values = match dgp {
        ShifterDgp::IidNormal { variance } => {
            if !variance.is_finite() || *variance < 0.0 {
                return Err(Error::Dgp(format!("invalid shifter variance {variance}")));
            }
            let d = Normal::new(0.0, variance.sqrt()).expect("validated");
            (0..s).map(|_| d.sample(rng)).collect::<Vec<f64>>()
        }
        ShifterDgp::LognormalRecentered { variance } => {
            if !variance.is_finite() || *variance < 0.0 {
                return Err(Error::Dgp(format!("invalid shifter variance {variance}")));
            }
            // exp(Z) has mean e^{1/2} and variance (e−1)e for Z ~ N(0,1).
            let mean = (0.5_f64).exp();
            let sd = ((std::f64::consts::E - 1.0) * std::f64::consts::E).sqrt();
            let scale = variance.sqrt() / sd;
            let d: Normal<f64> = Normal::new(0.0, 1.0).expect("standard normal");
            (0..s)
                .map(|_| (d.sample(rng).exp() - mean) * scale)
                .collect()
        }
        ShifterDgp::Heteroskedastic { base, lambda } => {
            let n_s = shares.sector_sizes();
            let ratio = s as f64 / shares.n_regions() as f64;
            let mut values = Vec::with_capacity(s);
            for j in 0..s {
                let var = base + lambda * (n_s[j] - ratio);
                if var < -1e-6 {
                    return Err(Error::Dgp(format!(
                        "heteroskedastic variance is {var} for sector {}",
                        shares.sectors()[j]
                    )));
                }
                let var = var.max(1e-8);
                values.push(Normal::new(0.0, var.sqrt()).expect("validated").sample(rng));
            }
            values
        }
        ShifterDgp::ClusterMvn { variance, rho, clusters } => {
            if clusters.len() != s {
                return Err(Error::Dimension(format!(
                    "{} cluster labels for {} sectors",
                    clusters.len(),
                    s
                )));
            }
            if !(0.0..=1.0).contains(rho) || !variance.is_finite() || *variance < 0.0 {
                return Err(Error::Dgp(format!(
                    "cluster covariance is not positive semidefinite (variance {variance}, rho {rho})"
                )));
            }
            let groups = crate::infer::cluster_groups(Some(clusters), s);
            let shared = Normal::new(0.0, (rho * variance).sqrt()).expect("validated");
            let own = Normal::new(0.0, ((1.0 - rho) * variance).sqrt()).expect("validated");
            let mut values = vec![0.0; s];
            for g in &groups {
                let common = shared.sample(rng);
                for &j in g {
                    values[j] = common;
                }
            }
            for v in values.iter_mut() {
                *v += own.sample(rng);
            }
            values
        }
        ShifterDgp::Factor { kappa, loadings, delta_xbar, noise } => {
            if loadings.len() != s {
                return Err(Error::Dimension(format!(
                    "{} factor loadings for {} sectors",
                    loadings.len(),
                    s
                )));
            }
            noise.validate()?;
            loadings
                .iter()
                .map(|eta| kappa * eta * delta_xbar + noise.sample(rng))
                .collect()
        }
    };
    Shifters::new(values)
}

/// Draws a synthetic share matrix: rows from a symmetric Dirichlet with the
/// given concentration, each row rescaled by a factor drawn uniformly from
/// `scale_range` so that row sums can fall below one.
pub fn synth_shares<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    concentration: f64,
    scale_range: (f64, f64),
    rng: &mut R,
) -> Result<SharesMatrix> {
    if n == 0 || s == 0 {
        return Err(Error::Dgp("need at least one region and one sector".into()));
    }
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(Error::Dgp(format!("invalid Dirichlet concentration {concentration}")));
    }
    let (lo, hi) = scale_range;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::Dgp(format!("scale range ({lo},{hi}) must satisfy 0 < lo <= hi <= 1")));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::Dgp(format!("invalid Dirichlet concentration: {e}")))?;
    let scale_dist = Uniform::new_inclusive(lo, hi)
        .map_err(|e| Error::Dgp(format!("invalid scale range: {e}")))?;

    let width = n.max(s).to_string().len();
    let mut w = DMatrix::zeros(n, s);
    for i in 0..n {
        let mut row = vec![0.0; s];
        let mut total = 0.0;
        for _ in 0..100 {
            for v in row.iter_mut() {
                *v = gamma.sample(rng);
            }
            total = row.iter().sum();
            if total > 0.0 {
                break;
            }
        }
        if total <= 0.0 {
            return Err(Error::Dgp("Dirichlet draws underflowed to zero".into()));
        }
        let scale = scale_dist.sample(rng);
        for (j, v) in row.iter().enumerate() {
            w[(i, j)] = v / total * scale;
        }
    }
    let regions = (0..n).map(|i| format!("r{:0width$}", i + 1)).collect();
    let sectors = (0..s).map(|j| format!("s{:0width$}", j + 1)).collect();
    SharesMatrix::new(regions, sectors, w)
}

/// Draws a synthetic share matrix with regional cluster structure: regions in
/// the same group mix a common group-level share profile with their own
/// idiosyncratic Dirichlet draw, so that group membership correlates with
/// industry mix the way geography does in observational data. Returns the
/// matrix together with the group labels (contiguous groups).
///
/// `mixing` in [0,1] is the weight on the group profile (0 recovers
/// [`synth_shares`] draws).
#[allow(clippy::too_many_arguments)]
pub fn synth_clustered_shares<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    concentration: f64,
    scale_range: (f64, f64),
    groups: usize,
    mixing: f64,
    rng: &mut R,
) -> Result<(SharesMatrix, Vec<String>)> {
    if groups == 0 || groups > n {
        return Err(Error::Dgp(format!("invalid group count {groups} for {n} regions")));
    }
    if !(0.0..=1.0).contains(&mixing) {
        return Err(Error::Dgp(format!("mixing weight {mixing} must lie in [0,1]")));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::Dgp(format!("invalid Dirichlet concentration: {e}")))?;
    let (lo, hi) = scale_range;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::Dgp(format!("scale range ({lo},{hi}) must satisfy 0 < lo <= hi <= 1")));
    }
    let scale_dist = Uniform::new_inclusive(lo, hi)
        .map_err(|e| Error::Dgp(format!("invalid scale range: {e}")))?;

    let draw_simplex = |rng: &mut R| -> Result<Vec<f64>> {
        let mut row = vec![0.0; s];
        for _ in 0..100 {
            for v in row.iter_mut() {
                *v = gamma.sample(rng);
            }
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
                return Ok(row);
            }
        }
        Err(Error::Dgp("Dirichlet draws underflowed to zero".into()))
    };

    let group_size = n.div_ceil(groups);
    let mut centers = Vec::with_capacity(groups);
    for _ in 0..groups {
        centers.push(draw_simplex(rng)?);
    }

    let width = n.max(s).to_string().len();
    let mut w = DMatrix::zeros(n, s);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let g = i / group_size;
        labels.push(format!("g{g}"));
        let own = draw_simplex(rng)?;
        let scale = scale_dist.sample(rng);
        for j in 0..s {
            w[(i, j)] = scale * (mixing * centers[g][j] + (1.0 - mixing) * own[j]);
        }
    }
    let regions = (0..n).map(|i| format!("r{:0width$}", i + 1)).collect();
    let sectors = (0..s).map(|j| format!("s{:0width$}", j + 1)).collect();
    Ok((SharesMatrix::new(regions, sectors, w)?, labels))
}

/// Generates one set of alternative shares from an existing matrix by
/// jittering in log space and renormalizing each row to its original sum:
/// `w̃_is ∝ exp(u_is + ln(w_is + v_is))` with `u ~ N(0, u_variance)` and
/// `v ~ U[0, v_upper]`.
pub fn alt_shares<R: Rng + ?Sized>(
    shares: &SharesMatrix,
    u_variance: f64,
    v_upper: f64,
    rng: &mut R,
) -> Result<SharesMatrix> {
    if !u_variance.is_finite() || u_variance < 0.0 || !v_upper.is_finite() || v_upper < 0.0 {
        return Err(Error::Dgp("alternative-share jitter parameters must be nonnegative".into()));
    }
    let u_dist = Normal::new(0.0, u_variance.sqrt()).expect("validated");
    let (n, s) = (shares.n_regions(), shares.n_sectors());
    let w = shares.weights();
    let row_sums = shares.row_sums();
    let mut out = DMatrix::zeros(n, s);
    for i in 0..n {
        let mut raw = vec![0.0; s];
        for (j, r) in raw.iter_mut().enumerate() {
            let u = u_dist.sample(rng);
            let v = if v_upper > 0.0 { rng.random::<f64>() * v_upper } else { 0.0 };
            // w + v = 0 gives exp(−∞) = 0, which is the intended limit.
            *r = (u + (w[(i, j)] + v).ln()).exp();
        }
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            for (j, r) in raw.iter().enumerate() {
                out[(i, j)] = r / total * row_sums[i];
            }
        }
    }
    SharesMatrix::new(shares.regions().to_vec(), shares.sectors().to_vec(), out)
}

/// Residual component added to the base outcome each replication.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualAddon {
    #[default]
    None,
    /// One draw per cluster of regions, `N(0, variance)`; absent labels mean
    /// one draw per region.
    RegionClusterShock { variance: f64, clusters: Option<Vec<String>> },
    /// A single sector-level shock loading on the unassigned exposure:
    /// adds `(1 − Σ_s w_is) · η` with one draw of η.
    ResidualSectorShock { dist: ShockDist },
    /// A shift-share term with alternative shares: `Σ_s w̃_is A_s`.
    AltShareShiftShare { shares: SharesMatrix, dist: ShockDist },
    /// A shift-share term re-using the design's own shares.
    SameShareShiftShare { dist: ShockDist },
}

/// Treatment effect entering the outcome.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EffectSpec {
    #[default]
    Null,
    Homogeneous { beta: f64 },
    /// Region-and-sector specific effects `β_is = lambda · w_is`.
    HeterogeneousLinear { lambda: f64 },
}

/// Outcome construction for one replication.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OutcomeDgp {
    /// Fixed base outcome (zeros when absent).
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    #[serde(default)]
    pub addon: ResidualAddon,
    #[serde(default)]
    pub effect: EffectSpec,
    /// Log-aggregator potential outcome `β̌ · ln(Σ_s w_is e^{𝒳_s})`,
    /// replacing the linear effect entirely when present.
    #[serde(default)]
    pub nonlinear: Option<NonlinearOutcome>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NonlinearOutcome {
    pub beta_check: f64,
}

/// Composes the outcome vector for one replication: base + residual add-on +
/// effect term (or the nonlinear map).
pub fn make_outcome<R: Rng + ?Sized>(
    dgp: &OutcomeDgp,
    shares: &SharesMatrix,
    shifters: &Shifters,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = shares.n_regions();
    if dgp.nonlinear.is_some() && !matches!(dgp.effect, EffectSpec::Null) {
        return Err(Error::Dgp("exactly one of the linear and nonlinear effects may be active".into()));
    }
    let mut y = match &dgp.base {
        None => DVector::zeros(n),
        Some(base) => {
            if base.len() != n {
                return Err(Error::Dimension("base outcome length differs from N".into()));
            }
            DVector::from_column_slice(base)
        }
    };

    match &dgp.addon {
        ResidualAddon::None => {}
        ResidualAddon::RegionClusterShock { variance, clusters } => {
            if !variance.is_finite() || *variance < 0.0 {
                return Err(Error::Dgp(format!("invalid addon variance {variance}")));
            }
            let d = Normal::new(0.0, variance.sqrt()).expect("validated");
            match clusters {
                None => {
                    for i in 0..n {
                        y[i] += d.sample(rng);
                    }
                }
                Some(labels) => {
                    if labels.len() != n {
                        return Err(Error::Dimension("cluster labels length differs from N".into()));
                    }
                    let groups = crate::infer::cluster_groups(Some(labels), n);
                    for g in &groups {
                        let shock = d.sample(rng);
                        for &i in g {
                            y[i] += shock;
                        }
                    }
                }
            }
        }
        ResidualAddon::ResidualSectorShock { dist } => {
            dist.validate()?;
            let eta = dist.sample(rng);
            let row_sums = shares.row_sums();
            for i in 0..n {
                y[i] += (1.0 - row_sums[i]) * eta;
            }
        }
        ResidualAddon::AltShareShiftShare { shares: alt, dist } => {
            dist.validate()?;
            if alt.n_regions() != n {
                return Err(Error::Dimension("alternative shares region count differs".into()));
            }
            let draws =
                DVector::from_iterator(alt.n_sectors(), (0..alt.n_sectors()).map(|_| dist.sample(rng)));
            y += alt.weights() * draws;
        }
        ResidualAddon::SameShareShiftShare { dist } => {
            dist.validate()?;
            let s = shares.n_sectors();
            let draws = DVector::from_iterator(s, (0..s).map(|_| dist.sample(rng)));
            y += shares.weights() * draws;
        }
    }

    if let Some(nl) = &dgp.nonlinear {
        let w = shares.weights();
        for i in 0..n {
            let mut mx = f64::NEG_INFINITY;
            for j in 0..shares.n_sectors() {
                if w[(i, j)] > 0.0 {
                    mx = mx.max(shifters.values()[j]);
                }
            }
            if mx == f64::NEG_INFINITY {
                return Err(Error::Dgp(format!(
                    "nonlinear outcome undefined: region {} has no exposure",
                    shares.regions()[i]
                )));
            }
            let total: f64 = (0..shares.n_sectors())
                .map(|j| w[(i, j)] * (shifters.values()[j] - mx).exp())
                .sum();
            y[i] += nl.beta_check * (total.ln() + mx);
        }
        return Ok(y);
    }

    match dgp.effect {
        EffectSpec::Null => {}
        EffectSpec::Homogeneous { beta } => {
            y += shares.weights() * shifters.values() * beta;
        }
        EffectSpec::HeterogeneousLinear { lambda } => {
            let w_sq = shares.weights().map(|v| v * v);
            y += w_sq * shifters.values() * lambda;
        }
    }
    Ok(y)
}

/// The estimand implied by [`EffectSpec::HeterogeneousLinear`]:
/// `lambda · Σ_{i,s} w³_is / Σ_{i,s} w²_is`.
pub fn heterogeneous_linear_estimand(shares: &SharesMatrix, lambda: f64) -> f64 {
    let w = shares.weights();
    let cube: f64 = w.iter().map(|v| v * v * v).sum();
    let sq: f64 = w.iter().map(|v| v * v).sum();
    lambda * cube / sq
}

/// Monte Carlo estimate of the nonlinear estimand.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NonlinearEstimand {
    pub beta: f64,
    /// Standard error of the Monte Carlo integration itself.
    pub mc_se: f64,
}

/// The probability limit of the linear shift-share coefficient when outcomes
/// follow the log-aggregator map `β̌ · ln(Σ_s w_is e^{𝒳_s})` with
/// `𝒳_s ~ N(0, sigma2)` i.i.d., evaluated by Monte Carlo integration:
///
/// ```text
/// β = β̌ · Σ_i E[ X_i · ln(Σ_k w_ik e^{𝒳_k}) ] / (sigma2 · Σ_{i,s} w²_is)
/// ```
pub fn estimand_nonlinear<R: Rng + ?Sized>(
    beta_check: f64,
    shares: &SharesMatrix,
    sigma2: f64,
    mc_draws: usize,
    rng: &mut R,
) -> Result<NonlinearEstimand> {
    if mc_draws == 0 {
        return Err(Error::Dgp("need at least one Monte Carlo draw".into()));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::Dgp(format!("shifter variance must be positive, got {sigma2}")));
    }
    let row_sums = shares.row_sums();
    if row_sums.iter().any(|v| *v <= 0.0) {
        return Err(Error::Dgp("nonlinear estimand undefined: a region has no exposure".into()));
    }
    if beta_check == 0.0 {
        return Ok(NonlinearEstimand { beta: 0.0, mc_se: 0.0 });
    }

    let (n, s) = (shares.n_regions(), shares.n_sectors());
    let w = shares.weights();
    let sd = sigma2.sqrt();
    let normal = Normal::new(0.0, sd).expect("validated");

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut draw = vec![0.0; s];
    for _ in 0..mc_draws {
        for v in draw.iter_mut() {
            *v = normal.sample(rng);
        }
        let mx = draw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 0.0;
        for i in 0..n {
            let mut x = 0.0;
            let mut agg = 0.0;
            for j in 0..s {
                let wij = w[(i, j)];
                x += wij * draw[j];
                agg += wij * (draw[j] - mx).exp();
            }
            t += x * (agg.ln() + mx);
        }
        sum += t;
        sum_sq += t * t;
    }

    let m = mc_draws as f64;
    let mean = sum / m;
    let var = if mc_draws > 1 { (sum_sq - sum * sum / m) / (m - 1.0) } else { 0.0 };
    let denom = sigma2 * w.iter().map(|v| v * v).sum::<f64>();
    Ok(NonlinearEstimand {
        beta: beta_check * mean / denom,
        mc_se: beta_check.abs() * (var.max(0.0) / m).sqrt() / denom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placebo::rng::run_rng;
    use approx::assert_relative_eq;

    fn shares_from(w: DMatrix<f64>) -> SharesMatrix {
        let regions = (0..w.nrows()).map(|i| format!("r{i}")).collect();
        let sectors = (0..w.ncols()).map(|j| format!("s{j}")).collect();
        SharesMatrix::new(regions, sectors, w).unwrap()
    }

    fn wide_shares(n: usize, s: usize) -> SharesMatrix {
        shares_from(DMatrix::from_element(n, s, 1.0 / s as f64))
    }

    #[test]
    fn iid_normal_matches_target_variance() {
        let shares = wide_shares(1, 100_000);
        let mut rng = run_rng(1);
        let draws = draw_shifters(&ShifterDgp::IidNormal { variance: 5.0 }, &shares, &mut rng)
            .unwrap();
        let v = draws.values();
        let mean = v.sum() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
        assert!((var - 5.0).abs() < 0.15, "sample variance {var}");
    }

    #[test]
    fn lognormal_is_recentered_and_rescaled() {
        let shares = wide_shares(1, 200_000);
        let mut rng = run_rng(2);
        let draws = draw_shifters(
            &ShifterDgp::LognormalRecentered { variance: 5.0 },
            &shares,
            &mut rng,
        )
        .unwrap();
        let v = draws.values();
        let mean = v.sum() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
        assert!(mean.abs() < 0.05, "sample mean {mean}");
        assert!((var - 5.0).abs() < 0.4, "sample variance {var}");
        // Skewed to the right, unlike a normal.
        let skew = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / v.len() as f64;
        assert!(skew > 0.0);
    }

    #[test]
    fn perfect_cluster_correlation_equalizes_within_cluster() {
        let shares = wide_shares(9, 9);
        let clusters: Vec<String> = (0..9).map(|j| format!("c{}", j / 3)).collect();
        let mut rng = run_rng(3);
        let draws = draw_shifters(
            &ShifterDgp::ClusterMvn { variance: 5.0, rho: 1.0, clusters },
            &shares,
            &mut rng,
        )
        .unwrap();
        let v = draws.values();
        for g in 0..3 {
            assert_eq!(v[3 * g], v[3 * g + 1]);
            assert_eq!(v[3 * g], v[3 * g + 2]);
        }
        assert_ne!(v[0], v[3]);
    }

    #[test]
    fn cluster_mvn_rejects_bad_correlation() {
        let shares = wide_shares(2, 2);
        let clusters = vec!["a".to_string(), "a".into()];
        let mut rng = run_rng(4);
        assert!(matches!(
            draw_shifters(
                &ShifterDgp::ClusterMvn { variance: 5.0, rho: 1.5, clusters },
                &shares,
                &mut rng
            ),
            Err(Error::Dgp(_))
        ));
    }

    #[test]
    fn factor_with_silent_noise_is_deterministic() {
        let shares = wide_shares(3, 3);
        let mut rng = run_rng(5);
        let draws = draw_shifters(
            &ShifterDgp::Factor {
                kappa: 2.0,
                loadings: vec![1.0, -1.0, 0.5],
                delta_xbar: 3.0,
                noise: ShockDist::Normal { variance: 0.0 },
            },
            &shares,
            &mut rng,
        )
        .unwrap();
        assert_eq!(draws.values().as_slice(), &[6.0, -6.0, 3.0]);
    }

    #[test]
    fn heteroskedastic_variance_floor_and_error() {
        // Sector sizes 1.6 and 0.4 with S/N = 1: var_s = base + lambda (n_s − 1).
        let shares = shares_from(DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.8, 0.2]));
        let mut rng = run_rng(6);
        // The small sector's variance lands at −1e-8, inside the floor band.
        let ok = draw_shifters(
            &ShifterDgp::Heteroskedastic { base: 5.0e-8, lambda: 1.0e-7 },
            &shares,
            &mut rng,
        );
        assert!(ok.is_ok());
        // A solidly negative variance errors.
        let bad = draw_shifters(
            &ShifterDgp::Heteroskedastic { base: 1.0, lambda: 10.0 },
            &shares,
            &mut rng,
        );
        assert!(matches!(bad, Err(Error::Dgp(_))));
    }

    #[test]
    fn dirichlet_scale_one_rows_sum_to_one() {
        let mut rng = run_rng(7);
        let shares = synth_shares(50, 8, 10.0, (1.0, 1.0), &mut rng).unwrap();
        for v in shares.row_sums().iter() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tiny_concentration_concentrates_rows() {
        // Reference probabilities for P(max share > 0.95) under a symmetric
        // Dirichlet at S = 10, from an independent 40k-draw integration:
        // ~0.78 at concentration 0.01 and ~0.95 at 0.002. The bounds below
        // leave ~3 binomial standard errors at 300 rows.
        let shares = synth_shares(300, 10, 0.01, (1.0, 1.0), &mut run_rng(8)).unwrap();
        let w = shares.weights();
        let concentrated = (0..300)
            .filter(|&i| (0..10).any(|j| w[(i, j)] > 0.95))
            .count();
        assert!((210..=290).contains(&concentrated), "{concentrated}/300 rows concentrated");

        let tighter = synth_shares(300, 10, 0.002, (1.0, 1.0), &mut run_rng(8)).unwrap();
        let wt = tighter.weights();
        let very = (0..300)
            .filter(|&i| (0..10).any(|j| wt[(i, j)] > 0.95))
            .count();
        assert!(very >= 270, "{very}/300 rows concentrated at 0.002");
        assert!(very > concentrated);
    }

    #[test]
    fn synth_is_deterministic_in_the_seed() {
        let a = synth_shares(20, 5, 1.0, (0.5, 1.0), &mut run_rng(9)).unwrap();
        let b = synth_shares(20, 5, 1.0, (0.5, 1.0), &mut run_rng(9)).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn alt_shares_preserve_row_sums() {
        let mut rng = run_rng(10);
        let shares = synth_shares(20, 6, 1.0, (0.4, 0.9), &mut rng).unwrap();
        let alt = alt_shares(&shares, 1.0, 0.001, &mut rng).unwrap();
        for (a, b) in shares.row_sums().iter().zip(alt.row_sums().iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
        // Zero jitter reproduces the input exactly.
        let same = alt_shares(&shares, 0.0, 0.0, &mut run_rng(11)).unwrap();
        assert!((same.weights() - shares.weights()).amax() < 1e-12);
    }

    #[test]
    fn outcome_defaults_to_base() {
        let shares = wide_shares(3, 2);
        let shifters = Shifters::new(vec![1.0, -1.0]).unwrap();
        let dgp = OutcomeDgp {
            base: Some(vec![1.0, 2.0, 3.0]),
            ..OutcomeDgp::default()
        };
        let y = make_outcome(&dgp, &shares, &shifters, &mut run_rng(12)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn heterogeneous_estimand_matches_hand_value() {
        // w = [[0.5, 0.5]]: Σw³ = 0.25, Σw² = 0.5, estimand = λ/2.
        let shares = wide_shares(1, 2);
        assert_relative_eq!(heterogeneous_linear_estimand(&shares, 3.0), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_shifters_factor_out_of_the_log_aggregator() {
        let w = DMatrix::from_row_slice(2, 2, &[0.3, 0.5, 0.2, 0.6]);
        let shares = shares_from(w.clone());
        let shifters = Shifters::new(vec![2.0, 2.0]).unwrap();
        let dgp = OutcomeDgp {
            nonlinear: Some(NonlinearOutcome { beta_check: 0.4 }),
            ..OutcomeDgp::default()
        };
        let y = make_outcome(&dgp, &shares, &shifters, &mut run_rng(13)).unwrap();
        for i in 0..2 {
            let expect = 0.4 * ((w.row(i).sum()).ln() + 2.0);
            assert_relative_eq!(y[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn nonlinear_outcome_requires_exposure() {
        let shares = shares_from(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0]));
        let shifters = Shifters::new(vec![1.0, -1.0]).unwrap();
        let dgp = OutcomeDgp {
            nonlinear: Some(NonlinearOutcome { beta_check: 0.4 }),
            ..OutcomeDgp::default()
        };
        assert!(matches!(
            make_outcome(&dgp, &shares, &shifters, &mut run_rng(14)),
            Err(Error::Dgp(_))
        ));
    }

    #[test]
    fn zero_beta_check_gives_zero_estimand() {
        let shares = wide_shares(4, 3);
        let est = estimand_nonlinear(0.0, &shares, 5.0, 10, &mut run_rng(15)).unwrap();
        assert_eq!(est.beta, 0.0);
    }

    #[test]
    fn concentrated_shares_recover_beta_check() {
        // One unit share per region: the log-aggregator is linear, so the
        // estimand equals β̌ for any variance.
        let mut w = DMatrix::zeros(12, 3);
        for i in 0..12 {
            w[(i, i % 3)] = 1.0;
        }
        let shares = shares_from(w);
        for sigma2 in [0.5, 5.0] {
            let est = estimand_nonlinear(0.4, &shares, sigma2, 4000, &mut run_rng(16)).unwrap();
            assert!(
                (est.beta - 0.4).abs() < 4.0 * est.mc_se.max(1e-9),
                "beta {} mc_se {}",
                est.beta,
                est.mc_se
            );
        }
    }
}
