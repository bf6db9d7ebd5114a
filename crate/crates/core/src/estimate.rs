//! Point estimation: shift-share construction, partialling out, OLS and IV
//! fits, and leave-one-out instrument construction from estimated shifters.

use crate::data::{Design, SharesMatrix, Shifters};
use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// Whether a fit came from OLS or IV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Ols,
    Iv,
}

/// Result of [`ols_fit`] / [`iv_fit`].
///
/// `beta_hat` is the OLS coefficient on the shift-share regressor, or the
/// first-stage coefficient in IV mode; `alpha_hat` is the IV structural
/// coefficient. Residuals are the structural ones in IV mode.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub mode: FitMode,
    pub beta_hat: f64,
    pub alpha_hat: Option<f64>,
    pub delta_hat: DVector<f64>,
    /// The shift-share regressor with the controls partialled out.
    pub x_dotdot: DVector<f64>,
    pub residuals: DVector<f64>,
    pub(crate) obs_weight: Option<DVector<f64>>,
    /// The direction the null perturbs residuals along: `x_dotdot` for OLS,
    /// the partialled-out treatment for IV.
    pub(crate) v: DVector<f64>,
    /// Outcome with controls partialled out (`y1` in IV mode).
    pub(crate) r_base: DVector<f64>,
    /// Denominator `Σ_i ω_i x̋_i v_i` shared by all variance formulas.
    pub(crate) denom: f64,
}

impl FitResult {
    /// The reported coefficient: `alpha_hat` in IV mode, `beta_hat` otherwise.
    pub fn estimate(&self) -> f64 {
        self.alpha_hat.unwrap_or(self.beta_hat)
    }

    /// First-stage coefficient (IV mode only).
    pub fn first_stage(&self) -> Option<f64> {
        match self.mode {
            FitMode::Iv => Some(self.beta_hat),
            FitMode::Ols => None,
        }
    }

    pub fn obs_weight(&self) -> Option<&DVector<f64>> {
        self.obs_weight.as_ref()
    }

    pub fn residual_norm(&self) -> f64 {
        self.residuals.norm()
    }
}

impl Serialize for FitResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("FitResult", 6)?;
        s.serialize_field("mode", &self.mode)?;
        s.serialize_field("beta_hat", &self.beta_hat)?;
        s.serialize_field("alpha_hat", &self.alpha_hat)?;
        s.serialize_field("first_stage", &self.first_stage())?;
        s.serialize_field("delta_hat", &self.delta_hat.as_slice())?;
        s.serialize_field("residual_norm", &self.residual_norm())?;
        s.end()
    }
}

/// Builds the shift-share regressor `X_i = Σ_s w_is shifter_s`.
pub fn build_shift_share(shares: &SharesMatrix, shifters: &Shifters) -> Result<DVector<f64>> {
    if shifters.len() != shares.n_sectors() {
        return Err(Error::Dimension(format!(
            "{} shifters for {} sectors",
            shifters.len(),
            shares.n_sectors()
        )));
    }
    Ok(shares.weights() * shifters.values())
}

/// Residualizes the columns of `v` on the controls `z` (ω-weighted when
/// weights are given): returns `v − Z (Z'ΩZ)⁻¹ Z'Ω v`. Idempotent. With no
/// controls (`K = 0`) the input is returned unchanged.
pub fn partial_out(
    z: &DMatrix<f64>,
    v: &DMatrix<f64>,
    obs_weight: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    if z.nrows() != v.nrows() {
        return Err(Error::Dimension("controls and target have different row counts".into()));
    }
    if z.ncols() == 0 {
        return Ok(v.clone());
    }
    let coef = linalg::ls_solve_weighted(z, v, obs_weight).map_err(|d| Error::Rank {
        column: format!("z{}", d.dependent_column + 1),
    })?;
    Ok(v - z * coef)
}

/// Vector convenience wrapper around [`partial_out`].
pub fn partial_out_vec(
    z: &DMatrix<f64>,
    v: &DVector<f64>,
    obs_weight: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    Ok(DVector::from_column_slice(partial_out(z, &m, obs_weight)?.as_slice()))
}

fn check_fit_preconditions(design: &Design, shares: &SharesMatrix) -> Result<()> {
    let n = shares.n_regions();
    if design.n() != n {
        return Err(Error::Dimension(format!(
            "design has {} observations but the share matrix has {} regions",
            design.n(),
            n
        )));
    }
    if n <= design.controls().ncols() + 1 {
        return Err(Error::Dimension(format!(
            "need N > K + 1 observations (N = {n}, K = {})",
            design.controls().ncols()
        )));
    }
    if let Some(w) = design.obs_weight() {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
            return Err(Error::Data(
                "observation weights must be finite, nonnegative, and not all zero".into(),
            ));
        }
    }
    Ok(())
}

/// OLS of `y1` on the shift-share regressor and the controls.
pub fn ols_fit(design: &Design, shares: &SharesMatrix, shifters: &Shifters) -> Result<FitResult> {
    check_fit_preconditions(design, shares)?;
    let x = build_shift_share(shares, shifters)?;
    let w = design.obs_weight();
    let z = design.controls();

    let x_dd = partial_out_vec(z, &x, w)?;
    let y_dd = partial_out_vec(z, design.y1(), w)?;

    let denom = linalg::wdot(&x_dd, &x_dd, w);
    let x_scale = linalg::wdot(&x, &x, w);
    if denom <= 1e-24 * x_scale || denom == 0.0 {
        return Err(Error::DegenerateRegressor);
    }
    let beta_hat = linalg::wdot(&x_dd, design.y1(), w) / denom;

    let target = design.y1() - &x * beta_hat;
    let delta_hat = if z.ncols() > 0 {
        let t = DMatrix::from_column_slice(target.len(), 1, target.as_slice());
        let coef = linalg::ls_solve_weighted(z, &t, w).map_err(|d| Error::Rank {
            column: format!("z{}", d.dependent_column + 1),
        })?;
        DVector::from_column_slice(coef.as_slice())
    } else {
        DVector::zeros(0)
    };
    let residuals = &target - z * &delta_hat;

    Ok(FitResult {
        mode: FitMode::Ols,
        beta_hat,
        alpha_hat: None,
        delta_hat,
        v: x_dd.clone(),
        r_base: y_dd,
        x_dotdot: x_dd,
        residuals,
        obs_weight: w.cloned(),
        denom,
    })
}

/// IV regression of `y1` on `y2`, instrumenting with the shift-share
/// regressor built from `shifters`.
pub fn iv_fit(design: &Design, shares: &SharesMatrix, shifters: &Shifters) -> Result<FitResult> {
    let x = build_shift_share(shares, shifters)?;
    iv_fit_with_instrument(design, shares, &x)
}

/// IV regression with an explicit instrument vector. This is the entry point
/// for estimated and leave-one-out instruments, where the instrument is not a
/// share-weighted sum of a single shifter vector.
pub fn iv_fit_with_instrument(
    design: &Design,
    shares: &SharesMatrix,
    instrument: &DVector<f64>,
) -> Result<FitResult> {
    check_fit_preconditions(design, shares)?;
    let y2 = design
        .y2()
        .ok_or_else(|| Error::Dimension("IV fit requires a treatment variable y2".into()))?;
    if instrument.len() != design.n() {
        return Err(Error::Dimension("instrument length differs from N".into()));
    }
    let w = design.obs_weight();
    let z = design.controls();

    let x_dd = partial_out_vec(z, instrument, w)?;
    let y2_dd = partial_out_vec(z, y2, w)?;
    let y1_dd = partial_out_vec(z, design.y1(), w)?;

    let denom = linalg::wdot(&x_dd, y2, w);
    let scale = (linalg::wdot(&x_dd, &x_dd, w) * linalg::wdot(y2, y2, w)).sqrt();
    if denom.abs() <= 1e-12 * scale {
        return Err(Error::WeakInstrumentDegenerate);
    }
    let alpha_hat = linalg::wdot(&x_dd, design.y1(), w) / denom;

    let x_dd_sq = linalg::wdot(&x_dd, &x_dd, w);
    if x_dd_sq == 0.0 {
        return Err(Error::DegenerateRegressor);
    }
    let first_stage = denom / x_dd_sq;

    let target = design.y1() - y2 * alpha_hat;
    let delta_hat = if z.ncols() > 0 {
        let t = DMatrix::from_column_slice(target.len(), 1, target.as_slice());
        let coef = linalg::ls_solve_weighted(z, &t, w).map_err(|d| Error::Rank {
            column: format!("z{}", d.dependent_column + 1),
        })?;
        DVector::from_column_slice(coef.as_slice())
    } else {
        DVector::zeros(0)
    };
    let residuals = &target - z * &delta_hat;

    Ok(FitResult {
        mode: FitMode::Iv,
        beta_hat: first_stage,
        alpha_hat: Some(alpha_hat),
        delta_hat,
        x_dotdot: x_dd,
        residuals,
        obs_weight: w.cloned(),
        v: y2_dd,
        r_base: y1_dd,
        denom,
    })
}

/// Estimated and leave-one-out shift-share instruments built from noisy
/// sector-region shocks.
#[derive(Debug, Clone)]
pub struct LooInstrument {
    /// `X̂_i = Σ_s w_is 𝒳̂_s` with the full-sample shifter estimates.
    pub x_hat: DVector<f64>,
    /// Leave-one-out version: region `i`'s own shock never enters its own
    /// instrument.
    pub x_hat_loo: DVector<f64>,
    /// Full-sample shifter estimates `𝒳̂_s`.
    pub shifter_estimates: DVector<f64>,
    /// Estimated shock residuals `ψ̂_is = X_is − 𝒳̂_s` (full-sample plug-in).
    pub psi_hat: DMatrix<f64>,
    /// `(1/N) Σ_{i,s} w_is w̌_is / ň_s`, the order of the own-observation
    /// bias of the non-leave-one-out IV estimator; at most `S/N`.
    pub bias_proxy: f64,
    pub(crate) agg_weights: DMatrix<f64>,
    /// `ň_{s,−i}` (N×S).
    pub(crate) loo_totals: DMatrix<f64>,
}

/// Builds [`LooInstrument`] from aggregation weights `w̌` (N×S) and observed
/// local shocks `X_is` (N×S).
///
/// `𝒳̂_s = Σ_j w̌_js X_js / ň_s` with `ň_s = Σ_j w̌_js`; the leave-one-out
/// estimate excludes row `i` from both sums. Every `(s, i)` pair with
/// `w_is > 0` must leave a nonempty donor pool (`ň_{s,−i} > 0`).
pub fn build_loo_instrument(
    shares: &SharesMatrix,
    agg_weights: &DMatrix<f64>,
    local_shocks: &DMatrix<f64>,
) -> Result<LooInstrument> {
    let (n, s) = (shares.n_regions(), shares.n_sectors());
    if agg_weights.shape() != (n, s) || local_shocks.shape() != (n, s) {
        return Err(Error::Dimension(
            "aggregation weights and local shocks must both be N×S".into(),
        ));
    }
    if agg_weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Data("aggregation weights must be finite and nonnegative".into()));
    }

    let w = shares.weights();
    let weighted = agg_weights.component_mul(local_shocks);
    let totals: Vec<f64> = (0..s).map(|j| agg_weights.column(j).sum()).collect();
    let sums: Vec<f64> = (0..s).map(|j| weighted.column(j).sum()).collect();

    let mut shifter_estimates = DVector::zeros(s);
    for j in 0..s {
        if totals[j] <= 0.0 {
            // A sector nobody aggregates over has no estimate at all.
            return Err(Error::LeaveOneOutUndefined {
                sector: shares.sectors()[j].clone(),
                region: "<any>".into(),
            });
        }
        shifter_estimates[j] = sums[j] / totals[j];
    }

    let mut loo_totals = DMatrix::zeros(n, s);
    let mut x_hat_loo = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..s {
            let t = totals[j] - agg_weights[(i, j)];
            loo_totals[(i, j)] = t;
            if w[(i, j)] > 0.0 {
                if t <= 0.0 {
                    return Err(Error::LeaveOneOutUndefined {
                        sector: shares.sectors()[j].clone(),
                        region: shares.regions()[i].clone(),
                    });
                }
                acc += w[(i, j)] * (sums[j] - weighted[(i, j)]) / t;
            }
        }
        x_hat_loo[i] = acc;
    }

    let x_hat = w * &shifter_estimates;
    let mut psi_hat = local_shocks.clone();
    for j in 0..s {
        psi_hat.column_mut(j).add_scalar_mut(-shifter_estimates[j]);
    }

    let mut bias_proxy = 0.0;
    for i in 0..n {
        for j in 0..s {
            if totals[j] > 0.0 {
                bias_proxy += w[(i, j)] * agg_weights[(i, j)] / totals[j];
            }
        }
    }
    bias_proxy /= n as f64;

    Ok(LooInstrument {
        x_hat,
        x_hat_loo,
        shifter_estimates,
        psi_hat,
        bias_proxy,
        agg_weights: agg_weights.clone(),
        loo_totals,
    })
}
