//! Estimation and inference for shift-share regression designs.
//!
//! A shift-share (Bartik) regressor aggregates sector-level shifters into a
//! regional covariate, `X_i = Σ_s w_is · shifter_s`, using an N×S matrix of
//! exposure shares `W`. Because regions with similar shares end up with
//! correlated regressors *and* often correlated residuals, conventional
//! heteroskedasticity-robust or region-clustered standard errors can be badly
//! downward biased in these designs. This crate implements, alongside the
//! conventional estimators:
//!
//! * the AKM standard error, which is valid under arbitrary cross-regional
//!   residual correlation as long as the shifters are independent across
//!   sectors (optionally across clusters of sectors),
//! * the AKM0 confidence set, obtained by inverting the test with residuals
//!   recomputed under each hypothesized null; the set is available in closed
//!   form and can be an interval, a union of two rays, or the whole real line,
//! * IV versions of both (Anderson–Rubin style for AKM0), including the
//!   leave-one-out estimated-shifter correction with its extra variance term,
//! * a deterministic Monte Carlo placebo engine that measures rejection rates
//!   and effective confidence-interval lengths of every procedure under a
//!   menu of data-generating processes.
//!
//! # Observation weights
//!
//! All regressions accept optional per-observation weights `ω_i ≥ 0`. The
//! convention used **everywhere** is that every inner product is ω-weighted:
//! coefficients solve the ω-weighted normal equations, the per-sector residual
//! sums are `R̂_s = Σ_i w_is ω_i ε̂_i`, and the sector projection solves the
//! ω-weighted least-squares problem. Setting `ω ≡ 1` recovers the unweighted
//! formulas exactly.

pub mod data;
pub mod error;
pub mod estimate;
pub mod infer;
mod linalg;
pub mod placebo;

pub use data::{
    diagnostics, panel_expand, validate_dataset, Design, DiagnosticsReport, PanelIndex, PanelSpec,
    SharesMatrix, Shifters, ValidationReport,
};
pub use error::{Error, Result};
pub use estimate::{
    build_loo_instrument, build_shift_share, iv_fit, iv_fit_with_instrument, ols_fit, partial_out,
    FitMode, FitResult, LooInstrument,
};
pub use infer::{
    ci_akm0, ci_akm0_weak_iv, loo_pairwise_terms, se_akm, se_akm_loo, se_conventional,
    sector_project, ConfidenceSet, ConfidenceSetShape, ConventionalOptions, InferenceResult,
    Method, SectorProjection,
};
pub use placebo::{
    draw_shifters, estimand_nonlinear, make_outcome, run_placebo, synth_clustered_shares,
    synth_shares, ControlsSpec, EffectSpec, InstrumentKind, MethodSummary, OutcomeDgp,
    PlaceboConfig, PlaceboMode, PlaceboReport, ResidualAddon, ShifterDgp, ShockDist,
};
