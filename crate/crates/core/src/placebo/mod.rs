//! Monte Carlo placebo engine.
//!
//! A placebo run holds shares and outcomes fixed and redraws the sector
//! shifters `M` times. Because the true coefficient on the generated
//! regressor is zero (or exactly the configured effect), the rejection rate
//! of each inference procedure at the configured null measures its size, and
//! the median effective standard error measures its cost in confidence
//! interval length.
//!
//! Replications are independent work units on counter-based RNG streams;
//! reports are byte-identical for a given `(seed, config)` regardless of the
//! worker count.

mod dgp;
pub mod job;
mod rng;

pub use dgp::{
    alt_shares, draw_shifters, estimand_nonlinear, heterogeneous_linear_estimand, make_outcome,
    synth_clustered_shares, synth_shares, EffectSpec, NonlinearEstimand, NonlinearOutcome,
    OutcomeDgp, ResidualAddon, ShifterDgp, ShockDist,
};
pub use job::{run_placebo_job, PlaceboJob, RegionClusterSpec, SharesSource};
pub use rng::{replication_rng, run_rng};

use crate::data::{Design, SharesMatrix};
use crate::error::{Error, Result};
use crate::estimate::{build_loo_instrument, build_shift_share, iv_fit_with_instrument, ols_fit, FitResult, LooInstrument};
use crate::infer::{
    ci_akm0, se_akm, se_akm_loo, se_conventional, sector_project, ConventionalOptions, Method,
};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

/// Controls included in every replication's regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlsSpec {
    None,
    #[default]
    Intercept,
    /// Intercept plus the per-region share row sums, for designs whose rows
    /// do not sum to one.
    InterceptRowSums,
}

/// Which instrument an estimated-shifter IV replication uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentKind {
    /// The true shifters (infeasible when they are only measured with
    /// noise); included as a benchmark.
    Observed,
    /// Share-weighted aggregate of the noisy local shocks.
    Estimated,
    /// Leave-one-out aggregate: region i's own shock never enters its own
    /// instrument.
    EstimatedLoo,
}

/// Estimation mode of a placebo run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlaceboMode {
    #[default]
    Ols,
    /// Estimated-shifter IV design: local shocks `X_is = 𝒳_s + ψ_is` with
    /// `ψ_is ~ N(0, psi_variance)`, treatment `y2_i = Σ_s w_is X_is`, and
    /// outcome `y1_i = endogeneity · Σ_s w_is ψ_is + Σ_s w_is A_s` with
    /// `A_s ~ N(0, structural_variance)`. The true effect of `y2` on `y1`
    /// is zero; `endogeneity ≠ 0` biases the non-leave-one-out estimated
    /// instrument. Aggregation weights are the shares themselves.
    IvEstimatedShifters {
        psi_variance: f64,
        endogeneity: f64,
        structural_variance: f64,
        instrument: InstrumentKind,
    },
}

/// Full description of a placebo run. Reports are a pure function of this
/// configuration (worker counts never change results).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceboConfig {
    /// Number of replications.
    pub m: usize,
    pub seed: u64,
    /// Confidence level for every method, e.g. `0.95`.
    pub level: f64,
    pub shares: SharesMatrix,
    pub shifter_dgp: ShifterDgp,
    #[serde(default)]
    pub outcome: OutcomeDgp,
    #[serde(default)]
    pub mode: PlaceboMode,
    pub methods: Vec<Method>,
    /// The null hypothesis tested each replication.
    #[serde(default)]
    pub null_value: f64,
    #[serde(default)]
    pub controls: ControlsSpec,
    /// Region cluster labels for the `cluster` method.
    #[serde(default)]
    pub region_clusters: Option<Vec<String>>,
}

/// Per-method aggregate across replications.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    /// Share of replications rejecting the null.
    pub rejection_rate: f64,
    /// Median effective standard error (infinite when more than half of the
    /// confidence sets are unbounded).
    pub median_effective_se: f64,
}

impl Serialize for MethodSummary {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("MethodSummary", 3)?;
        s.serialize_field("method", &self.method)?;
        s.serialize_field("rejection_rate", &self.rejection_rate)?;
        s.serialize_field("median_effective_se", &crate::infer::Endpoint(self.median_effective_se))?;
        s.end()
    }
}

/// Aggregated placebo results.
#[derive(Debug, Clone, Serialize)]
pub struct PlaceboReport {
    pub m: usize,
    pub seed: u64,
    pub level: f64,
    pub null_value: f64,
    /// Mean of the point estimates across replications.
    pub estimate_mean: f64,
    /// Sample standard deviation of the point estimates.
    pub estimate_sd: f64,
    pub methods: Vec<MethodSummary>,
}

impl PlaceboReport {
    /// Monte Carlo standard error of `estimate_mean`.
    pub fn estimate_mc_se(&self) -> f64 {
        self.estimate_sd / (self.m as f64).sqrt()
    }

    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// One CSV row per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,rejection_rate,median_effective_se,estimate_mean,estimate_sd,m,seed\n",
        );
        for m in &self.methods {
            out.push_str(&format!(
                "{},{:.6e},{},{:.6e},{:.6e},{},{}\n",
                m.method,
                m.rejection_rate,
                if m.median_effective_se.is_finite() {
                    format!("{:.6e}", m.median_effective_se)
                } else {
                    "inf".to_string()
                },
                self.estimate_mean,
                self.estimate_sd,
                self.m,
                self.seed
            ));
        }
        out
    }
}

struct RepOutcome {
    estimate: f64,
    /// Per configured method: (rejected, effective se).
    decisions: Vec<(bool, f64)>,
}

struct RunContext {
    z: DMatrix<f64>,
}

fn build_controls(spec: ControlsSpec, shares: &SharesMatrix) -> DMatrix<f64> {
    let n = shares.n_regions();
    match spec {
        ControlsSpec::None => DMatrix::zeros(n, 0),
        ControlsSpec::Intercept => DMatrix::from_element(n, 1, 1.0),
        ControlsSpec::InterceptRowSums => {
            let mut z = DMatrix::zeros(n, 2);
            z.column_mut(0).fill(1.0);
            z.column_mut(1).copy_from(&shares.row_sums());
            z
        }
    }
}

fn validate_config(config: &PlaceboConfig) -> Result<()> {
    if config.m == 0 {
        return Err(Error::Dgp("need at least one replication".into()));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::Dgp(format!("confidence level must be in (0,1), got {}", config.level)));
    }
    if config.methods.is_empty() {
        return Err(Error::Dgp("no methods requested".into()));
    }
    let n = config.shares.n_regions();
    if let Some(c) = &config.region_clusters {
        if c.len() != n {
            return Err(Error::Dimension("region cluster labels length differs from N".into()));
        }
    }
    for method in &config.methods {
        match method {
            Method::Cluster if config.region_clusters.is_none() => {
                return Err(Error::Cluster(
                    "the cluster method needs region_clusters in the configuration".into(),
                ));
            }
            Method::AkmCluster | Method::Akm0Cluster if config.shares.sector_cluster().is_none() => {
                return Err(Error::Cluster(
                    "sector-clustered methods need sector clusters on the share matrix".into(),
                ));
            }
            Method::AkmLoo => match config.mode {
                PlaceboMode::IvEstimatedShifters {
                    instrument: InstrumentKind::EstimatedLoo,
                    ..
                } => {}
                _ => {
                    return Err(Error::Dgp(
                        "akm_loo requires the estimated-shifter IV mode with the leave-one-out instrument".into(),
                    ));
                }
            },
            _ => {}
        }
    }
    if let PlaceboMode::IvEstimatedShifters { psi_variance, structural_variance, .. } = config.mode {
        if psi_variance < 0.0 || structural_variance < 0.0 {
            return Err(Error::Dgp("IV design variances must be nonnegative".into()));
        }
    }
    Ok(())
}

fn evaluate_methods(
    config: &PlaceboConfig,
    fit: &FitResult,
    loo: Option<&LooInstrument>,
) -> Result<RepOutcome> {
    let needs_projection = config.methods.iter().any(|m| {
        matches!(
            m,
            Method::Akm | Method::Akm0 | Method::AkmCluster | Method::Akm0Cluster | Method::AkmLoo
        )
    });
    let projection = if needs_projection {
        Some(sector_project(&config.shares, &fit.x_dotdot, fit.obs_weight())?)
    } else {
        None
    };
    let level = config.level;
    let null = config.null_value;
    let sector_clusters = config.shares.sector_cluster();

    let mut decisions = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        let (reject, eff_se) = match method {
            Method::Robust => {
                let r = se_conventional(fit, None, level, ConventionalOptions::default())?;
                (!r.confset.contains(null), r.confset.effective_se)
            }
            Method::Cluster => {
                let labels = config.region_clusters.as_deref().expect("validated");
                let r = se_conventional(fit, Some(labels), level, ConventionalOptions::default())?;
                (!r.confset.contains(null), r.confset.effective_se)
            }
            Method::Akm => {
                let r = se_akm(fit, &config.shares, projection.as_ref().expect("projection"), None, level)?;
                (!r.confset.contains(null), r.confset.effective_se)
            }
            Method::AkmCluster => {
                let r = se_akm(
                    fit,
                    &config.shares,
                    projection.as_ref().expect("projection"),
                    sector_clusters,
                    level,
                )?;
                (!r.confset.contains(null), r.confset.effective_se)
            }
            Method::Akm0 => {
                let set = ci_akm0(fit, &config.shares, projection.as_ref().expect("projection"), level, None)?;
                (!set.contains(null), set.effective_se)
            }
            Method::Akm0Cluster => {
                let set = ci_akm0(
                    fit,
                    &config.shares,
                    projection.as_ref().expect("projection"),
                    level,
                    sector_clusters,
                )?;
                (!set.contains(null), set.effective_se)
            }
            Method::AkmLoo => {
                let r = se_akm_loo(
                    fit,
                    &config.shares,
                    projection.as_ref().expect("projection"),
                    loo.expect("validated"),
                    level,
                )?;
                (!r.confset.contains(null), r.confset.effective_se)
            }
        };
        decisions.push((reject, eff_se));
    }
    Ok(RepOutcome { estimate: fit.estimate(), decisions })
}

fn run_replication(config: &PlaceboConfig, ctx: &RunContext, index: usize) -> Result<RepOutcome> {
    let mut rng = replication_rng(config.seed, index as u64);
    let shares = &config.shares;
    match config.mode {
        PlaceboMode::Ols => {
            let shifters = draw_shifters(&config.shifter_dgp, shares, &mut rng)?;
            let y = make_outcome(&config.outcome, shares, &shifters, &mut rng)?;
            let mut design = Design::new(y.iter().copied().collect()).with_controls(ctx.z.clone());
            if let Some(c) = &config.region_clusters {
                design = design.with_region_clusters(c.clone());
            }
            let fit = ols_fit(&design, shares, &shifters)?;
            evaluate_methods(config, &fit, None)
        }
        PlaceboMode::IvEstimatedShifters {
            psi_variance,
            endogeneity,
            structural_variance,
            instrument,
        } => {
            let shifters = draw_shifters(&config.shifter_dgp, shares, &mut rng)?;
            let (n, s) = (shares.n_regions(), shares.n_sectors());
            let psi_dist = Normal::new(0.0, psi_variance.sqrt())
                .map_err(|e| Error::Dgp(format!("psi variance: {e}")))?;
            let mut psi = DMatrix::zeros(n, s);
            for i in 0..n {
                for j in 0..s {
                    psi[(i, j)] = psi_dist.sample(&mut rng);
                }
            }
            let mut local = psi.clone();
            for j in 0..s {
                local.column_mut(j).add_scalar_mut(shifters.values()[j]);
            }
            let a_dist = Normal::new(0.0, structural_variance.sqrt())
                .map_err(|e| Error::Dgp(format!("structural variance: {e}")))?;
            let a = DVector::from_iterator(s, (0..s).map(|_| a_dist.sample(&mut rng)));

            let w = shares.weights();
            let y2: DVector<f64> =
                DVector::from_iterator(n, (0..n).map(|i| local.row(i).dot(&w.row(i))));
            let psi_agg: DVector<f64> =
                DVector::from_iterator(n, (0..n).map(|i| psi.row(i).dot(&w.row(i))));
            let y1 = psi_agg * endogeneity + w * a;

            let needs_loo = !matches!(instrument, InstrumentKind::Observed)
                || config.methods.contains(&Method::AkmLoo);
            let loo = if needs_loo {
                Some(build_loo_instrument(shares, w, &local)?)
            } else {
                None
            };
            let x = match instrument {
                InstrumentKind::Observed => build_shift_share(shares, &shifters)?,
                InstrumentKind::Estimated => loo.as_ref().expect("loo").x_hat.clone(),
                InstrumentKind::EstimatedLoo => loo.as_ref().expect("loo").x_hat_loo.clone(),
            };

            let mut design = Design::new(y1.iter().copied().collect())
                .with_treatment(y2.iter().copied().collect())
                .with_controls(ctx.z.clone());
            if let Some(c) = &config.region_clusters {
                design = design.with_region_clusters(c.clone());
            }
            let fit = iv_fit_with_instrument(&design, shares, &x)?;
            evaluate_methods(config, &fit, loo.as_ref())
        }
    }
}

fn median_sorted(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs the placebo. `workers` caps the rayon pool (`None` = all cores); the
/// report does not depend on it.
pub fn run_placebo(config: &PlaceboConfig, workers: Option<usize>) -> Result<PlaceboReport> {
    validate_config(config)?;
    let ctx = RunContext { z: build_controls(config.controls, &config.shares) };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Dgp(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<RepOutcome>> = pool.install(|| {
        (0..config.m)
            .into_par_iter()
            .map(|rep| run_replication(config, &ctx, rep))
            .collect()
    });

    // First failure by replication index, independent of scheduling.
    let mut reps = Vec::with_capacity(config.m);
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => reps.push(o),
            Err(e) => return Err(Error::Replication { index, source: Box::new(e) }),
        }
    }

    let m = config.m as f64;
    let mean = reps.iter().map(|r| r.estimate).sum::<f64>() / m;
    let sd = if config.m > 1 {
        (reps.iter().map(|r| (r.estimate - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };

    let mut methods = Vec::with_capacity(config.methods.len());
    for (k, method) in config.methods.iter().enumerate() {
        let rejections = reps.iter().filter(|r| r.decisions[k].0).count();
        let mut eff: Vec<f64> = reps.iter().map(|r| r.decisions[k].1).collect();
        methods.push(MethodSummary {
            method: *method,
            rejection_rate: rejections as f64 / m,
            median_effective_se: median_sorted(&mut eff),
        });
    }

    Ok(PlaceboReport {
        m: config.m,
        seed: config.seed,
        level: config.level,
        null_value: config.null_value,
        estimate_mean: mean,
        estimate_sd: sd,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(methods: Vec<Method>) -> PlaceboConfig {
        let shares = synth_shares(24, 6, 1.0, (0.6, 1.0), &mut run_rng(100)).unwrap();
        PlaceboConfig {
            m: 8,
            seed: 1234,
            level: 0.95,
            shares,
            shifter_dgp: ShifterDgp::IidNormal { variance: 5.0 },
            outcome: OutcomeDgp {
                addon: ResidualAddon::RegionClusterShock { variance: 1.0, clusters: None },
                ..OutcomeDgp::default()
            },
            mode: PlaceboMode::Ols,
            methods,
            null_value: 0.0,
            controls: ControlsSpec::Intercept,
            region_clusters: Some((0..24).map(|i| format!("g{}", i / 4)).collect()),
        }
    }

    #[test]
    fn single_replication_reports_one_decision() {
        let mut config = small_config(vec![Method::Akm]);
        config.m = 1;
        let report = run_placebo(&config, Some(1)).unwrap();
        assert_eq!(report.m, 1);
        let summary = report.method(Method::Akm).unwrap();
        assert!(summary.rejection_rate == 0.0 || summary.rejection_rate == 1.0);
        assert_eq!(report.estimate_sd, 0.0);
    }

    #[test]
    fn worker_count_does_not_change_the_report() {
        let config = small_config(vec![Method::Robust, Method::Cluster, Method::Akm, Method::Akm0]);
        let r1 = serde_json::to_vec(&run_placebo(&config, Some(1)).unwrap()).unwrap();
        let r4 = serde_json::to_vec(&run_placebo(&config, Some(4)).unwrap()).unwrap();
        let r8 = serde_json::to_vec(&run_placebo(&config, Some(8)).unwrap()).unwrap();
        assert_eq!(r1, r4);
        assert_eq!(r1, r8);
    }

    #[test]
    fn same_seed_same_report() {
        let config = small_config(vec![Method::Akm0]);
        let a = serde_json::to_vec(&run_placebo(&config, None).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_placebo(&config, None).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cluster_method_requires_cluster_labels() {
        let mut config = small_config(vec![Method::Cluster]);
        config.region_clusters = None;
        assert!(matches!(run_placebo(&config, None), Err(Error::Cluster(_))));
    }

    #[test]
    fn replication_errors_carry_the_index() {
        let mut config = small_config(vec![Method::Robust]);
        // Heteroskedastic variance is negative for every sector: the first
        // replication to run fails, and the report names replication 0.
        config.shifter_dgp = ShifterDgp::Heteroskedastic { base: -10.0, lambda: 0.0 };
        match run_placebo(&config, None) {
            Err(Error::Replication { index, source }) => {
                assert_eq!(index, 0);
                assert!(matches!(*source, Error::Dgp(_)));
            }
            other => panic!("expected replication error, got {other:?}"),
        }
    }

    #[test]
    fn loo_method_requires_loo_instrument_mode() {
        let config = small_config(vec![Method::AkmLoo]);
        assert!(matches!(run_placebo(&config, None), Err(Error::Dgp(_))));
    }

    #[test]
    fn iv_mode_runs_and_is_deterministic() {
        let mut config = small_config(vec![Method::Akm, Method::Akm0, Method::AkmLoo]);
        config.mode = PlaceboMode::IvEstimatedShifters {
            psi_variance: 10.0,
            endogeneity: 0.0,
            structural_variance: 20.0,
            instrument: InstrumentKind::EstimatedLoo,
        };
        let a = serde_json::to_vec(&run_placebo(&config, Some(1)).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_placebo(&config, Some(3)).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn homogeneous_effect_with_matching_null_is_sized_like_the_zero_null() {
        // Shifting the truth and the null together must give the identical
        // decisions as testing zero under no effect.
        let mut null_cfg = small_config(vec![Method::Akm0]);
        null_cfg.m = 40;
        let base_report = run_placebo(&null_cfg, None).unwrap();

        let mut shifted = null_cfg.clone();
        shifted.outcome.effect = EffectSpec::Homogeneous { beta: 2.5 };
        shifted.null_value = 2.5;
        let shifted_report = run_placebo(&shifted, None).unwrap();
        assert_eq!(
            base_report.method(Method::Akm0).unwrap().rejection_rate,
            shifted_report.method(Method::Akm0).unwrap().rejection_rate
        );
        assert!((shifted_report.estimate_mean - base_report.estimate_mean - 2.5).abs() < 1e-9);
    }
}
