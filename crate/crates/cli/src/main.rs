//! `shiftshare`: estimate shift-share regressions, compute exposure-robust
//! confidence sets, and run placebo simulations from the command line.
//!
//! Exit codes: 0 success, 2 input/parse/validation problems, 3 statistical
//! infeasibility (e.g. AKM needs N >= S), 4 data-generating-process errors.
//! Set `SHIFTSHARE_LOG=debug` for verbose logging.

mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use shiftshare_core::data as ssdata;
use shiftshare_core::*;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "shiftshare", version, about = "Shift-share regression estimation and inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// OLS of the outcome on the shift-share regressor and controls.
    Estimate(EstimateArgs),
    /// IV of the outcome on the treatment, instrumented by the shift-share.
    Iv(EstimateArgs),
    /// Run a Monte Carlo placebo study from a JSON configuration.
    Simulate(SimulateArgs),
    /// Dataset validation and share-concentration diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, serde::Serialize)]
struct EstimateArgs {
    /// Regions CSV: region,y[,y2][,weight][,cluster],controls...
    #[arg(long)]
    regions: PathBuf,
    /// Shares CSV: region,sector,share (long format).
    #[arg(long)]
    shares: PathBuf,
    /// Shifters CSV: sector,shifter[,cluster].
    #[arg(long)]
    shifters: PathBuf,
    /// Treat inputs as panel files carrying a `period` column.
    #[arg(long)]
    panel: bool,
    /// Group each sector's periods into one cluster (panel only).
    #[arg(long)]
    cluster_over_time: bool,
    /// Comma-separated methods: robust,cluster,akm,akm0,akm_cluster,akm0_cluster,akm_loo.
    #[arg(long, value_delimiter = ',', default_value = "robust,cluster,akm,akm0")]
    methods: Vec<String>,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Use the shifters file's cluster column for sector-clustered methods.
    #[arg(long)]
    cluster_shifters: bool,
    /// Use the regions file's weight column as observation weights.
    #[arg(long)]
    weights: bool,
    /// Null value tested by AKM0 (and reported for every method).
    #[arg(long, default_value_t = 0.0)]
    null: f64,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Do not add an intercept column to the controls.
    #[arg(long)]
    no_intercept: bool,
    /// Control for the per-region share row sums.
    #[arg(long)]
    rowsum_control: bool,
    /// Region-sector local shocks CSV (region,sector,value) for the
    /// leave-one-out instrument (akm_loo; IV mode only).
    #[arg(long)]
    local_shocks: Option<PathBuf>,
    /// Aggregation-weight CSV for the leave-one-out instrument; defaults to
    /// the share matrix itself.
    #[arg(long)]
    agg_weights: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON job configuration (see README for the schema).
    #[arg(long)]
    config: PathBuf,
    /// Override the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (never affects results).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    shares: PathBuf,
    /// Optional: with --regions and --shifters, a full validation report is
    /// included.
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    shifters: Option<PathBuf>,
    #[arg(long)]
    panel: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

struct CliFailure {
    code: u8,
    message: String,
}

fn classify(err: Error) -> CliFailure {
    let code = match &err {
        Error::AkmInfeasible(_) => 3,
        Error::DegenerateRegressor
        | Error::WeakInstrumentDegenerate
        | Error::Rank { .. }
        | Error::Cluster(_)
        | Error::LeaveOneOutUndefined { .. } => 3,
        Error::Dgp(_) => 4,
        Error::Replication { source, .. } => return classify_boxed(err.to_string(), source),
        _ => 2,
    };
    let message = match &err {
        Error::AkmInfeasible(reason) => format!(
            "{err}\nhint: AKM-type inference needs at least as many regions as sectors and a full-rank share matrix ({reason})"
        ),
        _ => err.to_string(),
    };
    CliFailure { code, message }
}

fn classify_boxed(message: String, source: &Error) -> CliFailure {
    let code = match source {
        Error::AkmInfeasible(_)
        | Error::DegenerateRegressor
        | Error::WeakInstrumentDegenerate
        | Error::Rank { .. }
        | Error::Cluster(_)
        | Error::LeaveOneOutUndefined { .. } => 3,
        Error::Dgp(_) => 4,
        _ => 2,
    };
    CliFailure { code, message }
}

fn input_failure(message: String) -> CliFailure {
    CliFailure { code: 2, message }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("SHIFTSHARE_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => run_estimate(args, FitMode::Ols),
        Command::Iv(args) => run_estimate(args, FitMode::Iv),
        Command::Simulate(args) => run_simulate(args),
        Command::Diagnose(args) => run_diagnose(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn parse_methods(raw: &[String]) -> Result<Vec<Method>> {
    raw.iter().map(|m| Method::from_str(m.trim())).collect()
}

fn config_hash(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(bytes))
}

/// Loads shares + shifters + design, with panel expansion when requested.
#[allow(clippy::type_complexity)]
fn load_dataset(
    args: &EstimateArgs,
    need_region_clusters: bool,
) -> Result<(SharesMatrix, Shifters, Design)> {
    let (shares, shifter_table, region_table) = if args.panel {
        let entries = ssdata::read_panel_shares_csv(&args.shares)?;
        let (rows, shifter_table) = ssdata::read_panel_shifters_csv(&args.shifters)?;
        let region_table = ssdata::read_panel_regions_csv(&args.regions)?;
        let observations = region_table
            .keys
            .iter()
            .map(|k| {
                let (region, period) = k.rsplit_once(':').ok_or_else(|| {
                    Error::Data(format!("panel region key {k} lacks a period"))
                })?;
                Ok(ssdata::PanelObservation { region: region.to_string(), period: period.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = ssdata::PanelSpec { observations, shifter_rows: rows, shares: entries };
        let (shares, _index) = panel_expand(&spec, args.cluster_over_time)?;
        (shares, shifter_table, region_table)
    } else {
        let shares = ssdata::read_shares_csv(&args.shares)?;
        let shifter_table = ssdata::read_shifters_csv(&args.shifters)?;
        let region_table = ssdata::read_regions_csv(&args.regions)?;
        (shares, shifter_table, region_table)
    };

    let (shifters, shifter_clusters) = shifter_table.align(&shares)?;
    let shares = if args.cluster_shifters && !args.cluster_over_time {
        let clusters = shifter_clusters.ok_or_else(|| {
            Error::Data("--cluster-shifters requires a cluster column in the shifters file".into())
        })?;
        shares.with_sector_clusters(clusters)?
    } else {
        shares
    };

    let mut design =
        region_table.to_design(shares.regions(), args.weights, need_region_clusters)?;
    if !args.no_intercept {
        design = design.with_intercept();
    }
    if args.rowsum_control {
        let n = design.n();
        let k = design.controls().ncols();
        let mut z = nalgebra::DMatrix::zeros(n, k + 1);
        z.view_mut((0, 0), (n, k)).copy_from(design.controls());
        z.column_mut(k).copy_from(&shares.row_sums());
        design = design.with_controls(z);
    }
    Ok((shares, shifters, design))
}

fn run_estimate(args: EstimateArgs, mode: FitMode) -> std::result::Result<(), CliFailure> {
    let methods = parse_methods(&args.methods).map_err(|e| input_failure(e.to_string()))?;
    let needs_cluster = methods.contains(&Method::Cluster);
    let needs_sector_clusters =
        methods.iter().any(|m| matches!(m, Method::AkmCluster | Method::Akm0Cluster));
    if needs_sector_clusters && !args.cluster_shifters && !args.cluster_over_time {
        return Err(input_failure(
            "sector-clustered methods need --cluster-shifters (or --cluster-over-time for panels)"
                .into(),
        ));
    }
    if methods.contains(&Method::AkmLoo) {
        if mode != FitMode::Iv {
            return Err(input_failure("akm_loo is only available in iv mode".into()));
        }
        if args.local_shocks.is_none() {
            return Err(input_failure(
                "akm_loo needs --local-shocks (region,sector,value CSV); --agg-weights optional"
                    .into(),
            ));
        }
    }

    let hash = config_hash(&serde_json::json!({
        "mode": if mode == FitMode::Iv { "iv" } else { "estimate" },
        "args": serde_json::to_value(&args).expect("args"),
    }));

    let (shares, shifters, design) =
        load_dataset(&args, needs_cluster).map_err(classify)?;

    let report = validate_dataset(&shares, &design, &shifters).map_err(classify)?;
    if !report.is_clean() {
        return Err(input_failure(format!(
            "dataset validation failed:\n  {}",
            report.violations.join("\n  ")
        )));
    }
    let wants_akm = methods.iter().any(|m| !matches!(m, Method::Robust | Method::Cluster));
    if wants_akm && !report.akm_feasible {
        let reason = report.akm_reason.clone().unwrap_or_default();
        return Err(classify(Error::AkmInfeasible(reason)));
    }

    let mut warnings = Vec::new();
    if report.max_row_sum_deficit() > 1e-8 && !args.rowsum_control {
        let w = format!(
            "share row sums fall below 1 (max deficit {:.3e}) and no row-sum control is present; \
             consider --rowsum-control",
            report.max_row_sum_deficit()
        );
        log::warn!("{w}");
        warnings.push(w);
    }

    // Leave-one-out instrument when requested.
    let loo = if methods.contains(&Method::AkmLoo) {
        let shocks = ssdata::read_matrix_csv(
            args.local_shocks.as_ref().expect("checked"),
            "value",
            &shares,
        )
        .map_err(classify)?;
        let agg = match &args.agg_weights {
            Some(path) => ssdata::read_matrix_csv(path, "value", &shares).map_err(classify)?,
            None => shares.weights().clone(),
        };
        Some(build_loo_instrument(&shares, &agg, &shocks).map_err(classify)?)
    } else {
        None
    };

    let fit = match (mode, &loo) {
        (FitMode::Ols, _) => ols_fit(&design, &shares, &shifters).map_err(classify)?,
        (FitMode::Iv, None) => iv_fit(&design, &shares, &shifters).map_err(classify)?,
        (FitMode::Iv, Some(loo)) => {
            iv_fit_with_instrument(&design, &shares, &loo.x_hat_loo).map_err(classify)?
        }
    };

    let needs_projection = methods.iter().any(|m| !matches!(m, Method::Robust | Method::Cluster));
    let projection = if needs_projection {
        Some(sector_project(&shares, &fit.x_dotdot, fit.obs_weight()).map_err(classify)?)
    } else {
        None
    };

    let mut results = Vec::with_capacity(methods.len());
    for method in &methods {
        let result = match method {
            Method::Robust => {
                se_conventional(&fit, None, args.level, ConventionalOptions::default())
            }
            Method::Cluster => se_conventional(
                &fit,
                design.region_cluster(),
                args.level,
                ConventionalOptions::default(),
            ),
            Method::Akm => {
                se_akm(&fit, &shares, projection.as_ref().expect("projection"), None, args.level)
            }
            Method::AkmCluster => se_akm(
                &fit,
                &shares,
                projection.as_ref().expect("projection"),
                shares.sector_cluster(),
                args.level,
            ),
            Method::Akm0 | Method::Akm0Cluster => {
                let clusters = if *method == Method::Akm0Cluster {
                    shares.sector_cluster()
                } else {
                    None
                };
                ci_akm0(&fit, &shares, projection.as_ref().expect("projection"), args.level, clusters)
                    .map(|set| InferenceResult {
                        method: *method,
                        estimate: fit.estimate(),
                        se: None,
                        confset: set,
                        se_no_correction: None,
                        sector_terms: None,
                    })
            }
            Method::AkmLoo => se_akm_loo(
                &fit,
                &shares,
                projection.as_ref().expect("projection"),
                loo.as_ref().expect("checked"),
                args.level,
            ),
        }
        .map_err(classify)?;
        // Sector-clustered AKM reports under the method name requested.
        let mut result = result;
        result.method = *method;
        results.push(result);
    }

    let doc = output::EstimateDocument {
        mode: if mode == FitMode::Iv { "iv" } else { "estimate" },
        config_hash: hash,
        level: args.level,
        null_value: args.null,
        fit: &fit,
        results: &results,
        warnings: &warnings,
    };
    let rendered = match args.format {
        Format::Json => doc.to_json(),
        Format::Csv => doc.to_csv(),
    };
    output::emit(args.out.as_deref(), &rendered).map_err(|e| input_failure(e.to_string()))
}

fn run_simulate(args: SimulateArgs) -> std::result::Result<(), CliFailure> {
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| input_failure(format!("{}: {e}", args.config.display())))?;
    let mut job: placebo::PlaceboJob = serde_json::from_str(&raw)
        .map_err(|e| input_failure(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        job.seed = seed;
    }
    let hash = config_hash(&serde_json::to_value(&job).expect("job"));
    log::info!("running {} replications (seed {}, config {hash})", job.m, job.seed);

    let report = placebo::run_placebo_job(&job, args.workers).map_err(classify)?;
    eprintln!("seed: {}", report.seed);
    eprintln!("config_hash: {hash}");

    let rendered = match args.format {
        Format::Json => {
            let doc = serde_json::json!({
                "config_hash": hash,
                "report": report,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("report");
            s.push('\n');
            s
        }
        Format::Csv => report.to_csv(),
    };
    output::emit(args.out.as_deref(), &rendered).map_err(|e| input_failure(e.to_string()))
}

fn run_diagnose(args: DiagnoseArgs) -> std::result::Result<(), CliFailure> {
    let shares = if args.panel {
        return Err(input_failure(
            "diagnose --panel: expand the panel with the estimate/iv commands instead".into(),
        ));
    } else {
        ssdata::read_shares_csv(&args.shares).map_err(classify)?
    };
    let diag = diagnostics(&shares).map_err(classify)?;

    let validation = match (&args.regions, &args.shifters) {
        (Some(regions), Some(shifters)) => {
            let table = ssdata::read_regions_csv(regions).map_err(classify)?;
            let design = table.to_design(shares.regions(), false, false).map_err(classify)?;
            let (shifters, _) = ssdata::read_shifters_csv(shifters)
                .and_then(|t| t.align(&shares))
                .map_err(classify)?;
            Some(validate_dataset(&shares, &design, &shifters).map_err(classify)?)
        }
        (None, None) => None,
        _ => {
            return Err(input_failure(
                "diagnose needs both --regions and --shifters for a validation report".into(),
            ))
        }
    };

    let rendered = match args.format {
        Format::Json => {
            let doc = serde_json::json!({
                "regions": shares.n_regions(),
                "sectors": shares.n_sectors(),
                "diagnostics": diag,
                "validation": validation,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("diagnostics");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from(
                "max_sector_share,max_sector_share_sq,t_n,overlap_sq,akm_feasible,violations\n",
            );
            s.push_str(&format!(
                "{:.6e},{:.6e},{:.6e},{:.6e},{},{}\n",
                diag.max_sector_share,
                diag.max_sector_share_sq,
                diag.t_n,
                diag.overlap_sq,
                validation.as_ref().map_or(String::new(), |v| v.akm_feasible.to_string()),
                validation.as_ref().map_or(0, |v| v.violations.len()),
            ));
            s
        }
    };
    output::emit(args.out.as_deref(), &rendered).map_err(|e| input_failure(e.to_string()))
}
