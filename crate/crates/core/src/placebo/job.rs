//! Self-contained placebo job descriptions, resolvable from a JSON document.
//!
//! A job mirrors [`super::PlaceboConfig`] but lets the share matrix come from
//! a synthesizer or a CSV file instead of inline data, which is what a
//! configuration file wants.

use super::{run_placebo, PlaceboConfig, PlaceboMode, ShifterDgp};
use crate::data::SharesMatrix;
use crate::error::{Error, Result};
use crate::infer::Method;
use serde::{Deserialize, Serialize};

/// Where a job's share matrix comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharesSource {
    /// Symmetric-Dirichlet rows via [`super::synth_shares`].
    Synth {
        n: usize,
        s: usize,
        concentration: f64,
        scale: (f64, f64),
        seed: u64,
        /// Group sectors into clusters of this size (by index).
        #[serde(default)]
        sector_cluster_size: Option<usize>,
    },
    /// Rows with regional group structure via
    /// [`super::synth_clustered_shares`].
    SynthClustered {
        n: usize,
        s: usize,
        concentration: f64,
        scale: (f64, f64),
        groups: usize,
        mixing: f64,
        seed: u64,
        #[serde(default)]
        sector_cluster_size: Option<usize>,
    },
    /// Long-format shares CSV (`region,sector,share`).
    Csv { path: String },
    /// Inline matrix.
    Inline { shares: Box<SharesMatrix> },
}

/// Region clusters for the `cluster` method.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionClusterSpec {
    /// Contiguous groups `g0, g1, ...`.
    Groups { count: usize },
    /// Explicit labels aligned with the share matrix's regions.
    Labels { labels: Vec<String> },
    /// The groups produced by the `synth_clustered` share source.
    FromShares,
}

/// A placebo run description suitable for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceboJob {
    pub m: usize,
    pub seed: u64,
    pub level: f64,
    pub shares: SharesSource,
    pub shifter_dgp: ShifterDgp,
    #[serde(default)]
    pub outcome: super::OutcomeDgp,
    #[serde(default)]
    pub mode: PlaceboMode,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub null_value: f64,
    #[serde(default)]
    pub controls: super::ControlsSpec,
    #[serde(default)]
    pub region_clusters: Option<RegionClusterSpec>,
}

fn attach_sector_clusters(shares: SharesMatrix, size: Option<usize>) -> Result<SharesMatrix> {
    match size {
        None => Ok(shares),
        Some(0) => Err(Error::Dgp("sector_cluster_size must be positive".into())),
        Some(size) => {
            let labels = (0..shares.n_sectors()).map(|j| format!("c{}", j / size)).collect();
            shares.with_sector_clusters(labels)
        }
    }
}

impl PlaceboJob {
    /// Resolves the share source and region clusters into a runnable
    /// [`PlaceboConfig`].
    pub fn resolve(&self) -> Result<PlaceboConfig> {
        let mut generated_groups: Option<Vec<String>> = None;
        let shares = match &self.shares {
            SharesSource::Synth { n, s, concentration, scale, seed, sector_cluster_size } => {
                let shares =
                    super::synth_shares(*n, *s, *concentration, *scale, &mut super::run_rng(*seed))?;
                attach_sector_clusters(shares, *sector_cluster_size)?
            }
            SharesSource::SynthClustered {
                n,
                s,
                concentration,
                scale,
                groups,
                mixing,
                seed,
                sector_cluster_size,
            } => {
                let (shares, labels) = super::synth_clustered_shares(
                    *n,
                    *s,
                    *concentration,
                    *scale,
                    *groups,
                    *mixing,
                    &mut super::run_rng(*seed),
                )?;
                generated_groups = Some(labels);
                attach_sector_clusters(shares, *sector_cluster_size)?
            }
            SharesSource::Csv { path } => {
                crate::data::read_shares_csv(std::path::Path::new(path))?.validated()?
            }
            SharesSource::Inline { shares } => (**shares).clone(),
        };

        let region_clusters = match &self.region_clusters {
            None => None,
            Some(RegionClusterSpec::Groups { count }) => {
                if *count == 0 || *count > shares.n_regions() {
                    return Err(Error::Dgp(format!(
                        "invalid region cluster count {count} for {} regions",
                        shares.n_regions()
                    )));
                }
                let size = shares.n_regions().div_ceil(*count);
                Some((0..shares.n_regions()).map(|i| format!("g{}", i / size)).collect())
            }
            Some(RegionClusterSpec::Labels { labels }) => Some(labels.clone()),
            Some(RegionClusterSpec::FromShares) => Some(generated_groups.ok_or_else(|| {
                Error::Dgp(
                    "region_clusters = from_shares requires the synth_clustered share source".into(),
                )
            })?),
        };

        Ok(PlaceboConfig {
            m: self.m,
            seed: self.seed,
            level: self.level,
            shares,
            shifter_dgp: self.shifter_dgp.clone(),
            outcome: self.outcome.clone(),
            mode: self.mode,
            methods: self.methods.clone(),
            null_value: self.null_value,
            controls: self.controls,
            region_clusters,
        })
    }
}

/// Resolves and runs a job.
pub fn run_placebo_job(job: &PlaceboJob, workers: Option<usize>) -> Result<super::PlaceboReport> {
    let config = job.resolve()?;
    run_placebo(&config, workers)
}
