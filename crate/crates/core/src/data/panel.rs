//! Panel-to-cross-section expansion.
//!
//! A panel with regions `j`, sectors `k`, and periods `t` maps into the
//! cross-sectional framework by treating each region-period pair `(j,t)` as a
//! generalized region and each sector-period pair `(k,t)` as a generalized
//! sector. Shares are `w_jkt` when the periods match and zero otherwise, so
//! the expanded matrix is block diagonal by period.

use super::SharesMatrix;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// One observation row of a panel: a (region, period) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PanelObservation {
    pub region: String,
    pub period: String,
}

/// One share entry `w_jkt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelShare {
    pub region: String,
    pub sector: String,
    pub period: String,
    pub value: f64,
}

/// Raw panel layout before expansion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelSpec {
    /// Observation rows in presentation order.
    pub observations: Vec<PanelObservation>,
    /// Shifter rows, i.e. (sector, period) pairs in presentation order.
    pub shifter_rows: Vec<(String, String)>,
    /// Sparse share entries; missing (region, sector, period) triples are 0.
    pub shares: Vec<PanelShare>,
}

/// Maps expanded row/column indices back to their panel coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelIndex {
    /// `(region, period)` for each expanded row.
    pub observations: Vec<PanelObservation>,
    /// `(sector, period)` for each expanded column.
    pub sector_pairs: Vec<(String, String)>,
}

/// Expands a panel into a generalized cross-sectional [`SharesMatrix`].
///
/// Expanded labels concatenate the panel coordinates as `"{id}:{period}"`;
/// the returned [`PanelIndex`] carries the structured mapping. When
/// `cluster_over_time` is set, the expanded matrix clusters all periods of a
/// given sector together, which lets AKM-type inference absorb arbitrary
/// serial correlation in that sector's shifters.
pub fn panel_expand(
    spec: &PanelSpec,
    cluster_over_time: bool,
) -> Result<(SharesMatrix, PanelIndex)> {
    let n = spec.observations.len();
    let s = spec.shifter_rows.len();
    if n == 0 || s == 0 {
        return Err(Error::Data("panel has no observations or no shifter rows".into()));
    }

    let mut obs_index = HashMap::with_capacity(n);
    for (i, obs) in spec.observations.iter().enumerate() {
        if obs_index.insert((obs.region.as_str(), obs.period.as_str()), i).is_some() {
            return Err(Error::Data(format!(
                "duplicate observation ({},{})",
                obs.region, obs.period
            )));
        }
    }
    let mut sec_index = HashMap::with_capacity(s);
    for (j, (k, t)) in spec.shifter_rows.iter().enumerate() {
        if sec_index.insert((k.as_str(), t.as_str()), j).is_some() {
            return Err(Error::Data(format!("duplicate shifter row ({k},{t})")));
        }
    }

    let mut w = DMatrix::zeros(n, s);
    let mut seen = HashMap::with_capacity(spec.shares.len());
    for entry in &spec.shares {
        let i = *obs_index
            .get(&(entry.region.as_str(), entry.period.as_str()))
            .ok_or_else(|| {
                Error::Data(format!(
                    "share entry references unknown observation ({},{})",
                    entry.region, entry.period
                ))
            })?;
        let j = *sec_index
            .get(&(entry.sector.as_str(), entry.period.as_str()))
            .ok_or_else(|| {
                Error::Data(format!(
                    "share entry references unknown sector-period ({},{})",
                    entry.sector, entry.period
                ))
            })?;
        if seen.insert((i, j), ()).is_some() {
            return Err(Error::Data(format!(
                "duplicate share entry ({},{},{})",
                entry.region, entry.sector, entry.period
            )));
        }
        w[(i, j)] = entry.value;
    }

    let regions: Vec<String> = spec
        .observations
        .iter()
        .map(|o| format!("{}:{}", o.region, o.period))
        .collect();
    let sectors: Vec<String> =
        spec.shifter_rows.iter().map(|(k, t)| format!("{k}:{t}")).collect();

    let mut shares = SharesMatrix::new(regions, sectors, w)?;
    if cluster_over_time {
        let clusters: Vec<String> = spec.shifter_rows.iter().map(|(k, _)| k.clone()).collect();
        shares = shares.with_sector_clusters(clusters)?;
    }

    let index = PanelIndex {
        observations: spec.observations.clone(),
        sector_pairs: spec.shifter_rows.clone(),
    };
    Ok((shares, index))
}
