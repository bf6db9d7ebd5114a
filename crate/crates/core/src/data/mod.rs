//! Dataset model: share matrices, regression designs, shifters, validation.

mod csv_io;
mod diagnostics;
mod panel;

pub use csv_io::{
    read_matrix_csv, read_panel_regions_csv, read_panel_shares_csv, read_panel_shifters_csv,
    read_regions_csv, read_shares_csv, read_shifters_csv, RegionTable, ShifterTable,
};
pub use diagnostics::{diagnostics, DiagnosticsReport};
pub use panel::{panel_expand, PanelIndex, PanelObservation, PanelShare, PanelSpec};

use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Tolerance on per-region share row sums: sums above `1 + ROW_SUM_TOL` are
/// rejected.
pub const ROW_SUM_TOL: f64 = 1e-8;

/// N×S exposure shares with region and sector identifiers.
///
/// Rows are regions, columns are sectors. Shares are nonnegative and each row
/// sums to at most one (sums strictly below one are allowed and correspond to
/// exposure left in an omitted residual sector).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SharesMatrixData")]
pub struct SharesMatrix {
    regions: Vec<String>,
    sectors: Vec<String>,
    w: DMatrix<f64>,
    sector_cluster: Option<Vec<String>>,
}

/// Raw mirror used to funnel deserialization through the checked
/// constructor.
#[derive(Deserialize)]
struct SharesMatrixData {
    regions: Vec<String>,
    sectors: Vec<String>,
    w: DMatrix<f64>,
    #[serde(default)]
    sector_cluster: Option<Vec<String>>,
}

impl TryFrom<SharesMatrixData> for SharesMatrix {
    type Error = Error;

    fn try_from(d: SharesMatrixData) -> Result<Self> {
        let m = SharesMatrix::new(d.regions, d.sectors, d.w)?;
        match d.sector_cluster {
            Some(c) => m.with_sector_clusters(c),
            None => Ok(m),
        }
    }
}

impl SharesMatrix {
    /// Builds a share matrix, enforcing all value constraints: entries finite
    /// and nonnegative, row sums at most `1 + ROW_SUM_TOL`, identifiers
    /// unique.
    pub fn new(regions: Vec<String>, sectors: Vec<String>, w: DMatrix<f64>) -> Result<Self> {
        let m = Self::from_raw_parts(regions, sectors, w)?;
        for i in 0..m.n_regions() {
            let mut row_sum = 0.0;
            for s in 0..m.n_sectors() {
                let v = m.w[(i, s)];
                if v < 0.0 {
                    return Err(Error::Data(format!(
                        "negative share at ({},{})",
                        m.regions[i], m.sectors[s]
                    )));
                }
                row_sum += v;
            }
            if row_sum > 1.0 + ROW_SUM_TOL {
                return Err(Error::Data(format!(
                    "share row sum exceeds 1 for region {} (sum = {row_sum})",
                    m.regions[i]
                )));
            }
        }
        Ok(m)
    }

    /// Builds a share matrix checking only structure (dimensions, finiteness,
    /// identifier uniqueness), leaving value constraints to
    /// [`validate_dataset`]. Intended for staging freshly parsed data so that
    /// constraint violations can be *reported* rather than thrown one at a
    /// time.
    pub fn from_raw_parts(
        regions: Vec<String>,
        sectors: Vec<String>,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        if regions.len() != w.nrows() || sectors.len() != w.ncols() {
            return Err(Error::Dimension(format!(
                "share matrix is {}x{} but {} region and {} sector labels were given",
                w.nrows(),
                w.ncols(),
                regions.len(),
                sectors.len()
            )));
        }
        check_unique(&regions, "region")?;
        check_unique(&sectors, "sector")?;
        Ok(SharesMatrix { regions, sectors, w, sector_cluster: None })
    }

    /// Re-runs the value checks of [`SharesMatrix::new`] on an existing
    /// matrix (useful after lenient CSV staging).
    pub fn validated(self) -> Result<Self> {
        let clusters = self.sector_cluster.clone();
        let m = SharesMatrix::new(self.regions, self.sectors, self.w)?;
        match clusters {
            Some(c) => m.with_sector_clusters(c),
            None => Ok(m),
        }
    }

    /// Attaches a sector → cluster map, given as labels aligned with the
    /// sector order.
    pub fn with_sector_clusters(mut self, clusters: Vec<String>) -> Result<Self> {
        if clusters.len() != self.sectors.len() {
            return Err(Error::Dimension(format!(
                "{} cluster labels for {} sectors",
                clusters.len(),
                self.sectors.len()
            )));
        }
        self.sector_cluster = Some(clusters);
        Ok(self)
    }

    pub fn n_regions(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_sectors(&self) -> usize {
        self.w.ncols()
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn sectors(&self) -> &[String] {
        &self.sectors
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn sector_cluster(&self) -> Option<&[String]> {
        self.sector_cluster.as_deref()
    }

    /// Total share of each sector, `n_s = Σ_i w_is`.
    pub fn sector_sizes(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_sectors(),
            self.w.column_iter().map(|c| c.sum()),
        )
    }

    /// Per-region share sums `Σ_s w_is`.
    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_regions(), self.w.row_iter().map(|r| r.sum()))
    }
}

fn check_unique(labels: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::Data(format!("duplicate {what} identifier: {l}")));
        }
    }
    Ok(())
}

/// Sector-level shifters aligned with a [`SharesMatrix`]'s sector order.
#[derive(Debug, Clone, Serialize)]
pub struct Shifters {
    values: DVector<f64>,
}

impl Shifters {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite shifter value".into()));
        }
        Ok(Shifters { values: DVector::from_vec(values) })
    }

    pub fn from_vector(values: DVector<f64>) -> Result<Self> {
        Self::new(values.iter().copied().collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }
}

/// Outcomes, controls, and optional treatment/weights/clusters for one
/// cross-section, row-aligned with a [`SharesMatrix`].
#[derive(Debug, Clone, Serialize)]
pub struct Design {
    y1: DVector<f64>,
    y2: Option<DVector<f64>>,
    z: DMatrix<f64>,
    obs_weight: Option<DVector<f64>>,
    region_cluster: Option<Vec<String>>,
}

impl Design {
    /// Starts a design from the outcome vector, with an empty control matrix.
    pub fn new(y1: Vec<f64>) -> Self {
        let n = y1.len();
        Design {
            y1: DVector::from_vec(y1),
            y2: None,
            z: DMatrix::zeros(n, 0),
            obs_weight: None,
            region_cluster: None,
        }
    }

    /// Sets the endogenous treatment for IV estimation.
    pub fn with_treatment(mut self, y2: Vec<f64>) -> Self {
        self.y2 = Some(DVector::from_vec(y2));
        self
    }

    /// Replaces the control matrix (N×K; include an intercept column if one
    /// is wanted).
    pub fn with_controls(mut self, z: DMatrix<f64>) -> Self {
        self.z = z;
        self
    }

    /// Appends a column of ones to the controls.
    pub fn with_intercept(mut self) -> Self {
        let n = self.y1.len();
        let k = self.z.ncols();
        let mut z = DMatrix::zeros(n, k + 1);
        z.view_mut((0, 0), (n, k)).copy_from(&self.z);
        z.column_mut(k).fill(1.0);
        self.z = z;
        self
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Self {
        self.obs_weight = Some(DVector::from_vec(w));
        self
    }

    pub fn with_region_clusters(mut self, clusters: Vec<String>) -> Self {
        self.region_cluster = Some(clusters);
        self
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn y1(&self) -> &DVector<f64> {
        &self.y1
    }

    pub fn y2(&self) -> Option<&DVector<f64>> {
        self.y2.as_ref()
    }

    pub fn controls(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn obs_weight(&self) -> Option<&DVector<f64>> {
        self.obs_weight.as_ref()
    }

    pub fn region_cluster(&self) -> Option<&[String]> {
        self.region_cluster.as_deref()
    }
}

/// Outcome of [`validate_dataset`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Human-readable constraint violations; empty for a clean dataset.
    pub violations: Vec<String>,
    /// Whether AKM-type inference is feasible (N ≥ S and W full column rank).
    pub akm_feasible: bool,
    /// Reason when infeasible.
    pub akm_reason: Option<String>,
    /// `1 − Σ_s w_is` per region; positive entries mean exposure left in an
    /// omitted residual sector, which calls for controlling for the row sum.
    pub row_sum_deficits: Vec<f64>,
    /// True when any row sum exceeds `1 + ROW_SUM_TOL`.
    pub row_sums_exceed_one: bool,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Largest `1 − Σ_s w_is` over regions (0 when all rows sum to one).
    pub fn max_row_sum_deficit(&self) -> f64 {
        self.row_sum_deficits.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks a (shares, design, shifters) triple for constraint violations and
/// reports whether AKM inference is feasible.
///
/// Hard errors (dimension mismatches, non-finite values) abort; value
/// constraint violations are collected in the report.
pub fn validate_dataset(
    shares: &SharesMatrix,
    design: &Design,
    shifters: &Shifters,
) -> Result<ValidationReport> {
    let n = shares.n_regions();
    let s = shares.n_sectors();

    if design.n() != n {
        return Err(Error::Dimension(format!(
            "design has {} observations but the share matrix has {} regions",
            design.n(),
            n
        )));
    }
    if let Some(y2) = design.y2() {
        if y2.len() != n {
            return Err(Error::Dimension("treatment length differs from N".into()));
        }
    }
    if design.controls().nrows() != n {
        return Err(Error::Dimension("control matrix row count differs from N".into()));
    }
    if let Some(w) = design.obs_weight() {
        if w.len() != n {
            return Err(Error::Dimension("weight length differs from N".into()));
        }
    }
    if let Some(c) = design.region_cluster() {
        if c.len() != n {
            return Err(Error::Dimension("region cluster length differs from N".into()));
        }
    }
    if shifters.len() != s {
        return Err(Error::Dimension(format!(
            "{} shifters for {} sectors",
            shifters.len(),
            s
        )));
    }

    if shares.weights().iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite share value".into()));
    }
    if design.y1().iter().any(|v| !v.is_finite())
        || design.y2().is_some_and(|y| y.iter().any(|v| !v.is_finite()))
        || design.controls().iter().any(|v| !v.is_finite())
    {
        return Err(Error::Data("non-finite outcome or control value".into()));
    }

    let mut violations = Vec::new();
    for i in 0..n {
        for j in 0..s {
            if shares.weights()[(i, j)] < 0.0 {
                violations.push(format!(
                    "negative share at ({},{})",
                    shares.regions()[i],
                    shares.sectors()[j]
                ));
            }
        }
    }

    let row_sums = shares.row_sums();
    let mut row_sums_exceed_one = false;
    let mut row_sum_deficits = Vec::with_capacity(n);
    for i in 0..n {
        if row_sums[i] > 1.0 + ROW_SUM_TOL {
            row_sums_exceed_one = true;
            violations.push(format!(
                "share row sum exceeds 1 for region {} (sum = {})",
                shares.regions()[i],
                row_sums[i]
            ));
        }
        row_sum_deficits.push(1.0 - row_sums[i]);
    }

    if let Some(w) = design.obs_weight() {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            violations.push("observation weights must be finite and nonnegative".into());
        } else if w.iter().all(|v| *v == 0.0) {
            violations.push("observation weights are all zero".into());
        }
    }

    let (akm_feasible, akm_reason) = if n < s {
        (false, Some("N < S".to_string()))
    } else {
        match linalg::ls_solve(shares.weights(), &DMatrix::zeros(n, 0)) {
            Ok(_) => (true, None),
            Err(d) => (
                false,
                Some(format!(
                    "share matrix is rank deficient (rank {} < {}, sector {})",
                    d.rank,
                    s,
                    shares.sectors()[d.dependent_column]
                )),
            ),
        }
    };

    Ok(ValidationReport {
        violations,
        akm_feasible,
        akm_reason,
        row_sum_deficits,
        row_sums_exceed_one,
    })
}
