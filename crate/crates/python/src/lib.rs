//! Python bindings: construct datasets, fit shift-share regressions, compute
//! confidence sets, and drive the placebo engine from Python.
//!
//! Build with `cargo build -p shiftshare-py --release`, then rename
//! `libshiftshare.so` to `shiftshare.so` somewhere on `sys.path` (see
//! `python/smoke_test.py` at the repository root, which automates this).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use shiftshare_core as core;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py_report<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value).map_err(err)?;
    json_to_py(py, &json)
}

/// N×S exposure shares with labels.
#[pyclass(name = "SharesMatrix", skip_from_py_object)]
#[derive(Clone)]
struct PySharesMatrix {
    inner: core::SharesMatrix,
}

#[pymethods]
impl PySharesMatrix {
    /// SharesMatrix(regions, sectors, rows) — `rows` is a list of
    /// per-region share lists.
    #[new]
    fn new(regions: Vec<String>, sectors: Vec<String>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rows.len();
        let s = sectors.len();
        if rows.iter().any(|r| r.len() != s) {
            return Err(PyValueError::new_err("every share row must have one entry per sector"));
        }
        let w = nalgebra::DMatrix::from_fn(n, s, |i, j| rows[i][j]);
        Ok(PySharesMatrix { inner: core::SharesMatrix::new(regions, sectors, w).map_err(err)? })
    }

    /// Load a long-format shares CSV (`region,sector,share`).
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let inner = core::data::read_shares_csv(std::path::Path::new(path)).map_err(err)?;
        Ok(PySharesMatrix { inner })
    }

    /// Attach sector cluster labels (aligned with the sector order).
    fn with_sector_clusters(&self, clusters: Vec<String>) -> PyResult<Self> {
        Ok(PySharesMatrix {
            inner: self.inner.clone().with_sector_clusters(clusters).map_err(err)?,
        })
    }

    #[getter]
    fn n_regions(&self) -> usize {
        self.inner.n_regions()
    }

    #[getter]
    fn n_sectors(&self) -> usize {
        self.inner.n_sectors()
    }

    #[getter]
    fn regions(&self) -> Vec<String> {
        self.inner.regions().to_vec()
    }

    #[getter]
    fn sectors(&self) -> Vec<String> {
        self.inner.sectors().to_vec()
    }

    fn sector_sizes(&self) -> Vec<f64> {
        self.inner.sector_sizes().iter().copied().collect()
    }

    fn row_sums(&self) -> Vec<f64> {
        self.inner.row_sums().iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!("SharesMatrix({}x{})", self.inner.n_regions(), self.inner.n_sectors())
    }
}

/// Sector-level shifters aligned with a share matrix.
#[pyclass(name = "Shifters", skip_from_py_object)]
#[derive(Clone)]
struct PyShifters {
    inner: core::Shifters,
}

#[pymethods]
impl PyShifters {
    #[new]
    fn new(values: Vec<f64>) -> PyResult<Self> {
        Ok(PyShifters { inner: core::Shifters::new(values).map_err(err)? })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().iter().copied().collect()
    }
}

/// Outcomes, controls, and options for one regression.
#[pyclass(name = "Design", skip_from_py_object)]
#[derive(Clone)]
struct PyDesign {
    inner: core::Design,
}

#[pymethods]
impl PyDesign {
    /// Design(y1, y2=None, controls=None, weights=None,
    ///        region_clusters=None, intercept=True)
    ///
    /// `controls` is a list of control columns (each an N-list).
    #[new]
    #[pyo3(signature = (y1, y2=None, controls=None, weights=None, region_clusters=None, intercept=true))]
    fn new(
        y1: Vec<f64>,
        y2: Option<Vec<f64>>,
        controls: Option<Vec<Vec<f64>>>,
        weights: Option<Vec<f64>>,
        region_clusters: Option<Vec<String>>,
        intercept: bool,
    ) -> PyResult<Self> {
        let n = y1.len();
        let mut design = core::Design::new(y1);
        if let Some(y2) = y2 {
            design = design.with_treatment(y2);
        }
        if let Some(cols) = controls {
            if cols.iter().any(|c| c.len() != n) {
                return Err(PyValueError::new_err("every control column must have length N"));
            }
            let z = nalgebra::DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
            design = design.with_controls(z);
        }
        if let Some(w) = weights {
            design = design.with_weights(w);
        }
        if let Some(c) = region_clusters {
            design = design.with_region_clusters(c);
        }
        if intercept {
            design = design.with_intercept();
        }
        Ok(PyDesign { inner: design })
    }
}

/// Fitted coefficients and residuals.
#[pyclass(name = "FitResult")]
struct PyFitResult {
    inner: core::FitResult,
    shares: core::SharesMatrix,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn beta_hat(&self) -> f64 {
        self.inner.beta_hat
    }

    #[getter]
    fn alpha_hat(&self) -> Option<f64> {
        self.inner.alpha_hat
    }

    #[getter]
    fn first_stage(&self) -> Option<f64> {
        self.inner.first_stage()
    }

    #[getter]
    fn estimate(&self) -> f64 {
        self.inner.estimate()
    }

    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.inner.residuals.iter().copied().collect()
    }

    #[getter]
    fn x_dotdot(&self) -> Vec<f64> {
        self.inner.x_dotdot.iter().copied().collect()
    }

    /// Inference for one method: "robust", "cluster", "akm", "akm0",
    /// "akm_cluster", or "akm0_cluster". Returns a dict shaped like the CLI's
    /// JSON rows.
    #[pyo3(signature = (method, level=0.95, region_clusters=None))]
    fn infer<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        level: f64,
        region_clusters: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let method: core::Method = method.parse().map_err(err)?;
        let fit = &self.inner;
        let shares = &self.shares;
        let result = match method {
            core::Method::Robust => {
                core::se_conventional(fit, None, level, core::ConventionalOptions::default())
            }
            core::Method::Cluster => core::se_conventional(
                fit,
                region_clusters.as_deref(),
                level,
                core::ConventionalOptions::default(),
            ),
            core::Method::Akm | core::Method::AkmCluster => {
                let proj = core::sector_project(shares, &fit.x_dotdot, fit.obs_weight())
                    .map_err(err)?;
                let clusters = if method == core::Method::AkmCluster {
                    shares.sector_cluster()
                } else {
                    None
                };
                core::se_akm(fit, shares, &proj, clusters, level)
            }
            core::Method::Akm0 | core::Method::Akm0Cluster => {
                let proj = core::sector_project(shares, &fit.x_dotdot, fit.obs_weight())
                    .map_err(err)?;
                let clusters = if method == core::Method::Akm0Cluster {
                    shares.sector_cluster()
                } else {
                    None
                };
                core::ci_akm0(fit, shares, &proj, level, clusters).map(|set| {
                    core::InferenceResult {
                        method,
                        estimate: fit.estimate(),
                        se: None,
                        confset: set,
                        se_no_correction: None,
                        sector_terms: None,
                    }
                })
            }
            core::Method::AkmLoo => {
                return Err(PyValueError::new_err(
                    "akm_loo needs the leave-one-out helpers; use the CLI or the Rust API",
                ))
            }
        }
        .map_err(err)?;
        let mut result = result;
        result.method = method;
        to_py_report(py, &result)
    }
}

/// OLS of `y1` on the shift-share regressor and controls.
#[pyfunction]
fn ols(design: &PyDesign, shares: &PySharesMatrix, shifters: &PyShifters) -> PyResult<PyFitResult> {
    let fit = core::ols_fit(&design.inner, &shares.inner, &shifters.inner).map_err(err)?;
    Ok(PyFitResult { inner: fit, shares: shares.inner.clone() })
}

/// IV of `y1` on `y2`, instrumenting with the shift-share regressor.
#[pyfunction]
fn iv(design: &PyDesign, shares: &PySharesMatrix, shifters: &PyShifters) -> PyResult<PyFitResult> {
    let fit = core::iv_fit(&design.inner, &shares.inner, &shifters.inner).map_err(err)?;
    Ok(PyFitResult { inner: fit, shares: shares.inner.clone() })
}

/// The shift-share regressor `X = W @ shifters`.
#[pyfunction]
fn build_shift_share(shares: &PySharesMatrix, shifters: &PyShifters) -> PyResult<Vec<f64>> {
    let x = core::build_shift_share(&shares.inner, &shifters.inner).map_err(err)?;
    Ok(x.iter().copied().collect())
}

/// Share-concentration diagnostics as a dict.
#[pyfunction]
fn diagnostics<'py>(py: Python<'py>, shares: &PySharesMatrix) -> PyResult<Bound<'py, PyAny>> {
    let report = core::diagnostics(&shares.inner).map_err(err)?;
    to_py_report(py, &report)
}

/// Dataset validation report as a dict.
#[pyfunction]
fn validate<'py>(
    py: Python<'py>,
    shares: &PySharesMatrix,
    design: &PyDesign,
    shifters: &PyShifters,
) -> PyResult<Bound<'py, PyAny>> {
    let report =
        core::validate_dataset(&shares.inner, &design.inner, &shifters.inner).map_err(err)?;
    to_py_report(py, &report)
}

/// Runs a placebo job from a JSON document (same schema as the CLI's
/// `simulate --config`); returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (config_json, workers=None))]
fn run_placebo<'py>(
    py: Python<'py>,
    config_json: &str,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let job: core::placebo::PlaceboJob =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = core::placebo::run_placebo_job(&job, workers).map_err(err)?;
    to_py_report(py, &report)
}

/// Monte Carlo estimate of the nonlinear (log-aggregator) estimand; returns
/// `(beta, mc_se)`.
#[pyfunction]
#[pyo3(signature = (beta_check, shares, sigma2, mc_draws=50_000, seed=0))]
fn estimand_nonlinear(
    beta_check: f64,
    shares: &PySharesMatrix,
    sigma2: f64,
    mc_draws: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let est = core::estimand_nonlinear(
        beta_check,
        &shares.inner,
        sigma2,
        mc_draws,
        &mut core::placebo::run_rng(seed),
    )
    .map_err(err)?;
    Ok((est.beta, est.mc_se))
}

#[pymodule]
fn shiftshare(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySharesMatrix>()?;
    m.add_class::<PyShifters>()?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(ols, m)?)?;
    m.add_function(wrap_pyfunction!(iv, m)?)?;
    m.add_function(wrap_pyfunction!(build_shift_share, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_placebo, m)?)?;
    m.add_function(wrap_pyfunction!(estimand_nonlinear, m)?)?;
    Ok(())
}
