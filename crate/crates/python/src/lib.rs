//! Python bindings. Matrices cross the boundary as nested lists of complex
//! numbers, rates are in nats.

use std::path::PathBuf;

use detbeam::cli::ScenarioFile;
use detbeam::correlation::{jakes_correlation as jakes_core, JakesParams, KroneckerSpec};
use detbeam::fixed_point::{solve_fundamental, SolverOptions};
use detbeam::matrix::{HermitianMatrix, C64};
use detbeam::metrics;
use detbeam::montecarlo::{ic_monte_carlo, monte_carlo_summary, Metric, TrialSummary};
use detbeam::power_allocation::{waterfill_sum, WaterfillOptions};
use detbeam::presets;
use detbeam::scenario::{ScenarioBuilder, ScenarioConfig};
use detbeam::stream_control::{exhaustive_stream_search, ic_rate_pair, InterferenceScenario};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(detbeam, DetbeamError, PyValueError, "Invalid input to a detbeam routine.");
create_exception!(detbeam, ConvergenceError, PyRuntimeError, "A numerical method failed to converge.");

fn to_py(e: detbeam::Error) -> PyErr {
    if e.is_numerical() {
        ConvergenceError::new_err(e.to_string())
    } else {
        DetbeamError::new_err(e.to_string())
    }
}

fn options(tol: f64) -> SolverOptions {
    SolverOptions::with_tol(tol)
}

fn hermitian(rows: Vec<Vec<C64>>) -> PyResult<HermitianMatrix> {
    let dim = rows.len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(DetbeamError::new_err("matrix must be square"));
    }
    HermitianMatrix::new(dim, rows.into_iter().flatten().collect()).map_err(to_py)
}

fn nested(m: &HermitianMatrix) -> Vec<Vec<C64>> {
    (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect()
}

fn summary<'py>(py: Python<'py>, s: &TrialSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("trials", s.trials)?;
    d.set_item("mean", s.mean)?;
    d.set_item("std", s.std)?;
    d.set_item("std_error", s.std_error())?;
    Ok(d)
}

/// `(powers, receive_corr, transmit_corr, path_loss)`.
type KroneckerTransmitter = (Vec<f64>, Vec<Vec<C64>>, Vec<Vec<C64>>, f64);

/// Multiple-access channel: receive dimension, per-column covariances and
/// per-stream powers.
#[pyclass(name = "Scenario", module = "detbeam", frozen)]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    /// `transmitters` is a list of `(powers, receive_corr, transmit_corr, path_loss)`;
    /// the channel of each transmitter follows the Kronecker model.
    #[new]
    fn new(n_rx: usize, transmitters: Vec<KroneckerTransmitter>) -> PyResult<Self> {
        let mut builder = ScenarioBuilder::new(n_rx);
        for (powers, r, t, path_loss) in transmitters {
            let spec = KroneckerSpec::from_transmit_matrix(hermitian(r)?, &hermitian(t)?, path_loss).map_err(to_py)?;
            builder = builder.kronecker(powers, &spec);
        }
        Ok(Self {
            inner: builder.build().map_err(to_py)?,
        })
    }

    /// Uniform-power channel described by a JSON scenario file.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let file = ScenarioFile::from_path(&path).map_err(to_py)?;
        Ok(Self {
            inner: file.mac_setup().map_err(to_py)?.config,
        })
    }

    /// The three-user correlated MAC with unit power per stream.
    #[staticmethod]
    fn three_user_mac() -> PyResult<Self> {
        Ok(Self {
            inner: presets::three_user_mac().map_err(to_py)?,
        })
    }

    /// Single transmitter, identity covariances, unit powers.
    #[staticmethod]
    fn iid(n_rx: usize, n_tx: usize, n_streams: usize) -> PyResult<Self> {
        let r = HermitianMatrix::identity(n_rx);
        let inner = ScenarioBuilder::new(n_rx).transmitter(vec![1.0; n_streams], &vec![r; n_tx]).build().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.inner.n_rx()
    }

    #[getter]
    fn num_transmitters(&self) -> usize {
        self.inner.num_transmitters()
    }

    #[getter]
    fn powers(&self) -> Vec<Vec<f64>> {
        self.inner.powers()
    }

    fn c(&self, k: usize) -> PyResult<f64> {
        self.check(k)?;
        Ok(self.inner.c(k))
    }

    fn cbar(&self, k: usize) -> PyResult<f64> {
        self.check(k)?;
        Ok(self.inner.cbar(k))
    }

    fn with_powers(&self, powers: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_powers(&powers).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        let streams: Vec<usize> = self.inner.transmitters().iter().map(|t| t.n_streams()).collect();
        format!("Scenario(n_rx={}, streams={streams:?})", self.inner.n_rx())
    }
}

impl PyScenario {
    fn check(&self, k: usize) -> PyResult<()> {
        if k < self.inner.num_transmitters() {
            Ok(())
        } else {
            Err(DetbeamError::new_err(format!("transmitter index {k} out of range")))
        }
    }
}

/// Two transmitter-receiver pairs sharing the band.
#[pyclass(name = "InterferenceChannel", module = "detbeam", frozen)]
struct PyInterference {
    inner: InterferenceScenario,
}

#[pymethods]
impl PyInterference {
    /// The two-pair scenario with ten antennas everywhere at noise power `rho`.
    #[staticmethod]
    fn two_pair(rho: f64) -> PyResult<Self> {
        Ok(Self {
            inner: presets::two_pair_interference(rho).map_err(to_py)?,
        })
    }

    /// Channel from a JSON scenario file, at its first grid point.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let file = ScenarioFile::from_path(&path).map_err(to_py)?;
        Ok(Self {
            inner: file.interference_setup().map_err(to_py)?,
        })
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }

    #[getter]
    fn n_tx(&self) -> (usize, usize) {
        let [a, b] = self.inner.n_tx();
        (a, b)
    }

    fn with_rho(&self, rho: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_rho(rho).map_err(to_py)?,
        })
    }
}

#[pyfunction]
fn jakes_correlation(theta_min: f64, theta_max: f64, spacing: f64, dim: usize) -> PyResult<Vec<Vec<C64>>> {
    let out = jakes_core(&JakesParams::new(theta_min, theta_max, spacing, dim)).map_err(to_py)?;
    Ok(nested(&out.matrix))
}

/// Fixed point `(g, gbar, delta)` at noise power `rho`.
#[pyfunction]
#[pyo3(signature = (scenario, rho, tol = 1e-9))]
fn solve<'py>(py: Python<'py>, scenario: &PyScenario, rho: f64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let sol = py.detach(|| solve_fundamental(&scenario.inner, rho, &options(tol))).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("g", sol.g.clone())?;
    d.set_item("gbar", sol.gbar.clone())?;
    d.set_item("delta", sol.delta.clone())?;
    d.set_item("outer_iterations", sol.outer_iterations)?;
    d.set_item("residual", sol.residual)?;
    d.set_item("trace_identity", sol.trace_identity(&scenario.inner).map_err(to_py)?)?;
    Ok(d)
}

/// Deterministic mutual information, per-stream MMSE SINR and MMSE sum-rate.
#[pyfunction]
#[pyo3(signature = (scenario, rho, tol = 1e-9))]
fn evaluate<'py>(py: Python<'py>, scenario: &PyScenario, rho: f64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = py.detach(|| metrics::evaluate(&scenario.inner, rho, &options(tol))).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mutual_info", r.mutual_info)?;
    d.set_item("mmse_sinr", r.mmse_sinr)?;
    d.set_item("mmse_sumrate", r.mmse_sumrate)?;
    Ok(d)
}

/// Sum-constrained water-filling with budget `total`.
#[pyfunction]
#[pyo3(signature = (scenario, rho, total, tol = 1e-9))]
fn waterfill<'py>(py: Python<'py>, scenario: &PyScenario, rho: f64, total: f64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let opts = WaterfillOptions {
        solver: options(tol),
        ..WaterfillOptions::default()
    };
    let wf = py.detach(|| waterfill_sum(&scenario.inner, rho, total, &opts)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("powers", wf.power_diags)?;
    d.set_item("water_level", wf.water_level)?;
    d.set_item("iterations", wf.iterations)?;
    d.set_item("objective_trace", wf.objective_trace)?;
    d.set_item("mutual_info", wf.mutual_info)?;
    Ok(d)
}

/// Monte Carlo mean and spread of `metric`: `"mutual_info"`, `"sumrate"` or
/// `("sinr", k, j)`.
#[pyfunction]
#[pyo3(signature = (scenario, rho, trials, seed = 0, metric = None))]
fn monte_carlo<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    rho: f64,
    trials: usize,
    seed: u64,
    metric: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyDict>> {
    let metric = match metric {
        None => Metric::MutualInformation,
        Some(m) => {
            if let Ok(name) = m.extract::<String>() {
                match name.as_str() {
                    "mutual_info" => Metric::MutualInformation,
                    "sumrate" => Metric::MmseSumRate,
                    other => return Err(DetbeamError::new_err(format!("unknown metric {other:?}"))),
                }
            } else {
                let (name, k, j): (String, usize, usize) = m.extract()?;
                if name != "sinr" {
                    return Err(DetbeamError::new_err(format!("unknown metric {name:?}")));
                }
                Metric::Sinr { k, j }
            }
        }
    };
    let s = py.detach(|| monte_carlo_summary(&scenario.inner, rho, trials, seed, metric)).map_err(to_py)?;
    summary(py, &s)
}

/// Deterministic rates `(I_1, I_2)` of both receivers for stream counts `(n1, n2)`.
#[pyfunction]
#[pyo3(signature = (channel, n1, n2, tol = 1e-9))]
fn rate_pair(py: Python<'_>, channel: &PyInterference, n1: usize, n2: usize, tol: f64) -> PyResult<(f64, f64)> {
    py.detach(|| ic_rate_pair(&channel.inner, n1, n2, &options(tol))).map_err(to_py)
}

/// Sum-rate over every stream-count pair. Cells are `(n1, n2, rate_1, rate_2)`
/// with rates `None` where the solver failed.
#[pyfunction]
#[pyo3(signature = (channel, tol = 1e-9))]
fn stream_search<'py>(py: Python<'py>, channel: &PyInterference, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let grid = py.detach(|| exhaustive_stream_search(&channel.inner, &options(tol)));
    let cells: Vec<(usize, usize, Option<f64>, Option<f64>)> = grid
        .cells
        .iter()
        .map(|c| match &c.rates {
            Ok((a, b)) => (c.n1, c.n2, Some(*a), Some(*b)),
            Err(_) => (c.n1, c.n2, None, None),
        })
        .collect();
    let d = PyDict::new(py);
    d.set_item("cells", cells)?;
    d.set_item("best", grid.best)?;
    d.set_item("best_value", grid.best_value)?;
    d.set_item("any_failed", grid.any_failed)?;
    Ok(d)
}

/// Monte Carlo rates of both receivers for stream counts `(n1, n2)`.
#[pyfunction]
#[pyo3(signature = (channel, n1, n2, trials, seed = 0))]
fn interference_monte_carlo<'py>(
    py: Python<'py>,
    channel: &PyInterference,
    n1: usize,
    n2: usize,
    trials: usize,
    seed: u64,
) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let [a, b] = py.detach(|| ic_monte_carlo(&channel.inner, n1, n2, trials, seed)).map_err(to_py)?;
    Ok((summary(py, &a)?, summary(py, &b)?))
}

#[pyfunction]
fn rho_from_snr_db(snr_db: f64) -> f64 {
    presets::rho_from_snr_db(snr_db)
}

#[pyfunction]
fn snr_db_from_rho(rho: f64) -> f64 {
    presets::snr_db_from_rho(rho)
}

/// `Ī` of the square i.i.d. channel in closed form.
#[pyfunction]
fn closed_form_mutual_information(rho: f64) -> f64 {
    metrics::closed_form_mp_mutual_information(rho)
}

#[pymodule]
#[pyo3(name = "detbeam")]
pub fn detbeam_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DetbeamError", m.py().get_type::<DetbeamError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyInterference>()?;
    m.add_function(wrap_pyfunction!(jakes_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(waterfill, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(rate_pair, m)?)?;
    m.add_function(wrap_pyfunction!(stream_search, m)?)?;
    m.add_function(wrap_pyfunction!(interference_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(rho_from_snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(snr_db_from_rho, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_mutual_information, m)?)?;
    Ok(())
}
