//! Python bindings for the `ballistic` crate.

use ballistic::ballistic_det::{self, eulerian};
use ballistic::cli;
use ballistic::convex_core::{LagrangianSpec, Potential};
use ballistic::discrete_ot::{self, Sense};
use ballistic::dynamic_cost;
use ballistic::measures::{DiscreteMeasure, Space};
use ballistic::stochastic_ctrl::{self, ControlSet, WalkLattice};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use std::path::PathBuf;

fn py_err(e: ballistic::Error) -> PyErr {
    match e {
        ballistic::Error::InvalidInput(_)
        | ballistic::Error::Config { .. }
        | ballistic::Error::MalformedFile { .. }
        | ballistic::Error::Unsupported(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serializes a report and hands it to Python as plain dicts and lists.
fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_space(s: &str) -> PyResult<Space> {
    match s {
        "state" => Ok(Space::State),
        "costate" => Ok(Space::Costate),
        _ => Err(PyValueError::new_err(format!("space must be 'state' or 'costate', got {s:?}"))),
    }
}

#[pyclass(name = "Lagrangian", frozen)]
struct PyLagrangian {
    inner: LagrangianSpec,
}

#[pymethods]
impl PyLagrangian {
    /// `|p|²/2` in dimension `dim`.
    #[staticmethod]
    #[pyo3(signature = (dim = 1))]
    fn quadratic_free(dim: usize) -> Self {
        PyLagrangian { inner: LagrangianSpec::quadratic_free(dim) }
    }

    /// `alpha |x|²/2 + beta |p|²/2`.
    #[staticmethod]
    #[pyo3(signature = (alpha, beta, dim = 1))]
    fn harmonic(alpha: f64, beta: f64, dim: usize) -> PyResult<Self> {
        Ok(PyLagrangian { inner: LagrangianSpec::harmonic(dim, alpha, beta).map_err(py_err)? })
    }

    /// `|p|^delta / delta`.
    #[staticmethod]
    #[pyo3(signature = (delta, dim = 1))]
    fn power_kinetic(delta: f64, dim: usize) -> PyResult<Self> {
        Ok(PyLagrangian { inner: LagrangianSpec::power_kinetic(dim, delta).map_err(py_err)? })
    }

    /// `|p|²/2 + U(x)` with `potential` either "quadratic" or "quartic".
    #[staticmethod]
    #[pyo3(signature = (potential, kappa, dim = 1))]
    fn state_potential(potential: &str, kappa: f64, dim: usize) -> PyResult<Self> {
        let u = match potential {
            "quadratic" => Potential::Quadratic { kappa },
            "quartic" => Potential::Quartic { kappa },
            _ => return Err(PyValueError::new_err(format!("unknown potential {potential:?}"))),
        };
        Ok(PyLagrangian { inner: LagrangianSpec::state_potential(dim, u).map_err(py_err)? })
    }

    /// Piecewise-linear convex kinetic term through `(knots, values)`, d = 1.
    #[staticmethod]
    fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        Ok(PyLagrangian { inner: LagrangianSpec::tabulated(knots, values).map_err(py_err)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    /// `L(x, p)`; `inf` outside the domain.
    fn __call__(&self, x: Vec<f64>, p: Vec<f64>) -> f64 {
        self.inner.eval(&x, &p).to_f64()
    }

    fn __repr__(&self) -> String {
        format!("Lagrangian({:?}, dim={})", self.inner.family, self.inner.dim)
    }
}

#[pyclass(name = "Measure", frozen)]
struct PyMeasure {
    inner: DiscreteMeasure,
}

#[pymethods]
impl PyMeasure {
    /// Atoms are rows of coordinates; weights must sum to 1.
    #[new]
    #[pyo3(signature = (atoms, weights, space = "state"))]
    fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>, space: &str) -> PyResult<Self> {
        Ok(PyMeasure { inner: DiscreteMeasure::new(atoms, weights, parse_space(space)?).map_err(py_err)? })
    }

    /// One-dimensional measure from scalar positions.
    #[staticmethod]
    #[pyo3(signature = (xs, weights, space = "state"))]
    fn on_line(xs: Vec<f64>, weights: Vec<f64>, space: &str) -> PyResult<Self> {
        Ok(PyMeasure { inner: DiscreteMeasure::on_line(&xs, &weights, parse_space(space)?).map_err(py_err)? })
    }

    #[getter]
    fn atoms(&self) -> Vec<Vec<f64>> {
        self.inner.atoms().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn space(&self) -> &'static str {
        self.inner.space().as_str()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Measure({} atoms, space={})", self.inner.len(), self.inner.space().as_str())
    }
}

#[pyclass(name = "TransportPlan", frozen)]
struct PyTransportPlan {
    inner: discrete_ot::TransportPlan,
}

#[pymethods]
impl PyTransportPlan {
    #[getter]
    fn value(&self) -> f64 {
        self.inner.value
    }

    #[getter]
    fn sense(&self) -> &'static str {
        match self.inner.sense {
            Sense::Min => "min",
            Sense::Max => "max",
        }
    }

    /// Coupling as a list of rows.
    #[getter]
    fn coupling(&self) -> Vec<Vec<f64>> {
        self.inner.coupling.chunks(self.inner.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn dual_source(&self) -> Vec<f64> {
        self.inner.dual_source.clone()
    }

    #[getter]
    fn dual_target(&self) -> Vec<f64> {
        self.inner.dual_target.clone()
    }

    /// `(i, j, mass)` entries above `threshold`.
    #[pyo3(signature = (threshold = 1e-12))]
    fn support(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        self.inner.support(threshold)
    }

    fn __repr__(&self) -> String {
        format!("TransportPlan({}x{}, value={})", self.inner.rows, self.inner.cols, self.inner.value)
    }
}

/// Ballistic cost `b_T(v, x)` between a costate and a state.
#[pyfunction]
fn ballistic_cost(l: &PyLagrangian, v: Vec<f64>, x: Vec<f64>, t: f64) -> PyResult<f64> {
    dynamic_cost::ballistic_cost(&l.inner, &v, &x, t).map_err(py_err)
}

/// Fixed-end action `c_T(y, x)`; `inf` when no admissible path exists.
#[pyfunction]
fn fixed_end_cost(l: &PyLagrangian, y: Vec<f64>, x: Vec<f64>, t: f64) -> PyResult<f64> {
    Ok(dynamic_cost::fixed_end_cost(&l.inner, &y, &x, t).map_err(py_err)?.to_f64())
}

/// Optimal plan for the ballistic cost between `mu0` (costate) and `nu_t` (state).
#[pyfunction]
#[pyo3(signature = (l, mu0, nu_t, t, sense = "min"))]
fn ballistic_transport(l: &PyLagrangian, mu0: &PyMeasure, nu_t: &PyMeasure, t: f64, sense: &str) -> PyResult<PyTransportPlan> {
    let plan = match sense {
        "min" => ballistic_det::ballistic_min(&l.inner, &mu0.inner, &nu_t.inner, t),
        "max" => ballistic_det::ballistic_max(&l.inner, &mu0.inner, &nu_t.inner, t),
        _ => return Err(PyValueError::new_err(format!("sense must be 'min' or 'max', got {sense:?}"))),
    };
    Ok(PyTransportPlan { inner: plan.map_err(py_err)? })
}

/// Interpolation certificate as a dict. The min sense searches the default
/// candidate grid with `fill` extra points.
#[pyfunction]
#[pyo3(signature = (l, mu0, nu_t, t, sense = "min", fill = 41))]
fn interpolate(
    py: Python<'_>,
    l: &PyLagrangian,
    mu0: &PyMeasure,
    nu_t: &PyMeasure,
    t: f64,
    sense: &str,
    fill: usize,
) -> PyResult<Py<PyAny>> {
    let cert = match sense {
        "min" => {
            let grid = ballistic_det::default_candidate_grid(&l.inner, &mu0.inner, &nu_t.inner, t, fill).map_err(py_err)?;
            ballistic_det::interpolate_min(&l.inner, &mu0.inner, &nu_t.inner, t, &grid)
        }
        "max" => ballistic_det::interpolate_max(&l.inner, &mu0.inner, &nu_t.inner, t),
        _ => return Err(PyValueError::new_err(format!("sense must be 'min' or 'max', got {sense:?}"))),
    };
    to_py(py, &cert.map_err(py_err)?)
}

/// Optimal map report as a dict.
#[pyfunction]
#[pyo3(signature = (l, mu0, nu_t, t, sense = "min"))]
fn optimal_map(py: Python<'_>, l: &PyLagrangian, mu0: &PyMeasure, nu_t: &PyMeasure, t: f64, sense: &str) -> PyResult<Py<PyAny>> {
    let report = match sense {
        "min" => ballistic_det::optimal_map_min(&l.inner, &mu0.inner, &nu_t.inner, t),
        "max" => ballistic_det::optimal_map_max(&l.inner, &mu0.inner, &nu_t.inner, t),
        _ => return Err(PyValueError::new_err(format!("sense must be 'min' or 'max', got {sense:?}"))),
    };
    to_py(py, &report.map_err(py_err)?)
}

/// Continuity-equation cross-check on an `cells x steps` grid (free quadratic, d = 1).
#[pyfunction]
#[pyo3(signature = (l, mu0, nu_t, t, cells, steps = None))]
fn eulerian_check(
    py: Python<'_>,
    l: &PyLagrangian,
    mu0: &PyMeasure,
    nu_t: &PyMeasure,
    t: f64,
    cells: usize,
    steps: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let grid = eulerian::EulerianGrid { cells, steps: steps.unwrap_or(cells) };
    to_py(py, &eulerian::eulerian_check(&l.inner, &mu0.inner, &nu_t.inner, t, grid).map_err(py_err)?)
}

/// Stochastic transport cost between measures supported on lattice nodes.
/// The lattice covers `[lo, hi]` with `dt/dx² = ratio`; drifts are uniform in `[-b_max, b_max]`.
#[pyfunction]
#[pyo3(signature = (l, nu0, nu_t, t, lo, hi, steps, b_max, per_side = 20, ratio = 0.5))]
#[allow(clippy::too_many_arguments)]
fn mt_cost(
    py: Python<'_>,
    l: &PyLagrangian,
    nu0: &PyMeasure,
    nu_t: &PyMeasure,
    t: f64,
    lo: f64,
    hi: f64,
    steps: usize,
    b_max: f64,
    per_side: usize,
    ratio: f64,
) -> PyResult<Py<PyAny>> {
    let lattice = WalkLattice::covering(lo, hi, t, steps, ratio).map_err(py_err)?;
    let controls = ControlSet::uniform(b_max, per_side).map_err(py_err)?;
    let r = stochastic_ctrl::mt_cost(&l.inner, &nu0.inner, &nu_t.inner, &lattice, &controls).map_err(py_err)?;
    to_py(py, &r)
}

/// Runs a TOML config like the CLI and returns the result document as a dict.
#[pyfunction]
#[pyo3(signature = (config, out, seed = None, tol = None))]
fn run_config(py: Python<'_>, config: PathBuf, out: PathBuf, seed: Option<u64>, tol: Option<f64>) -> PyResult<Py<PyAny>> {
    let doc = cli::run(&config, &out, &cli::Overrides { seed, tol }).map_err(py_err)?;
    to_py(py, &doc)
}

#[pymodule]
fn ballistic_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLagrangian>()?;
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyTransportPlan>()?;
    m.add_function(wrap_pyfunction!(ballistic_cost, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_end_cost, m)?)?;
    m.add_function(wrap_pyfunction!(ballistic_transport, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_map, m)?)?;
    m.add_function(wrap_pyfunction!(eulerian_check, m)?)?;
    m.add_function(wrap_pyfunction!(mt_cost, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
