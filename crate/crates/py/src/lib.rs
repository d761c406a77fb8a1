//! Python bindings for the `localstar` engine.

use localstar::cli::{self, config::RunConfig};
use localstar::norms::{deformed_seminorm, estimator_tolerance, ModuleVectorBasis, NormConfig};
use localstar::{AdmissibleAction, BoxGrid, Compactum, EngineConfig, Error, FiberFields, FiberMetric, GriddedFunction, ProductEngine};
use localstar::verify::{self, VerifyOptions};
use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    match cli::exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows must be non-empty and of equal length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Uniform box grid; values are stored row-major with the last axis fastest.
#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: BoxGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: BoxGrid::new(lo, hi, shape).map_err(err)?,
        })
    }

    #[staticmethod]
    fn cube(n: usize, half_width: f64, points: usize) -> PyResult<Self> {
        Ok(Self {
            inner: BoxGrid::cube(n, half_width, points).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn axis(&self, axis: usize) -> PyResult<Vec<f64>> {
        if axis >= self.inner.dim() {
            return Err(PyValueError::new_err("axis out of range"));
        }
        Ok(self.inner.axis(axis))
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points()
    }
}

/// Compactly supported R^d-action with Theta = hbar * theta0.
#[pyclass(name = "Action", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAction {
    inner: AdmissibleAction,
}

#[pymethods]
impl PyAction {
    /// `metric` defaults to I / radius^2, `directions` to the identity and `theta0` to the standard symplectic form.
    #[new]
    #[pyo3(signature = (radius = 5.0, hbar = 0.1, metric = None, directions = None, theta0 = None))]
    fn new(radius: f64, hbar: f64, metric: Option<Vec<Vec<f64>>>, directions: Option<Vec<Vec<f64>>>, theta0: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let h = match metric {
            Some(m) => matrix(&m)?,
            None => DMatrix::identity(2, 2) / (radius * radius),
        };
        let n = h.nrows();
        let e = match directions {
            Some(d) => matrix(&d)?,
            None => DMatrix::identity(n, n),
        };
        let t = match theta0 {
            Some(t) => matrix(&t)?,
            None => localstar::action::symplectic(e.ncols() / 2),
        };
        let fields = FiberFields::new(FiberMetric::new(h).map_err(err)?, e).map_err(err)?;
        Ok(Self {
            inner: AdmissibleAction::from_fields(&fields, &t, hbar).map_err(err)?,
        })
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.inner.hbar()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn with_hbar(&self, hbar: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_hbar(hbar).map_err(err)?,
        })
    }

    fn effective_skew(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.effective_skew())
    }

    /// Image of x under the flow at group element v.
    fn flow(&self, v: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if v.len() != self.inner.d() || x.len() != self.inner.n() {
            return Err(PyValueError::new_err("dimension mismatch"));
        }
        Ok(self.inner.fields().flow(&v, &x))
    }

    fn in_support(&self, x: Vec<f64>) -> bool {
        self.inner.in_support(&x)
    }
}

/// Spectral deformed product for one action.
#[pyclass(name = "Engine", frozen)]
struct PyEngine {
    inner: ProductEngine,
}

fn gridded(grid: &BoxGrid, n: usize, f: &Bound<'_, PyAny>) -> PyResult<GriddedFunction> {
    if let Ok(spec) = f.extract::<String>() {
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let func = cli::compile(&spec, &names, &[("x", 0), ("y", 1), ("z", 2)]).map_err(err)?;
        return Ok(GriddedFunction::from_fn(grid.clone(), func));
    }
    let values: Vec<Complex64> = f.extract()?;
    GriddedFunction::from_samples(grid.clone(), values).map_err(err)
}

#[pymethods]
impl PyEngine {
    #[new]
    #[pyo3(signature = (action, torus_points = 128))]
    fn new(action: &PyAction, torus_points: usize) -> PyResult<Self> {
        let cfg = EngineConfig {
            torus_points,
            ..EngineConfig::default()
        };
        Ok(Self {
            inner: ProductEngine::new(action.inner.clone(), cfg).map_err(err)?,
        })
    }

    /// f * g on the grid; f and g are expressions in x0, x1, ... or sample lists on the grid.
    fn product(&self, py: Python<'_>, f: &Bound<'_, PyAny>, g: &Bound<'_, PyAny>, grid: &PyGrid) -> PyResult<Vec<Complex64>> {
        let n = self.inner.action().n();
        let (a, b) = (gridded(&grid.inner, n, f)?, gridded(&grid.inner, n, g)?);
        let h = py.detach(|| self.inner.deformed_product(&a, &b)).map_err(err)?;
        Ok(h.values().to_vec())
    }
}

#[pyfunction]
fn psi(t: f64) -> PyResult<f64> {
    localstar::eval_psi(t).map_err(err)
}

#[pyfunction]
fn psi_inverse(s: f64) -> PyResult<f64> {
    localstar::psi_inverse(s).map_err(err)
}

/// Deformed seminorm over the box [lo, hi]; returns (estimate, estimator tolerance).
#[pyfunction]
#[pyo3(signature = (action, f, grid, lo, hi, basis = 16, density = 3))]
fn seminorm(py: Python<'_>, action: &PyAction, f: &Bound<'_, PyAny>, grid: &PyGrid, lo: Vec<f64>, hi: Vec<f64>, basis: usize, density: usize) -> PyResult<(f64, f64)> {
    let a = gridded(&grid.inner, action.inner.n(), f)?;
    let l = Compactum::new(lo, hi).map_err(err)?;
    let b = ModuleVectorBasis::fourier(action.inner.d(), basis);
    let cfg = NormConfig {
        density,
        ..NormConfig::default()
    };
    let est = py.detach(|| deformed_seminorm(&action.inner, &a, &l, &b, &cfg)).map_err(err)?;
    Ok((est.value, estimator_tolerance(&est)))
}

/// Runs verification suites and returns the JSON report.
#[pyfunction]
#[pyo3(signature = (suite = None, seed = None, tolerance_override = None))]
fn run_verify(py: Python<'_>, suite: Option<String>, seed: Option<u64>, tolerance_override: Option<f64>) -> PyResult<String> {
    let opts = VerifyOptions {
        seed: seed.unwrap_or(VerifyOptions::default().seed),
        tolerance_override,
    };
    let (report, _) = py.detach(|| verify::run(suite.as_deref(), &opts)).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Validates a configuration file body; returns the parsed key-value entries.
#[pyfunction]
fn parse_config(text: &str) -> PyResult<Vec<(String, String)>> {
    let cfg = RunConfig::parse(text).map_err(err)?;
    Ok(cfg.entries.into_iter().collect())
}

#[pymodule]
fn pylocalstar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyAction>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(psi_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(seminorm, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
