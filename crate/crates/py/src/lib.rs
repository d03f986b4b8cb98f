//! Python bindings. Structured results cross the boundary as JSON and come out
//! as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use mhdc::config::RunConfig;
use mhdc::container::ArrayContainer;
use mhdc::solver::{hn_norm_with, FieldState};
use mhdc::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Builds a config from a JSON object of overrides; absent keys take defaults.
pub fn config_from_json(text: &str) -> mhdc::Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[pyclass(name = "RunConfig", module = "mhdc_py", from_py_object)]
#[derive(Clone)]
pub struct PyRunConfig {
    pub inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// `RunConfig(n=128, mu=0.1, family="alfven_linear", ...)`
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let text: String = match kwargs {
            Some(k) => py.import("json")?.call_method1("dumps", (k,))?.extract()?,
            None => "{}".into(),
        };
        Ok(PyRunConfig {
            inner: config_from_json(&text).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: RunConfig::from_toml(text).map_err(to_py_err)?,
        })
    }

    /// A copy with the given fields changed.
    #[pyo3(signature = (**kwargs))]
    fn replace(&self, py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let base = to_py(py, &self.inner)?.cast_into::<PyDict>()?;
        if let Some(k) = kwargs {
            base.update(k.as_mapping())?;
        }
        Self::new(py, Some(&base))
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn sample_times(&self) -> Vec<f64> {
        self.inner.sample_times()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "RunConfig(d={}, k={}, n={}, box_length={}, mu={}, order={}, family={:?}, hash={})",
            c.d,
            c.k,
            c.n,
            c.box_length,
            c.mu,
            c.order,
            c.family,
            c.hash()
        )
    }
}

/// Elsässer state `z±` on the grid of a config.
#[pyclass(name = "FieldState", module = "mhdc_py")]
pub struct PyFieldState {
    pub inner: FieldState,
}

#[pymethods]
impl PyFieldState {
    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    /// Grid shape, one entry per axis.
    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.domain().shape().to_vec()
    }

    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    #[pyo3(signature = (order = 3))]
    fn hn_norm(&self, order: u32) -> (f64, f64) {
        hn_norm_with(&self.inner, order, Default::default())
    }

    /// Both fields as an `Array` with axes `(field, component, x1, ...)`.
    fn to_array(&self) -> PyResult<PyArray> {
        Ok(PyArray {
            inner: mhdc::run::state_container(&self.inner).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("FieldState(t={}, mu={}, shape={:?})", self.inner.t, self.inner.mu, self.inner.domain().shape())
    }
}

/// Row-major f64 array with labelled axes, stored in the `.mhdc` container format.
#[pyclass(name = "Array", module = "mhdc_py")]
pub struct PyArray {
    pub inner: ArrayContainer,
}

#[pymethods]
impl PyArray {
    #[new]
    fn new(dims: Vec<u64>, labels: Vec<String>, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyArray {
            inner: ArrayContainer::new(dims, labels, data).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dims(&self) -> Vec<u64> {
        self.inner.dims.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.clone()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        mhdc::container::save_array(&path, &self.inner).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyArray {
            inner: mhdc::container::load_array(&path).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Array(dims={:?}, labels={:?})", self.inner.dims, self.inner.labels)
    }
}

/// Initial data of the config's family, before any rescaling.
#[pyfunction]
fn generate(cfg: &PyRunConfig) -> PyResult<PyFieldState> {
    let c = &cfg.inner;
    let domain = c.domain().map_err(to_py_err)?;
    let inner = mhdc::data::generate(&domain, &c.data_spec(), c.mu, c.order).map_err(to_py_err)?;
    Ok(PyFieldState { inner })
}

/// Measured constants ledger with its C0 breakdown and forcing calibration.
#[pyfunction]
fn estimate_constants<'py>(py: Python<'py>, cfg: &PyRunConfig) -> PyResult<Bound<'py, PyAny>> {
    let c = &cfg.inner;
    let r = py
        .detach(|| -> mhdc::Result<_> {
            let domain = c.domain()?;
            let s = mhdc::data::generate(&domain, &c.data_spec(), c.mu, c.order)?;
            mhdc::run::measure_constants(&domain, Some(&s), c.order, c.norm, c.mu)
        })
        .map_err(to_py_err)?;
    to_py(py, &r)
}

/// Full verification run. Returns the report dict and the state at the last sample.
#[pyfunction]
fn run_verify<'py>(py: Python<'py>, cfg: &PyRunConfig) -> PyResult<(Bound<'py, PyAny>, PyFieldState)> {
    let (report, state) = py.detach(|| mhdc::run::run_verify_full(&cfg.inner)).map_err(to_py_err)?;
    Ok((to_py(py, &report)?, PyFieldState { inner: state }))
}

/// As `run_verify`, also writing the run directory; returns the manifest too.
#[pyfunction]
fn verify_to_dir<'py>(py: Python<'py>, cfg: &PyRunConfig, out: PathBuf) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let (report, manifest) = py
        .detach(|| -> mhdc::Result<_> {
            let (report, state) = mhdc::run::run_verify_full(&cfg.inner)?;
            let manifest = mhdc::run::write_run(&out, "verify", &report, &state)?;
            Ok((report, manifest))
        })
        .map_err(to_py_err)?;
    Ok((to_py(py, &report)?, to_py(py, &manifest)?))
}

/// Plain trajectory without the comparison checks.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, cfg: &PyRunConfig) -> PyResult<(Bound<'py, PyAny>, PyFieldState)> {
    let (report, state) = py.detach(|| mhdc::run::simulate(&cfg.inner)).map_err(to_py_err)?;
    Ok((to_py(py, &report)?, PyFieldState { inner: state }))
}

/// Comparison functions `ρ±1` at `t = 0` and every sample time.
#[pyfunction]
fn construct<'py>(py: Python<'py>, cfg: &PyRunConfig) -> PyResult<(Bound<'py, PyAny>, Vec<f64>, PyArray)> {
    let (constants, times, array) = py.detach(|| mhdc::run::construct(&cfg.inner)).map_err(to_py_err)?;
    Ok((to_py(py, &constants)?, times, PyArray { inner: array }))
}

#[pymodule]
pub fn mhdc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyFieldState>()?;
    m.add_class::<PyArray>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_constants, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add_function(wrap_pyfunction!(verify_to_dir, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(construct, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
