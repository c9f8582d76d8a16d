//! Python bindings for `absorption-lab`.
use absorption_lab::classifier::classify as classify_rs;
use absorption_lab::harness::{self, ExperimentConfig};
use absorption_lab::radial_profiles::{solve_ball_blowup, solve_global_radial, singular_profile_phi, RadialProfile};
use absorption_lab::scalar_flow::{flow as flow_rs, ScalarFlow as ScalarFlowRs};
use absorption_lab::{parse_nonlinearity, LabError, Nonlinearity as NonlinearityRs};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::Path;

fn err(e: LabError) -> PyErr {
    let code = harness::exit_code(&e);
    let msg = format!("{e} (exit code {code})");
    match code {
        2 | 3 => PyValueError::new_err(msg),
        4 => PyArithmeticError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

/// Absorption term `f`, parsed from text such as `"u*ln(u+1)^3"` or `"u^2"`.
#[pyclass(frozen)]
#[derive(Clone)]
struct Nonlinearity(NonlinearityRs);

#[pymethods]
impl Nonlinearity {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        parse_nonlinearity(text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn power(beta: f64) -> PyResult<Self> {
        NonlinearityRs::power(beta).map(Self).map_err(err)
    }

    #[staticmethod]
    fn log(alpha: f64) -> PyResult<Self> {
        NonlinearityRs::log(alpha).map(Self).map_err(err)
    }

    fn f(&self, s: f64) -> f64 {
        self.0.f(s)
    }

    /// `h(s) = f(s)/s`.
    fn h(&self, s: f64) -> f64 {
        self.0.h(s)
    }

    /// `F(s) = ∫₀ˢ f`.
    fn big_f(&self, s: f64) -> PyResult<f64> {
        self.0.big_f(s).map_err(err)
    }

    fn text(&self) -> String {
        self.0.text()
    }

    fn __repr__(&self) -> String {
        format!("Nonlinearity('{}')", self.0.text())
    }
}

/// Scalar flow `φ' = -f(φ)` and its limit `φ_∞`.
#[pyclass(frozen)]
struct ScalarFlow(ScalarFlowRs);

#[pymethods]
impl ScalarFlow {
    #[new]
    fn new(nl: &Nonlinearity) -> PyResult<Self> {
        ScalarFlowRs::new(&nl.0).map(Self).map_err(err)
    }

    fn phi_infinity(&self, t: f64) -> PyResult<f64> {
        self.0.phi_infinity(t).map(|p| p.value).map_err(err)
    }

    /// `G(x) = ∫ₓ^∞ ds/f(s)`.
    fn g(&self, x: f64) -> f64 {
        self.0.g(x)
    }

    fn flow(&self, a: f64, t: f64) -> PyResult<f64> {
        flow_rs(self.0.nonlinearity(), a, t).map_err(err)
    }

    #[getter]
    fn saturation_time(&self) -> f64 {
        self.0.saturation_time()
    }
}

/// `φ_a(t)` for data `a`.
#[pyfunction]
fn flow(nl: &Nonlinearity, a: f64, t: f64) -> PyResult<f64> {
    flow_rs(&nl.0, a, t).map_err(err)
}

/// Classification report as a dict.
#[pyfunction]
#[pyo3(signature = (nl, n_dim = 3))]
fn classify(py: Python<'_>, nl: &Nonlinearity, n_dim: usize) -> PyResult<PyObject> {
    let rep = classify_rs(&nl.0, n_dim).map_err(err)?;
    to_py(py, &rep)
}

fn profile_dict<'py>(py: Python<'py>, p: &RadialProfile) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("r", p.grid.clone())?;
    d.set_item("w", p.values.clone())?;
    d.set_item("dw", p.derivative.clone())?;
    d.set_item("residual_norm", p.residual_norm)?;
    d.set_item("blowup_radius", p.blowup_radius)?;
    Ok(d)
}

/// Entire radial solution with `w(0) = a` on `[0, r_max]`.
#[pyfunction]
#[pyo3(signature = (nl, a, n_dim = 3, r_max = 5.0))]
fn global_profile<'py>(py: Python<'py>, nl: &Nonlinearity, a: f64, n_dim: usize, r_max: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = solve_global_radial(&nl.0, a, n_dim, r_max).map_err(err)?;
    profile_dict(py, &p)
}

/// Minimal large solution in the ball of radius `radius`.
#[pyfunction]
#[pyo3(signature = (nl, radius, n_dim = 3))]
fn ball_profile<'py>(py: Python<'py>, nl: &Nonlinearity, radius: f64, n_dim: usize) -> PyResult<Bound<'py, PyDict>> {
    let p = solve_ball_blowup(&nl.0, radius, n_dim).map_err(err)?;
    profile_dict(py, &p)
}

/// Singular profile `Φ(r)`.
#[pyfunction]
fn singular_profile(nl: &Nonlinearity, r: f64) -> PyResult<f64> {
    singular_profile_phi(&nl.0, r).map_err(err)
}

/// Runs an experiment from TOML text and returns its manifest.
#[pyfunction]
#[pyo3(signature = (config, out, overrides = Vec::new()))]
fn run_experiment(py: Python<'_>, config: &str, out: &str, overrides: Vec<String>) -> PyResult<PyObject> {
    let mut cfg = ExperimentConfig::from_toml_str(config).map_err(err)?;
    for kv in &overrides {
        cfg.apply_override(kv).map_err(err)?;
    }
    let manifest = py.allow_threads(|| harness::run(&cfg, Some(Path::new(out)))).map_err(err)?;
    to_py(py, &manifest)
}

#[pymodule]
fn absorption_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Nonlinearity>()?;
    m.add_class::<ScalarFlow>()?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(global_profile, m)?)?;
    m.add_function(wrap_pyfunction!(ball_profile, m)?)?;
    m.add_function(wrap_pyfunction!(singular_profile, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
