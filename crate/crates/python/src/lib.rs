use pyo3::exceptions::{PyNotImplementedError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nbldpc_core::density::{self, DeOptions};
use nbldpc_core::ensemble::{self, LabelKind};
use nbldpc_core::{exit, kernels, sim, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Unsupported(_) => PyNotImplementedError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Degree distributions, symbol size and label set of an ensemble.
#[pyclass(name = "EnsembleSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEnsembleSpec {
    inner: ensemble::EnsembleSpec,
}

#[pymethods]
impl PyEnsembleSpec {
    #[new]
    #[pyo3(signature = (lambda_, rho, m, labels = "GL"))]
    fn new(lambda_: &str, rho: &str, m: usize, labels: &str) -> PyResult<Self> {
        let labels: LabelKind = labels.parse().map_err(to_py)?;
        let inner = ensemble::EnsembleSpec::new(
            lambda_.parse().map_err(to_py)?,
            rho.parse().map_err(to_py)?,
            m,
            labels,
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Parses the `key = value` configuration format.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        ensemble::EnsembleSpec::from_config_str(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn lambda_(&self) -> String {
        self.inner.lambda.to_string()
    }

    #[getter]
    fn rho(&self) -> String {
        self.inner.rho.to_string()
    }

    #[getter]
    fn labels(&self) -> String {
        self.inner.labels.to_string()
    }

    fn design_rate(&self) -> f64 {
        self.inner.design_rate()
    }

    fn __repr__(&self) -> String {
        format!(
            "EnsembleSpec(lambda_={:?}, rho={:?}, m={}, labels={:?})",
            self.inner.lambda.to_string(),
            self.inner.rho.to_string(),
            self.inner.m,
            self.inner.labels.to_string()
        )
    }
}

fn options(max_iters: usize) -> DeOptions {
    DeOptions {
        max_iters: max_iters.max(1),
        ..DeOptions::default()
    }
}

#[pyfunction]
fn gaussian_binomial(m: i64, k: i64) -> u128 {
    kernels::gaussian_binomial(m, k)
}

#[pyfunction]
fn bp_threshold(py: Python<'_>, spec: &PyEnsembleSpec) -> PyResult<f64> {
    let e = spec.inner.clone();
    py.detach(move || density::bp_threshold(&e, &DeOptions::default()))
        .map_err(to_py)
}

#[pyfunction]
fn stability_bound(spec: &PyEnsembleSpec) -> f64 {
    density::stability_bound(&spec.inner)
}

/// Density-evolution trace as a dict with `outcome`, `states` (one list of
/// dimension probabilities per iteration), `expected_dims` and `linear_gain`.
#[pyfunction]
#[pyo3(signature = (spec, epsilon, max_iters = 10_000))]
fn evolve<'py>(
    py: Python<'py>,
    spec: &PyEnsembleSpec,
    epsilon: f64,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let e = spec.inner.clone();
    let trace = py
        .detach(move || density::evolve(&e, epsilon, &options(max_iters)))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("epsilon", trace.epsilon)?;
    d.set_item("outcome", format!("{:?}", trace.outcome))?;
    d.set_item("success", trace.outcome.is_success())?;
    d.set_item("linear_gain", trace.linear_gain)?;
    d.set_item("expected_dims", trace.expected_dims())?;
    let states: Vec<Vec<f64>> = trace.states.iter().map(|s| s.probs().to_vec()).collect();
    d.set_item("states", states)?;
    Ok(d)
}

/// `(grid, values)` of the BP EXIT curve.
#[pyfunction]
#[pyo3(signature = (spec, step = 1e-3))]
fn exit_curve(py: Python<'_>, spec: &PyEnsembleSpec, step: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let e = spec.inner.clone();
    let c = py
        .detach(move || exit::exit_curve(&e, step, &DeOptions::default()))
        .map_err(to_py)?;
    Ok((c.grid, c.values))
}

#[pyfunction]
#[pyo3(signature = (spec, step = 1e-3))]
fn map_upper_bound<'py>(py: Python<'py>, spec: &PyEnsembleSpec, step: f64) -> PyResult<Bound<'py, PyDict>> {
    let e = spec.inner.clone();
    let b = py
        .detach(move || exit::map_upper_bound(&e, step, &DeOptions::default()))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("epsilon", b.epsilon)?;
    d.set_item("bp_threshold", b.bp_threshold)?;
    d.set_item("design_rate", b.design_rate)?;
    d.set_item("area", b.area)?;
    d.set_item("reached", b.reached)?;
    Ok(d)
}

/// Monte Carlo summary: failure rates, erasure rates with standard errors and
/// the mean per-iteration dimension fractions.
#[pyfunction]
#[pyo3(signature = (spec, n, epsilon, trials, max_iter = 1000, seed = 0))]
fn run_experiment<'py>(
    py: Python<'py>,
    spec: &PyEnsembleSpec,
    n: usize,
    epsilon: f64,
    trials: usize,
    max_iter: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let e = spec.inner.clone();
    let x = py
        .detach(move || sim::run_experiment(&e, n, epsilon, trials, max_iter, seed))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("seed", seed)?;
    d.set_item("failure_rate", x.failure_rate(sim::FAILURE_FRACTION))?;
    d.set_item("block_failure_rate", x.block_failure_rate())?;
    d.set_item("symbol_erasure_rate", x.symbol_erasure_rate())?;
    d.set_item("bit_erasure_rate", x.bit_erasure_rate())?;
    let iterations: Vec<usize> = x.trials.iter().map(|t| t.trace.iterations()).collect();
    d.set_item("iterations", iterations)?;
    let fractions: Vec<Vec<f64>> = (1..=x.max_iterations_run())
        .map(|l| x.dimension_fractions(l).into_iter().map(|(mean, _)| mean).collect())
        .collect();
    d.set_item("dimension_fractions", fractions)?;
    Ok(d)
}

/// Unnormalised Walsh-Hadamard transform.
#[pyfunction]
fn wht(v: Vec<f64>) -> PyResult<Vec<f64>> {
    sim::wht(&v).map_err(to_py)
}

#[pymodule]
fn nbldpc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyEnsembleSpec>()?;
    m.add_function(wrap_pyfunction!(gaussian_binomial, m)?)?;
    m.add_function(wrap_pyfunction!(bp_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(stability_bound, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(exit_curve, m)?)?;
    m.add_function(wrap_pyfunction!(map_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(wht, m)?)?;
    Ok(())
}
