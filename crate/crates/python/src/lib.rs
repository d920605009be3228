//! Python bindings: run experiment configurations and query single-channel
//! quantities. Configuration errors raise `ValueError`, numerical failures
//! raise `RuntimeError`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use statecap::channel::{capacity_default, conditional_variance, Dmc};
use statecap::io::{run as run_config, ExperimentConfig, RunError, Task};
use statecap::numerics;
use statecap::oneshot;

fn value_err(e: statecap::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: RunError) -> PyErr {
    match e {
        RunError::Schema(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_task(name: &str) -> PyResult<Task> {
    Ok(match name {
        "first-order" => Task::FirstOrder,
        "second-order" => Task::SecondOrder,
        "bounds" => Task::Bounds,
        "audit" => Task::Audit,
        "constants" => Task::Constants,
        other => return Err(PyValueError::new_err(format!("unknown task {other:?}"))),
    })
}

/// Run a JSON experiment configuration and return the canonical JSON summary.
/// `task` and `seed` override the values in the configuration.
#[pyfunction]
#[pyo3(signature = (config, task=None, seed=None))]
fn run(py: Python<'_>, config: &str, task: Option<&str>, seed: Option<u64>) -> PyResult<String> {
    let task = task.map(parse_task).transpose()?;
    let config = ExperimentConfig::from_json(config).and_then(|c| c.resolve(task, seed, None)).map_err(run_err)?;
    py.detach(|| run_config(&config).map(|out| out.json())).map_err(run_err)
}

/// Capacity in bits and a capacity-achieving input law for a row-stochastic matrix.
#[pyfunction]
fn capacity(rows: Vec<Vec<f64>>) -> PyResult<(f64, Vec<f64>)> {
    let w = Dmc::from_rows(rows).map_err(value_err)?;
    let sol = capacity_default(&w).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((sol.capacity, sol.caid.probs().to_vec()))
}

/// Conditional information variance at the capacity-achieving input, bits².
#[pyfunction]
fn dispersion(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    let w = Dmc::from_rows(rows).map_err(value_err)?;
    let sol = capacity_default(&w).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    conditional_variance(&sol.caid, &w).map_err(value_err)
}

/// `sup{a | Φ(a) <= eps}`, infinite outside the open unit interval.
#[pyfunction]
fn normal_quantile(eps: f64) -> f64 {
    numerics::normal_quantile(eps)
}

/// Hypothesis-testing divergence `D_h^eps(P‖Q)` in bits.
#[pyfunction]
fn dh_divergence(p: Vec<f64>, q: Vec<f64>, eps: f64) -> PyResult<f64> {
    oneshot::dh_divergence(&p, &q, eps).map_err(value_err)
}

#[pymodule]
fn statecap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(capacity, m)?)?;
    m.add_function(wrap_pyfunction!(dispersion, m)?)?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(dh_divergence, m)?)?;
    Ok(())
}
