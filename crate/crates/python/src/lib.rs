//! Python bindings for `zonoabs`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use zonoabs::abstraction::build_abstraction;
use zonoabs::cli::{self, CliError, Command, RunConfig, RunOptions};
use zonoabs::linalg::{self, Matrix};

fn py_err(e: CliError) -> PyErr {
    match e {
        CliError::Config(_) | CliError::Json(_) | CliError::Model(_) => PyValueError::new_err(e.to_json().to_string()),
        other => PyRuntimeError::new_err(other.to_json().to_string()),
    }
}

fn load(path: &str) -> PyResult<RunConfig> {
    RunConfig::load(&PathBuf::from(path)).map_err(py_err)
}

fn parse_command(name: &str) -> PyResult<Command> {
    Ok(match name {
        "abstract" => Command::Abstract,
        "synthesize" => Command::Synthesize,
        "simulate" => Command::Simulate,
        "compare" => Command::Compare,
        "all" => Command::All,
        _ => return Err(PyValueError::new_err(format!("unknown command {name:?}"))),
    })
}

/// Hex SHA-256 of the effective configuration stored at `path`.
#[pyfunction]
fn config_hash(path: &str) -> PyResult<String> {
    Ok(load(path)?.hash())
}

/// Runs a pipeline stage and returns the realizability verdict, if any.
#[pyfunction]
#[pyo3(signature = (command, config, out_dir=None, seed=None, threads=None))]
fn run(
    command: &str,
    config: &str,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> PyResult<Option<bool>> {
    let cmd = parse_command(command)?;
    let cfg = load(config)?;
    let outcome = cli::run(cmd, &cfg, &RunOptions { out_dir, seed, threads }).map_err(py_err)?;
    Ok(outcome.realizable)
}

/// Builds the abstraction and synthesizes a strategy in memory.
#[pyfunction]
fn summarize<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config)?;
    let model = cfg.validate().map_err(py_err)?;
    let abs = build_abstraction(&model, &cfg.spec.regions(), &cfg.params)
        .map_err(|e| py_err(CliError::Abstraction(e)))?;
    let strategy = cli::synthesize(&cfg, &abs);
    let d = PyDict::new(py);
    d.set_item("states", abs.n_states())?;
    d.set_item("inputs", abs.inputs.len())?;
    d.set_item("transitions", abs.n_transitions())?;
    d.set_item("winning", strategy.winning.iter().filter(|&s| s < abs.n_states()).count())?;
    d.set_item("realizable", strategy.is_realizable())?;
    Ok(d)
}

/// Successor counts of the method and the Lipschitz baseline.
#[pyfunction]
fn compare<'py>(py: Python<'py>, config: &str, state: Vec<f64>, input: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config)?;
    let model = cfg.validate().map_err(py_err)?;
    let c = cli::comparison(&model, &cfg.params, &state, &input).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("state", c.state)?;
    d.set_item("input", c.input)?;
    d.set_item("tau", c.tau)?;
    d.set_item("lipschitz", c.lipschitz)?;
    d.set_item("method_count", c.method_count)?;
    d.set_item("baseline_count", c.baseline_count)?;
    Ok(d)
}

/// `exp(A t)` for a square matrix given as a list of rows.
#[pyfunction]
fn mat_exp(a: Vec<Vec<f64>>, t: f64) -> PyResult<Vec<Vec<f64>>> {
    if a.iter().any(|r| r.len() != a.len()) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = Matrix::from_rows(&a);
    linalg::mat_exp(&m, t).map(|e| e.to_rows()).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pyzonoabs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(mat_exp, m)?)?;
    Ok(())
}
