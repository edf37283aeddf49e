//! Python bindings: probe generation, the ℓ1 solver, single rounds and the
//! monitoring experiment.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use admot::adapt;
use admot::channel::{ChannelState, NoiseModel};
use admot::experiment::{run_monitoring_experiment, ExperimentConfig};
use admot::probe::{Alphabet, ProbeMatrix};
use admot::round::{admot_round as run_round, estimation_error, RoundConfig, SigmaPolicy, SimulatedMedium};
use admot::solver::{convex_opt as solve, SolverProblem};

fn err(e: admot::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

/// Probe matrix as a list of rows of ±1 (or 0, −1, +1 for "ternary").
#[pyfunction]
#[pyo3(signature = (seed, rows, cols, alphabet = "rademacher"))]
fn generate_probe(seed: u64, rows: usize, cols: usize, alphabet: &str) -> PyResult<Vec<Vec<i8>>> {
    let a: Alphabet = alphabet.parse().map_err(err)?;
    let phi = ProbeMatrix::generate(seed, rows, cols, a).map_err(err)?;
    Ok((0..rows).map(|r| (0..cols).map(|c| phi.get(r, c)).collect()).collect())
}

/// `min ||x||₁` subject to `||Ax − y||₂ ≤ sigma`.
#[pyfunction]
fn convex_opt<'py>(py: Python<'py>, a: Vec<Vec<f64>>, y: Vec<f64>, sigma: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = SolverProblem::new(matrix(&a)?, DVector::from_vec(y), sigma).map_err(err)?;
    let s = solve(&p).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("x", s.x_star.iter().copied().collect::<Vec<f64>>())?;
    out.set_item("l1_norm", s.l1_norm)?;
    out.set_item("residual_norm", s.residual_norm)?;
    out.set_item("iterations", s.iterations)?;
    Ok(out)
}

/// `(upper, lower)` hold-out thresholds; `lower` is `None` for `phi <= 2√2`.
#[pyfunction]
fn thresholds(d: usize, phi: f64) -> (f64, Option<f64>) {
    let t = adapt::thresholds(d, phi);
    (t.upper, t.lower)
}

/// One simulated round: probe `m` slots against `truth`, estimate from
/// `prior`. `sigma=None` uses the default radius `√(2m)`.
#[pyfunction]
#[pyo3(signature = (prior, truth, m, probe_seed = 1, noise_seed = 2, noise = true, sigma = None))]
#[allow(clippy::too_many_arguments)]
fn admot_round<'py>(
    py: Python<'py>,
    prior: Vec<Complex64>,
    truth: Vec<Complex64>,
    m: usize,
    probe_seed: u64,
    noise_seed: u64,
    noise: bool,
    sigma: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let prior = ChannelState::new(prior).map_err(err)?;
    let truth = ChannelState::new(truth).map_err(err)?;
    let phi = ProbeMatrix::generate(probe_seed, m, prior.len(), Alphabet::Rademacher).map_err(err)?;
    let mut cfg = RoundConfig::new(m);
    if let Some(s) = sigma {
        cfg = cfg.with_sigma(SigmaPolicy::Fixed(s));
    }
    let medium = SimulatedMedium::new(truth.clone(), NoiseModel::new(noise, noise_seed));
    let res = run_round(&prior, &phi, &cfg, &medium).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("error", estimation_error(&res.h_star, &truth).map_err(err)?)?;
    out.set_item("h_star", res.h_star.into_gains())?;
    out.set_item("delta_star", res.delta_star)?;
    out.set_item("sigma", res.sigma)?;
    Ok(out)
}

/// Runs the multi-round experiment for one stability level. `config` is
/// TOML text; an empty string gives the desk-scale defaults.
#[pyfunction]
#[pyo3(signature = (stability, config = ""))]
fn run_monitor<'py>(py: Python<'py>, stability: f64, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = if config.trim().is_empty() {
        ExperimentConfig::desk()
    } else {
        ExperimentConfig::parse(config).map_err(err)?
    };
    let log = py.detach(|| run_monitoring_experiment(&cfg, stability)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("m", log.records.iter().map(|r| r.m).collect::<Vec<_>>())?;
    out.set_item("relative_error", log.records.iter().map(|r| r.relative_error).collect::<Vec<_>>())?;
    out.set_item("average_slots", log.average_slots())?;
    out.set_item("n", log.n)?;
    Ok(out)
}

#[pymodule]
fn admot_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_probe, m)?)?;
    m.add_function(wrap_pyfunction!(convex_opt, m)?)?;
    m.add_function(wrap_pyfunction!(thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(admot_round, m)?)?;
    m.add_function(wrap_pyfunction!(run_monitor, m)?)?;
    Ok(())
}
