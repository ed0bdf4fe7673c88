//! Python bindings: parameter derivation, steady state, the control problem
//! (cost, gradient, optimization), the π-pulse baseline and state metrics.
//!
//! Structured results are returned as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use optomech_core::analysis::{self, GridSpec};
use optomech_core::baseline::{tune_pi_sequence, PiPulsePlan};
use optomech_core::dynamics::{self, ControlSequence};
use optomech_core::liouville::N_CONTROLS;
use optomech_core::model;
use optomech_core::optimize::{multi_restart, ControlProblem, Init, Schedule};
use optomech_core::problem::{ProblemSpec, StageSpec};
use optomech_core::{CMatrix, Error, PhysicalParams, C64};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Numerical(_) | Error::AmbiguousSteadyState { .. } | Error::GridTooSmall(_) => {
            PyRuntimeError::new_err(err.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_dict<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn matrix(re: Vec<Vec<f64>>, im: Option<Vec<Vec<f64>>>) -> PyResult<CMatrix> {
    let n = re.len();
    if re.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("density matrix must be square"));
    }
    let im = im.unwrap_or_else(|| vec![vec![0.0; n]; n]);
    if im.len() != n || im.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("imaginary part must match the real part"));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| C64::new(re[i][j], im[i][j])))
}

fn controls(u: Vec<Vec<f64>>) -> PyResult<Vec<[f64; N_CONTROLS]>> {
    u.into_iter()
        .enumerate()
        .map(|(k, row)| {
            <[f64; N_CONTROLS]>::try_from(row.as_slice())
                .map_err(|_| PyValueError::new_err(format!("slot {k} needs {N_CONTROLS} amplitudes")))
        })
        .collect()
}

/// Frame parameters, thermal factors, regime diagnostics and RWA ratios.
#[pyfunction]
fn derive(py: Python<'_>, preset: &str) -> PyResult<Py<PyAny>> {
    let p = PhysicalParams::preset(preset).map_err(to_py)?;
    let frame = model::derive_frame(&p);
    let diag = model::diagnostics(&p);
    to_dict(
        py,
        &serde_json::json!({
            "params": p,
            "frame": frame,
            "cavity_shift": frame.cavity_shift(&p),
            "thermal": model::thermal(&p),
            "diagnostics": diag,
            "regime_checks": model::regime_checks(&diag),
            "rwa_significance": model::rwa_significance(&p, &frame),
        }),
    )
}

/// Oscillator CV-mana of a density matrix.
#[pyfunction]
#[pyo3(signature = (re, im=None))]
fn cv_mana(re: Vec<Vec<f64>>, im: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
    let rho = matrix(re, im)?;
    Ok(analysis::cv_mana(&rho, GridSpec::default()).map_err(to_py)?.raw)
}

/// Logarithmic negativity of a `dim_a ⊗ dim_b` density matrix.
#[pyfunction]
#[pyo3(signature = (re, dim_a, dim_b, im=None))]
fn log_negativity(re: Vec<Vec<f64>>, dim_a: usize, dim_b: usize, im: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
    let rho = matrix(re, im)?;
    analysis::log_negativity(&rho, dim_a, dim_b).map_err(to_py)
}

/// A control problem: model, steady initial state, target and cost.
#[pyclass]
struct Problem {
    spec: ProblemSpec,
    inner: ControlProblem,
}

impl Problem {
    fn sequence(&self, u: Vec<Vec<f64>>) -> PyResult<ControlSequence> {
        let u = controls(u)?;
        if u.len() != self.inner.n_slots {
            return Err(PyValueError::new_err(format!(
                "expected {} slots, got {}",
                self.inner.n_slots,
                u.len()
            )));
        }
        ControlSequence::new(self.inner.tau, u, self.inner.bounds).map_err(to_py)
    }
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (preset="set1", target="fock1", dims=3, n_slots=None))]
    fn new(preset: &str, target: &str, dims: usize, n_slots: Option<usize>) -> PyResult<Self> {
        let mut spec = ProblemSpec::preset(preset, target);
        spec.dims = dims;
        spec.n_slots = n_slots;
        let inner = spec.build().map_err(to_py)?;
        Ok(Problem { spec, inner })
    }

    /// Builds from a JSON problem definition.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = ProblemSpec::from_json_str(text).map_err(to_py)?;
        let inner = spec.build().map_err(to_py)?;
        Ok(Problem { spec, inner })
    }

    #[getter]
    fn n_slots(&self) -> usize {
        self.inner.n_slots
    }

    /// Slot width in µs.
    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    /// `(lower, upper)` per channel (detuning, atomX, atomY), MHz.
    #[getter]
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.inner.bounds.lower.to_vec(), self.inner.bounds.upper.to_vec())
    }

    /// Populations of the initial steady state.
    fn steady_populations(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_dict(py, &dynamics::populations(&self.inner.rho0, self.inner.ctx.space))
    }

    /// Fidelity, cost breakdown and final-state metrics of a sequence given
    /// as `n_slots` rows of `[detuning, atomX, atomY]`.
    fn evaluate(&self, py: Python<'_>, u: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
        let seq = self.sequence(u)?;
        let eval = self.inner.evaluate(&seq.u).map_err(to_py)?;
        let summary = analysis::summarize(&eval.rho, self.inner.ctx.space, GridSpec::default()).map_err(to_py)?;
        to_dict(
            py,
            &serde_json::json!({"fidelity": eval.fidelity, "cost": eval.cost, "summary": summary}),
        )
    }

    /// `(cost, gradient)` with one gradient row per slot.
    fn cost_and_gradient(&self, u: Vec<Vec<f64>>) -> PyResult<(f64, Vec<Vec<f64>>)> {
        let seq = self.sequence(u)?;
        let obj = self.inner.objective().map_err(to_py)?;
        let (c, g) = obj.cost_and_gradient(&seq.u);
        Ok((c.total, g.into_iter().map(|r| r.to_vec()).collect()))
    }

    /// Random initial amplitudes within `scale` of the bounds.
    #[pyo3(signature = (seed, scale=0.1))]
    fn random_initial(&self, seed: u64, scale: f64) -> Vec<Vec<f64>> {
        self.inner
            .random_initial(seed, scale)
            .u
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    /// Tuned three-segment π-pulse baseline at slot width `tau_us`.
    #[pyo3(signature = (tau_us=None))]
    fn baseline(&self, py: Python<'_>, tau_us: Option<f64>) -> PyResult<Py<PyAny>> {
        let tau = tau_us.unwrap_or(self.spec.baseline_tau());
        let plan = PiPulsePlan::nominal(&self.inner.ctx.params, &self.inner.ctx.frame);
        let tuned = py
            .detach(|| tune_pi_sequence(&plan, &self.inner.ctx, &self.inner.rho0, tau))
            .map_err(to_py)?;
        to_dict(py, &tuned)
    }

    /// Multi-restart optimization; returns the best result and per-restart
    /// fidelities. `warm_start` is the relative jitter around the π-pulse
    /// sequence; without it restarts begin from random amplitudes.
    #[pyo3(signature = (restarts=1, seed=0, stage_a_iters=200, stage_b_iters=2000, warm_start=None))]
    fn optimize(
        &self,
        py: Python<'_>,
        restarts: usize,
        seed: u64,
        stage_a_iters: usize,
        stage_b_iters: usize,
        warm_start: Option<f64>,
    ) -> PyResult<Py<PyAny>> {
        let mut spec = self.spec.clone();
        spec.init = warm_start.map_or(Init::Random, |jitter| Init::PiPulse { jitter });
        spec.stage_a = (stage_a_iters > 0).then_some(StageSpec {
            max_iter: stage_a_iters,
            time_budget: None,
        });
        spec.stage_b = StageSpec {
            max_iter: stage_b_iters,
            time_budget: None,
        };
        let schedule: Schedule = spec.schedule();
        let multi = py
            .detach(|| multi_restart(&self.inner, restarts, seed, &schedule, None))
            .map_err(to_py)?;
        let fidelities: Vec<f64> = multi.runs.iter().map(|r| r.fidelity).collect();
        to_dict(py, &serde_json::json!({"best": multi.best, "fidelities": fidelities}))
    }
}

#[pymodule]
fn optomech(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(derive, m)?)?;
    m.add_function(wrap_pyfunction!(cv_mana, m)?)?;
    m.add_function(wrap_pyfunction!(log_negativity, m)?)?;
    m.add_class::<Problem>()?;
    Ok(())
}
