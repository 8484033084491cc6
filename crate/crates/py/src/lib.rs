//! Python bindings for the planner, runtime simulator and baseline allocator.

// pyo3 macro expansion trips this lint on every PyResult method
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use stplan::synth::{synth_trace, Preset, SynthConfig};
use stplan::{ErrorKind, PlanBundle, PlannerOptions, SimOptions};

fn to_py_err(e: stplan::Error) -> PyErr {
    match e.kind() {
        ErrorKind::Validation => PyValueError::new_err(e.to_string()),
        ErrorKind::Io => PyOSError::new_err(e.to_string()),
        ErrorKind::Internal => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Converts any serializable value into plain Python objects via JSON.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

/// A validated memory trace.
#[pyclass(name = "Trace", module = "stplan")]
#[derive(Clone)]
struct PyTrace {
    inner: stplan::Trace,
}

#[pymethods]
impl PyTrace {
    /// Reads a raw or paired trace file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyTrace {
            inner: stplan::parse_trace(path).map_err(to_py_err)?,
        })
    }

    /// Writes the trace in the raw op-stream format.
    fn save(&self, path: &str) -> PyResult<()> {
        stplan::write_trace(&self.inner, path).map_err(to_py_err)
    }

    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.horizon
    }

    #[getter]
    fn num_events(&self) -> usize {
        self.inner.events.len()
    }

    #[getter]
    fn num_dynamic(&self) -> usize {
        self.inner.dynamic_events().count()
    }

    /// Peak of simultaneously live bytes, a lower bound on any pool.
    fn lower_bound(&self) -> u64 {
        stplan::clique_lower_bound(&self.inner)
    }

    fn events(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.events)
    }

    fn __len__(&self) -> usize {
        self.inner.events.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(events={}, horizon={})",
            self.inner.events.len(),
            self.inner.horizon
        )
    }
}

/// A static plan together with its reuse map.
#[pyclass(name = "Plan", module = "stplan")]
#[derive(Clone)]
struct PyPlan {
    inner: PlanBundle,
}

#[pymethods]
impl PyPlan {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyPlan {
            inner: stplan::read_plan(path).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyPlan {
            inner: PlanBundle::from_json(text).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        stplan::write_plan(&self.inner, path).map_err(to_py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn pool_size(&self) -> u64 {
        self.inner.pool_size
    }

    #[getter]
    fn num_decisions(&self) -> usize {
        self.inner.decisions.len()
    }

    #[getter]
    fn num_reuse_keys(&self) -> usize {
        self.inner.reuse.len()
    }

    fn decisions(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.decisions)
    }

    /// Re-checks the plan for overlapping or out-of-pool blocks.
    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Plan(pool_size={}, decisions={}, reuse_keys={})",
            self.inner.pool_size,
            self.inner.decisions.len(),
            self.inner.reuse.len()
        )
    }
}

/// Generates a synthetic training trace.
#[pyfunction]
#[pyo3(signature = (preset = "dense", seed = 0, layers = None, microbatches = None, chunks = None))]
fn synth(
    preset: &str,
    seed: u64,
    layers: Option<u32>,
    microbatches: Option<u32>,
    chunks: Option<u32>,
) -> PyResult<PyTrace> {
    let preset: Preset = preset.parse().map_err(to_py_err)?;
    let mut cfg = SynthConfig::preset(preset).with_seed(seed);
    if let Some(l) = layers {
        cfg.num_layers = l;
    }
    if let Some(m) = microbatches {
        cfg.num_microbatches = m;
    }
    if let Some(c) = chunks {
        cfg.num_chunks = c;
    }
    Ok(PyTrace {
        inner: synth_trace(&cfg).map_err(to_py_err)?,
    })
}

/// Plans a trace. Returns `(plan, stats)`.
#[pyfunction]
#[pyo3(signature = (trace, fusion = true, gap_insert = true))]
fn plan(py: Python<'_>, trace: &PyTrace, fusion: bool, gap_insert: bool) -> PyResult<(PyPlan, PyObject)> {
    let opts = PlannerOptions {
        fusion,
        gap_insert,
        ..Default::default()
    };
    let planned = py
        .allow_threads(|| stplan::plan_trace(&trace.inner, opts))
        .map_err(to_py_err)?;
    let stats = to_py(py, &planned.stats)?;
    Ok((PyPlan { inner: planned.bundle }, stats))
}

/// Replays a trace against a plan and returns the metrics report.
#[pyfunction]
#[pyo3(signature = (trace, plan, reuse = true))]
fn simulate(py: Python<'_>, trace: &PyTrace, plan: &PyPlan, reuse: bool) -> PyResult<PyObject> {
    let outcome = py
        .allow_threads(|| stplan::simulate(&trace.inner, &plan.inner, SimOptions { reuse }))
        .map_err(to_py_err)?;
    to_py(py, &outcome.report)
}

/// Replays a trace through the caching-allocator baseline.
#[pyfunction]
fn baseline(py: Python<'_>, trace: &PyTrace) -> PyResult<PyObject> {
    let outcome = py
        .allow_threads(|| stplan::run_baseline(&trace.inner))
        .map_err(to_py_err)?;
    to_py(py, &outcome.report)
}

#[pyfunction]
#[pyo3(signature = (trace, plan, reuse = true))]
fn compare(py: Python<'_>, trace: &PyTrace, plan: &PyPlan, reuse: bool) -> PyResult<PyObject> {
    let report = py
        .allow_threads(|| stplan::compare(&trace.inner, &plan.inner, SimOptions { reuse }))
        .map_err(to_py_err)?;
    to_py(py, &report)
}

/// Renders a plan as an SVG document.
#[pyfunction]
#[pyo3(signature = (plan, trace = None))]
fn render(plan: &PyPlan, trace: Option<&PyTrace>) -> String {
    stplan::render_svg(&plan.inner, trace.map(|t| &t.inner))
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    Preset::ALL.iter().map(|p| p.name()).collect()
}

#[pymodule]
#[pyo3(name = "stplan")]
fn stplan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrace>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
