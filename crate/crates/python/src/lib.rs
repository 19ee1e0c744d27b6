//! Python bindings: load a scenario, simulate, build the provenance graph,
//! detect violations and explain them.
//!
//! ```python
//! import plcprov
//! sc = plcprov.Scenario.load("forged_smoke")
//! graph = sc.simulate().build()
//! report = plcprov.detect(graph, sc)
//! print([v["policy_id"] for v in report.violations()])
//! ```

use std::collections::BTreeSet;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use plcprov_core::detect::{self as core_detect, question_policies};
use plcprov_core::policy::parse_policies;
use plcprov_core::provenance::{self, Level, ProvGraph};
use plcprov_core::scenario::{self, ScenarioBundle};
use plcprov_core::trace::TraceLog;

create_exception!(plcprov, PlcprovError, PyException, "Error raised by the plcprov pipeline.");

fn err(e: impl std::fmt::Display) -> PyErr {
    PlcprovError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn to_py<'py, T: serde::Serialize + ?Sized>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &serde_json::to_string(v).map_err(err)?)
}

fn parse_level(level: &str) -> PyResult<Level> {
    match level {
        "micro" => Ok(Level::Micro),
        "macro" => Ok(Level::Macro),
        other => Err(err(format!("unknown level {other:?} (expected micro or macro)"))),
    }
}

#[pyclass(name = "Scenario", module = "plcprov", frozen)]
struct PyScenario {
    inner: ScenarioBundle,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(name: &str) -> PyResult<Self> {
        scenario::load_scenario(name).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn bundle(&self) -> &str {
        &self.inner.bundle
    }

    #[getter]
    fn description(&self) -> &str {
        &self.inner.description
    }

    #[getter]
    fn ticks(&self) -> u64 {
        self.inner.ticks
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn hash(&self) -> &str {
        &self.inner.hash
    }

    /// Policy ids the pinned run is expected to fire.
    #[getter]
    fn expected(&self) -> Vec<String> {
        self.inner.expected.clone()
    }

    #[getter]
    fn policies(&self) -> &str {
        &self.inner.policy_text
    }

    fn topology<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.world.topology)
    }

    #[pyo3(signature = (ticks=None, seed=None))]
    fn simulate(&self, ticks: Option<u64>, seed: Option<u64>) -> PyResult<PyTrace> {
        self.inner.simulate(ticks, seed).map(|inner| PyTrace { inner }).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Scenario('{}/{}')", self.inner.bundle, self.inner.name)
    }
}

#[pyclass(name = "Trace", module = "plcprov", frozen)]
struct PyTrace {
    inner: TraceLog,
}

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        TraceLog::from_jsonl(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    fn header<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.header)
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.records)
    }

    #[pyo3(signature = (level="micro"))]
    fn build(&self, level: &str) -> PyResult<PyGraph> {
        provenance::build_graph(&self.inner, parse_level(level)?)
            .map(|inner| PyGraph { inner })
            .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

#[pyclass(name = "Graph", module = "plcprov", frozen)]
struct PyGraph {
    inner: ProvGraph,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_provjson(text: &str) -> PyResult<Self> {
        provenance::from_provjson(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_provjson(&self) -> String {
        provenance::to_provjson(&self.inner)
    }

    #[pyo3(signature = (highlight=Vec::new()))]
    fn to_dot(&self, highlight: Vec<String>) -> String {
        let h: BTreeSet<String> = highlight.into_iter().collect();
        provenance::to_dot(&self.inner, &h)
    }

    #[getter]
    fn level(&self) -> &'static str {
        match self.inner.level {
            Level::Micro => "micro",
            Level::Macro => "macro",
        }
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn nodes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.nodes())
    }

    fn edges<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.edges())
    }

    /// Node ids of the commands sent to `actuator`.
    fn commands(&self, actuator: &str) -> Vec<String> {
        self.inner
            .command_indices(actuator)
            .iter()
            .map(|&i| self.inner.node_at(i).id.clone())
            .collect()
    }

    #[pyo3(signature = (node_id, max_depth=None))]
    fn ancestors(&self, node_id: &str, max_depth: Option<usize>) -> PyResult<PyGraph> {
        self.inner.ancestors(node_id, max_depth).map(|inner| PyGraph { inner }).map_err(err)
    }

    fn influencing_sensors(&self, command_id: &str) -> PyResult<Vec<String>> {
        self.inner
            .influencing_sensors(command_id)
            .map(|s| s.into_iter().collect())
            .map_err(err)
    }

    fn contract(&self) -> PyResult<PyGraph> {
        if self.inner.level == Level::Macro {
            return Err(err("graph is already macro level"));
        }
        Ok(PyGraph {
            inner: provenance::contract(&self.inner),
        })
    }

    fn is_acyclic(&self) -> bool {
        self.inner.is_acyclic()
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }
}

#[pyclass(name = "Report", module = "plcprov", frozen)]
struct PyReport {
    inner: core_detect::Report,
}

#[pymethods]
impl PyReport {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        core_detect::Report::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_text(&self) -> String {
        core_detect::render_text(&self.inner)
    }

    fn violations<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.violations)
    }

    /// Answer to one of the questions `q1`..`q6`.
    fn answer<'py>(&self, py: Python<'py>, question: &str) -> PyResult<Bound<'py, PyAny>> {
        let v = self
            .inner
            .question_answers
            .answer(question)
            .ok_or_else(|| err(format!("unknown question {question:?}")))?;
        to_py(py, &v)
    }

    fn fired(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.inner.violations.iter().map(|v| v.policy_id.as_str()).collect();
        ids.into_iter().map(String::from).collect()
    }

    /// Narrative steps and DOT rendering for one violation.
    fn explain<'py>(&self, py: Python<'py>, violation_id: &str, graph: &PyGraph) -> PyResult<(Bound<'py, PyAny>, String)> {
        let (steps, dot) = core_detect::explain(&self.inner, violation_id, &graph.inner).map_err(err)?;
        Ok((to_py(py, &steps)?, dot))
    }

    fn __len__(&self) -> usize {
        self.inner.violations.len()
    }
}

/// Runs the scenario's policies (or `policies`, a policy document) over `graph`.
/// `questions=True` uses the default per-device question policies instead.
#[pyfunction]
#[pyo3(signature = (graph, scenario, policies=None, questions=false))]
fn detect(graph: &PyGraph, scenario: &PyScenario, policies: Option<&str>, questions: bool) -> PyResult<PyReport> {
    let t = &scenario.inner.world.topology;
    let ps = match (policies, questions) {
        (Some(text), _) => parse_policies(text, t).map_err(|es| {
            let lines: Vec<String> = es.iter().map(|e| e.to_string()).collect();
            err(lines.join("; "))
        })?,
        (None, true) => question_policies(t),
        (None, false) => scenario.inner.policies.clone(),
    };
    Ok(PyReport {
        inner: core_detect::detect(&graph.inner, &ps, t),
    })
}

#[pyfunction]
fn scenario_names() -> Vec<String> {
    scenario::scenario_names()
}

#[pymodule]
fn plcprov(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PlcprovError", m.py().get_type::<PlcprovError>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    Ok(())
}
