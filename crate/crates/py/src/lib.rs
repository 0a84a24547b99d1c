//! Python bindings: parse and analyze models, deploy them on the simulated
//! runtime, run checked scenarios and evolve the running system.

use calico::debugger::{run_checked, ActionContext};
use calico::plan::{plan, weave, ActionPolicy};
use calico::runtime::{parse_scenarios, parse_scripts, trace_to_jsonl, BehaviorScript};
use calico::sync::{evolve, EvolveOutcome};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scripts_from(text: &str) -> PyResult<Vec<BehaviorScript>> {
    parse_scripts(text).map_err(|e| PyValueError::new_err(format!("scripts:{e}")))
}

fn policy_from(json: Option<&str>) -> PyResult<ActionPolicy> {
    match json {
        None => Ok(ActionPolicy::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("policy: {e}"))),
    }
}

/// A parsed, canonical architecture model.
#[pyclass(name = "Architecture", module = "calico_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyArchitecture {
    inner: calico::Architecture,
}

#[pymethods]
impl PyArchitecture {
    /// Parses ADL source. Raises ValueError listing every error with its position.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        calico::parse(text)
            .map(|inner| PyArchitecture { inner })
            .map_err(|errors| PyValueError::new_err(calico::adl::render_errors(&errors)))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn components(&self) -> Vec<String> {
        self.inner.components.iter().map(|c| c.name.clone()).collect()
    }

    #[getter]
    fn connectors(&self) -> Vec<String> {
        self.inner.connectors.iter().map(|k| k.id.clone()).collect()
    }

    fn to_adl(&self) -> PyResult<String> {
        calico::serialize(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Architecture({:?}, {} components, {} connectors)",
            self.inner.name,
            self.inner.components.len(),
            self.inner.connectors.len()
        )
    }
}

#[pyclass(name = "AnalysisReport", module = "calico_py", frozen)]
struct PyReport {
    inner: calico::AnalysisReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn gate_passed(&self) -> bool {
        self.inner.gate_passed
    }

    #[getter]
    fn verdicts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.verdicts)
    }

    /// Verdicts that need runtime checks.
    fn partial<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.partial().collect::<Vec<_>>())
    }

    fn incompatible<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.incompatible().collect::<Vec<_>>())
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// Runs every static analysis on the model.
#[pyfunction]
fn analyze(arch: &PyArchitecture) -> PyResult<PyReport> {
    calico::analyze(&arch.inner)
        .map(|inner| PyReport { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Reconfiguration ops turning `old` into `new`, as display strings.
#[pyfunction]
fn diff(old: &PyArchitecture, new: &PyArchitecture) -> Vec<String> {
    calico::sync::diff(&old.inner, &new.inner).ops.iter().map(ToString::to_string).collect()
}

/// A deployed system on the deterministic simulated runtime.
#[pyclass(name = "RunningSystem", module = "calico_py")]
struct PySystem {
    inner: calico::RunningSystem,
    policy: ActionPolicy,
}

#[pymethods]
impl PySystem {
    /// Analyzes, plans, weaves and instantiates `arch`. Raises RuntimeError if the gate fails.
    #[staticmethod]
    #[pyo3(signature = (arch, scripts, seed = 0, policy = None))]
    fn deploy(arch: &PyArchitecture, scripts: &str, seed: u64, policy: Option<&str>) -> PyResult<Self> {
        let policy = policy_from(policy)?;
        let report = calico::analyze(&arch.inner).map_err(|e| PyValueError::new_err(e.to_string()))?;
        if !report.gate_passed {
            return Err(PyRuntimeError::new_err(format!("analysis gate not passed:\n{report}")));
        }
        let p = plan(&report, &policy).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let cfg = weave(&p, &arch.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let (inner, _) = calico::RunningSystem::instantiate(&arch.inner, &cfg, scripts_from(scripts)?, seed)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(PySystem { inner, policy })
    }

    /// Runs the first scenario in `scenario` with runtime checks. Returns the
    /// outcomes, evolutions and the trace as JSONL.
    fn run<'py>(&mut self, py: Python<'py>, scenario: &str) -> PyResult<Bound<'py, PyAny>> {
        let sc = parse_scenarios(scenario)
            .map_err(|e| PyValueError::new_err(format!("scenario:{e}")))?
            .into_iter()
            .next()
            .ok_or_else(|| PyValueError::new_err("no scenario in text"))?;
        let ctx = ActionContext {
            policy: self.policy.clone(),
            ..ActionContext::default()
        };
        let run = run_checked(&mut self.inner, &sc, &ctx).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let violations = run.violations().count();
        to_py(
            py,
            &serde_json::json!({
                "scenario": sc.name,
                "violations": violations,
                "outcomes": run.outcomes,
                "evolutions": run.evolutions,
                "trace": trace_to_jsonl(&run.trace),
            }),
        )
    }

    /// Evolves to `arch`. Returns `{"accepted": bool, ...}`; on rejection the system is unchanged.
    fn evolve<'py>(&mut self, py: Python<'py>, arch: &PyArchitecture, scripts: &str) -> PyResult<Bound<'py, PyAny>> {
        let scripts = scripts_from(scripts)?;
        let value = match evolve(&mut self.inner, &arch.inner, scripts, &self.policy) {
            EvolveOutcome::Accepted { diff, report, plan, .. } => serde_json::json!({
                "accepted": true,
                "diff": diff.ops.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "report": report,
                "plan": plan,
            }),
            EvolveOutcome::Rejected(why) => serde_json::json!({ "accepted": false, "reason": why.to_string() }),
        };
        to_py(py, &value)
    }

    /// The runtime mirror: components, connectors and probes.
    fn view<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.view())
    }

    fn mirrors(&self, arch: &PyArchitecture) -> bool {
        self.inner.mirrors(&arch.inner)
    }

    #[getter]
    fn clock(&self) -> u64 {
        self.inner.clock()
    }

    #[getter]
    fn status(&self) -> String {
        self.inner.status().to_string()
    }

    #[getter]
    fn model(&self) -> PyArchitecture {
        PyArchitecture {
            inner: self.inner.model().clone(),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

#[pymodule]
pub fn calico_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyArchitecture>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(diff, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_defaults_to_notify() {
        assert_eq!(policy_from(None).unwrap(), ActionPolicy::default());
        let p = policy_from(Some(r#"{"default": {"log": "v.jsonl"}}"#)).unwrap();
        assert_eq!(p.action_for("anything"), calico::plan::Action::Log("v.jsonl".into()));
        assert!(policy_from(Some("{")).is_err());
    }

    #[test]
    fn scripts_parse_or_fail() {
        assert_eq!(scripts_from("script A { on i }").unwrap().len(), 1);
        assert!(scripts_from("script A { on }").is_err());
    }
}
