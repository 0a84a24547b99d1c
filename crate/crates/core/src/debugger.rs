//! Runtime side of the deferred checks: evaluates residual predicates on
//! reified events and carries out the configured action on violations.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ResidualPredicate, Test, Variable};
use crate::model::Architecture;
use crate::plan::{Action, ActionPolicy, DebugPlan};
use crate::runtime::{BehaviorScript, ReifiedEvent, RunningSystem, RuntimeError, Scenario, TraceEntry, Value};
use crate::sync::{evolve, EvolveOutcome, ModelDiff};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "message", rename_all = "snake_case")]
pub enum CheckResult {
    Pass,
    Violation(String),
    /// The event lacks a value the predicate needs, or has the wrong kind.
    EvalError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: String,
    pub probe: String,
    pub connector: String,
    pub tick: u64,
    pub predicate: ResidualPredicate,
    pub captured: BTreeMap<Variable, Value>,
    pub result: CheckResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionRecord>,
}

impl CheckOutcome {
    pub fn is_violation(&self) -> bool {
        matches!(self.result, CheckResult::Violation(_))
    }
}

/// Evaluates one residual predicate against captured values.
pub fn evaluate(predicate: &ResidualPredicate, captured: &BTreeMap<Variable, Value>) -> CheckResult {
    let var = predicate.variable;
    let Some(value) = captured.get(&var) else {
        return CheckResult::EvalError(format!("no {} captured", format!("{var}").to_lowercase()));
    };
    match (&predicate.test, value) {
        (Test::LessOrEqual(_), Value::Int(n)) if *n < 0 => CheckResult::EvalError(format!("negative {var} {n}")),
        (Test::LessOrEqual(bound), Value::Int(n)) if (*n as u64) <= *bound => CheckResult::Pass,
        (Test::LessOrEqual(bound), Value::Int(n)) => CheckResult::Violation(match var {
            Variable::Size => format!("data too large: {n} bytes exceeds {bound}"),
            Variable::Latency => format!("latency too high: {n} ms exceeds {bound}"),
            Variable::Type => format!("{var} {n} exceeds {bound}"),
        }),
        (Test::MemberOf(allowed), Value::Text(t)) if allowed.contains(t) => CheckResult::Pass,
        (Test::MemberOf(allowed), Value::Text(t)) => CheckResult::Violation(format!(
            "unsupported data type: {t} not in {{{}}}",
            allowed.iter().cloned().collect::<Vec<_>>().join(", ")
        )),
        (_, v) => CheckResult::EvalError(format!("captured {var} {v} does not fit the test")),
    }
}

/// One outcome per check of the event's probe, in plan order.
pub fn resume_checks(event: &ReifiedEvent, plan: &DebugPlan) -> Vec<CheckOutcome> {
    plan.checks_for(&event.probe)
        .map(|c| CheckOutcome {
            check: c.id.clone(),
            probe: event.probe.clone(),
            connector: event.connector.clone(),
            tick: event.tick,
            predicate: c.predicate.clone(),
            captured: event.captured.clone(),
            result: evaluate(&c.predicate, &event.captured),
            action: None,
        })
        .collect()
}

/// Target model and scripts a Reconfigure action evolves to.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconfiguration {
    pub architecture: Architecture,
    pub scripts: Vec<BehaviorScript>,
}

/// What actions may touch: the directory log paths are relative to, the
/// available reconfigurations, and the policy used to re-plan after one.
#[derive(Debug, Clone, Default)]
pub struct ActionContext {
    pub root: PathBuf,
    pub reconfigurations: BTreeMap<String, Reconfiguration>,
    pub policy: ActionPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum ActionRecord {
    Notified { entry: String },
    Logged { path: String },
    Reconfigured { script: String, accepted: bool, detail: String },
    /// A reconfiguration already ran in this scenario; the violation was only reported.
    Debounced { script: String, entry: String },
    Failed { error: String },
}

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("no reconfiguration named {0}")]
    UnknownScript(String),
    #[error("cannot append to {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub script: String,
    pub tick: u64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<ModelDiff>,
    pub detail: String,
}

/// Everything one checked scenario run produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DebugRun {
    pub trace: Vec<TraceEntry>,
    pub outcomes: Vec<CheckOutcome>,
    pub evolutions: Vec<Evolution>,
}

impl DebugRun {
    pub fn violations(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.outcomes.iter().filter(|o| o.is_violation())
    }

    pub fn notifications(&self) -> impl Iterator<Item = &str> {
        self.outcomes.iter().filter_map(|o| match &o.action {
            Some(ActionRecord::Notified { entry }) | Some(ActionRecord::Debounced { entry, .. }) => Some(entry.as_str()),
            _ => None,
        })
    }
}

fn describe(outcome: &CheckOutcome) -> String {
    let captured = outcome
        .captured
        .iter()
        .map(|(k, v)| format!("{}={v}", format!("{k}").to_lowercase()))
        .collect::<Vec<_>>()
        .join(", ");
    let message = match &outcome.result {
        CheckResult::Violation(m) | CheckResult::EvalError(m) => m.as_str(),
        CheckResult::Pass => "pass",
    };
    format!(
        "{} on connector {} at tick {}: {message} (captured {captured})",
        outcome.check, outcome.connector, outcome.tick
    )
}

/// One violation log line.
pub fn violation_line(outcome: &CheckOutcome) -> serde_json::Value {
    let message = match &outcome.result {
        CheckResult::Violation(m) => m.clone(),
        _ => String::new(),
    };
    serde_json::json!({
        "check": outcome.check,
        "connector": outcome.connector,
        "tick": outcome.tick,
        "captured": outcome.captured,
        "result": "violation",
        "message": message,
    })
}

fn append_line(path: &Path, line: &serde_json::Value) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")
}

/// Per-run bookkeeping for the reconfiguration debounce.
#[derive(Debug, Clone, Default)]
pub struct RunState {
    pub reconfigured: bool,
    pub evolutions: Vec<Evolution>,
    /// Deliveries drained by an evolution, still to be checked.
    pub drained: Vec<TraceEntry>,
}

/// Carries out `action` for a violation.
pub fn execute_action(
    outcome: &CheckOutcome,
    action: &Action,
    sys: &mut RunningSystem,
    ctx: &ActionContext,
    state: &mut RunState,
) -> Result<ActionRecord, ActionError> {
    match action {
        Action::Notify => Ok(ActionRecord::Notified {
            entry: describe(outcome),
        }),
        Action::Log(rel) => {
            let path = ctx.root.join(rel);
            append_line(&path, &violation_line(outcome)).map_err(|source| ActionError::Log {
                path: path.clone(),
                source,
            })?;
            Ok(ActionRecord::Logged { path: rel.clone() })
        }
        Action::Reconfigure(name) => {
            let target = ctx
                .reconfigurations
                .get(name)
                .ok_or_else(|| ActionError::UnknownScript(name.clone()))?;
            if state.reconfigured {
                return Ok(ActionRecord::Debounced {
                    script: name.clone(),
                    entry: describe(outcome),
                });
            }
            state.reconfigured = true;
            let tick = sys.clock();
            let result = evolve(sys, &target.architecture, target.scripts.iter().cloned(), &ctx.policy);
            let (accepted, diff, detail) = match result {
                EvolveOutcome::Accepted { diff, drained, .. } => {
                    state.drained.extend(drained);
                    let detail = format!("{} op(s) applied, scenario resumed at tick {}", diff.ops.len(), sys.clock());
                    (true, Some(diff), detail)
                }
                EvolveOutcome::Rejected(reason) => (false, None, format!("rejected, runtime untouched: {reason}")),
            };
            state.evolutions.push(Evolution {
                script: name.clone(),
                tick,
                accepted,
                diff,
                detail: detail.clone(),
            });
            Ok(ActionRecord::Reconfigured {
                script: name.clone(),
                accepted,
                detail,
            })
        }
    }
}

fn observe(
    entries: Vec<TraceEntry>,
    plan: &DebugPlan,
    sys: &mut RunningSystem,
    ctx: &ActionContext,
    state: &mut RunState,
    run: &mut DebugRun,
) {
    for entry in entries {
        if let TraceEntry::Event(event) = &entry {
            for mut outcome in resume_checks(event, plan) {
                if outcome.is_violation() {
                    let action = plan
                        .checks
                        .iter()
                        .find(|c| c.id == outcome.check)
                        .map(|c| c.action.clone())
                        .unwrap_or_default();
                    let record = execute_action(&outcome, &action, sys, ctx, state)
                        .unwrap_or_else(|e| ActionRecord::Failed { error: e.to_string() });
                    outcome.action = Some(record);
                }
                run.outcomes.push(outcome);
            }
        }
        run.trace.push(entry);
        // Deliveries drained by an evolution were observed under the old plan.
        let drained = std::mem::take(&mut state.drained);
        if !drained.is_empty() {
            observe(drained, plan, sys, ctx, state, run);
        }
    }
}

/// Runs a scenario with checks resumed synchronously after every step.
pub fn run_checked(sys: &mut RunningSystem, scenario: &Scenario, ctx: &ActionContext) -> Result<DebugRun, RuntimeError> {
    sys.load_scenario(scenario)?;
    let mut run = DebugRun::default();
    let mut state = RunState::default();
    let mut steps = 0u64;
    loop {
        let plan = sys.plan().clone();
        let Some(entries) = sys.step()? else { break };
        steps += 1;
        if steps > sys.delivery_cap {
            return Err(RuntimeError::DeliveryCapExceeded(sys.delivery_cap));
        }
        observe(entries, &plan, sys, ctx, &mut state, &mut run);
    }
    run.evolutions = state.evolutions;
    Ok(run)
}
