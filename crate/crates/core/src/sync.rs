//! Model/runtime synchronization: structural diffs between architectures and
//! transactional evolution of a running system.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{analyze, AnalysisError, AnalysisReport};
use crate::model::{canonicalize, Architecture, Component, Connector, ModelError};
use crate::plan::{plan, weave, ActionPolicy, DebugPlan, PlanError, Probe};
use crate::runtime::{BehaviorScript, RunningSystem, RuntimeError, TraceEntry};

/// A self-contained reconfiguration step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "payload", rename_all = "snake_case")]
pub enum ReconfigOp {
    DetachProbe(String),
    RemoveConnector(String),
    RemoveComponent(String),
    AddComponent(Component),
    AddConnector(Connector),
    AttachProbe(Probe),
}

impl ReconfigOp {
    fn rank(&self) -> u8 {
        match self {
            ReconfigOp::DetachProbe(_) => 0,
            ReconfigOp::RemoveConnector(_) => 1,
            ReconfigOp::RemoveComponent(_) => 2,
            ReconfigOp::AddComponent(_) => 3,
            ReconfigOp::AddConnector(_) => 4,
            ReconfigOp::AttachProbe(_) => 5,
        }
    }

    /// Id of the element the op touches.
    pub fn subject(&self) -> &str {
        match self {
            ReconfigOp::DetachProbe(id) | ReconfigOp::RemoveConnector(id) | ReconfigOp::RemoveComponent(id) => id,
            ReconfigOp::AddComponent(c) => &c.name,
            ReconfigOp::AddConnector(k) => &k.id,
            ReconfigOp::AttachProbe(p) => &p.id,
        }
    }
}

impl std::fmt::Display for ReconfigOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReconfigOp::DetachProbe(id) => write!(f, "detach probe {id}"),
            ReconfigOp::RemoveConnector(id) => write!(f, "remove connector {id}"),
            ReconfigOp::RemoveComponent(id) => write!(f, "remove component {id}"),
            ReconfigOp::AddComponent(c) => write!(f, "add component {}", c.name),
            ReconfigOp::AddConnector(k) => write!(f, "add connector {} : {} -> {}", k.id, k.source, k.target),
            ReconfigOp::AttachProbe(p) => write!(f, "attach probe {} on {}", p.id, p.connector),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDiff {
    pub ops: Vec<ReconfigOp>,
}

impl ModelDiff {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

fn keyed<'a, T>(items: &'a [T], key: impl Fn(&T) -> &str) -> BTreeMap<&'a str, &'a T> {
    items.iter().map(|t| (key(t), t)).collect()
}

/// Structural diff of two architectures. Changed elements are removed and
/// re-added, as are connectors (and their probes) touching a changed
/// component. Probes are compared too.
pub fn diff_deployment(old: &Architecture, old_probes: &[Probe], new: &Architecture, new_probes: &[Probe]) -> ModelDiff {
    let (oc, nc) = (keyed(&old.components, |c| &c.name), keyed(&new.components, |c| &c.name));
    let (ok, nk) = (keyed(&old.connectors, |k| &k.id), keyed(&new.connectors, |k| &k.id));
    let (op, np) = (keyed(old_probes, |p| &p.id), keyed(new_probes, |p| &p.id));
    let mut ops = Vec::new();

    let changed_comps: Vec<&str> = oc
        .iter()
        .filter(|(name, c)| nc.get(*name).is_some_and(|n| n != *c))
        .map(|(name, _)| *name)
        .collect();
    let rebuilt = |k: &Connector| {
        changed_comps.contains(&k.source.component.as_str()) || changed_comps.contains(&k.target.component.as_str())
    };
    let conn_removed: Vec<&str> = ok
        .iter()
        .filter(|(id, k)| nk.get(*id) != Some(*k) || rebuilt(k))
        .map(|(id, _)| *id)
        .collect();
    let conn_added: Vec<&str> = nk
        .iter()
        .filter(|(id, k)| ok.get(*id) != Some(*k) || rebuilt(k))
        .map(|(id, _)| *id)
        .collect();

    for (id, p) in &op {
        if np.get(id) != Some(p) || conn_removed.contains(&p.connector.as_str()) {
            ops.push(ReconfigOp::DetachProbe(id.to_string()));
        }
    }
    ops.extend(conn_removed.iter().map(|id| ReconfigOp::RemoveConnector(id.to_string())));
    for (name, c) in &oc {
        if nc.get(name) != Some(c) {
            ops.push(ReconfigOp::RemoveComponent(name.to_string()));
        }
    }
    for (name, c) in &nc {
        if oc.get(name) != Some(c) {
            ops.push(ReconfigOp::AddComponent((*c).clone()));
        }
    }
    ops.extend(conn_added.iter().map(|id| ReconfigOp::AddConnector(nk[id].clone())));
    for (id, p) in &np {
        if op.get(id) != Some(p) || conn_added.contains(&p.connector.as_str()) {
            ops.push(ReconfigOp::AttachProbe((*p).clone()));
        }
    }
    ops.sort_by(|a, b| (a.rank(), a.subject()).cmp(&(b.rank(), b.subject())));
    ModelDiff { ops }
}

/// Diff of components and connectors only.
pub fn diff(old: &Architecture, new: &Architecture) -> ModelDiff {
    diff_deployment(old, &[], new, &[])
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot apply `{op}`: {reason}")]
pub struct ApplyError {
    pub op: String,
    pub reason: String,
}

/// Applies component and connector ops to an architecture, leaving contracts
/// and the name alone. Probe ops have no model counterpart and are skipped.
pub fn apply(arch: &Architecture, diff: &ModelDiff) -> Result<Architecture, ApplyError> {
    let mut out = arch.clone();
    for op in &diff.ops {
        let fail = |reason: &str| ApplyError {
            op: op.to_string(),
            reason: reason.into(),
        };
        match op {
            ReconfigOp::DetachProbe(_) | ReconfigOp::AttachProbe(_) => {}
            ReconfigOp::RemoveConnector(id) => {
                let at = out.connectors.iter().position(|k| k.id == *id).ok_or_else(|| fail("no such connector"))?;
                out.connectors.remove(at);
            }
            ReconfigOp::RemoveComponent(name) => {
                if out
                    .connectors
                    .iter()
                    .any(|k| k.source.component == *name || k.target.component == *name)
                {
                    return Err(fail("component is still bound"));
                }
                let at = out.components.iter().position(|c| c.name == *name).ok_or_else(|| fail("no such component"))?;
                out.components.remove(at);
            }
            ReconfigOp::AddComponent(c) => {
                if out.component(&c.name).is_some() {
                    return Err(fail("component exists"));
                }
                out.components.push(c.clone());
            }
            ReconfigOp::AddConnector(k) => {
                if out.connector(&k.id).is_some() {
                    return Err(fail("connector exists"));
                }
                if out.resolve(&k.source).is_none() || out.resolve(&k.target).is_none() {
                    return Err(fail("endpoint does not exist"));
                }
                out.connectors.push(k.clone());
            }
        }
    }
    out.components.sort_by(|a, b| a.name.cmp(&b.name));
    out.connectors.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    IllFormed(ModelError),
    Analysis(AnalysisError),
    GateFailed(Box<AnalysisReport>),
    Plan(PlanError),
    Runtime(RuntimeError),
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::IllFormed(e) => write!(f, "{e}"),
            Rejection::Analysis(e) => write!(f, "analysis failed: {e}"),
            Rejection::GateFailed(r) => write!(f, "analysis gate not passed:\n{r}"),
            Rejection::Plan(e) => write!(f, "{e}"),
            Rejection::Runtime(e) => write!(f, "reconfiguration failed: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvolveOutcome {
    Accepted {
        diff: ModelDiff,
        report: AnalysisReport,
        plan: DebugPlan,
        /// Deliveries made while draining in-flight messages.
        drained: Vec<TraceEntry>,
    },
    Rejected(Rejection),
}

impl EvolveOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, EvolveOutcome::Accepted { .. })
    }
}

/// Re-analyzes and re-plans `new_arch`, then quiesces the system, applies
/// the diff and resumes. On rejection the system is left exactly as it was.
pub fn evolve(
    sys: &mut RunningSystem,
    new_arch: &Architecture,
    scripts: impl IntoIterator<Item = BehaviorScript>,
    policy: &ActionPolicy,
) -> EvolveOutcome {
    let new_arch = match canonicalize(new_arch) {
        Ok(a) => a,
        Err(e) => return EvolveOutcome::Rejected(Rejection::IllFormed(e)),
    };
    let report = match analyze(&new_arch) {
        Ok(r) => r,
        Err(e) => return EvolveOutcome::Rejected(Rejection::Analysis(e)),
    };
    if !report.gate_passed {
        return EvolveOutcome::Rejected(Rejection::GateFailed(Box::new(report)));
    }
    let new_plan = match plan(&report, policy) {
        Ok(p) => p,
        Err(e) => return EvolveOutcome::Rejected(Rejection::Plan(e)),
    };
    let config = match weave(&new_plan, &new_arch) {
        Ok(c) => c,
        Err(e) => return EvolveOutcome::Rejected(Rejection::Plan(e)),
    };
    let new_probes: Vec<Probe> = config.points.iter().map(|p| p.probe.clone()).collect();
    let d = diff_deployment(sys.model(), &sys.view().probes, &new_arch, &new_probes);

    let mut next = sys.clone();
    let was_running = next.status() == crate::runtime::Status::Running;
    let result = (|| {
        let drained = if was_running { next.quiesce()? } else { Vec::new() };
        next.register_scripts(scripts);
        next.apply_ops(&d.ops)?;
        Ok::<_, RuntimeError>(drained)
    })();
    let drained = match result {
        Ok(drained) => drained,
        Err(e) => return EvolveOutcome::Rejected(Rejection::Runtime(e)),
    };
    debug_assert!(next.mirrors(&new_arch));
    next.set_deployment(new_arch, new_plan.clone());
    if was_running {
        next.resume().expect("quiesced above");
    }
    *sys = next;
    EvolveOutcome::Accepted {
        diff: d,
        report,
        plan: new_plan,
        drained,
    }
}
