//! Debug planning: every residual predicate left by static analysis becomes a
//! runtime check, fed by one probe per connector. Weaving maps probes to
//! interception points without touching the architecture.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisReport, ResidualPredicate, Variable};
use crate::model::{Architecture, PortRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub id: String,
    pub connector: String,
    pub captures: BTreeSet<Variable>,
}

/// What to do when a runtime check fails.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    #[default]
    Notify,
    /// Append one JSON line per violation to the file (relative to the workspace root).
    Log(String),
    /// Evolve the deployed system to the named reconfiguration model.
    Reconfigure(String),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Notify => f.write_str("notify"),
            Action::Log(path) => write!(f, "log to {path}"),
            Action::Reconfigure(name) => write!(f, "reconfigure with {name}"),
        }
    }
}

/// Default action plus per-check overrides keyed by check id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPolicy {
    #[serde(default)]
    pub default: Action,
    #[serde(default)]
    pub overrides: BTreeMap<String, Action>,
}

impl ActionPolicy {
    pub fn action_for(&self, check_id: &str) -> Action {
        self.overrides.get(check_id).cloned().unwrap_or_else(|| self.default.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub id: String,
    pub probe: String,
    pub predicate: ResidualPredicate,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebugPlan {
    pub probes: Vec<Probe>,
    pub checks: Vec<ResidualCheck>,
}

impl DebugPlan {
    pub fn is_empty(&self) -> bool {
        self.probes.is_empty() && self.checks.is_empty()
    }

    pub fn probe(&self, id: &str) -> Option<&Probe> {
        self.probes.iter().find(|p| p.id == id)
    }

    pub fn checks_for<'a>(&'a self, probe: &'a str) -> impl Iterator<Item = &'a ResidualCheck> + 'a {
        self.checks.iter().filter(move |c| c.probe == probe)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("analysis gate not passed: {0} incompatible verdict(s) remain")]
    GateNotPassed(usize),
    #[error("probe {probe} references unknown connector {connector}")]
    UnknownConnector { probe: String, connector: String },
}

pub fn probe_id(connector: &str) -> String {
    format!("probe-{connector}")
}

pub fn check_id(connector: &str, variable: Variable) -> String {
    format!("check-{connector}-{}", format!("{variable}").to_lowercase())
}

/// One probe per connector carrying residuals, one check per residual.
pub fn plan(report: &AnalysisReport, policy: &ActionPolicy) -> Result<DebugPlan, PlanError> {
    if !report.gate_passed {
        return Err(PlanError::GateNotPassed(report.incompatible().count()));
    }
    let mut by_connector: BTreeMap<&str, Vec<&ResidualPredicate>> = BTreeMap::new();
    for v in report.partial() {
        for r in v.residuals() {
            by_connector.entry(&r.connector).or_default().push(r);
        }
    }
    let mut out = DebugPlan::default();
    for (connector, residuals) in by_connector {
        let probe = probe_id(connector);
        let mut used: BTreeMap<String, usize> = BTreeMap::new();
        for r in &residuals {
            let base = check_id(connector, r.variable);
            let n = used.entry(base.clone()).or_default();
            *n += 1;
            let id = if *n == 1 { base } else { format!("{base}-{n}") };
            out.checks.push(ResidualCheck {
                action: policy.action_for(&id),
                id,
                probe: probe.clone(),
                predicate: (*r).clone(),
            });
        }
        out.probes.push(Probe {
            id: probe,
            connector: connector.to_string(),
            captures: residuals.iter().map(|r| r.variable).collect(),
        });
    }
    Ok(out)
}

/// Where a probe observes messages: on delivery at the connector's target port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterceptionPoint {
    pub probe: Probe,
    pub connector: String,
    pub port: PortRef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    pub plan: DebugPlan,
    pub points: Vec<InterceptionPoint>,
}

pub fn weave(plan: &DebugPlan, arch: &Architecture) -> Result<DeploymentConfig, PlanError> {
    let mut points = Vec::with_capacity(plan.probes.len());
    for probe in &plan.probes {
        let k = arch.connector(&probe.connector).ok_or_else(|| PlanError::UnknownConnector {
            probe: probe.id.clone(),
            connector: probe.connector.clone(),
        })?;
        points.push(InterceptionPoint {
            probe: probe.clone(),
            connector: k.id.clone(),
            port: k.target.clone(),
        });
    }
    points.sort_by(|a, b| a.connector.cmp(&b.connector));
    Ok(DeploymentConfig {
        plan: plan.clone(),
        points,
    })
}
