//! Interaction analysis. Every analyzed interaction receives exactly one
//! verdict: compatible, incompatible, or partially compatible with residual
//! predicates that must be checked at runtime. Any incompatible verdict closes
//! the gate to deployment and evolution.

mod behavioral;
mod dataflow;
pub mod lts;
mod qos;
mod structural;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Architecture, Contract, Issue};

pub use behavioral::{check_behavioral, check_behavioral_with};
pub use dataflow::{check_dataflow, compare_facts, propagate_facts};
pub use lts::{compile_protocol, Label, Lts};
pub use qos::check_qos;
pub use structural::check_structural;

/// Default bound on explored product states for deadlock detection.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Size,
    Type,
    Latency,
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::Size => "Size",
            Variable::Type => "Type",
            Variable::Latency => "Latency",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Test {
    LessOrEqual(u64),
    MemberOf(BTreeSet<String>),
}

/// A runtime-evaluable predicate over one attribute of the messages crossing
/// a connector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "ResidualRepr", try_from = "ResidualRepr")]
pub struct ResidualPredicate {
    pub connector: String,
    pub variable: Variable,
    pub test: Test,
}

#[derive(Serialize, Deserialize)]
struct ResidualRepr {
    connector: String,
    variable: Variable,
    test: String,
    bound: serde_json::Value,
}

impl From<ResidualPredicate> for ResidualRepr {
    fn from(r: ResidualPredicate) -> Self {
        let (test, bound) = match r.test {
            Test::LessOrEqual(n) => ("le", serde_json::json!(n)),
            Test::MemberOf(set) => ("member_of", serde_json::json!(set)),
        };
        ResidualRepr {
            connector: r.connector,
            variable: r.variable,
            test: test.into(),
            bound,
        }
    }
}

impl TryFrom<ResidualRepr> for ResidualPredicate {
    type Error = String;

    fn try_from(r: ResidualRepr) -> Result<Self, String> {
        let test = match r.test.as_str() {
            "le" => Test::LessOrEqual(r.bound.as_u64().ok_or("`le` bound must be an unsigned integer")?),
            "member_of" => Test::MemberOf(
                serde_json::from_value(r.bound).map_err(|e| format!("`member_of` bound: {e}"))?,
            ),
            other => return Err(format!("unknown residual test `{other}`")),
        };
        Ok(ResidualPredicate {
            connector: r.connector,
            variable: r.variable,
            test,
        })
    }
}

impl fmt::Display for ResidualPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.test {
            Test::LessOrEqual(n) => write!(f, "{}: {} <= {n}", self.connector, self.variable),
            Test::MemberOf(set) => write!(
                f,
                "{}: {} in {{{}}}",
                self.connector,
                self.variable,
                set.iter().cloned().collect::<Vec<_>>().join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisKind {
    Structural,
    Behavioral,
    Dataflow,
    Qos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerdictKind {
    Compatible,
    Incompatible { reason: String },
    PartiallyCompatible { residuals: Vec<ResidualPredicate> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VerdictRepr", try_from = "VerdictRepr")]
pub struct Verdict {
    pub analysis: AnalysisKind,
    /// Connector id, or a rule id for checks not tied to one connector.
    pub subject: String,
    pub kind: VerdictKind,
}

#[derive(Serialize, Deserialize)]
struct VerdictRepr {
    analysis: AnalysisKind,
    subject: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    residuals: Option<Vec<ResidualPredicate>>,
}

impl From<Verdict> for VerdictRepr {
    fn from(v: Verdict) -> Self {
        let (kind, reason, residuals) = match v.kind {
            VerdictKind::Compatible => ("compatible", None, None),
            VerdictKind::Incompatible { reason } => ("incompatible", Some(reason), None),
            VerdictKind::PartiallyCompatible { residuals } => ("partially_compatible", None, Some(residuals)),
        };
        VerdictRepr {
            analysis: v.analysis,
            subject: v.subject,
            kind: kind.into(),
            reason,
            residuals,
        }
    }
}

impl TryFrom<VerdictRepr> for Verdict {
    type Error = String;

    fn try_from(r: VerdictRepr) -> Result<Self, String> {
        let kind = match r.kind.as_str() {
            "compatible" => VerdictKind::Compatible,
            "incompatible" => VerdictKind::Incompatible {
                reason: r.reason.ok_or("incompatible verdict without reason")?,
            },
            "partially_compatible" => {
                let residuals = r.residuals.unwrap_or_default();
                if residuals.is_empty() {
                    return Err("partially compatible verdict without residuals".into());
                }
                VerdictKind::PartiallyCompatible { residuals }
            }
            other => return Err(format!("unknown verdict kind `{other}`")),
        };
        Ok(Verdict {
            analysis: r.analysis,
            subject: r.subject,
            kind,
        })
    }
}

impl Verdict {
    pub fn compatible(analysis: AnalysisKind, subject: impl Into<String>) -> Self {
        Verdict {
            analysis,
            subject: subject.into(),
            kind: VerdictKind::Compatible,
        }
    }

    pub fn incompatible(analysis: AnalysisKind, subject: impl Into<String>, reason: impl Into<String>) -> Self {
        Verdict {
            analysis,
            subject: subject.into(),
            kind: VerdictKind::Incompatible { reason: reason.into() },
        }
    }

    pub fn partial(analysis: AnalysisKind, subject: impl Into<String>, residuals: Vec<ResidualPredicate>) -> Self {
        debug_assert!(!residuals.is_empty());
        Verdict {
            analysis,
            subject: subject.into(),
            kind: VerdictKind::PartiallyCompatible { residuals },
        }
    }

    pub fn is_compatible(&self) -> bool {
        matches!(self.kind, VerdictKind::Compatible)
    }

    pub fn is_incompatible(&self) -> bool {
        matches!(self.kind, VerdictKind::Incompatible { .. })
    }

    pub fn is_partial(&self) -> bool {
        matches!(self.kind, VerdictKind::PartiallyCompatible { .. })
    }

    pub fn residuals(&self) -> &[ResidualPredicate] {
        match &self.kind {
            VerdictKind::PartiallyCompatible { residuals } => residuals,
            _ => &[],
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let analysis = format!("{:?}", self.analysis).to_lowercase();
        match &self.kind {
            VerdictKind::Compatible => write!(f, "[{analysis}] {}: compatible", self.subject),
            VerdictKind::Incompatible { reason } => {
                write!(f, "[{analysis}] {}: INCOMPATIBLE ({reason})", self.subject)
            }
            VerdictKind::PartiallyCompatible { residuals } => {
                write!(f, "[{analysis}] {}: partially compatible, runtime checks:", self.subject)?;
                for r in residuals {
                    write!(f, "\n    {r}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    #[serde(rename = "gate")]
    pub gate_passed: bool,
    pub verdicts: Vec<Verdict>,
}

impl AnalysisReport {
    pub fn from_verdicts(mut verdicts: Vec<Verdict>) -> Self {
        verdicts.sort_by(|a, b| (a.analysis, &a.subject).cmp(&(b.analysis, &b.subject)));
        let gate_passed = !verdicts.iter().any(Verdict::is_incompatible);
        AnalysisReport { gate_passed, verdicts }
    }

    pub fn of_kind(&self, kind: AnalysisKind) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(move |v| v.analysis == kind)
    }

    pub fn partial(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.is_partial())
    }

    pub fn incompatible(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.is_incompatible())
    }
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.verdicts {
            writeln!(f, "{v}")?;
        }
        let count = |p: fn(&Verdict) -> bool| self.verdicts.iter().filter(|v| p(v)).count();
        write!(
            f,
            "gate {}: {} compatible, {} partially compatible, {} incompatible",
            if self.gate_passed { "passed" } else { "FAILED" },
            count(Verdict::is_compatible),
            count(Verdict::is_partial),
            count(Verdict::is_incompatible),
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("ill-formed architecture: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    IllFormed(Vec<Issue>),
    #[error("protocol of {component} acts on port {port}, which is not bound by any connector")]
    UnboundProtocolPort { component: String, port: String },
    #[error("unknown component {0}")]
    UnknownComponent(String),
    #[error("product state space exceeds the cap of {cap} states")]
    StateSpaceExceeded { cap: usize },
    #[error("cycle among latency-annotated ports: {}", .0.join(" -> "))]
    QosCycle(Vec<String>),
}

impl From<model::ModelError> for AnalysisError {
    fn from(e: model::ModelError) -> Self {
        match e {
            model::ModelError::IllFormed(issues) => AnalysisError::IllFormed(issues),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub state_cap: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

pub(crate) fn require_well_formed(arch: &Architecture) -> Result<(), AnalysisError> {
    let report = model::validate(arch);
    if report.is_empty() {
        Ok(())
    } else {
        Err(AnalysisError::IllFormed(report.issues))
    }
}

pub fn analyze(arch: &Architecture) -> Result<AnalysisReport, AnalysisError> {
    analyze_with(arch, AnalysisOptions::default())
}

/// Runs every analysis on the canonical form of `arch`, so declaration order
/// never changes the outcome.
pub fn analyze_with(arch: &Architecture, options: AnalysisOptions) -> Result<AnalysisReport, AnalysisError> {
    let arch = &model::canonicalize(arch)?;
    let mut verdicts = check_structural(arch)?;
    // Without protocols there is no interaction to report on.
    let behavioral = check_behavioral_with(arch, options)?;
    if arch.contracts.iter().any(|c| matches!(c, Contract::Behavioral(_))) {
        verdicts.push(behavioral);
    }
    verdicts.extend(check_dataflow(arch)?);
    verdicts.extend(check_qos(arch)?);
    Ok(AnalysisReport::from_verdicts(verdicts))
}
