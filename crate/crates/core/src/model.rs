//! Architecture metamodel: components, ports, connectors and the four contract
//! kinds, plus well-formedness validation and canonical ordering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes in one decimal megabyte.
pub const MB: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::In => f.write_str("in"),
            Direction::Out => f.write_str("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub data_type: String,
    /// A required port must be bound by at least one connector.
    pub required: bool,
}

impl Port {
    pub fn new(name: impl Into<String>, direction: Direction, data_type: impl Into<String>) -> Self {
        Port {
            name: name.into(),
            direction,
            data_type: data_type.into(),
            required: false,
        }
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub ports: Vec<Port>,
    /// Name of the behavior script driving this component at runtime.
    pub script: Option<String>,
}

impl Component {
    pub fn new(name: impl Into<String>) -> Self {
        Component {
            name: name.into(),
            ports: Vec::new(),
            script: None,
        }
    }

    pub fn with_port(mut self, port: Port) -> Self {
        self.ports.push(port);
        self
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn in_ports(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::In)
    }

    pub fn out_ports(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Out)
    }
}

/// A `(component, port)` pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortRef {
    pub component: String,
    pub port: String,
}

impl PortRef {
    pub fn new(component: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef {
            component: component.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connector {
    pub id: String,
    pub source: PortRef,
    pub target: PortRef,
}

impl Connector {
    pub fn new(id: impl Into<String>, source: PortRef, target: PortRef) -> Self {
        Connector {
            id: id.into(),
            source,
            target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StructuralRule {
    /// Only connectors whose source component is listed may target the port.
    OnlyClients { clients: BTreeSet<String> },
    MustBeBound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralContract {
    pub subject: PortRef,
    pub rules: Vec<StructuralRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Send,
    Receive,
}

/// Protocol terms: sequence, choice and iteration over port actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum ProcessTerm {
    Action { port: String, kind: ActionKind },
    Seq { first: Box<ProcessTerm>, then: Box<ProcessTerm> },
    Choice { left: Box<ProcessTerm>, right: Box<ProcessTerm> },
    Star { body: Box<ProcessTerm> },
    Skip,
}

impl ProcessTerm {
    pub fn send(port: impl Into<String>) -> Self {
        ProcessTerm::Action {
            port: port.into(),
            kind: ActionKind::Send,
        }
    }

    pub fn receive(port: impl Into<String>) -> Self {
        ProcessTerm::Action {
            port: port.into(),
            kind: ActionKind::Receive,
        }
    }

    pub fn seq(first: ProcessTerm, then: ProcessTerm) -> Self {
        ProcessTerm::Seq {
            first: Box::new(first),
            then: Box::new(then),
        }
    }

    pub fn choice(left: ProcessTerm, right: ProcessTerm) -> Self {
        ProcessTerm::Choice {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn star(body: ProcessTerm) -> Self {
        ProcessTerm::Star {
            body: Box::new(body),
        }
    }

    /// Every `(port, kind)` action occurring in the term, in left-to-right order.
    pub fn actions(&self) -> Vec<(&str, ActionKind)> {
        let mut out = Vec::new();
        self.collect_actions(&mut out);
        out
    }

    fn collect_actions<'a>(&'a self, out: &mut Vec<(&'a str, ActionKind)>) {
        match self {
            ProcessTerm::Action { port, kind } => out.push((port, *kind)),
            ProcessTerm::Seq { first: a, then: b } | ProcessTerm::Choice { left: a, right: b } => {
                a.collect_actions(out);
                b.collect_actions(out);
            }
            ProcessTerm::Star { body } => body.collect_actions(out),
            ProcessTerm::Skip => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehavioralContract {
    pub component: String,
    pub protocol: ProcessTerm,
}

/// Upper bound of a size interval; `Unknown` is the lattice top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extent {
    Finite(u64),
    Unknown,
}

impl Extent {
    pub fn max(self, other: Extent) -> Extent {
        match (self, other) {
            (Extent::Finite(a), Extent::Finite(b)) => Extent::Finite(a.max(b)),
            _ => Extent::Unknown,
        }
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            Extent::Finite(v) => Some(v),
            Extent::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SizeInterval {
    pub lo: u64,
    pub hi: Extent,
}

impl SizeInterval {
    pub const TOP: SizeInterval = SizeInterval {
        lo: 0,
        hi: Extent::Unknown,
    };

    pub fn new(lo: u64, hi: u64) -> Self {
        SizeInterval {
            lo,
            hi: Extent::Finite(hi),
        }
    }

    pub fn join(&self, other: &SizeInterval) -> SizeInterval {
        SizeInterval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeSet {
    Only(BTreeSet<String>),
    Unknown,
}

impl TypeSet {
    pub fn of<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TypeSet::Only(tokens.into_iter().map(Into::into).collect())
    }

    pub fn join(&self, other: &TypeSet) -> TypeSet {
        match (self, other) {
            (TypeSet::Only(a), TypeSet::Only(b)) => TypeSet::Only(a.union(b).cloned().collect()),
            _ => TypeSet::Unknown,
        }
    }
}

/// Abstract facts about the messages leaving a port.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataFacts {
    pub size: SizeInterval,
    pub types: TypeSet,
}

impl DataFacts {
    pub fn top() -> Self {
        DataFacts {
            size: SizeInterval::TOP,
            types: TypeSet::Unknown,
        }
    }

    pub fn join(&self, other: &DataFacts) -> DataFacts {
        DataFacts {
            size: self.size.join(&other.size),
            types: self.types.join(&other.types),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataConstraints {
    pub max_size: Option<u64>,
    pub allowed_types: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataflowContract {
    pub port: PortRef,
    pub produced: Option<DataFacts>,
    pub constraints: Option<DataConstraints>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosContract {
    pub port: PortRef,
    /// Milliseconds contributed by this hop; `Unknown` is top.
    pub offered_latency: Option<Extent>,
    pub required_max_latency: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contract {
    Structural(StructuralContract),
    Behavioral(BehavioralContract),
    Dataflow(DataflowContract),
    Qos(QosContract),
}

impl Contract {
    fn sort_key(&self) -> (u8, String) {
        match self {
            Contract::Structural(c) => (0, c.subject.to_string()),
            Contract::Behavioral(c) => (1, c.component.clone()),
            Contract::Dataflow(c) => (2, c.port.to_string()),
            Contract::Qos(c) => (3, c.port.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub components: Vec<Component>,
    pub connectors: Vec<Connector>,
    pub contracts: Vec<Contract>,
}

impl Architecture {
    pub fn new(name: impl Into<String>) -> Self {
        Architecture {
            name: name.into(),
            components: Vec::new(),
            connectors: Vec::new(),
            contracts: Vec::new(),
        }
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn connector(&self, id: &str) -> Option<&Connector> {
        self.connectors.iter().find(|k| k.id == id)
    }

    pub fn resolve(&self, r: &PortRef) -> Option<&Port> {
        self.component(&r.component).and_then(|c| c.port(&r.port))
    }

    /// Connectors whose source or target is the given port.
    pub fn connectors_at<'a>(&'a self, r: &'a PortRef) -> impl Iterator<Item = &'a Connector> + 'a {
        self.connectors
            .iter()
            .filter(move |k| &k.source == r || &k.target == r)
    }

    pub fn dataflow_contract(&self, r: &PortRef) -> Option<&DataflowContract> {
        self.contracts.iter().find_map(|c| match c {
            Contract::Dataflow(d) if &d.port == r => Some(d),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    DuplicateComponent,
    DuplicatePort,
    DuplicateConnector,
    DanglingEndpoint,
    DirectionMismatch,
    UnboundRequiredPort,
    DanglingContract,
    ContractDirection,
    EmptyClientList,
    InvalidInterval,
    EmptyTypeSet,
    UnknownProtocolPort,
}

impl IssueKind {
    pub fn describe(self) -> &'static str {
        match self {
            IssueKind::DuplicateComponent => "duplicate component",
            IssueKind::DuplicatePort => "duplicate port",
            IssueKind::DuplicateConnector => "duplicate connector",
            IssueKind::DanglingEndpoint => "dangling endpoint",
            IssueKind::DirectionMismatch => "direction mismatch",
            IssueKind::UnboundRequiredPort => "unbound required port",
            IssueKind::DanglingContract => "dangling contract reference",
            IssueKind::ContractDirection => "contract on wrong port direction",
            IssueKind::EmptyClientList => "empty client list",
            IssueKind::InvalidInterval => "invalid interval",
            IssueKind::EmptyTypeSet => "empty type set",
            IssueKind::UnknownProtocolPort => "protocol names unknown port",
        }
    }
}

/// One well-formedness violation. `location` names the offending element
/// (`component C`, `connector k`, `contract dataflow on C.p`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub location: String,
    pub detail: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.location, self.kind.describe(), self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellFormednessReport {
    pub issues: Vec<Issue>,
}

impl WellFormednessReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, kind: IssueKind, location: impl Into<String>, detail: impl Into<String>) {
        self.issues.push(Issue {
            kind,
            location: location.into(),
            detail: detail.into(),
        });
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("ill-formed architecture: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    IllFormed(Vec<Issue>),
}

pub fn validate(arch: &Architecture) -> WellFormednessReport {
    let mut report = WellFormednessReport::default();

    let mut components: BTreeMap<&str, &Component> = BTreeMap::new();
    for c in &arch.components {
        if components.insert(&c.name, c).is_some() {
            report.push(IssueKind::DuplicateComponent, format!("component {}", c.name), "name declared twice");
        }
        let mut seen = BTreeSet::new();
        for p in &c.ports {
            if !seen.insert(&p.name) {
                report.push(
                    IssueKind::DuplicatePort,
                    format!("component {}", c.name),
                    format!("port {} declared twice", p.name),
                );
            }
        }
    }
    let port_of = |r: &PortRef| components.get(r.component.as_str()).and_then(|c| c.port(&r.port));

    let mut ids = BTreeSet::new();
    let mut bound: BTreeSet<&PortRef> = BTreeSet::new();
    for k in &arch.connectors {
        let loc = format!("connector {}", k.id);
        if !ids.insert(&k.id) {
            report.push(IssueKind::DuplicateConnector, &loc, "id declared twice");
        }
        let source = port_of(&k.source);
        let target = port_of(&k.target);
        for (end, port) in [(&k.source, source), (&k.target, target)] {
            if port.is_none() {
                report.push(IssueKind::DanglingEndpoint, &loc, format!("{end} does not exist"));
            }
        }
        if let (Some(s), Some(t)) = (source, target) {
            if s.direction != Direction::Out || t.direction != Direction::In {
                report.push(
                    IssueKind::DirectionMismatch,
                    &loc,
                    format!("{} is {} and {} is {}", k.source, s.direction, k.target, t.direction),
                );
            }
        }
        bound.insert(&k.source);
        bound.insert(&k.target);
    }

    for c in &arch.components {
        for p in c.ports.iter().filter(|p| p.required) {
            let r = PortRef::new(&c.name, &p.name);
            if !bound.contains(&r) {
                report.push(IssueKind::UnboundRequiredPort, format!("port {r}"), "required port has no connector");
            }
        }
    }

    for contract in &arch.contracts {
        validate_contract(contract, &components, &mut report);
    }
    report
}

fn validate_contract(contract: &Contract, components: &BTreeMap<&str, &Component>, report: &mut WellFormednessReport) {
    let lookup = |r: &PortRef| components.get(r.component.as_str()).and_then(|c| c.port(&r.port));
    match contract {
        Contract::Structural(s) => {
            let loc = format!("contract structural on {}", s.subject);
            if lookup(&s.subject).is_none() {
                report.push(IssueKind::DanglingContract, &loc, format!("{} does not exist", s.subject));
            }
            for rule in &s.rules {
                if let StructuralRule::OnlyClients { clients } = rule {
                    if clients.is_empty() {
                        report.push(IssueKind::EmptyClientList, &loc, "`only` needs at least one client");
                    }
                    for client in clients {
                        if !components.contains_key(client.as_str()) {
                            report.push(
                                IssueKind::DanglingContract,
                                &loc,
                                format!("client {client} is not a component"),
                            );
                        }
                    }
                }
            }
        }
        Contract::Behavioral(b) => {
            let loc = format!("contract behavioral on {}", b.component);
            match components.get(b.component.as_str()) {
                None => report.push(IssueKind::DanglingContract, &loc, format!("{} does not exist", b.component)),
                Some(c) => {
                    let mut reported = BTreeSet::new();
                    for (port, kind) in b.protocol.actions() {
                        let expected = match kind {
                            ActionKind::Send => Direction::Out,
                            ActionKind::Receive => Direction::In,
                        };
                        match c.port(port) {
                            None => {
                                if reported.insert(port) {
                                    report.push(
                                        IssueKind::UnknownProtocolPort,
                                        &loc,
                                        format!("{} has no port {port}", c.name),
                                    );
                                }
                            }
                            Some(p) if p.direction != expected => {
                                if reported.insert(port) {
                                    report.push(
                                        IssueKind::ContractDirection,
                                        &loc,
                                        format!("action on {port} does not match its direction {}", p.direction),
                                    );
                                }
                            }
                            Some(_) => {}
                        }
                    }
                }
            }
        }
        Contract::Dataflow(d) => {
            let loc = format!("contract dataflow on {}", d.port);
            match lookup(&d.port) {
                None => report.push(IssueKind::DanglingContract, &loc, format!("{} does not exist", d.port)),
                Some(p) => {
                    if d.produced.is_some() && p.direction != Direction::Out {
                        report.push(IssueKind::ContractDirection, &loc, "`produces` is only allowed on out ports");
                    }
                    if d.constraints.is_some() && p.direction != Direction::In {
                        report.push(IssueKind::ContractDirection, &loc, "`requires` is only allowed on in ports");
                    }
                }
            }
            let produced_empty = matches!(&d.produced, Some(DataFacts { types: TypeSet::Only(t), .. }) if t.is_empty());
            let allowed_empty = matches!(&d.constraints, Some(DataConstraints { allowed_types: Some(t), .. }) if t.is_empty());
            if produced_empty || allowed_empty {
                report.push(IssueKind::EmptyTypeSet, &loc, "type sets list at least one token");
            }
            if let Some(facts) = &d.produced {
                if let Extent::Finite(hi) = facts.size.hi {
                    if facts.size.lo > hi {
                        report.push(
                            IssueKind::InvalidInterval,
                            &loc,
                            format!("size interval [{}, {hi}] is empty", facts.size.lo),
                        );
                    }
                }
            }
        }
        Contract::Qos(q) => {
            let loc = format!("contract qos on {}", q.port);
            match lookup(&q.port) {
                None => report.push(IssueKind::DanglingContract, &loc, format!("{} does not exist", q.port)),
                Some(p) => {
                    if q.offered_latency.is_some() && p.direction != Direction::Out {
                        report.push(IssueKind::ContractDirection, &loc, "`offered_latency` is only allowed on out ports");
                    }
                    if q.required_max_latency.is_some() && p.direction != Direction::In {
                        report.push(
                            IssueKind::ContractDirection,
                            &loc,
                            "`required_max_latency` is only allowed on in ports",
                        );
                    }
                }
            }
        }
    }
}

/// Stable ordering: components by name (ports by name), connectors by id,
/// contracts by kind then subject.
pub fn canonicalize(arch: &Architecture) -> Result<Architecture, ModelError> {
    let report = validate(arch);
    if !report.is_empty() {
        return Err(ModelError::IllFormed(report.issues));
    }
    Ok(canonical_order(arch.clone()))
}

pub(crate) fn canonical_order(mut arch: Architecture) -> Architecture {
    for c in &mut arch.components {
        c.ports.sort_by(|a, b| a.name.cmp(&b.name));
    }
    arch.components.sort_by(|a, b| a.name.cmp(&b.name));
    arch.connectors.sort_by(|a, b| a.id.cmp(&b.id));
    arch.contracts.sort_by_cached_key(Contract::sort_key);
    for contract in &mut arch.contracts {
        if let Contract::Structural(s) = contract {
            s.rules.sort_by_key(|r| match r {
                StructuralRule::OnlyClients { .. } => 0,
                StructuralRule::MustBeBound => 1,
            });
        }
    }
    arch
}
