//! Deterministic simulated runtime for deployed architectures.
//!
//! Instances run behavior scripts, bindings carry messages between them, and
//! probes reify deliveries into events for the debugger. Time is a logical
//! tick counter. The next delivery is always the queue head with the smallest
//! `(deliver_at, connector id)`; connectors are FIFO. Stimuli due at the same
//! tick go before deliveries.

pub mod script;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{analyze, AnalysisError, AnalysisReport, Variable};
use crate::model::{canonicalize, Architecture, Component, Connector, Direction, PortRef};
use crate::plan::{DebugPlan, DeploymentConfig, Probe};
use crate::sync::ReconfigOp;

pub use script::{parse_scenarios, parse_scripts, Attrs, BehaviorScript, Scenario, Stimulus, Value};

/// Bound on deliveries processed by a single run or drain.
pub const DEFAULT_DELIVERY_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub connector: String,
    pub sent_at: u64,
    pub deliver_at: u64,
    /// Tick of the stimulus that started the causal chain.
    pub origin: u64,
    pub attrs: Attrs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub tick: u64,
    pub connector: String,
    pub target: PortRef,
    pub sent_at: u64,
    pub origin: u64,
    pub attrs: Attrs,
}

/// A delivery observed by a probe, with the attributes it captures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReifiedEvent {
    pub tick: u64,
    pub probe: String,
    pub connector: String,
    /// Captured values; a variable is absent when the message lacks it.
    pub captured: BTreeMap<Variable, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceEntry {
    Message(Delivery),
    Event(ReifiedEvent),
}

impl TraceEntry {
    pub fn tick(&self) -> u64 {
        match self {
            TraceEntry::Message(d) => d.tick,
            TraceEntry::Event(e) => e.tick,
        }
    }

    pub fn as_event(&self) -> Option<&ReifiedEvent> {
        match self {
            TraceEntry::Event(e) => Some(e),
            _ => None,
        }
    }
}

/// One JSON object per line.
pub fn trace_to_jsonl(entries: &[TraceEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("trace entries serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceState {
    pub received: u64,
    pub emitted: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub component: Component,
    pub script: Option<String>,
    pub state: InstanceState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Quiesced,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Running => "running",
            Status::Quiesced => "quiesced",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("deployment refused, analysis gate not passed:\n{0}")]
    GateFailed(Box<AnalysisReport>),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("probe {probe} is woven at connector {connector}, which the model lacks")]
    ProbeOutsideModel { probe: String, connector: String },
    #[error("stimulus targets unknown port {0}")]
    UnknownTarget(PortRef),
    #[error("system is {0}; the operation needs it {1}")]
    WrongStatus(Status, Status),
    #[error("{component}: {message}")]
    Eval { component: String, message: String },
    #[error("delivery cap of {0} exceeded; the scenario may not terminate")]
    DeliveryCapExceeded(u64),
    #[error(transparent)]
    Reconfig(#[from] ReconfigError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReconfigError {
    #[error("component {0} already exists")]
    DuplicateComponent(String),
    #[error("no component {0}")]
    UnknownComponent(String),
    #[error("component {component} is still bound by connector {connector}")]
    StillBound { component: String, connector: String },
    #[error("connector {0} already exists")]
    DuplicateConnector(String),
    #[error("no connector {0}")]
    UnknownConnector(String),
    #[error("connector {connector}: no {direction} port {port}")]
    BadEndpoint {
        connector: String,
        port: PortRef,
        direction: Direction,
    },
    #[error("connector {connector} still carries probe {probe}")]
    ProbeAttached { connector: String, probe: String },
    #[error("probe {0} already attached")]
    DuplicateProbe(String),
    #[error("no probe {0}")]
    UnknownProbe(String),
    #[error("component {component} has in-ports but no script named {script}")]
    MissingScript { component: String, script: String },
    #[error("script {script} uses {port}, which component {component} lacks or has the wrong direction")]
    ScriptPort {
        script: String,
        component: String,
        port: String,
    },
}

/// A deployed system. Everything, including the random generator, is
/// serializable so that a session can stop and pick up where it left off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningSystem {
    model: Architecture,
    plan: DebugPlan,
    instances: BTreeMap<String, Instance>,
    bindings: BTreeMap<String, Connector>,
    probes: BTreeMap<String, Probe>,
    scripts: BTreeMap<String, BehaviorScript>,
    queues: BTreeMap<String, VecDeque<Message>>,
    pending: VecDeque<(u64, Stimulus)>,
    clock: u64,
    seed: u64,
    rng: ChaCha8Rng,
    status: Status,
    log: Vec<ReconfigOp>,
    pub delivery_cap: u64,
}

/// The runtime's own account of its structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeView {
    pub components: Vec<Component>,
    pub connectors: Vec<Connector>,
    pub probes: Vec<Probe>,
}

impl RunningSystem {
    /// Deploys `arch` after re-running the analysis gate. The construction
    /// log holds one op per component, connector and probe.
    pub fn instantiate(
        arch: &Architecture,
        config: &DeploymentConfig,
        scripts: impl IntoIterator<Item = BehaviorScript>,
        seed: u64,
    ) -> Result<(RunningSystem, Vec<ReconfigOp>), RuntimeError> {
        let report = analyze(arch)?;
        if !report.gate_passed {
            return Err(RuntimeError::GateFailed(Box::new(report)));
        }
        let arch = &canonicalize(arch).map_err(AnalysisError::from)?;
        for point in &config.points {
            if arch.connector(&point.connector).is_none() {
                return Err(RuntimeError::ProbeOutsideModel {
                    probe: point.probe.id.clone(),
                    connector: point.connector.clone(),
                });
            }
        }
        let mut sys = RunningSystem {
            model: arch.clone(),
            plan: config.plan.clone(),
            instances: BTreeMap::new(),
            bindings: BTreeMap::new(),
            probes: BTreeMap::new(),
            scripts: scripts.into_iter().map(|s| (s.name.clone(), s)).collect(),
            queues: BTreeMap::new(),
            pending: VecDeque::new(),
            clock: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            status: Status::Quiesced,
            log: Vec::new(),
            delivery_cap: DEFAULT_DELIVERY_CAP,
        };
        let ops: Vec<ReconfigOp> = arch
            .components
            .iter()
            .cloned()
            .map(ReconfigOp::AddComponent)
            .chain(arch.connectors.iter().cloned().map(ReconfigOp::AddConnector))
            .chain(config.points.iter().map(|p| ReconfigOp::AttachProbe(p.probe.clone())))
            .collect();
        sys.apply_ops(&ops)?;
        sys.status = Status::Running;
        Ok((sys, ops))
    }

    pub fn model(&self) -> &Architecture {
        &self.model
    }

    pub fn plan(&self) -> &DebugPlan {
        &self.plan
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn instance(&self, name: &str) -> Option<&Instance> {
        self.instances.get(name)
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values()
    }

    pub fn scripts(&self) -> impl Iterator<Item = &BehaviorScript> {
        self.scripts.values()
    }

    /// Every reconfiguration op applied since deployment, construction included.
    pub fn reconfiguration_log(&self) -> &[ReconfigOp] {
        &self.log
    }

    pub fn in_flight(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    pub fn pending_stimuli(&self) -> usize {
        self.pending.len()
    }

    pub fn view(&self) -> RuntimeView {
        RuntimeView {
            components: self.instances.values().map(|i| i.component.clone()).collect(),
            connectors: self.bindings.values().cloned().collect(),
            probes: self.probes.values().cloned().collect(),
        }
    }

    /// True when the runtime's components and bindings are exactly the
    /// model's components and connectors.
    pub fn mirrors(&self, arch: &Architecture) -> bool {
        let mut comps: Vec<&Component> = arch.components.iter().collect();
        comps.sort_by(|a, b| a.name.cmp(&b.name));
        let mut conns: Vec<&Connector> = arch.connectors.iter().collect();
        conns.sort_by(|a, b| a.id.cmp(&b.id));
        comps.len() == self.instances.len()
            && conns.len() == self.bindings.len()
            && comps.iter().zip(self.instances.values()).all(|(c, i)| **c == i.component)
            && conns.iter().zip(self.bindings.values()).all(|(c, b)| *c == b)
    }

    pub(crate) fn set_deployment(&mut self, model: Architecture, plan: DebugPlan) {
        self.model = model;
        self.plan = plan;
    }

    pub(crate) fn register_scripts(&mut self, scripts: impl IntoIterator<Item = BehaviorScript>) {
        for s in scripts {
            self.scripts.insert(s.name.clone(), s);
        }
    }

    /// Applies ops to the runtime view, all or nothing. The system must be
    /// quiesced.
    pub fn apply_ops(&mut self, ops: &[ReconfigOp]) -> Result<(), RuntimeError> {
        if self.status != Status::Quiesced {
            return Err(RuntimeError::WrongStatus(self.status, Status::Quiesced));
        }
        let mut next = self.clone();
        for op in ops {
            next.apply_op(op)?;
        }
        next.log.extend(ops.iter().cloned());
        *self = next;
        Ok(())
    }

    fn apply_op(&mut self, op: &ReconfigOp) -> Result<(), ReconfigError> {
        match op {
            ReconfigOp::AddComponent(c) => {
                if self.instances.contains_key(&c.name) {
                    return Err(ReconfigError::DuplicateComponent(c.name.clone()));
                }
                let script = self.script_for(c)?;
                self.instances.insert(
                    c.name.clone(),
                    Instance {
                        component: c.clone(),
                        script,
                        state: InstanceState::default(),
                    },
                );
            }
            ReconfigOp::RemoveComponent(name) => {
                if !self.instances.contains_key(name) {
                    return Err(ReconfigError::UnknownComponent(name.clone()));
                }
                if let Some(k) = self
                    .bindings
                    .values()
                    .find(|k| k.source.component == *name || k.target.component == *name)
                {
                    return Err(ReconfigError::StillBound {
                        component: name.clone(),
                        connector: k.id.clone(),
                    });
                }
                self.instances.remove(name);
            }
            ReconfigOp::AddConnector(k) => {
                if self.bindings.contains_key(&k.id) {
                    return Err(ReconfigError::DuplicateConnector(k.id.clone()));
                }
                for (end, direction) in [(&k.source, Direction::Out), (&k.target, Direction::In)] {
                    let ok = self
                        .instances
                        .get(&end.component)
                        .and_then(|i| i.component.port(&end.port))
                        .is_some_and(|p| p.direction == direction);
                    if !ok {
                        return Err(ReconfigError::BadEndpoint {
                            connector: k.id.clone(),
                            port: end.clone(),
                            direction,
                        });
                    }
                }
                self.bindings.insert(k.id.clone(), k.clone());
            }
            ReconfigOp::RemoveConnector(id) => {
                if !self.bindings.contains_key(id) {
                    return Err(ReconfigError::UnknownConnector(id.clone()));
                }
                if let Some(p) = self.probes.values().find(|p| p.connector == *id) {
                    return Err(ReconfigError::ProbeAttached {
                        connector: id.clone(),
                        probe: p.id.clone(),
                    });
                }
                self.bindings.remove(id);
                self.queues.remove(id);
            }
            ReconfigOp::AttachProbe(p) => {
                if self.probes.contains_key(&p.id) {
                    return Err(ReconfigError::DuplicateProbe(p.id.clone()));
                }
                if !self.bindings.contains_key(&p.connector) {
                    return Err(ReconfigError::UnknownConnector(p.connector.clone()));
                }
                self.probes.insert(p.id.clone(), p.clone());
            }
            ReconfigOp::DetachProbe(id) => {
                if self.probes.remove(id).is_none() {
                    return Err(ReconfigError::UnknownProbe(id.clone()));
                }
            }
        }
        Ok(())
    }

    /// Resolves and checks the script for a component about to be added.
    fn script_for(&self, c: &Component) -> Result<Option<String>, ReconfigError> {
        let name = c.script.clone().unwrap_or_else(|| c.name.clone());
        let Some(script) = self.scripts.get(&name) else {
            if c.in_ports().next().is_some() {
                return Err(ReconfigError::MissingScript {
                    component: c.name.clone(),
                    script: name,
                });
            }
            return Ok(None);
        };
        let uses = script
            .rules
            .iter()
            .map(|r| (&r.on, Direction::In))
            .chain(script.rules.iter().flat_map(|r| r.emits.iter().map(|e| (&e.port, Direction::Out))))
            .chain(script.sources.iter().map(|s| (&s.port, Direction::Out)));
        for (port, direction) in uses {
            if !c.port(port).is_some_and(|p| p.direction == direction) {
                return Err(ReconfigError::ScriptPort {
                    script: name,
                    component: c.name.clone(),
                    port: port.clone(),
                });
            }
        }
        Ok(Some(name))
    }

    /// Queues a scenario's stimuli relative to the current clock.
    pub fn load_scenario(&mut self, scenario: &Scenario) -> Result<(), RuntimeError> {
        for st in &scenario.stimuli {
            let known = self
                .instances
                .get(&st.target.component)
                .is_some_and(|i| i.component.port(&st.target.port).is_some());
            if !known {
                return Err(RuntimeError::UnknownTarget(st.target.clone()));
            }
        }
        let base = self.clock;
        let mut merged: Vec<(u64, Stimulus)> = self.pending.drain(..).collect();
        merged.extend(scenario.stimuli.iter().map(|st| (base + st.at, st.clone())));
        merged.sort_by_key(|(t, _)| *t);
        self.pending = merged.into();
        Ok(())
    }

    fn next_delivery(&self) -> Option<(u64, &str)> {
        self.queues
            .iter()
            .filter_map(|(id, q)| q.front().map(|m| (m.deliver_at, id.as_str())))
            .min()
    }

    /// Processes one stimulus or delivery. `None` once nothing is left.
    pub fn step(&mut self) -> Result<Option<Vec<TraceEntry>>, RuntimeError> {
        if self.status != Status::Running {
            return Err(RuntimeError::WrongStatus(self.status, Status::Running));
        }
        let stim_at = self.pending.front().map(|(t, _)| *t);
        let msg = self.next_delivery().map(|(t, id)| (t, id.to_string()));
        match (stim_at, msg) {
            (None, None) => Ok(None),
            (Some(ts), m) if m.as_ref().is_none_or(|(td, _)| ts <= *td) => {
                let (tick, st) = self.pending.pop_front().expect("front exists");
                self.clock = self.clock.max(tick);
                self.inject(st)?;
                Ok(Some(Vec::new()))
            }
            (_, Some((_, id))) => self.deliver(&id).map(Some),
            (Some(_), None) => unreachable!("guard covers a lone stimulus"),
        }
    }

    /// Runs until no stimulus or message remains.
    pub fn run_to_completion(&mut self) -> Result<Vec<TraceEntry>, RuntimeError> {
        let mut out = Vec::new();
        let mut steps = 0u64;
        while let Some(entries) = self.step()? {
            out.extend(entries);
            steps += 1;
            if steps > self.delivery_cap {
                return Err(RuntimeError::DeliveryCapExceeded(self.delivery_cap));
            }
        }
        Ok(out)
    }

    pub fn run_scenario(&mut self, scenario: &Scenario) -> Result<Vec<TraceEntry>, RuntimeError> {
        self.load_scenario(scenario)?;
        self.run_to_completion()
    }

    /// Stops taking stimuli and drains every in-flight message. Pending
    /// stimuli stay queued until `resume`.
    pub fn quiesce(&mut self) -> Result<Vec<TraceEntry>, RuntimeError> {
        if self.status != Status::Running {
            return Err(RuntimeError::WrongStatus(self.status, Status::Running));
        }
        let mut out = Vec::new();
        let mut steps = 0u64;
        while let Some((_, id)) = self.next_delivery() {
            let id = id.to_string();
            out.extend(self.deliver(&id)?);
            steps += 1;
            if steps > self.delivery_cap {
                return Err(RuntimeError::DeliveryCapExceeded(self.delivery_cap));
            }
        }
        self.status = Status::Quiesced;
        Ok(out)
    }

    pub fn resume(&mut self) -> Result<(), RuntimeError> {
        if self.status != Status::Quiesced {
            return Err(RuntimeError::WrongStatus(self.status, Status::Quiesced));
        }
        self.status = Status::Running;
        Ok(())
    }

    fn inject(&mut self, st: Stimulus) -> Result<(), RuntimeError> {
        let inst = &self.instances[&st.target.component];
        let port = inst.component.port(&st.target.port).expect("validated on load");
        let name = inst.component.name.clone();
        match port.direction {
            Direction::Out => {
                let attrs = match inst.script.as_ref().and_then(|s| self.scripts[s].source(&st.target.port)) {
                    Some(src) => script::assign(&st.attrs, &src.assigns, &mut self.rng).map_err(|e| RuntimeError::Eval {
                        component: name.clone(),
                        message: e.0,
                    })?,
                    None => st.attrs,
                };
                let origin = self.clock;
                self.send(&name, &st.target.port, attrs, origin)
            }
            Direction::In => {
                let origin = self.clock;
                self.react(&name, &st.target.port, &st.attrs, origin)
            }
        }
    }

    fn deliver(&mut self, connector: &str) -> Result<Vec<TraceEntry>, RuntimeError> {
        let msg = self
            .queues
            .get_mut(connector)
            .and_then(VecDeque::pop_front)
            .expect("delivery from a non-empty queue");
        self.clock = self.clock.max(msg.deliver_at);
        let tick = self.clock;
        let target = self.bindings[connector].target.clone();
        let mut out = vec![TraceEntry::Message(Delivery {
            tick,
            connector: connector.to_string(),
            target: target.clone(),
            sent_at: msg.sent_at,
            origin: msg.origin,
            attrs: msg.attrs.clone(),
        })];
        if let Some(probe) = self.probes.values().find(|p| p.connector == connector) {
            let mut captured = BTreeMap::new();
            for v in &probe.captures {
                let value = match v {
                    Variable::Size => msg.attrs.get("size").filter(|x| matches!(x, Value::Int(_))).cloned(),
                    Variable::Type => msg.attrs.get("type").filter(|x| matches!(x, Value::Text(_))).cloned(),
                    Variable::Latency => i64::try_from(tick - msg.origin).ok().map(Value::Int),
                };
                if let Some(value) = value {
                    captured.insert(*v, value);
                }
            }
            out.push(TraceEntry::Event(ReifiedEvent {
                tick,
                probe: probe.id.clone(),
                connector: connector.to_string(),
                captured,
            }));
        }
        self.react(&target.component, &target.port, &msg.attrs, msg.origin)?;
        Ok(out)
    }

    fn react(&mut self, component: &str, port: &str, attrs: &Attrs, origin: u64) -> Result<(), RuntimeError> {
        let inst = self.instances.get_mut(component).expect("bound instance exists");
        inst.state.received += 1;
        let Some(script) = inst.script.as_ref().map(|s| &self.scripts[s]) else {
            return Ok(());
        };
        let eval_err = |e: script::EvalError| RuntimeError::Eval {
            component: component.to_string(),
            message: e.0,
        };
        let mut outgoing = Vec::new();
        for rule in script.rules_on(port) {
            let mut fire = true;
            for c in &rule.guard {
                if !c.holds(attrs, &mut self.rng).map_err(eval_err)? {
                    fire = false;
                    break;
                }
            }
            if !fire {
                continue;
            }
            for emit in &rule.emits {
                outgoing.push((emit.port.clone(), script::assign(attrs, &emit.assigns, &mut self.rng).map_err(eval_err)?));
            }
        }
        for (port, attrs) in outgoing {
            self.send(component, &port, attrs, origin)?;
        }
        Ok(())
    }

    fn send(&mut self, component: &str, port: &str, mut attrs: Attrs, origin: u64) -> Result<(), RuntimeError> {
        let delay = match attrs.remove("delay") {
            None => 1,
            Some(Value::Int(d)) => d.max(1) as u64,
            Some(other) => {
                return Err(RuntimeError::Eval {
                    component: component.to_string(),
                    message: format!("delay must be a number, got {other}"),
                })
            }
        };
        let from = PortRef::new(component, port);
        let ids: Vec<String> = self
            .bindings
            .values()
            .filter(|k| k.source == from)
            .map(|k| k.id.clone())
            .collect();
        let now = self.clock;
        for id in &ids {
            let q = self.queues.entry(id.clone()).or_default();
            let fifo_floor = q.back().map_or(0, |m| m.deliver_at);
            q.push_back(Message {
                connector: id.clone(),
                sent_at: now,
                deliver_at: (now + delay).max(fifo_floor),
                origin,
                attrs: attrs.clone(),
            });
        }
        self.instances.get_mut(component).expect("sender exists").state.emitted += ids.len() as u64;
        Ok(())
    }
}
