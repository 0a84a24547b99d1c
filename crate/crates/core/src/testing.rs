//! Random model generators for property tests and benchmarks.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::model::{
    ActionKind, Architecture, BehavioralContract, Component, Connector, Contract, DataConstraints, DataFacts,
    DataflowContract, Direction, Extent, Port, PortRef, ProcessTerm, QosContract, SizeInterval, StructuralContract,
    StructuralRule, TypeSet,
};
use crate::runtime::script::{parse_scripts, BehaviorScript};

const TYPES: &[&str] = &["txt", "jpg", "png", "pdf", "dicom"];

fn type_set<R: Rng>(rng: &mut R, from: &[&str]) -> BTreeSet<String> {
    let n = rng.random_range(1..=from.len());
    let mut pool: Vec<&str> = from.to_vec();
    let mut out = BTreeSet::new();
    for _ in 0..n {
        let at = rng.random_range(0..pool.len());
        out.insert(pool.swap_remove(at).to_string());
    }
    out
}

fn random_component<R: Rng>(rng: &mut R, name: String) -> Component {
    let mut c = Component::new(name);
    for i in 0..rng.random_range(0..=3) {
        c.ports.push(Port::new(format!("in{i}"), Direction::In, *["D", "E"].choose(rng).unwrap()));
    }
    for i in 0..rng.random_range(0..=3) {
        c.ports.push(Port::new(format!("out{i}"), Direction::Out, *["D", "E"].choose(rng).unwrap()));
    }
    if rng.random_bool(0.2) {
        c.script = Some(format!("s{}", rng.random_range(0..3)));
    }
    c
}

fn ports_of(arch: &Architecture, direction: Direction) -> Vec<PortRef> {
    arch.components
        .iter()
        .flat_map(|c| {
            c.ports
                .iter()
                .filter(move |p| p.direction == direction)
                .map(move |p| PortRef::new(&c.name, &p.name))
        })
        .collect()
}

fn add_random_connector<R: Rng>(rng: &mut R, arch: &mut Architecture, id: String) {
    let outs = ports_of(arch, Direction::Out);
    let ins = ports_of(arch, Direction::In);
    if let (Some(s), Some(t)) = (outs.choose(rng), ins.choose(rng)) {
        arch.connectors.push(Connector::new(id, s.clone(), t.clone()));
    }
}

/// A well-formed architecture with up to `max_components` components and
/// optionally random contracts of every kind.
pub fn random_architecture<R: Rng>(rng: &mut R, max_components: usize, with_contracts: bool) -> Architecture {
    let mut arch = Architecture::new("R");
    let n = rng.random_range(0..=max_components);
    for i in 0..n {
        arch.components.push(random_component(rng, format!("C{i}")));
    }
    let k = rng.random_range(0..=n * 2);
    for i in 0..k {
        add_random_connector(rng, &mut arch, format!("k{i}"));
    }
    if with_contracts {
        add_random_contracts(rng, &mut arch);
    }
    arch
}

fn random_term<R: Rng>(rng: &mut R, actions: &[(String, ActionKind)], budget: usize) -> ProcessTerm {
    if actions.is_empty() || budget == 0 {
        return ProcessTerm::Skip;
    }
    let leaf = |rng: &mut R| {
        let (port, kind) = actions.choose(rng).unwrap().clone();
        ProcessTerm::Action { port, kind }
    };
    if budget == 1 {
        return if rng.random_bool(0.15) { ProcessTerm::star(leaf(rng)) } else { leaf(rng) };
    }
    match rng.random_range(0..4) {
        0 => ProcessTerm::star(random_term(rng, actions, budget - 1)),
        1 => {
            let left = rng.random_range(1..budget);
            ProcessTerm::choice(random_term(rng, actions, left), random_term(rng, actions, budget - left))
        }
        _ => {
            let left = rng.random_range(1..budget);
            ProcessTerm::seq(random_term(rng, actions, left), random_term(rng, actions, budget - left))
        }
    }
}

fn add_random_contracts<R: Rng>(rng: &mut R, arch: &mut Architecture) {
    let names: Vec<String> = arch.components.iter().map(|c| c.name.clone()).collect();
    for c in arch.components.clone() {
        for p in &c.ports {
            let at = PortRef::new(&c.name, &p.name);
            if p.direction == Direction::In && rng.random_bool(0.2) && !names.is_empty() {
                let clients: BTreeSet<String> = (0..rng.random_range(1..=2)).map(|_| names.choose(rng).unwrap().clone()).collect();
                let mut rules = vec![StructuralRule::OnlyClients { clients }];
                if rng.random_bool(0.3) {
                    rules.push(StructuralRule::MustBeBound);
                }
                arch.contracts.push(Contract::Structural(StructuralContract { subject: at.clone(), rules }));
            }
            if rng.random_bool(0.3) {
                let contract = if p.direction == Direction::Out {
                    let lo = rng.random_range(0..100);
                    let hi = if rng.random_bool(0.2) {
                        Extent::Unknown
                    } else {
                        Extent::Finite(lo + rng.random_range(0..100))
                    };
                    DataflowContract {
                        port: at.clone(),
                        produced: Some(DataFacts {
                            size: SizeInterval { lo, hi },
                            types: if rng.random_bool(0.2) {
                                TypeSet::Unknown
                            } else {
                                TypeSet::Only(type_set(rng, TYPES))
                            },
                        }),
                        constraints: None,
                    }
                } else {
                    DataflowContract {
                        port: at.clone(),
                        produced: None,
                        constraints: Some(DataConstraints {
                            max_size: rng.random_bool(0.7).then(|| rng.random_range(0..200)),
                            allowed_types: Some(type_set(rng, TYPES)),
                        }),
                    }
                };
                arch.contracts.push(Contract::Dataflow(contract));
            }
            if rng.random_bool(0.2) {
                let (offered, required) = match p.direction {
                    Direction::Out => (
                        Some(if rng.random_bool(0.2) {
                            Extent::Unknown
                        } else {
                            Extent::Finite(rng.random_range(0..50))
                        }),
                        None,
                    ),
                    Direction::In => (None, Some(rng.random_range(0..200))),
                };
                arch.contracts.push(Contract::Qos(QosContract {
                    port: at,
                    offered_latency: offered,
                    required_max_latency: required,
                }));
            }
        }
        if rng.random_bool(0.3) {
            let actions: Vec<(String, ActionKind)> = c
                .ports
                .iter()
                .map(|p| {
                    let kind = match p.direction {
                        Direction::Out => ActionKind::Send,
                        Direction::In => ActionKind::Receive,
                    };
                    (p.name.clone(), kind)
                })
                .collect();
            let budget = rng.random_range(0..=4);
            arch.contracts.push(Contract::Behavioral(BehavioralContract {
                component: c.name.clone(),
                protocol: random_term(rng, &actions, budget),
            }));
        }
    }
}

/// Applies a handful of random edits, keeping the model well-formed.
/// Contracts are dropped along with anything they mention.
pub fn mutate<R: Rng>(rng: &mut R, arch: &Architecture, max_components: usize) -> Architecture {
    let mut out = arch.clone();
    out.contracts.clear();
    let mut fresh = 0usize;
    for _ in 0..rng.random_range(0..=4) {
        match rng.random_range(0..6) {
            0 if out.components.len() < max_components => {
                let name = format!("N{fresh}");
                fresh += 1;
                out.components.push(random_component(rng, name));
            }
            1 if !out.components.is_empty() => {
                let at = rng.random_range(0..out.components.len());
                let gone = out.components.remove(at).name;
                out.connectors.retain(|k| k.source.component != gone && k.target.component != gone);
            }
            2 if !out.components.is_empty() => {
                // Change a component without touching the ports its connectors use.
                let at = rng.random_range(0..out.components.len());
                let c = &mut out.components[at];
                if rng.random_bool(0.5) {
                    c.ports.push(Port::new(format!("x{fresh}"), Direction::Out, "D"));
                    fresh += 1;
                } else {
                    c.script = Some(format!("edited{fresh}"));
                    fresh += 1;
                }
            }
            3 => {
                add_random_connector(rng, &mut out, format!("n{fresh}"));
                fresh += 1;
            }
            4 if !out.connectors.is_empty() => {
                let at = rng.random_range(0..out.connectors.len());
                out.connectors.remove(at);
            }
            5 if !out.connectors.is_empty() => {
                // Rewire an existing id.
                let ins = ports_of(&out, Direction::In);
                let at = rng.random_range(0..out.connectors.len());
                if let Some(t) = ins.choose(rng) {
                    out.connectors[at].target = t.clone();
                }
            }
            _ => {}
        }
    }
    out
}

/// A random closed system of 2..=4 components whose protocols use at most
/// `max_actions` actions each; every port is bound by exactly one connector.
pub fn random_protocol_system<R: Rng>(rng: &mut R, max_actions: usize) -> Architecture {
    let n = rng.random_range(2..=4);
    let mut arch = Architecture::new("P");
    for i in 0..n {
        arch.components.push(Component::new(format!("P{i}")));
    }
    for k in 0..rng.random_range(1..=n + 1) {
        let s = rng.random_range(0..n);
        let mut t = rng.random_range(0..n - 1);
        if t >= s {
            t += 1;
        }
        arch.components[s].ports.push(Port::new(format!("o{k}"), Direction::Out, "D"));
        arch.components[t].ports.push(Port::new(format!("i{k}"), Direction::In, "D"));
        arch.connectors.push(Connector::new(
            format!("k{k}"),
            PortRef::new(format!("P{s}"), format!("o{k}")),
            PortRef::new(format!("P{t}"), format!("i{k}")),
        ));
    }
    for c in arch.components.clone() {
        let actions: Vec<(String, ActionKind)> = c
            .ports
            .iter()
            .map(|p| {
                let kind = if p.direction == Direction::Out { ActionKind::Send } else { ActionKind::Receive };
                (p.name.clone(), kind)
            })
            .collect();
        if actions.is_empty() {
            continue;
        }
        let budget = rng.random_range(1..=max_actions);
        arch.contracts.push(Contract::Behavioral(BehavioralContract {
            component: c.name.clone(),
            protocol: random_term(rng, &actions, budget),
        }));
    }
    arch
}

/// Producer facts and consumer constraints over a small discrete domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataflowCase {
    pub lo: u64,
    pub hi: u64,
    pub types: BTreeSet<String>,
    pub max_size: Option<u64>,
    pub allowed: Option<BTreeSet<String>>,
}

impl DataflowCase {
    /// Producer, an optional pass-through stage, consumer.
    pub fn architecture(&self, relay: bool) -> Architecture {
        let mut arch = Architecture::new("F");
        arch.components.push(Component::new("Src").with_port(Port::new("o", Direction::Out, "D")));
        arch.components.push(Component::new("Dst").with_port(Port::new("i", Direction::In, "D")));
        if relay {
            arch.components.push(
                Component::new("Mid")
                    .with_port(Port::new("i", Direction::In, "D"))
                    .with_port(Port::new("o", Direction::Out, "D")),
            );
            arch.connectors.push(Connector::new("a", PortRef::new("Src", "o"), PortRef::new("Mid", "i")));
            arch.connectors.push(Connector::new("k", PortRef::new("Mid", "o"), PortRef::new("Dst", "i")));
        } else {
            arch.connectors.push(Connector::new("k", PortRef::new("Src", "o"), PortRef::new("Dst", "i")));
        }
        arch.contracts.push(Contract::Dataflow(DataflowContract {
            port: PortRef::new("Src", "o"),
            produced: Some(DataFacts {
                size: SizeInterval::new(self.lo, self.hi),
                types: TypeSet::Only(self.types.clone()),
            }),
            constraints: None,
        }));
        arch.contracts.push(Contract::Dataflow(DataflowContract {
            port: PortRef::new("Dst", "i"),
            produced: None,
            constraints: Some(DataConstraints {
                max_size: self.max_size,
                allowed_types: self.allowed.clone(),
            }),
        }));
        arch
    }
}

/// Sizes in `1..=20`, at most three type tokens.
pub fn random_dataflow_case<R: Rng>(rng: &mut R) -> DataflowCase {
    let tokens = &TYPES[..3];
    let lo = rng.random_range(1..=20);
    let hi = rng.random_range(lo..=20);
    DataflowCase {
        lo,
        hi,
        types: type_set(rng, tokens),
        max_size: rng.random_bool(0.85).then(|| rng.random_range(1..=20)),
        allowed: rng.random_bool(0.85).then(|| type_set(rng, tokens)),
    }
}

/// A linear pipeline `S0 -> S1 -> ... -> S{n-1}` with contracts of every kind.
pub fn pipeline(n: usize) -> Architecture {
    assert!(n >= 2);
    let mut arch = Architecture::new("Pipeline");
    for i in 0..n {
        let mut c = Component::new(format!("S{i:04}"));
        if i > 0 {
            c.ports.push(Port::new("i", Direction::In, "D"));
            c.script = Some(if i + 1 < n { "Stage" } else { "Sink" }.into());
        }
        if i + 1 < n {
            c.ports.push(Port::new("o", Direction::Out, "D"));
        }
        arch.components.push(c);
    }
    for i in 0..n - 1 {
        arch.connectors.push(Connector::new(
            format!("c{i:04}"),
            PortRef::new(format!("S{i:04}"), "o"),
            PortRef::new(format!("S{:04}", i + 1), "i"),
        ));
        arch.contracts.push(Contract::Qos(QosContract {
            port: PortRef::new(format!("S{i:04}"), "o"),
            offered_latency: Some(Extent::Finite(1)),
            required_max_latency: None,
        }));
        if i % 10 == 0 {
            arch.contracts.push(Contract::Structural(StructuralContract {
                subject: PortRef::new(format!("S{:04}", i + 1), "i"),
                rules: vec![
                    StructuralRule::OnlyClients {
                        clients: [format!("S{i:04}")].into(),
                    },
                    StructuralRule::MustBeBound,
                ],
            }));
        }
    }
    let last = PortRef::new(format!("S{:04}", n - 1), "i");
    arch.contracts.push(Contract::Dataflow(DataflowContract {
        port: PortRef::new("S0000", "o"),
        produced: Some(DataFacts {
            size: SizeInterval::new(0, 1_000),
            types: TypeSet::of(["txt"]),
        }),
        constraints: None,
    }));
    arch.contracts.push(Contract::Dataflow(DataflowContract {
        port: last.clone(),
        produced: None,
        constraints: Some(DataConstraints {
            max_size: Some(1_000_000),
            allowed_types: Some(["txt".to_string()].into()),
        }),
    }));
    arch.contracts.push(Contract::Qos(QosContract {
        port: last,
        offered_latency: None,
        required_max_latency: Some(2 * n as u64),
    }));
    arch.contracts.push(Contract::Behavioral(BehavioralContract {
        component: "S0000".into(),
        protocol: ProcessTerm::star(ProcessTerm::send("o")),
    }));
    arch.contracts.push(Contract::Behavioral(BehavioralContract {
        component: "S0001".into(),
        protocol: ProcessTerm::star(ProcessTerm::seq(ProcessTerm::receive("i"), ProcessTerm::send("o"))),
    }));
    arch
}

/// Scripts for [`pipeline`]: stages forward, the last one absorbs.
pub fn pipeline_scripts() -> Vec<BehaviorScript> {
    parse_scripts("script Stage { on i emit o } script Sink { on i }").expect("static scripts parse")
}
