//! Constant-propagation style analysis over message facts (one size interval
//! and one type set per port).

use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{require_well_formed, AnalysisError, AnalysisKind, ResidualPredicate, Test, Variable, Verdict};
use crate::model::{Architecture, DataConstraints, DataFacts, PortRef, TypeSet};

/// Facts on every out-port after propagation to a fixpoint. `None` means no
/// message ever leaves the port.
///
/// A declared `produces` fixes a port's facts. Otherwise an out-port carries
/// the join of everything arriving at its component, or top when nothing
/// arrives.
pub fn propagate_facts(arch: &Architecture) -> HashMap<PortRef, Option<DataFacts>> {
    let declared: HashMap<&PortRef, &DataFacts> = arch
        .contracts
        .iter()
        .filter_map(|c| match c {
            crate::model::Contract::Dataflow(d) => d.produced.as_ref().map(|f| (&d.port, f)),
            _ => None,
        })
        .collect();

    let mut incoming: HashMap<&str, Vec<&PortRef>> = HashMap::new();
    let mut consumers: HashMap<&PortRef, Vec<&str>> = HashMap::new();
    for k in &arch.connectors {
        incoming.entry(&k.target.component).or_default().push(&k.source);
        consumers.entry(&k.source).or_default().push(&k.target.component);
    }

    let mut facts: HashMap<PortRef, Option<DataFacts>> = HashMap::new();
    for c in &arch.components {
        let fed = incoming.contains_key(c.name.as_str());
        for p in c.out_ports() {
            let r = PortRef::new(&c.name, &p.name);
            let initial = match declared.get(&r) {
                Some(f) => Some((*f).clone()),
                None if fed => None,
                None => Some(DataFacts::top()),
            };
            facts.insert(r, initial);
        }
    }

    let mut queue: VecDeque<&str> = arch
        .components
        .iter()
        .filter(|c| incoming.contains_key(c.name.as_str()))
        .map(|c| c.name.as_str())
        .collect();
    let mut queued: BTreeSet<&str> = queue.iter().copied().collect();

    while let Some(name) = queue.pop_front() {
        queued.remove(name);
        let mut joined: Option<DataFacts> = None;
        for src in &incoming[name] {
            if let Some(f) = &facts[*src] {
                joined = Some(match joined {
                    Some(j) => j.join(f),
                    None => f.clone(),
                });
            }
        }
        let Some(component) = arch.component(name) else { continue };
        for p in component.out_ports() {
            let r = PortRef::new(name, &p.name);
            if declared.contains_key(&r) || facts[&r] == joined {
                continue;
            }
            facts.insert(r.clone(), joined.clone());
            for &next in consumers.get(&r).map(Vec::as_slice).unwrap_or(&[]) {
                if queued.insert(next) {
                    queue.push_back(next);
                }
            }
        }
    }
    facts
}

/// Classifies facts against constraints for the messages crossing `connector`.
pub fn compare_facts(connector: &str, facts: Option<&DataFacts>, constraints: &DataConstraints) -> Verdict {
    let Some(facts) = facts else {
        // Nothing ever crosses the connector.
        return Verdict::compatible(AnalysisKind::Dataflow, connector);
    };
    let mut residuals = Vec::new();
    let mut violations = Vec::new();

    if let Some(max) = constraints.max_size {
        if facts.size.lo > max {
            violations.push(format!("every message is larger than {max} bytes"));
        } else if facts.size.hi.finite().is_none_or(|hi| hi > max) {
            residuals.push(ResidualPredicate {
                connector: connector.to_string(),
                variable: Variable::Size,
                test: Test::LessOrEqual(max),
            });
        }
    }
    if let Some(allowed) = &constraints.allowed_types {
        match &facts.types {
            TypeSet::Only(types) if types.is_subset(allowed) => {}
            TypeSet::Only(types) if types.is_disjoint(allowed) => {
                violations.push(format!(
                    "no produced type ({}) is accepted",
                    types.iter().cloned().collect::<Vec<_>>().join(", ")
                ));
            }
            _ => residuals.push(ResidualPredicate {
                connector: connector.to_string(),
                variable: Variable::Type,
                test: Test::MemberOf(allowed.clone()),
            }),
        }
    }

    if !violations.is_empty() {
        Verdict::incompatible(AnalysisKind::Dataflow, connector, violations.join("; "))
    } else if !residuals.is_empty() {
        Verdict::partial(AnalysisKind::Dataflow, connector, residuals)
    } else {
        Verdict::compatible(AnalysisKind::Dataflow, connector)
    }
}

/// One verdict per connector whose target port declares constraints.
pub fn check_dataflow(arch: &Architecture) -> Result<Vec<Verdict>, AnalysisError> {
    require_well_formed(arch)?;
    let constraints: HashMap<&PortRef, &DataConstraints> = arch
        .contracts
        .iter()
        .filter_map(|c| match c {
            crate::model::Contract::Dataflow(d) => d.constraints.as_ref().map(|k| (&d.port, k)),
            _ => None,
        })
        .collect();
    if constraints.is_empty() {
        return Ok(Vec::new());
    }
    let facts = propagate_facts(arch);
    Ok(arch
        .connectors
        .iter()
        .filter_map(|k| {
            constraints
                .get(&k.target)
                .map(|c| compare_facts(&k.id, facts[&k.source].as_ref(), c))
        })
        .collect())
}
