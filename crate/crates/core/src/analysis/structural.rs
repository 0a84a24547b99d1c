use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{require_well_formed, AnalysisError, AnalysisKind, Verdict};
use crate::model::{Architecture, Contract, PortRef, StructuralRule};

/// Access restrictions, binding cardinality and data-type agreement.
pub fn check_structural(arch: &Architecture) -> Result<Vec<Verdict>, AnalysisError> {
    require_well_formed(arch)?;

    let mut restrictions: HashMap<&PortRef, Vec<&BTreeSet<String>>> = HashMap::new();
    let mut must_bind: BTreeSet<&PortRef> = BTreeSet::new();
    for contract in &arch.contracts {
        if let Contract::Structural(s) = contract {
            for rule in &s.rules {
                match rule {
                    StructuralRule::OnlyClients { clients } => restrictions.entry(&s.subject).or_default().push(clients),
                    StructuralRule::MustBeBound => {
                        must_bind.insert(&s.subject);
                    }
                }
            }
        }
    }

    let ports: HashMap<PortRef, &str> = arch
        .components
        .iter()
        .flat_map(|c| c.ports.iter().map(move |p| (PortRef::new(&c.name, &p.name), p.data_type.as_str())))
        .collect();

    // One verdict per analyzed connector; problems are merged into one reason.
    let mut per_connector: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut bound: BTreeSet<&PortRef> = BTreeSet::new();
    for k in &arch.connectors {
        bound.insert(&k.source);
        bound.insert(&k.target);
        let mut problems = None;
        if let Some(lists) = restrictions.get(&k.target) {
            let problems = problems.get_or_insert_with(Vec::new);
            if lists.iter().any(|allowed| !allowed.contains(&k.source.component)) {
                problems.push(format!(
                    "caller not permitted: {} may not use {}",
                    k.source.component, k.target
                ));
            }
        }
        let (st, tt) = (ports[&k.source], ports[&k.target]);
        if st != tt {
            problems
                .get_or_insert_with(Vec::new)
                .push(format!("data type mismatch: {} carries {st}, {} expects {tt}", k.source, k.target));
        }
        if let Some(p) = problems {
            per_connector.insert(&k.id, p);
        }
    }

    let mut verdicts: Vec<Verdict> = per_connector
        .into_iter()
        .map(|(id, problems)| {
            if problems.is_empty() {
                Verdict::compatible(AnalysisKind::Structural, id)
            } else {
                Verdict::incompatible(AnalysisKind::Structural, id, problems.join("; "))
            }
        })
        .collect();

    for port in must_bind {
        let subject = format!("{port}:must_be_bound");
        verdicts.push(if bound.contains(port) {
            Verdict::compatible(AnalysisKind::Structural, subject)
        } else {
            Verdict::incompatible(AnalysisKind::Structural, subject, format!("{port} must be bound but has no connector"))
        });
    }
    Ok(verdicts)
}
