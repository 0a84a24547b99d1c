use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet, VecDeque};

use super::lts::compile_protocol;
use super::{require_well_formed, AnalysisError, AnalysisKind, AnalysisOptions, Lts, Verdict};
use crate::model::{ActionKind, Architecture, Contract};

/// Subject used for the single behavioral verdict of an architecture.
pub const BEHAVIOR_SUBJECT: &str = "protocols";

/// Compiles every behavioral contract, in component-name order.
pub fn component_protocols(arch: &Architecture) -> Result<Vec<(String, Lts)>, AnalysisError> {
    let mut out = Vec::new();
    for contract in &arch.contracts {
        if let Contract::Behavioral(b) = contract {
            let component = arch
                .component(&b.component)
                .ok_or_else(|| AnalysisError::UnknownComponent(b.component.clone()))?;
            out.push((b.component.clone(), compile_protocol(&b.protocol, component, arch)?));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Connectors whose send and receive must happen as one product step: both
/// endpoints have protocols that mention the connector, on distinct components.
pub fn synchronized_connectors(arch: &Architecture, protocols: &[(String, Lts)]) -> HashSet<String> {
    let by_name: HashMap<&str, &Lts> = protocols.iter().map(|(n, l)| (n.as_str(), l)).collect();
    let mentions = |comp: &str, id: &str, kind: ActionKind| {
        by_name
            .get(comp)
            .is_some_and(|l| l.transitions.iter().any(|(_, lab, _)| lab.connector == id && lab.kind == kind))
    };
    arch.connectors
        .iter()
        .filter(|k| {
            k.source.component != k.target.component
                && mentions(&k.source.component, &k.id, ActionKind::Send)
                && mentions(&k.target.component, &k.id, ActionKind::Receive)
        })
        .map(|k| k.id.clone())
        .collect()
}

pub fn check_behavioral(arch: &Architecture) -> Result<Verdict, AnalysisError> {
    check_behavioral_with(arch, AnalysisOptions::default())
}

/// Deadlock freedom of the synchronized product of all protocols. Components
/// without a protocol do not constrain the product.
pub fn check_behavioral_with(arch: &Architecture, options: AnalysisOptions) -> Result<Verdict, AnalysisError> {
    require_well_formed(arch)?;
    let protocols = component_protocols(arch)?;
    if protocols.is_empty() {
        return Ok(Verdict::compatible(AnalysisKind::Behavioral, BEHAVIOR_SUBJECT));
    }
    let synced = synchronized_connectors(arch, &protocols);

    let mut conn_ids: HashMap<&str, u32> = HashMap::new();
    for k in &arch.connectors {
        let next = conn_ids.len() as u32;
        conn_ids.entry(&k.id).or_insert(next);
    }
    let comp_index: HashMap<&str, usize> = protocols.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();
    // receiver[c] is the partner component for synchronized connector c.
    let mut receiver: Vec<Option<usize>> = vec![None; conn_ids.len()];
    for k in arch.connectors.iter().filter(|k| synced.contains(&k.id)) {
        receiver[conn_ids[k.id.as_str()] as usize] = comp_index.get(k.target.component.as_str()).copied();
    }

    // moves[i][s] = outgoing (connector, kind, target) of component i in state s.
    let moves: Vec<Vec<Vec<(u32, ActionKind, u32)>>> = protocols
        .iter()
        .map(|(_, lts)| {
            let mut per_state = vec![Vec::new(); lts.states];
            for (from, label, to) in &lts.transitions {
                per_state[*from].push((conn_ids[label.connector.as_str()], label.kind, *to as u32));
            }
            per_state
        })
        .collect();
    let finals: Vec<&Lts> = protocols.iter().map(|(_, l)| l).collect();

    let initial: Box<[u32]> = protocols.iter().map(|(_, l)| l.initial as u32).collect();
    let mut seen: HashMap<Box<[u32]>, ()> = HashMap::new();
    seen.insert(initial.clone(), ());
    let mut queue = VecDeque::from([initial]);
    let mut succ = Vec::new();

    while let Some(state) = queue.pop_front() {
        succ.clear();
        for (i, &s) in state.iter().enumerate() {
            for &(c, kind, to) in &moves[i][s as usize] {
                match receiver[c as usize] {
                    Some(partner) => {
                        if kind != ActionKind::Send {
                            continue;
                        }
                        for &(c2, k2, to2) in &moves[partner][state[partner] as usize] {
                            if c2 == c && k2 == ActionKind::Receive {
                                let mut next = state.clone();
                                next[i] = to;
                                next[partner] = to2;
                                succ.push(next);
                            }
                        }
                    }
                    None => {
                        let mut next = state.clone();
                        next[i] = to;
                        succ.push(next);
                    }
                }
            }
        }
        if succ.is_empty() {
            let all_final = state.iter().enumerate().all(|(i, &s)| finals[i].is_final(s as usize));
            if !all_final {
                let where_ = protocols
                    .iter()
                    .zip(state.iter())
                    .map(|((n, _), s)| format!("{n}@{s}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Ok(Verdict::incompatible(
                    AnalysisKind::Behavioral,
                    BEHAVIOR_SUBJECT,
                    format!("deadlock: ({where_})"),
                ));
            }
        }
        for next in succ.drain(..) {
            if let Entry::Vacant(e) = seen.entry(next) {
                queue.push_back(e.key().clone());
                e.insert(());
            }
        }
        if seen.len() > options.state_cap {
            return Err(AnalysisError::StateSpaceExceeded { cap: options.state_cap });
        }
    }
    Ok(Verdict::compatible(AnalysisKind::Behavioral, BEHAVIOR_SUBJECT))
}
