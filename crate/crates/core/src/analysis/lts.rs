//! Labeled transition systems compiled from protocol terms.
//!
//! Compilation uses the position automaton of the term: one state per action
//! occurrence plus an initial state, so the result has no silent transitions
//! and `a! ; b?` yields exactly three states.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::model::{ActionKind, Architecture, Component, PortRef, ProcessTerm};

/// A transition label: a send or receive on one connector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub connector: String,
    pub kind: ActionKind,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = match self.kind {
            ActionKind::Send => '!',
            ActionKind::Receive => '?',
        };
        write!(f, "{}{mark}", self.connector)
    }
}

/// States are `0..states`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lts {
    pub states: usize,
    pub initial: usize,
    pub finals: BTreeSet<usize>,
    pub transitions: Vec<(usize, Label, usize)>,
}

impl Lts {
    pub fn is_final(&self, s: usize) -> bool {
        self.finals.contains(&s)
    }

    pub fn alphabet(&self) -> BTreeSet<&Label> {
        self.transitions.iter().map(|(_, l, _)| l).collect()
    }

    pub fn successors(&self, s: usize) -> impl Iterator<Item = (&Label, usize)> {
        self.transitions
            .iter()
            .filter(move |(from, _, _)| *from == s)
            .map(|(_, l, to)| (l, *to))
    }

    /// Every accepted word of at most `max_len` labels.
    pub fn words_up_to(&self, max_len: usize) -> BTreeSet<Vec<Label>> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([(self.initial, Vec::new())]);
        while let Some((s, word)) = queue.pop_front() {
            if self.is_final(s) {
                out.insert(word.clone());
            }
            if word.len() == max_len {
                continue;
            }
            for (label, to) in self.successors(s) {
                let mut w = word.clone();
                w.push(label.clone());
                queue.push_back((to, w));
            }
        }
        out
    }
}

struct Positions<'t> {
    actions: Vec<(&'t str, ActionKind)>,
    follow: Vec<BTreeSet<usize>>,
}

struct Summary {
    nullable: bool,
    first: BTreeSet<usize>,
    last: BTreeSet<usize>,
}

impl<'t> Positions<'t> {
    fn visit(&mut self, term: &'t ProcessTerm) -> Summary {
        match term {
            ProcessTerm::Skip => Summary {
                nullable: true,
                first: BTreeSet::new(),
                last: BTreeSet::new(),
            },
            ProcessTerm::Action { port, kind } => {
                let at = self.actions.len();
                self.actions.push((port, *kind));
                self.follow.push(BTreeSet::new());
                Summary {
                    nullable: false,
                    first: BTreeSet::from([at]),
                    last: BTreeSet::from([at]),
                }
            }
            ProcessTerm::Seq { first, then } => {
                let a = self.visit(first);
                let b = self.visit(then);
                for &l in &a.last {
                    self.follow[l].extend(&b.first);
                }
                let mut f = a.first.clone();
                if a.nullable {
                    f.extend(&b.first);
                }
                let mut l = b.last.clone();
                if b.nullable {
                    l.extend(&a.last);
                }
                Summary {
                    nullable: a.nullable && b.nullable,
                    first: f,
                    last: l,
                }
            }
            ProcessTerm::Choice { left, right } => {
                let a = self.visit(left);
                let b = self.visit(right);
                Summary {
                    nullable: a.nullable || b.nullable,
                    first: &a.first | &b.first,
                    last: &a.last | &b.last,
                }
            }
            ProcessTerm::Star { body } => {
                let a = self.visit(body);
                for &l in &a.last {
                    self.follow[l].extend(&a.first);
                }
                Summary {
                    nullable: true,
                    first: a.first,
                    last: a.last,
                }
            }
        }
    }
}

/// Compiles a component's protocol, relabeling each port action with the
/// connectors bound at that port.
pub fn compile_protocol(term: &ProcessTerm, component: &Component, arch: &Architecture) -> Result<Lts, AnalysisError> {
    let mut pos = Positions {
        actions: Vec::new(),
        follow: Vec::new(),
    };
    let summary = pos.visit(term);

    // Labels for each position, resolved once per distinct port action.
    let mut labels: Vec<Vec<Label>> = Vec::with_capacity(pos.actions.len());
    for &(port, kind) in &pos.actions {
        let at = PortRef::new(&component.name, port);
        let mut ids: Vec<&str> = arch
            .connectors
            .iter()
            .filter(|k| match kind {
                ActionKind::Send => k.source == at,
                ActionKind::Receive => k.target == at,
            })
            .map(|k| k.id.as_str())
            .collect();
        if ids.is_empty() {
            return Err(AnalysisError::UnboundProtocolPort {
                component: component.name.clone(),
                port: port.to_string(),
            });
        }
        ids.sort_unstable();
        labels.push(
            ids.into_iter()
                .map(|id| Label {
                    connector: id.to_string(),
                    kind,
                })
                .collect(),
        );
    }

    let state_of = |p: usize| p + 1;
    let mut transitions = Vec::new();
    for &p in &summary.first {
        for l in &labels[p] {
            transitions.push((0, l.clone(), state_of(p)));
        }
    }
    for (from, nexts) in pos.follow.iter().enumerate() {
        for &p in nexts {
            for l in &labels[p] {
                transitions.push((state_of(from), l.clone(), state_of(p)));
            }
        }
    }
    let mut finals: BTreeSet<usize> = summary.last.iter().map(|&p| state_of(p)).collect();
    if summary.nullable {
        finals.insert(0);
    }
    Ok(Lts {
        states: pos.actions.len() + 1,
        initial: 0,
        finals,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adl::parse;
    use crate::model::Contract;

    fn compile(ports: &str, protocol: &str) -> Lts {
        let src = format!(
            "architecture T {{ component C {{ {ports} }} component E {{ port in ai : D port in bi : D port in ci : D port out ao : D port out bo : D }}
               connector a : C.a -> E.ai connector b : C.b -> E.bi connector c : C.c -> E.ci
               contract behavioral on C {{ protocol : {protocol} }} }}"
        );
        let arch = parse(&src).unwrap();
        let Contract::Behavioral(b) = &arch.contracts[0] else { unreachable!() };
        compile_protocol(&b.protocol, arch.component("C").unwrap(), &arch).unwrap()
    }

    const SENDERS: &str = "port out a : D port out b : D port out c : D";

    /// Language of a term up to a length bound, by direct set semantics.
    fn term_words(t: &ProcessTerm, n: usize) -> BTreeSet<Vec<String>> {
        match t {
            ProcessTerm::Skip => BTreeSet::from([vec![]]),
            ProcessTerm::Action { port, kind } => {
                let mark = if *kind == ActionKind::Send { "!" } else { "?" };
                if n == 0 {
                    BTreeSet::new()
                } else {
                    BTreeSet::from([vec![format!("{port}{mark}")]])
                }
            }
            ProcessTerm::Choice { left, right } => &term_words(left, n) | &term_words(right, n),
            ProcessTerm::Seq { first, then } => {
                let (a, b) = (term_words(first, n), term_words(then, n));
                let mut out = BTreeSet::new();
                for x in &a {
                    for y in &b {
                        if x.len() + y.len() <= n {
                            out.insert([x.clone(), y.clone()].concat());
                        }
                    }
                }
                out
            }
            ProcessTerm::Star { body } => {
                let body = term_words(body, n);
                let mut acc = BTreeSet::from([vec![]]);
                loop {
                    let mut next = acc.clone();
                    for x in &acc {
                        for y in &body {
                            if x.len() + y.len() <= n {
                                next.insert([x.clone(), y.clone()].concat());
                            }
                        }
                    }
                    if next == acc {
                        return acc;
                    }
                    acc = next;
                }
            }
        }
    }

    fn lts_words(lts: &Lts, n: usize) -> BTreeSet<Vec<String>> {
        lts.words_up_to(n)
            .into_iter()
            .map(|w| w.iter().map(ToString::to_string).collect())
            .collect()
    }

    #[test]
    fn sequence_has_three_states() {
        let src = "architecture T { component C { port out a : D port in b : D }
                     component E { port in ai : D port out bo : D }
                     connector a : C.a -> E.ai connector b : E.bo -> C.b
                     contract behavioral on C { protocol : a! ; b? } }";
        let arch = parse(src).unwrap();
        let Contract::Behavioral(bc) = &arch.contracts[0] else { unreachable!() };
        let lts = compile_protocol(&bc.protocol, arch.component("C").unwrap(), &arch).unwrap();
        assert_eq!(lts.states, 3);
        assert_eq!(lts.transitions.len(), 2);
        assert_eq!(lts.finals.len(), 1);
    }

    #[test]
    fn star_makes_initial_final_and_loops() {
        let lts = compile(SENDERS, "a!*");
        assert!(lts.is_final(lts.initial));
        let (_, to) = lts.successors(lts.initial).next().unwrap();
        assert!(lts.successors(to).any(|(l, back)| l.connector == "a" && back == to));
        assert_eq!(lts_words(&lts, 3).len(), 4);
    }

    #[test]
    fn choice_then_sequence_language() {
        let lts = compile(SENDERS, "(a! | b!) ; c!");
        let expected: BTreeSet<Vec<String>> = [vec!["a!", "c!"], vec!["b!", "c!"]]
            .into_iter()
            .map(|w| w.into_iter().map(String::from).collect())
            .collect();
        assert_eq!(lts_words(&lts, 2), expected);
    }

    #[test]
    fn languages_match_term_semantics() {
        for protocol in [
            "skip",
            "a! ; b! ; c!",
            "(a! ; b!)* ; c!",
            "(a! | skip) ; (b!* | c!)",
            "((a!)* | b!)*",
            "a! ; (b! | (c! ; a!))*",
            "(skip)* ; a!",
        ] {
            let arch = parse(&format!(
                "architecture T {{ component C {{ {SENDERS} }} contract behavioral on C {{ protocol : {protocol} }} }}"
            ))
            .unwrap();
            let Contract::Behavioral(b) = &arch.contracts[0] else { unreachable!() };
            // Oracle labels words by port name; connectors share the port names here.
            let lts = compile(SENDERS, protocol);
            assert_eq!(lts_words(&lts, 5), term_words(&b.protocol, 5), "{protocol}");
        }
    }

    #[test]
    fn unbound_port_is_an_error() {
        let arch = parse(
            "architecture T { component C { port out a : D } contract behavioral on C { protocol : a! } }",
        )
        .unwrap();
        let Contract::Behavioral(b) = &arch.contracts[0] else { unreachable!() };
        let err = compile_protocol(&b.protocol, arch.component("C").unwrap(), &arch).unwrap_err();
        assert!(matches!(err, AnalysisError::UnboundProtocolPort { .. }));
    }

    #[test]
    fn multiply_bound_port_fans_out() {
        let arch = parse(
            "architecture T { component C { port out a : D } component E { port in x : D port in y : D }
               connector k1 : C.a -> E.x connector k2 : C.a -> E.y
               contract behavioral on C { protocol : a! } }",
        )
        .unwrap();
        let Contract::Behavioral(b) = &arch.contracts[0] else { unreachable!() };
        let lts = compile_protocol(&b.protocol, arch.component("C").unwrap(), &arch).unwrap();
        assert_eq!(lts.transitions.len(), 2);
    }
}
