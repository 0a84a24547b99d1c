//! Textual architecture description language: parsing into the model and
//! canonical serialization back to text.
//!
//! ```text
//! architecture A {
//!   component C { port out p : Doc required  script "c" }
//!   connector k : C.p -> D.q
//!   contract dataflow on D.q { requires max_size 10MB types {txt, jpg} }
//! }
//! ```

pub mod lexer;
mod writer;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    self, Architecture, BehavioralContract, Component, Connector, Contract, DataConstraints, DataFacts,
    DataflowContract, Direction, Extent, Port, PortRef, ProcessTerm, QosContract, SizeInterval, StructuralContract,
    StructuralRule, TypeSet,
};
use lexer::{Cursor, LexError, Pos, Tok};

pub use writer::{serialize, SerializeError};

pub const KEYWORDS: &[&str] = &[
    "architecture",
    "component",
    "port",
    "in",
    "out",
    "required",
    "script",
    "connector",
    "contract",
    "structural",
    "behavioral",
    "dataflow",
    "qos",
    "on",
    "only",
    "must_be_bound",
    "protocol",
    "skip",
    "produces",
    "size",
    "types",
    "unknown",
    "requires",
    "max_size",
    "offered_latency",
    "required_max_latency",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<Vec<String>>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if let Some(exp) = &self.expected {
            write!(f, " (expected {})", exp.join(" or "))?;
        }
        Ok(())
    }
}

impl ParseError {
    pub(crate) fn at(pos: Pos, message: impl Into<String>) -> Self {
        ParseError {
            line: pos.line,
            column: pos.column,
            message: message.into(),
            expected: None,
        }
    }

    pub(crate) fn expected(pos: Pos, found: &Tok, expected: &[&str]) -> Self {
        ParseError {
            line: pos.line,
            column: pos.column,
            message: format!("unexpected {found}"),
            expected: Some(expected.iter().map(|s| s.to_string()).collect()),
        }
    }
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> Self {
        ParseError::at(e.pos, e.message)
    }
}

/// Pretty list of parse errors, one per line.
pub fn render_errors(errors: &[ParseError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

/// Parses architecture source. On success the model is well-formed and
/// canonical; otherwise every syntax or well-formedness error is returned
/// with a position.
pub fn parse(text: &str) -> Result<Architecture, Vec<ParseError>> {
    let tokens = lexer::tokenize(text).map_err(|e| vec![e.into()])?;
    let mut p = AdlParser {
        cur: Cursor::new(tokens),
        locations: HashMap::new(),
    };
    let arch = p.architecture().map_err(|e| vec![e])?;

    let report = model::validate(&arch);
    if !report.is_empty() {
        let fallback = Pos { line: 1, column: 1 };
        return Err(report
            .issues
            .iter()
            .map(|issue| {
                let pos = p.locations.get(&issue.location).copied().unwrap_or(fallback);
                ParseError::at(pos, format!("{}: {} ({})", issue.location, issue.kind.describe(), issue.detail))
            })
            .collect());
    }
    Ok(model::canonical_order(arch))
}

struct AdlParser {
    cur: Cursor,
    /// Source position of each declared element, keyed like `Issue::location`.
    locations: HashMap<String, Pos>,
}

type PResult<T> = Result<T, ParseError>;

impl AdlParser {
    fn expect_sym(&mut self, s: &'static str) -> PResult<Pos> {
        let t = self.cur.peek().clone();
        if self.cur.eat_sym(s) {
            Ok(t.pos)
        } else {
            Err(ParseError::expected(t.pos, &t.tok, &[&format!("`{s}`")]))
        }
    }

    fn expect_word(&mut self, w: &'static str) -> PResult<Pos> {
        let t = self.cur.peek().clone();
        if self.cur.eat_word(w) {
            Ok(t.pos)
        } else {
            Err(ParseError::expected(t.pos, &t.tok, &[&format!("`{w}`")]))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        let t = self.cur.peek().clone();
        match &t.tok {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => {
                Err(ParseError::at(t.pos, format!("keyword `{s}` cannot be used as an identifier")))
            }
            Tok::Ident(s) => {
                self.cur.bump();
                Ok((s.clone(), t.pos))
            }
            other => Err(ParseError::expected(t.pos, other, &["identifier"])),
        }
    }

    fn port_ref(&mut self) -> PResult<(PortRef, Pos)> {
        let (c, pos) = self.ident()?;
        self.expect_sym(".")?;
        let (p, _) = self.ident()?;
        Ok((PortRef::new(c, p), pos))
    }

    fn architecture(&mut self) -> PResult<Architecture> {
        self.expect_word("architecture")?;
        let (name, _) = self.ident()?;
        let mut arch = Architecture::new(name);
        self.expect_sym("{")?;
        loop {
            let t = self.cur.peek().clone();
            match &t.tok {
                Tok::Sym("}") => {
                    self.cur.bump();
                    break;
                }
                Tok::Ident(w) if w == "component" => arch.components.push(self.component()?),
                Tok::Ident(w) if w == "connector" => arch.connectors.push(self.connector()?),
                Tok::Ident(w) if w == "contract" => arch.contracts.push(self.contract()?),
                other => {
                    return Err(ParseError::expected(
                        t.pos,
                        other,
                        &["`component`", "`connector`", "`contract`", "`}`"],
                    ))
                }
            }
        }
        let t = self.cur.peek().clone();
        if t.tok != Tok::Eof {
            return Err(ParseError::expected(t.pos, &t.tok, &["end of input"]));
        }
        Ok(arch)
    }

    fn component(&mut self) -> PResult<Component> {
        self.expect_word("component")?;
        let (name, pos) = self.ident()?;
        self.locations.insert(format!("component {name}"), pos);
        let mut comp = Component::new(name);
        self.expect_sym("{")?;
        while self.cur.at_word("port") {
            self.cur.bump();
            let t = self.cur.peek().clone();
            let direction = if self.cur.eat_word("in") {
                Direction::In
            } else if self.cur.eat_word("out") {
                Direction::Out
            } else {
                return Err(ParseError::expected(t.pos, &t.tok, &["`in`", "`out`"]));
            };
            let (pname, ppos) = self.ident()?;
            self.expect_sym(":")?;
            let (ty, _) = self.ident()?;
            let mut port = Port::new(pname, direction, ty);
            port.required = self.cur.eat_word("required");
            self.locations
                .insert(format!("port {}", PortRef::new(&comp.name, &port.name)), ppos);
            comp.ports.push(port);
        }
        if self.cur.eat_word("script") {
            let t = self.cur.bump();
            match t.tok {
                Tok::Str(s) => comp.script = Some(s),
                other => return Err(ParseError::expected(t.pos, &other, &["string"])),
            }
        }
        let t = self.cur.peek().clone();
        if !self.cur.eat_sym("}") {
            let expected: &[&str] = if comp.script.is_some() {
                &["`}`"]
            } else {
                &["`port`", "`script`", "`}`"]
            };
            return Err(ParseError::expected(t.pos, &t.tok, expected));
        }
        Ok(comp)
    }

    fn connector(&mut self) -> PResult<Connector> {
        self.expect_word("connector")?;
        let (id, pos) = self.ident()?;
        self.locations.insert(format!("connector {id}"), pos);
        self.expect_sym(":")?;
        let (source, _) = self.port_ref()?;
        self.expect_sym("->")?;
        let (target, _) = self.port_ref()?;
        Ok(Connector::new(id, source, target))
    }

    fn contract(&mut self) -> PResult<Contract> {
        let start = self.expect_word("contract")?;
        let t = self.cur.bump();
        let kind = match &t.tok {
            Tok::Ident(w) if ["structural", "behavioral", "dataflow", "qos"].contains(&w.as_str()) => w.clone(),
            other => {
                return Err(ParseError::expected(
                    t.pos,
                    other,
                    &["`structural`", "`behavioral`", "`dataflow`", "`qos`"],
                ))
            }
        };
        self.expect_word("on")?;
        if kind == "behavioral" {
            let (component, _) = self.ident()?;
            self.locations
                .insert(format!("contract behavioral on {component}"), start);
            self.expect_sym("{")?;
            self.expect_word("protocol")?;
            self.expect_sym(":")?;
            let protocol = self.proc_term()?;
            self.expect_sym("}")?;
            return Ok(Contract::Behavioral(BehavioralContract { component, protocol }));
        }
        let (subject, _) = self.port_ref()?;
        self.locations.insert(format!("contract {kind} on {subject}"), start);
        self.expect_sym("{")?;
        let contract = match kind.as_str() {
            "structural" => self.structural_body(subject)?,
            "dataflow" => self.dataflow_body(subject)?,
            _ => self.qos_body(subject)?,
        };
        self.expect_sym("}")?;
        Ok(contract)
    }

    fn structural_body(&mut self, subject: PortRef) -> PResult<Contract> {
        let mut rules = Vec::new();
        if self.cur.eat_word("only") {
            self.expect_sym("[")?;
            let mut clients = BTreeSet::new();
            loop {
                clients.insert(self.ident()?.0);
                if !self.cur.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym("]")?;
            rules.push(StructuralRule::OnlyClients { clients });
        }
        if self.cur.eat_word("must_be_bound") {
            rules.push(StructuralRule::MustBeBound);
        }
        Ok(Contract::Structural(StructuralContract { subject, rules }))
    }

    fn dataflow_body(&mut self, port: PortRef) -> PResult<Contract> {
        let mut produced = None;
        let mut constraints = None;
        if self.cur.eat_word("produces") {
            self.expect_word("size")?;
            self.expect_sym("[")?;
            let lo = self.size()?;
            self.expect_sym(",")?;
            let hi = if self.cur.eat_word("unknown") {
                Extent::Unknown
            } else {
                Extent::Finite(self.size()?)
            };
            self.expect_sym("]")?;
            self.expect_word("types")?;
            let types = if self.cur.eat_word("unknown") {
                TypeSet::Unknown
            } else {
                TypeSet::Only(self.type_set()?)
            };
            produced = Some(DataFacts {
                size: SizeInterval { lo, hi },
                types,
            });
        }
        if self.cur.eat_word("requires") {
            let mut c = DataConstraints::default();
            if self.cur.eat_word("max_size") {
                c.max_size = Some(self.size()?);
            }
            if self.cur.eat_word("types") {
                c.allowed_types = Some(self.type_set()?);
            }
            constraints = Some(c);
        }
        Ok(Contract::Dataflow(DataflowContract {
            port,
            produced,
            constraints,
        }))
    }

    fn qos_body(&mut self, port: PortRef) -> PResult<Contract> {
        let mut q = QosContract {
            port,
            offered_latency: None,
            required_max_latency: None,
        };
        if self.cur.eat_word("offered_latency") {
            q.offered_latency = Some(if self.cur.eat_word("unknown") {
                Extent::Unknown
            } else {
                Extent::Finite(self.duration()?)
            });
        }
        if self.cur.eat_word("required_max_latency") {
            q.required_max_latency = Some(self.duration()?);
        }
        Ok(Contract::Qos(q))
    }

    fn type_set(&mut self) -> PResult<BTreeSet<String>> {
        self.expect_sym("{")?;
        let mut set = BTreeSet::new();
        loop {
            set.insert(self.ident()?.0);
            if !self.cur.eat_sym(",") {
                break;
            }
        }
        self.expect_sym("}")?;
        Ok(set)
    }

    fn number(&mut self) -> PResult<(u64, Pos)> {
        let t = self.cur.bump();
        match t.tok {
            Tok::Number(n) => Ok((n, t.pos)),
            other => Err(ParseError::expected(t.pos, &other, &["number"])),
        }
    }

    fn size(&mut self) -> PResult<u64> {
        let (n, pos) = self.number()?;
        let scale = match &self.cur.peek().tok {
            Tok::Ident(s) if s == "B" => 1,
            Tok::Ident(s) if s == "kB" => 1_000,
            Tok::Ident(s) if s == "MB" => model::MB,
            _ => return Ok(n),
        };
        self.cur.bump();
        n.checked_mul(scale)
            .ok_or_else(|| ParseError::at(pos, "size does not fit in 64 bits"))
    }

    fn duration(&mut self) -> PResult<u64> {
        let (n, _) = self.number()?;
        self.cur.eat_word("ms");
        Ok(n)
    }

    // seq := choice (";" choice)*
    fn proc_term(&mut self) -> PResult<ProcessTerm> {
        let mut t = self.proc_choice()?;
        while self.cur.eat_sym(";") {
            t = ProcessTerm::seq(t, self.proc_choice()?);
        }
        Ok(t)
    }

    fn proc_choice(&mut self) -> PResult<ProcessTerm> {
        let mut t = self.proc_star()?;
        while self.cur.eat_sym("|") {
            t = ProcessTerm::choice(t, self.proc_star()?);
        }
        Ok(t)
    }

    fn proc_star(&mut self) -> PResult<ProcessTerm> {
        let t = self.proc_atom()?;
        Ok(if self.cur.eat_sym("*") { ProcessTerm::star(t) } else { t })
    }

    fn proc_atom(&mut self) -> PResult<ProcessTerm> {
        if self.cur.eat_sym("(") {
            let t = self.proc_term()?;
            self.expect_sym(")")?;
            return Ok(t);
        }
        if self.cur.eat_word("skip") {
            return Ok(ProcessTerm::Skip);
        }
        let t = self.cur.peek().clone();
        let (port, _) = match self.ident() {
            Ok(v) => v,
            Err(_) => return Err(ParseError::expected(t.pos, &t.tok, &["port action", "`skip`", "`(`"])),
        };
        if self.cur.eat_sym("!") {
            Ok(ProcessTerm::send(port))
        } else if self.cur.eat_sym("?") {
            Ok(ProcessTerm::receive(port))
        } else {
            let n = self.cur.peek().clone();
            Err(ParseError::expected(n.pos, &n.tok, &["`!`", "`?`"]))
        }
    }
}
