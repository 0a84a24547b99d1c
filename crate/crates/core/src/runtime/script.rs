//! Behavior scripts and scenarios for the simulated runtime.
//!
//! ```text
//! script GlobalSearch {
//!   on query emit fetch
//!   on results when terminal == "pda" emit toPda
//!   source announce size = 10 type = "txt"
//! }
//!
//! scenario druggist {
//!   at 0 stim Client.login user = "ana"
//!   at 5 stim PDA.search size = 200B type = txt doc_size = 2MB
//! }
//! ```
//!
//! A rule fires for every message delivered to its port whose guard holds.
//! Each emitted message inherits the triggering message's attributes,
//! overridden by the listed assignments. Assignments read the triggering
//! attributes, never each other. The reserved `delay` attribute sets how many
//! ticks the message spends in transit (at least one) and is not forwarded.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adl::lexer::{tokenize, Cursor, Tok};
use crate::adl::ParseError;
use crate::model::{PortRef, MB};

/// An attribute value carried by a message.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

pub type Attrs = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Min,
    Max,
    Rand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expr {
    Lit(Value),
    Attr(String),
    Call(Func, Vec<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emit {
    pub port: String,
    pub assigns: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub on: String,
    /// Conjunction; empty means always.
    pub guard: Vec<Comparison>,
    pub emits: Vec<Emit>,
}

/// Attributes added to stimuli injected at an out-port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub port: String,
    pub assigns: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorScript {
    pub name: String,
    pub rules: Vec<Rule>,
    pub sources: Vec<Source>,
}

impl BehaviorScript {
    pub fn new(name: impl Into<String>) -> Self {
        BehaviorScript {
            name: name.into(),
            rules: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn source(&self, port: &str) -> Option<&Source> {
        self.sources.iter().find(|s| s.port == port)
    }

    pub fn rules_on<'a>(&'a self, port: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.on == port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    /// Ticks after the scenario starts.
    pub at: u64,
    pub target: PortRef,
    pub attrs: Attrs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub stimuli: Vec<Stimulus>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct EvalError(pub String);

fn int(v: Value, what: &str) -> Result<i64, EvalError> {
    match v {
        Value::Int(n) => Ok(n),
        Value::Text(s) => Err(EvalError(format!("{what} expects a number, got {s:?}"))),
    }
}

impl Expr {
    pub fn eval(&self, attrs: &Attrs, rng: &mut ChaCha8Rng) -> Result<Value, EvalError> {
        match self {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Attr(name) => attrs
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError(format!("message has no attribute `{name}`"))),
            Expr::Call(func, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(a.eval(attrs, rng)?);
                }
                match func {
                    Func::Min | Func::Max => {
                        let mut it = vals.into_iter();
                        let first = it.next().ok_or_else(|| EvalError("min/max need an argument".into()))?;
                        it.try_fold(first, |acc, v| {
                            if std::mem::discriminant(&acc) != std::mem::discriminant(&v) {
                                return Err(EvalError("min/max over mixed numbers and text".into()));
                            }
                            Ok(if (*func == Func::Min) == (v < acc) { v } else { acc })
                        })
                    }
                    Func::Rand => {
                        let [lo, hi]: [Value; 2] = vals
                            .try_into()
                            .map_err(|_| EvalError("rand takes two arguments".into()))?;
                        let (lo, hi) = (int(lo, "rand")?, int(hi, "rand")?);
                        if lo > hi {
                            return Err(EvalError(format!("rand({lo}, {hi}) has an empty range")));
                        }
                        Ok(Value::Int(rng.random_range(lo..=hi)))
                    }
                }
            }
            Expr::Bin(op, l, r) => {
                let a = int(l.eval(attrs, rng)?, "arithmetic")?;
                let b = int(r.eval(attrs, rng)?, "arithmetic")?;
                let out = match op {
                    BinOp::Add => a.checked_add(b),
                    BinOp::Sub => a.checked_sub(b),
                    BinOp::Mul => a.checked_mul(b),
                    BinOp::Div if b == 0 => return Err(EvalError("division by zero".into())),
                    BinOp::Div => a.checked_div(b),
                };
                out.map(Value::Int).ok_or_else(|| EvalError("arithmetic overflow".into()))
            }
        }
    }
}

impl Comparison {
    pub fn holds(&self, attrs: &Attrs, rng: &mut ChaCha8Rng) -> Result<bool, EvalError> {
        let a = self.lhs.eval(attrs, rng)?;
        let b = self.rhs.eval(attrs, rng)?;
        if std::mem::discriminant(&a) != std::mem::discriminant(&b) {
            return match self.op {
                CmpOp::Eq => Ok(false),
                CmpOp::Ne => Ok(true),
                _ => Err(EvalError(format!("cannot order {a} against {b}"))),
            };
        }
        Ok(match self.op {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        })
    }
}

/// Evaluates assignments against `base` and returns the overridden attributes.
pub fn assign(base: &Attrs, assigns: &[(String, Expr)], rng: &mut ChaCha8Rng) -> Result<Attrs, EvalError> {
    let mut out = base.clone();
    for (k, e) in assigns {
        out.insert(k.clone(), e.eval(base, rng)?);
    }
    Ok(out)
}

const SCRIPT_KEYWORDS: &[&str] = &["script", "scenario", "on", "when", "emit", "source", "and", "at", "stim"];

type PResult<T> = Result<T, ParseError>;

struct Parser {
    cur: Cursor,
}

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        Ok(Parser {
            cur: Cursor::new(tokenize(text)?),
        })
    }

    fn expect_sym(&mut self, s: &'static str) -> PResult<()> {
        let t = self.cur.peek().clone();
        if self.cur.eat_sym(s) {
            Ok(())
        } else {
            Err(ParseError::expected(t.pos, &t.tok, &[&format!("`{s}`")]))
        }
    }

    fn expect_word(&mut self, w: &'static str) -> PResult<()> {
        let t = self.cur.peek().clone();
        if self.cur.eat_word(w) {
            Ok(())
        } else {
            Err(ParseError::expected(t.pos, &t.tok, &[&format!("`{w}`")]))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        let t = self.cur.peek().clone();
        match t.tok {
            Tok::Ident(s) if SCRIPT_KEYWORDS.contains(&s.as_str()) => {
                Err(ParseError::at(t.pos, format!("keyword `{s}` cannot be used as a name")))
            }
            Tok::Ident(s) => {
                self.cur.bump();
                Ok(s)
            }
            other => Err(ParseError::expected(t.pos, &other, &["identifier"])),
        }
    }

    fn at_assignment(&self) -> bool {
        matches!(self.cur.peek().tok, Tok::Ident(_)) && matches!(self.cur.peek_at(1).tok, Tok::Sym("="))
    }

    fn number(&mut self) -> PResult<i64> {
        let t = self.cur.bump();
        let Tok::Number(n) = t.tok else {
            return Err(ParseError::expected(t.pos, &t.tok, &["number"]));
        };
        let scale = match &self.cur.peek().tok {
            Tok::Ident(s) => match s.as_str() {
                "B" | "ms" => Some(1),
                "kB" => Some(1_000),
                "MB" => Some(MB),
                _ => None,
            },
            _ => None,
        };
        if scale.is_some() {
            self.cur.bump();
        }
        let scale = scale.unwrap_or(1);
        n.checked_mul(scale)
            .and_then(|v| i64::try_from(v).ok())
            .ok_or_else(|| ParseError::at(t.pos, "number out of range"))
    }

    fn literal(&mut self) -> PResult<Value> {
        let t = self.cur.peek().clone();
        match t.tok {
            Tok::Number(_) => Ok(Value::Int(self.number()?)),
            Tok::Sym("-") => {
                self.cur.bump();
                Ok(Value::Int(-self.number()?))
            }
            Tok::Str(s) => {
                self.cur.bump();
                Ok(Value::Text(s))
            }
            Tok::Ident(_) => Ok(Value::Text(self.ident()?)),
            other => Err(ParseError::expected(t.pos, &other, &["number", "string", "identifier"])),
        }
    }

    // expr := term (("+" | "-") term)*
    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.term()?;
        loop {
            let op = if self.cur.eat_sym("+") {
                BinOp::Add
            } else if self.cur.eat_sym("-") {
                BinOp::Sub
            } else {
                return Ok(e);
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.term()?));
        }
    }

    // term := factor (("*" | "/") factor)*
    fn term(&mut self) -> PResult<Expr> {
        let mut e = self.factor()?;
        loop {
            let op = if self.cur.eat_sym("*") {
                BinOp::Mul
            } else if self.cur.eat_sym("/") {
                BinOp::Div
            } else {
                return Ok(e);
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.factor()?));
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        let t = self.cur.peek().clone();
        match &t.tok {
            Tok::Sym("(") => {
                self.cur.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) if matches!(self.cur.peek_at(1).tok, Tok::Sym("(")) => {
                let func = match name.as_str() {
                    "min" => Func::Min,
                    "max" => Func::Max,
                    "rand" => Func::Rand,
                    other => return Err(ParseError::at(t.pos, format!("unknown function `{other}`"))),
                };
                self.cur.bump();
                self.cur.bump();
                let mut args = vec![self.expr()?];
                while self.cur.eat_sym(",") {
                    args.push(self.expr()?);
                }
                self.expect_sym(")")?;
                if func == Func::Rand && args.len() != 2 {
                    return Err(ParseError::at(t.pos, "rand takes two arguments"));
                }
                Ok(Expr::Call(func, args))
            }
            Tok::Ident(_) => Ok(Expr::Attr(self.ident()?)),
            _ => Ok(Expr::Lit(self.literal()?)),
        }
    }

    fn comparison(&mut self) -> PResult<Comparison> {
        let lhs = self.expr()?;
        let t = self.cur.bump();
        let op = match t.tok {
            Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            other => {
                return Err(ParseError::expected(
                    t.pos,
                    &other,
                    &["`==`", "`!=`", "`<`", "`<=`", "`>`", "`>=`"],
                ))
            }
        };
        Ok(Comparison {
            lhs,
            op,
            rhs: self.expr()?,
        })
    }

    fn assigns(&mut self) -> PResult<Vec<(String, Expr)>> {
        let mut out = Vec::new();
        while self.at_assignment() {
            let k = self.ident()?;
            self.expect_sym("=")?;
            out.push((k, self.expr()?));
        }
        Ok(out)
    }

    fn script(&mut self) -> PResult<BehaviorScript> {
        self.expect_word("script")?;
        let mut s = BehaviorScript::new(self.ident()?);
        self.expect_sym("{")?;
        loop {
            if self.cur.eat_word("on") {
                let on = self.ident()?;
                let mut guard = Vec::new();
                if self.cur.eat_word("when") {
                    guard.push(self.comparison()?);
                    while self.cur.eat_word("and") {
                        guard.push(self.comparison()?);
                    }
                }
                let mut emits = Vec::new();
                while self.cur.eat_word("emit") {
                    let port = self.ident()?;
                    emits.push(Emit {
                        port,
                        assigns: self.assigns()?,
                    });
                }
                s.rules.push(Rule { on, guard, emits });
            } else if self.cur.eat_word("source") {
                let port = self.ident()?;
                s.sources.push(Source {
                    port,
                    assigns: self.assigns()?,
                });
            } else if self.cur.eat_sym("}") {
                return Ok(s);
            } else {
                let t = self.cur.peek().clone();
                return Err(ParseError::expected(t.pos, &t.tok, &["`on`", "`source`", "`}`"]));
            }
        }
    }

    fn scenario(&mut self) -> PResult<Scenario> {
        self.expect_word("scenario")?;
        let mut s = Scenario {
            name: self.ident()?,
            stimuli: Vec::new(),
        };
        self.expect_sym("{")?;
        while self.cur.eat_word("at") {
            let at = self.number()?;
            let at = u64::try_from(at).map_err(|_| ParseError::at(self.cur.peek().pos, "negative tick"))?;
            self.expect_word("stim")?;
            let component = self.ident()?;
            self.expect_sym(".")?;
            let port = self.ident()?;
            let mut attrs = Attrs::new();
            while self.at_assignment() {
                let k = self.ident()?;
                self.expect_sym("=")?;
                attrs.insert(k, self.literal()?);
            }
            s.stimuli.push(Stimulus {
                at,
                target: PortRef::new(component, port),
                attrs,
            });
        }
        let t = self.cur.peek().clone();
        if !self.cur.eat_sym("}") {
            return Err(ParseError::expected(t.pos, &t.tok, &["`at`", "`}`"]));
        }
        // Stable, so same-tick stimuli keep their written order.
        s.stimuli.sort_by_key(|st| st.at);
        Ok(s)
    }

    fn many<T>(&mut self, word: &str, one: fn(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        while self.cur.at_word(word) {
            out.push(one(self)?);
        }
        let t = self.cur.peek().clone();
        if t.tok != Tok::Eof {
            let expected = format!("`{word}`");
            return Err(ParseError::expected(t.pos, &t.tok, &[&expected, "end of input"]));
        }
        Ok(out)
    }
}

/// Parses zero or more `script` blocks.
pub fn parse_scripts(text: &str) -> Result<Vec<BehaviorScript>, ParseError> {
    Parser::new(text)?.many("script", Parser::script)
}

/// Parses zero or more `scenario` blocks.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>, ParseError> {
    Parser::new(text)?.many("scenario", Parser::scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn attrs(pairs: &[(&str, Value)]) -> Attrs {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn script_with_guards_emits_and_sources() {
        let s = parse_scripts(
            r#"script G {
                 on results when terminal == "pda" and size <= 10MB emit toPda
                 on query emit fetch emit audit tag = "q" n = size * 2
                 source announce size = 10 type = txt
               }"#,
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        let g = &s[0];
        assert_eq!(g.rules.len(), 2);
        assert_eq!(g.rules[0].guard.len(), 2);
        assert_eq!(g.rules[1].emits.len(), 2);
        assert_eq!(g.rules[1].emits[1].assigns.len(), 2);
        assert_eq!(g.source("announce").unwrap().assigns[1].1, Expr::Attr("txt".into()));
    }

    #[test]
    fn arithmetic_precedence_and_functions() {
        let s = parse_scripts("script X { on i emit o v = 1 + 2 * 3 w = min(size, 5) - (4 - 1) }").unwrap();
        let a = attrs(&[("size", Value::Int(9))]);
        let out = assign(&a, &s[0].rules[0].emits[0].assigns, &mut rng()).unwrap();
        assert_eq!(out["v"], Value::Int(7));
        assert_eq!(out["w"], Value::Int(2));
        assert_eq!(out["size"], Value::Int(9));
    }

    #[test]
    fn assignments_read_the_trigger_not_each_other() {
        let s = parse_scripts("script X { on i emit o size = 1 copy = size }").unwrap();
        let out = assign(&attrs(&[("size", Value::Int(5))]), &s[0].rules[0].emits[0].assigns, &mut rng()).unwrap();
        assert_eq!(out["copy"], Value::Int(5));
        assert_eq!(out["size"], Value::Int(1));
    }

    #[test]
    fn rand_is_seeded_and_bounded() {
        let e = Expr::Call(Func::Rand, vec![Expr::Lit(Value::Int(3)), Expr::Lit(Value::Int(6))]);
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| e.eval(&Attrs::new(), &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        assert!(draw(2).iter().all(|v| matches!(v, Value::Int(3..=6))));
    }

    #[test]
    fn eval_errors() {
        let mut r = rng();
        assert!(Expr::Attr("nope".into()).eval(&Attrs::new(), &mut r).is_err());
        let div = Expr::Bin(BinOp::Div, Box::new(Expr::Lit(1.into())), Box::new(Expr::Lit(0.into())));
        assert!(div.eval(&Attrs::new(), &mut r).is_err());
        let mixed = Comparison {
            lhs: Expr::Lit("a".into()),
            op: CmpOp::Lt,
            rhs: Expr::Lit(1.into()),
        };
        assert!(mixed.holds(&Attrs::new(), &mut r).is_err());
        let eq = Comparison { op: CmpOp::Eq, ..mixed };
        assert!(!eq.holds(&Attrs::new(), &mut r).unwrap());
    }

    #[test]
    fn scenario_is_sorted_stably_by_tick() {
        let s = parse_scenarios(
            "scenario s { at 5 stim A.o n = 1 at 0 stim A.o n = 2 at 5 stim B.o t = jpg size = 2MB }",
        )
        .unwrap();
        let order: Vec<_> = s[0].stimuli.iter().map(|st| (st.at, st.target.component.as_str())).collect();
        assert_eq!(order, [(0, "A"), (5, "A"), (5, "B")]);
        assert_eq!(s[0].stimuli[2].attrs["size"], Value::Int(2_000_000));
        assert_eq!(s[0].stimuli[2].attrs["t"], Value::Text("jpg".into()));
    }

    #[test]
    fn syntax_errors_have_positions() {
        let e = parse_scripts("script X {\n  on i emit\n}").unwrap_err();
        assert_eq!((e.line, e.column), (3, 1));
        let e = parse_scenarios("scenario s { at 1 stim A }").unwrap_err();
        assert_eq!(e.expected, Some(vec!["`.`".to_string()]));
    }

    #[test]
    fn values_serialize_untagged() {
        let a = attrs(&[("size", Value::Int(3)), ("type", Value::Text("txt".into()))]);
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"{"size":3,"type":"txt"}"#);
    }
}
