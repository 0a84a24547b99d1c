use std::collections::BTreeSet;
use std::fmt::Write;

use thiserror::Error;

use super::KEYWORDS;
use crate::model::{
    self, Architecture, Contract, Extent, ModelError, ProcessTerm, StructuralRule, TypeSet, MB,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SerializeError {
    #[error(transparent)]
    IllFormed(#[from] ModelError),
    #[error("`{0}` is not a valid identifier")]
    InvalidIdentifier(String),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&s)
}

fn id(s: &str) -> Result<&str, SerializeError> {
    if is_ident(s) {
        Ok(s)
    } else {
        Err(SerializeError::InvalidIdentifier(s.to_string()))
    }
}

fn size(bytes: u64) -> String {
    if bytes != 0 && bytes % MB == 0 {
        format!("{}MB", bytes / MB)
    } else if bytes != 0 && bytes % 1_000 == 0 {
        format!("{}kB", bytes / 1_000)
    } else {
        format!("{bytes}B")
    }
}

fn type_set(set: &BTreeSet<String>) -> Result<String, SerializeError> {
    let items = set.iter().map(|t| id(t)).collect::<Result<Vec<_>, _>>()?;
    Ok(format!("{{{}}}", items.join(", ")))
}

#[derive(PartialEq, PartialOrd, Clone, Copy)]
enum Level {
    Seq,
    Choice,
    Star,
}

fn term(t: &ProcessTerm, level: Level, out: &mut String) -> Result<(), SerializeError> {
    let wrap = |needed: Level| level > needed;
    match t {
        ProcessTerm::Skip => out.push_str("skip"),
        ProcessTerm::Action { port, kind } => {
            out.push_str(id(port)?);
            out.push(match kind {
                model::ActionKind::Send => '!',
                model::ActionKind::Receive => '?',
            });
        }
        ProcessTerm::Seq { first, then } => {
            let paren = wrap(Level::Seq);
            if paren {
                out.push('(');
            }
            term(first, Level::Seq, out)?;
            out.push_str(" ; ");
            term(then, Level::Choice, out)?;
            if paren {
                out.push(')');
            }
        }
        ProcessTerm::Choice { left, right } => {
            let paren = wrap(Level::Choice);
            if paren {
                out.push('(');
            }
            term(left, Level::Choice, out)?;
            out.push_str(" | ");
            term(right, Level::Star, out)?;
            if paren {
                out.push(')');
            }
        }
        ProcessTerm::Star { body } => {
            // The operand of `*` must be an atom.
            match body.as_ref() {
                ProcessTerm::Action { .. } | ProcessTerm::Skip => term(body, Level::Star, out)?,
                _ => {
                    out.push('(');
                    term(body, Level::Seq, out)?;
                    out.push(')');
                }
            }
            out.push('*');
        }
    }
    Ok(())
}

/// Renders a well-formed architecture as canonical source text.
pub fn serialize(arch: &Architecture) -> Result<String, SerializeError> {
    let arch = model::canonicalize(arch)?;
    let mut out = String::new();
    let w = &mut out;
    if arch.components.is_empty() && arch.connectors.is_empty() && arch.contracts.is_empty() {
        writeln!(w, "architecture {} {{ }}", id(&arch.name)?).unwrap();
        return Ok(out);
    }
    writeln!(w, "architecture {} {{", id(&arch.name)?).unwrap();
    for c in &arch.components {
        writeln!(w, "  component {} {{", id(&c.name)?).unwrap();
        for p in &c.ports {
            write!(w, "    port {} {} : {}", p.direction, id(&p.name)?, id(&p.data_type)?).unwrap();
            if p.required {
                w.push_str(" required");
            }
            w.push('\n');
        }
        if let Some(s) = &c.script {
            let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
            writeln!(w, "    script \"{escaped}\"").unwrap();
        }
        writeln!(w, "  }}").unwrap();
    }
    for k in &arch.connectors {
        writeln!(
            w,
            "  connector {} : {}.{} -> {}.{}",
            id(&k.id)?,
            id(&k.source.component)?,
            id(&k.source.port)?,
            id(&k.target.component)?,
            id(&k.target.port)?
        )
        .unwrap();
    }
    for contract in &arch.contracts {
        match contract {
            Contract::Structural(s) => {
                let mut body = Vec::new();
                for rule in &s.rules {
                    match rule {
                        StructuralRule::OnlyClients { clients } => {
                            let names = clients.iter().map(|c| id(c)).collect::<Result<Vec<_>, _>>()?;
                            body.push(format!("only [{}]", names.join(", ")));
                        }
                        StructuralRule::MustBeBound => body.push("must_be_bound".into()),
                    }
                }
                writeln!(w, "  contract structural on {} {{ {} }}", s.subject, body.join(" ")).unwrap();
            }
            Contract::Behavioral(b) => {
                let mut t = String::new();
                term(&b.protocol, Level::Seq, &mut t)?;
                writeln!(w, "  contract behavioral on {} {{ protocol : {t} }}", id(&b.component)?).unwrap();
            }
            Contract::Dataflow(d) => {
                let mut body = Vec::new();
                if let Some(f) = &d.produced {
                    let hi = match f.size.hi {
                        Extent::Finite(v) => size(v),
                        Extent::Unknown => "unknown".into(),
                    };
                    let types = match &f.types {
                        TypeSet::Only(set) => type_set(set)?,
                        TypeSet::Unknown => "unknown".into(),
                    };
                    body.push(format!("produces size [{}, {hi}] types {types}", size(f.size.lo)));
                }
                if let Some(c) = &d.constraints {
                    let mut s = String::from("requires");
                    if let Some(m) = c.max_size {
                        write!(s, " max_size {}", size(m)).unwrap();
                    }
                    if let Some(t) = &c.allowed_types {
                        write!(s, " types {}", type_set(t)?).unwrap();
                    }
                    body.push(s);
                }
                writeln!(w, "  contract dataflow on {} {{ {} }}", d.port, body.join(" ")).unwrap();
            }
            Contract::Qos(q) => {
                let mut body = Vec::new();
                match q.offered_latency {
                    Some(Extent::Finite(v)) => body.push(format!("offered_latency {v}ms")),
                    Some(Extent::Unknown) => body.push("offered_latency unknown".into()),
                    None => {}
                }
                if let Some(r) = q.required_max_latency {
                    body.push(format!("required_max_latency {r}ms"));
                }
                writeln!(w, "  contract qos on {} {{ {} }}", q.port, body.join(" ")).unwrap();
            }
        }
    }
    w.push_str("}\n");
    Ok(out)
}
