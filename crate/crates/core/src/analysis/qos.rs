//! Latency prediction: offered latencies add up along a path and the slowest
//! of converging paths wins.

use std::collections::HashMap;

use super::{require_well_formed, AnalysisError, AnalysisKind, ResidualPredicate, Test, Variable, Verdict};
use crate::model::{Architecture, Contract, Extent, PortRef};

/// Predicted latency as `[min, max]`; `max` is unknown when any contributing
/// hop is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub min: u64,
    pub max: Extent,
}

impl Prediction {
    const ZERO: Prediction = Prediction {
        min: 0,
        max: Extent::Finite(0),
    };

    fn then(self, hop: Extent) -> Prediction {
        match (self.max, hop) {
            (Extent::Finite(m), Extent::Finite(h)) => Prediction {
                min: self.min.saturating_add(h),
                max: Extent::Finite(m.saturating_add(h)),
            },
            (_, Extent::Finite(h)) => Prediction {
                min: self.min.saturating_add(h),
                max: Extent::Unknown,
            },
            (_, Extent::Unknown) => Prediction {
                min: self.min,
                max: Extent::Unknown,
            },
        }
    }

    fn converge(self, other: Prediction) -> Prediction {
        Prediction {
            min: self.min.max(other.min),
            max: self.max.max(other.max),
        }
    }
}

struct Predictor<'a> {
    offered: HashMap<&'a PortRef, Extent>,
    /// Out-ports feeding each component.
    feeders: HashMap<&'a str, Vec<&'a PortRef>>,
    memo: HashMap<&'a PortRef, Prediction>,
    on_stack: Vec<&'a PortRef>,
}

impl<'a> Predictor<'a> {
    /// Latency of messages leaving `port`. Ports without an offered latency are unknown.
    fn predict(&mut self, port: &'a PortRef) -> Result<Prediction, AnalysisError> {
        let Some(&hop) = self.offered.get(port) else {
            return Ok(Prediction {
                min: 0,
                max: Extent::Unknown,
            });
        };
        if let Some(p) = self.memo.get(port) {
            return Ok(*p);
        }
        if let Some(at) = self.on_stack.iter().position(|p| *p == port) {
            let mut cycle: Vec<String> = self.on_stack[at..].iter().map(ToString::to_string).collect();
            cycle.push(port.to_string());
            return Err(AnalysisError::QosCycle(cycle));
        }
        self.on_stack.push(port);
        let mut upstream = Prediction::ZERO;
        let feeders: Vec<&'a PortRef> = self
            .feeders
            .get(port.component.as_str())
            .map(|fs| fs.iter().copied().filter(|f| self.offered.contains_key(f)).collect())
            .unwrap_or_default();
        for f in feeders {
            upstream = upstream.converge(self.predict(f)?);
        }
        self.on_stack.pop();
        let p = upstream.then(hop);
        self.memo.insert(port, p);
        Ok(p)
    }
}

/// One verdict per connector entering a port with a latency requirement.
pub fn check_qos(arch: &Architecture) -> Result<Vec<Verdict>, AnalysisError> {
    require_well_formed(arch)?;
    let mut offered = HashMap::new();
    let mut required: HashMap<&PortRef, u64> = HashMap::new();
    for c in &arch.contracts {
        if let Contract::Qos(q) = c {
            if let Some(o) = q.offered_latency {
                offered.insert(&q.port, o);
            }
            if let Some(r) = q.required_max_latency {
                required.insert(&q.port, r);
            }
        }
    }
    let mut feeders: HashMap<&str, Vec<&PortRef>> = HashMap::new();
    for k in &arch.connectors {
        feeders.entry(k.target.component.as_str()).or_default().push(&k.source);
    }
    let mut predictor = Predictor {
        offered,
        feeders,
        memo: HashMap::new(),
        on_stack: Vec::new(),
    };

    // Cycles are an error whether or not a requirement observes them.
    let mut annotated: Vec<&PortRef> = predictor.offered.keys().copied().collect();
    annotated.sort();
    for port in annotated {
        predictor.predict(port)?;
    }

    let mut verdicts = Vec::new();
    for k in &arch.connectors {
        let Some(&bound) = required.get(&k.target) else { continue };
        let p = predictor.predict(&k.source)?;
        let verdict = if p.min > bound {
            Verdict::incompatible(
                AnalysisKind::Qos,
                &k.id,
                format!("predicted latency of at least {} ms exceeds {bound} ms", p.min),
            )
        } else {
            match p.max {
                Extent::Finite(max) if max <= bound => Verdict::compatible(AnalysisKind::Qos, &k.id),
                _ => Verdict::partial(
                    AnalysisKind::Qos,
                    &k.id,
                    vec![ResidualPredicate {
                        connector: k.id.clone(),
                        variable: Variable::Latency,
                        test: Test::LessOrEqual(bound),
                    }],
                ),
            }
        };
        verdicts.push(verdict);
    }
    Ok(verdicts)
}
