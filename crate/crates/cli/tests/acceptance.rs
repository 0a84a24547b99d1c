//! Acceptance criteria, one PASS/FAIL line each. Oracles are written here
//! from first principles and never call the code path they judge.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use calico::analysis::{analyze, check_behavioral, AnalysisKind, Test, Variable, VerdictKind};
use calico::model::{canonicalize, ActionKind, Architecture, Contract, Direction, Port, ProcessTerm};
use calico::plan::{plan, weave, ActionPolicy};
use calico::runtime::{parse_scenarios, RunningSystem};
use calico::sync::{apply, diff, evolve, EvolveOutcome};
use calico::testing::{mutate, pipeline, pipeline_scripts, random_architecture, random_dataflow_case, random_protocol_system};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

// Thresholds fixed by the acceptance criteria.
const WALKTHROUGH_BUDGET: Duration = Duration::from_secs(5);
const BEHAVIORAL_SYSTEMS: usize = 200;
const BEHAVIORAL_MAX_ACTIONS: usize = 6;
const BEHAVIORAL_BUDGET: Duration = Duration::from_secs(30);
const DATAFLOW_CASES: usize = 500;
const DIFF_PAIRS: usize = 500;
const DIFF_MAX_COMPONENTS: usize = 30;
const PIPELINE_COMPONENTS: usize = 1000;
const ANALYZE_BUDGET: Duration = Duration::from_secs(10);
const EVOLVE_BUDGET: Duration = Duration::from_secs(1);
const PDA_MAX_SIZE: u64 = 10_000_000;

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- helpers

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/phr")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dest);
        } else {
            fs::copy(entry.path(), dest).unwrap();
        }
    }
}

fn phr_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&corpus(), dir.path());
    dir
}

fn calico(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calico"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .env_remove("CALICO_WORKSPACE")
        .output()
        .unwrap()
}

fn calico_json(ws: &Path, args: &[&str]) -> (i32, Value) {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = calico(ws, &all);
    let value = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap_or(-1), value)
}

fn array(v: &Value) -> &[Value] {
    v.as_array().map(Vec::as_slice).unwrap_or(&[])
}

fn phr_model(name: &str) -> Architecture {
    calico::parse(&fs::read_to_string(corpus().join(name)).unwrap()).unwrap()
}

// ------------------------------------------------------ 1. PHR walkthrough

fn criterion_1() -> Verdict {
    let ws = phr_workspace();
    let p = ws.path();
    let start = Instant::now();

    let (code, report) = calico_json(p, &["check", "phr.adl"]);
    ensure!(code == 0, "check phr.adl exited {code}");
    let partial: Vec<&Value> = array(&report["verdicts"]).iter().filter(|v| v["kind"] == "partially_compatible").collect();
    ensure!(partial.len() == 1, "{} partially compatible verdicts", partial.len());
    ensure!(partial[0]["subject"] == "toPda", "partial verdict on {}", partial[0]["subject"]);
    let residuals = array(&partial[0]["residuals"]);
    let size_ok = residuals
        .iter()
        .any(|r| r["variable"] == "size" && r["test"] == "le" && r["bound"] == PDA_MAX_SIZE);
    let type_ok = residuals.iter().any(|r| {
        r["variable"] == "type"
            && r["test"] == "member_of"
            && serde_json::from_value::<BTreeSet<String>>(r["bound"].clone()).ok() == Some(["jpg".into(), "txt".into()].into())
    });
    ensure!(residuals.len() == 2 && size_ok && type_ok, "residuals {residuals:?}");

    let (code, _) = calico_json(p, &["scaffold", "phr.adl"]);
    ensure!(code == 0, "scaffold exited {code}");
    let (code, _) = calico_json(p, &["--seed", "42", "deploy", "phr.adl"]);
    ensure!(code == 0, "deploy exited {code}");

    let (code, run) = calico_json(p, &["run", "druggist"]);
    ensure!(code == 0 && run["violations"] == 0, "druggist: exit {code}, {} violations", run["violations"]);

    let (code, run) = calico_json(p, &["run", "radiologist"]);
    let violations: Vec<&Value> = array(&run["outcomes"]).iter().filter(|o| o["result"]["result"] == "violation").collect();
    ensure!(code == 1 && violations.len() == 1, "radiologist: exit {code}, {} violations", violations.len());
    ensure!(violations[0]["predicate"]["variable"] == "size", "violation on {}", violations[0]["predicate"]["variable"]);

    let (code, evolved) = calico_json(p, &["evolve", "phr-with-converter.adl"]);
    ensure!(code == 0 && evolved["accepted"] == true, "evolve exited {code}");
    let verdicts = array(&evolved["report"]["verdicts"]);
    ensure!(
        verdicts.iter().all(|v| v["kind"] == "compatible"),
        "evolved model still has non-compatible verdicts"
    );
    // The connector now feeding the PDA is judged statically compatible.
    ensure!(
        verdicts
            .iter()
            .any(|v| v["analysis"] == "dataflow" && v["subject"] == "convertedToPda" && v["kind"] == "compatible"),
        "no compatible dataflow verdict on convertedToPda"
    );
    let (_, status) = calico_json(p, &["status"]);
    ensure!(array(&status["probes"]).is_empty(), "probes left: {}", status["probes"]);

    let (code, run) = calico_json(p, &["run", "radiologist"]);
    ensure!(code == 0 && run["violations"] == 0, "radiologist after evolve: exit {code}, {} violations", run["violations"]);

    let elapsed = start.elapsed();
    ensure!(elapsed < WALKTHROUGH_BUDGET, "took {elapsed:?}");
    Ok(format!("walkthrough via CLI in {elapsed:.2?}"))
}

// ------------------------------------------------------- 2. structural gate

fn criterion_2() -> Verdict {
    let bad = phr_model("phr-bad-auth.adl");
    let report = analyze(&bad).map_err(|e| e.to_string())?;
    ensure!(!report.gate_passed, "gate passed");
    let incompatible: Vec<_> = report.incompatible().collect();
    ensure!(
        incompatible.len() == 1
            && incompatible[0].analysis == AnalysisKind::Structural
            && bad
                .connector(&incompatible[0].subject)
                .is_some_and(|k| k.source.component == "Client" && k.target.to_string() == "SessionServer.getTicket"),
        "incompatible verdicts: {incompatible:?}"
    );

    // CLI: deploy refuses; a deployed runtime survives a refused deploy and evolve.
    let ws = phr_workspace();
    let p = ws.path();
    ensure!(calico(p, &["deploy", "phr-bad-auth.adl"]).status.code() == Some(1), "deploy of bad model not refused");
    ensure!(!p.join(".calico/state.json").exists(), "refused deploy left state behind");
    calico(p, &["deploy", "phr.adl"]);
    calico(p, &["run", "druggist"]);
    let state = fs::read(p.join(".calico/state.json")).unwrap();
    let status = calico(p, &["status"]).stdout;
    ensure!(calico(p, &["deploy", "phr-bad-auth.adl"]).status.code() == Some(1), "second deploy not refused");
    ensure!(calico(p, &["evolve", "phr-bad-auth.adl"]).status.code() == Some(1), "evolve not refused");
    ensure!(fs::read(p.join(".calico/state.json")).unwrap() == state, "state file changed");
    ensure!(calico(p, &["status"]).stdout == status, "status output changed");

    // Library: the in-memory runtime is bit-identical too.
    let good = phr_model("phr.adl");
    let r = analyze(&good).unwrap();
    let cfg = weave(&plan(&r, &ActionPolicy::default()).unwrap(), &good).unwrap();
    let scripts = load_scripts();
    let (mut sys, _) = RunningSystem::instantiate(&good, &cfg, scripts.clone(), 42).unwrap();
    ensure!(
        RunningSystem::instantiate(&bad, &cfg, scripts.clone(), 42).is_err(),
        "instantiate accepted the bad model"
    );
    let before = serde_json::to_vec(&sys).unwrap();
    let outcome = evolve(&mut sys, &bad, scripts, &ActionPolicy::default());
    ensure!(!outcome.is_accepted(), "library evolve accepted the bad model");
    ensure!(serde_json::to_vec(&sys).unwrap() == before, "runtime bytes changed");
    Ok("deploy and evolve refused, state byte-identical".into())
}

fn load_scripts() -> Vec<calico::runtime::BehaviorScript> {
    let mut out = Vec::new();
    let mut paths: Vec<_> = fs::read_dir(corpus().join("scripts")).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    for path in paths {
        out.extend(calico::runtime::parse_scripts(&fs::read_to_string(path).unwrap()).unwrap());
    }
    out
}

// ---------------------------------------------------- 3. behavioral oracle

/// Protocol term local to the oracle, hashable so residuals can be states.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Term {
    Act(String, bool),
    Seq(Box<Term>, Box<Term>),
    Alt(Box<Term>, Box<Term>),
    Star(Box<Term>),
    Skip,
}

fn lower(t: &ProcessTerm) -> Term {
    match t {
        ProcessTerm::Action { port, kind } => Term::Act(port.clone(), *kind == ActionKind::Send),
        ProcessTerm::Seq { first, then } => Term::Seq(Box::new(lower(first)), Box::new(lower(then))),
        ProcessTerm::Choice { left, right } => Term::Alt(Box::new(lower(left)), Box::new(lower(right))),
        ProcessTerm::Star { body } => Term::Star(Box::new(lower(body))),
        ProcessTerm::Skip => Term::Skip,
    }
}

/// A residual is a stack of terms to be run in sequence.
type Residual = Vec<Term>;

fn nullable(t: &Term) -> bool {
    match t {
        Term::Act(..) => false,
        Term::Skip | Term::Star(_) => true,
        Term::Seq(a, b) => nullable(a) && nullable(b),
        Term::Alt(a, b) => nullable(a) || nullable(b),
    }
}

/// Every `(port, send?, residual)` step the stack can take first
/// (partial derivatives, one per action occurrence).
fn steps(stack: &[Term], out: &mut Vec<(String, bool, Residual)>) {
    let Some((head, rest)) = stack.split_first() else { return };
    match head {
        Term::Act(port, send) => out.push((port.clone(), *send, rest.to_vec())),
        Term::Skip => steps(rest, out),
        Term::Seq(a, b) => {
            let mut s = vec![(**a).clone(), (**b).clone()];
            s.extend_from_slice(rest);
            steps(&s, out);
        }
        Term::Alt(a, b) => {
            for branch in [a, b] {
                let mut s = vec![(**branch).clone()];
                s.extend_from_slice(rest);
                steps(&s, out);
            }
        }
        Term::Star(body) => {
            let mut inner = Vec::new();
            steps(std::slice::from_ref(&**body), &mut inner);
            for (port, send, mut r) in inner {
                r.push(head.clone());
                r.extend_from_slice(rest);
                out.push((port, send, r));
            }
            steps(rest, out);
        }
    }
}

/// Brute-force deadlock search over the explicit synchronized product.
fn oracle_deadlock(arch: &Architecture) -> bool {
    let mut comps: Vec<(String, Term)> = arch
        .contracts
        .iter()
        .filter_map(|c| match c {
            Contract::Behavioral(b) => Some((b.component.clone(), lower(&b.protocol))),
            _ => None,
        })
        .collect();
    comps.sort_by(|a, b| a.0.cmp(&b.0));
    if comps.is_empty() {
        return false;
    }
    let index: HashMap<&str, usize> = comps.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();

    fn mentions(t: &Term, port: &str, send: bool) -> bool {
        match t {
            Term::Act(p, s) => p == port && *s == send,
            Term::Seq(a, b) | Term::Alt(a, b) => mentions(a, port, send) || mentions(b, port, send),
            Term::Star(a) => mentions(a, port, send),
            Term::Skip => false,
        }
    }
    // (sender, send port) -> (receiver, receive port) for connectors both ends use.
    let mut partner: HashMap<(usize, String), (usize, String)> = HashMap::new();
    let mut synced_in: HashSet<(usize, String)> = HashSet::new();
    for k in &arch.connectors {
        let (Some(&s), Some(&t)) = (index.get(k.source.component.as_str()), index.get(k.target.component.as_str())) else {
            continue;
        };
        if s != t && mentions(&comps[s].1, &k.source.port, true) && mentions(&comps[t].1, &k.target.port, false) {
            partner.insert((s, k.source.port.clone()), (t, k.target.port.clone()));
            synced_in.insert((t, k.target.port.clone()));
        }
    }

    let initial: Vec<Residual> = comps.iter().map(|(_, t)| vec![t.clone()]).collect();
    let mut seen = HashSet::from([initial.clone()]);
    let mut queue = VecDeque::from([initial]);
    while let Some(state) = queue.pop_front() {
        let moves: Vec<Vec<(String, bool, Residual)>> = state
            .iter()
            .map(|r| {
                let mut m = Vec::new();
                steps(r, &mut m);
                m
            })
            .collect();
        let mut next_states = Vec::new();
        for (i, ms) in moves.iter().enumerate() {
            for (port, send, r) in ms {
                if *send {
                    if let Some((t, tport)) = partner.get(&(i, port.clone())) {
                        for (p2, s2, r2) in &moves[*t] {
                            if !*s2 && p2 == tport {
                                let mut n = state.clone();
                                n[i] = r.clone();
                                n[*t] = r2.clone();
                                next_states.push(n);
                            }
                        }
                        continue;
                    }
                } else if synced_in.contains(&(i, port.clone())) {
                    continue;
                }
                let mut n = state.clone();
                n[i] = r.clone();
                next_states.push(n);
            }
        }
        if next_states.is_empty() && !state.iter().all(|r| r.iter().all(nullable)) {
            return true;
        }
        for n in next_states {
            if seen.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    false
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut deadlocks = 0;
    for n in 0..BEHAVIORAL_SYSTEMS {
        let arch = random_protocol_system(&mut rng, BEHAVIORAL_MAX_ACTIONS);
        let expected = oracle_deadlock(&arch);
        let verdict = check_behavioral(&arch).map_err(|e| format!("system {n}: {e}"))?;
        let got = matches!(verdict.kind, VerdictKind::Incompatible { .. });
        ensure!(got == expected, "system {n}: analyzer deadlock={got}, oracle deadlock={expected}\n{arch:#?}");
        deadlocks += usize::from(expected);
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < BEHAVIORAL_BUDGET, "took {elapsed:?}");
    ensure!(deadlocks > 0 && deadlocks < BEHAVIORAL_SYSTEMS, "degenerate sample: {deadlocks} deadlocks");
    Ok(format!("{BEHAVIORAL_SYSTEMS}/{BEHAVIORAL_SYSTEMS} agree ({deadlocks} deadlocking) in {elapsed:.2?}"))
}

// ------------------------------------------------------ 4. dataflow oracle

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tally = [0usize; 3];
    for n in 0..DATAFLOW_CASES {
        let case = random_dataflow_case(&mut rng);
        let accepts = |size: u64, ty: &str| {
            case.max_size.is_none_or(|m| size <= m) && case.allowed.as_ref().is_none_or(|a| a.contains(ty))
        };
        let messages: Vec<(u64, &String)> = (case.lo..=case.hi).flat_map(|s| case.types.iter().map(move |t| (s, t))).collect();
        let passing = messages.iter().filter(|(s, t)| accepts(*s, t)).count();
        let expected = if passing == messages.len() {
            0
        } else if passing == 0 {
            2
        } else {
            1
        };
        for relay in [false, true] {
            let report = analyze(&case.architecture(relay)).map_err(|e| format!("case {n}: {e}"))?;
            let v = report
                .of_kind(AnalysisKind::Dataflow)
                .find(|v| v.subject == "k")
                .ok_or(format!("case {n}: no dataflow verdict on k"))?;
            let got = match &v.kind {
                VerdictKind::Compatible => 0,
                VerdictKind::PartiallyCompatible { .. } => 1,
                VerdictKind::Incompatible { .. } => 2,
            };
            ensure!(got == expected, "case {n} (relay {relay}): {case:?}: analyzer {got}, oracle {expected}");
            if got == 1 {
                // The residual checks must accept exactly the accepted messages.
                for (s, t) in &messages {
                    let residual_ok = v.residuals().iter().all(|r| match (&r.variable, &r.test) {
                        (Variable::Size, Test::LessOrEqual(b)) => s <= b,
                        (Variable::Type, Test::MemberOf(set)) => set.contains(*t),
                        _ => false,
                    });
                    ensure!(residual_ok == accepts(*s, t), "case {n}: residuals misjudge ({s}, {t})");
                }
            }
        }
        tally[expected] += 1;
    }
    ensure!(tally.iter().all(|&c| c > 0), "degenerate sample {tally:?}");
    Ok(format!(
        "{DATAFLOW_CASES}/{DATAFLOW_CASES} agree, direct and relayed (compatible {}, partial {}, incompatible {})",
        tally[0], tally[1], tally[2]
    ))
}

// ---------------------------------------------------- 5. diff round trip

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ops = 0;
    for n in 0..DIFF_PAIRS {
        let old = random_architecture(&mut rng, DIFF_MAX_COMPONENTS, false);
        let new = mutate(&mut rng, &old, DIFF_MAX_COMPONENTS);
        ensure!(new.components.len() <= DIFF_MAX_COMPONENTS, "pair {n}: {} components", new.components.len());
        let d = diff(&old, &new);
        ops += d.ops.len();
        let applied = apply(&old, &d).map_err(|e| format!("pair {n}: {e:?}"))?;
        let lhs = canonicalize(&applied).map_err(|e| format!("pair {n}: {e}"))?;
        let rhs = canonicalize(&new).map_err(|e| format!("pair {n}: {e}"))?;
        ensure!(lhs == rhs, "pair {n}: apply(old, diff) differs from new");
        ensure!(diff(&old, &old).is_empty() && diff(&new, &new).is_empty(), "pair {n}: diff(m, m) not empty");
    }
    Ok(format!("{DIFF_PAIRS}/{DIFF_PAIRS} round trips, {ops} ops total"))
}

// ------------------------------------------------------- 6. determinism

fn traces(seed: &str) -> Vec<u8> {
    let ws = phr_workspace();
    let p = ws.path();
    calico(p, &["--seed", seed, "deploy", "phr.adl"]);
    for sc in ["druggist", "radiologist", "desk"] {
        calico(p, &["run", sc]);
    }
    fs::read(p.join(".calico/trace.jsonl")).unwrap()
}

fn criterion_6() -> Verdict {
    let a = traces("42");
    let b = traces("42");
    ensure!(!a.is_empty(), "empty trace");
    ensure!(a == b, "traces differ for the same seed");
    let other = traces("43");
    ensure!(other != a, "seed has no effect on the trace");
    Ok(format!("{} trace lines byte-identical", a.iter().filter(|&&c| c == b'\n').count()))
}

// ---------------------------------------------------- 7. desk-scale proxy

fn criterion_7() -> Verdict {
    let arch = pipeline(PIPELINE_COMPONENTS);
    ensure!(
        arch.components.len() == PIPELINE_COMPONENTS && arch.connectors.len() == PIPELINE_COMPONENTS - 1,
        "pipeline shape"
    );
    let start = Instant::now();
    let report = analyze(&arch).map_err(|e| e.to_string())?;
    let analyze_time = start.elapsed();
    ensure!(report.gate_passed, "pipeline fails its gate:\n{report}");
    ensure!(analyze_time < ANALYZE_BUDGET, "analyze took {analyze_time:?}");

    let cfg = weave(&plan(&report, &ActionPolicy::default()).unwrap(), &arch).unwrap();
    let (mut sys, _) = RunningSystem::instantiate(&arch, &cfg, pipeline_scripts(), 7).map_err(|e| e.to_string())?;
    let warmup = parse_scenarios("scenario w { at 0 stim S0000.o size = 1 type = txt }").unwrap().remove(0);
    sys.run_scenario(&warmup).map_err(|e| e.to_string())?;

    let mut target = arch.clone();
    let changed = target.components.iter_mut().find(|c| c.name == "S0501").unwrap();
    changed.ports.push(Port::new("spare", Direction::Out, "D"));
    let start = Instant::now();
    let outcome = evolve(&mut sys, &target, pipeline_scripts(), &ActionPolicy::default());
    let evolve_time = start.elapsed();
    let EvolveOutcome::Accepted { diff, .. } = outcome else {
        return Err(format!("evolve rejected: {outcome:?}"));
    };
    let touched: BTreeSet<&str> = diff
        .ops
        .iter()
        .filter(|op| matches!(op, calico::sync::ReconfigOp::AddComponent(_) | calico::sync::ReconfigOp::RemoveComponent(_)))
        .map(|op| op.subject())
        .collect();
    ensure!(touched == BTreeSet::from(["S0501"]), "evolve touched components {touched:?}");
    ensure!(sys.mirrors(&target), "runtime does not mirror the evolved model");
    ensure!(evolve_time < EVOLVE_BUDGET, "evolve took {evolve_time:?}");
    Ok(format!(
        "{PIPELINE_COMPONENTS} components: analyze {analyze_time:.2?}, single-component evolve {evolve_time:.2?}"
    ))
}

// ----------------------------------------------------- 8. check soundness

/// Re-applies a logged predicate to logged captured values.
fn oracle_holds(predicate: &Value, captured: &Value) -> Result<bool, String> {
    let var = predicate["variable"].as_str().ok_or("predicate without variable")?;
    let value = &captured[var];
    match predicate["test"].as_str() {
        Some("le") => {
            let bound = predicate["bound"].as_u64().ok_or("bad bound")?;
            let v = value.as_u64().ok_or(format!("{var} not an integer: {value}"))?;
            Ok(v <= bound)
        }
        Some("member_of") => {
            let set = array(&predicate["bound"]);
            let v = value.as_str().ok_or(format!("{var} not text: {value}"))?;
            Ok(set.iter().any(|s| s == v))
        }
        other => Err(format!("unknown test {other:?}")),
    }
}

fn criterion_8() -> Verdict {
    let ws = phr_workspace();
    let p = ws.path();
    let mut scenarios: Vec<String> = Vec::new();
    for entry in fs::read_dir(p.join("scenarios")).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        scenarios.extend(parse_scenarios(&text).unwrap().into_iter().map(|s| s.name));
    }
    scenarios.sort();
    calico(p, &["--seed", "8", "deploy", "phr.adl"]);
    let (mut checked, mut violations, mut discrepancies) = (0, 0, Vec::new());
    for sc in &scenarios {
        let (_, run) = calico_json(p, &["run", sc]);
        for o in array(&run["outcomes"]) {
            let expected = match o["result"]["result"].as_str() {
                Some("pass") => true,
                Some("violation") => false,
                _ => continue,
            };
            checked += 1;
            violations += usize::from(!expected);
            match oracle_holds(&o["predicate"], &o["captured"]) {
                Ok(h) if h == expected => {}
                other => discrepancies.push(format!("{sc}/{}: logged {expected}, re-evaluated {other:?}", o["check"])),
            }
        }
    }
    ensure!(discrepancies.is_empty(), "{}", discrepancies.join("; "));
    ensure!(checked > violations && violations > 0, "degenerate sample: {checked} checks, {violations} violations");
    Ok(format!(
        "{} scenarios, {checked} outcomes ({violations} violations), 0 discrepancies",
        scenarios.len()
    ))
}

fn main() -> ExitCode {
    // A bare `--list` or a filter from `cargo test <name>` must not run the suite twice.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("PHR end-to-end walkthrough", criterion_1),
        ("structural gate refuses deploy and evolve", criterion_2),
        ("behavioral verdicts match product BFS oracle", criterion_3),
        ("dataflow verdicts match exhaustive enumeration", criterion_4),
        ("diff round trip", criterion_5),
        ("same seed, byte-identical JSONL", criterion_6),
        ("1000-component pipeline analyze and evolve", criterion_7),
        ("runtime check soundness", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
