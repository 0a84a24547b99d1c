use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Result};
use calico::analysis::{analyze_with, AnalysisOptions};
use calico::debugger::{run_checked, ActionContext, CheckResult, DebugRun};
use calico::model::Component;
use calico::plan::{plan, weave};
use calico::runtime::{parse_scripts, trace_to_jsonl, RunningSystem, TraceEntry};
use calico::sync::{evolve, EvolveOutcome, ModelDiff};
use calico::AnalysisReport;
use serde_json::{json, Value};

use crate::workspace::{InputError, Workspace};

/// What a command hands back to `main`: an exit code plus both renderings.
#[derive(Debug)]
pub struct Output {
    pub code: u8,
    pub human: String,
    pub json: Value,
}

impl Output {
    fn new(code: u8, human: String, json: Value) -> Self {
        Output { code, human, json }
    }
}

fn analysis_options(ws: &Workspace) -> Result<AnalysisOptions> {
    let mut options = AnalysisOptions::default();
    if let Some(cap) = ws.config()?.state_cap {
        options.state_cap = cap;
    }
    Ok(options)
}

fn analysis_failure(path: &Path, e: impl std::fmt::Display) -> Output {
    let msg = format!("{}: analysis failed: {e}", path.display());
    Output::new(1, msg.clone(), json!({ "error": msg }))
}

pub fn check(ws: &Workspace, model: &Path) -> Result<Output> {
    let (path, arch) = ws.load_model(model)?;
    let report = match analyze_with(&arch, analysis_options(ws)?) {
        Ok(r) => r,
        Err(e) => return Ok(analysis_failure(&path, e)),
    };
    let code = if report.gate_passed { 0 } else { 1 };
    Ok(Output::new(code, report.to_string(), serde_json::to_value(&report)?))
}

fn skeleton(component: &Component, script: &str) -> String {
    let outs: Vec<&str> = component.out_ports().map(|p| p.name.as_str()).collect();
    let mut text = format!("// Behavior of {}. Fill in the business logic.\nscript {script} {{\n", component.name);
    for p in component.in_ports() {
        let hint = match outs.first() {
            Some(o) => format!("emit {o} size = size type = type"),
            None => "consume".to_string(),
        };
        let _ = writeln!(text, "  on {}  // {hint}", p.name);
    }
    for p in component.out_ports() {
        let _ = writeln!(text, "  // source {} size = 0 type = {}", p.name, p.data_type);
    }
    text.push_str("}\n");
    text
}

pub fn scaffold(ws: &Workspace, model: &Path) -> Result<Output> {
    let (_, arch) = ws.load_model(model)?;
    let existing: Vec<String> = ws.scripts()?.into_iter().map(|s| s.name).collect();
    let dir = ws.scripts_dir();
    let mut written = Vec::new();
    let mut kept = Vec::new();
    for c in &arch.components {
        if c.ports.is_empty() {
            continue;
        }
        let name = c.script.clone().unwrap_or_else(|| c.name.clone());
        let path = dir.join(format!("{name}.script"));
        if path.exists() || existing.contains(&name) {
            kept.push(name);
            continue;
        }
        fs::create_dir_all(&dir)?;
        let text = skeleton(c, &name);
        debug_assert!(parse_scripts(&text).is_ok());
        fs::write(&path, text)?;
        written.push(path.display().to_string());
    }
    let human = if written.is_empty() {
        "every component already has a script; nothing written".to_string()
    } else {
        written.iter().map(|p| format!("wrote {p}")).collect::<Vec<_>>().join("\n")
    };
    Ok(Output::new(0, human, json!({ "written": written, "existing": kept })))
}

fn gate_refusal(action: &str, report: &AnalysisReport) -> Output {
    let human = format!("{action} refused: analysis gate not passed\n{report}");
    Output::new(1, human, json!({ "refused": true, "report": report }))
}

pub fn deploy(ws: &Workspace, model: &Path, seed: Option<u64>) -> Result<Output> {
    let (path, arch) = ws.load_model(model)?;
    let config = ws.config()?;
    let seed = seed.or(config.seed).unwrap_or(0);
    let report = match analyze_with(&arch, analysis_options(ws)?) {
        Ok(r) => r,
        Err(e) => return Ok(analysis_failure(&path, e)),
    };
    if !report.gate_passed {
        return Ok(gate_refusal("deploy", &report));
    }
    let scripts = ws.scripts()?;
    let debug_plan = plan(&report, &config.actions)?;
    let deployment = weave(&debug_plan, &arch)?;
    let (sys, construction) = RunningSystem::instantiate(&arch, &deployment, scripts, seed)?;

    ws.save_system(&sys)?;
    fs::write(ws.construction_path(), serde_json::to_string_pretty(&construction)?)?;
    fs::write(ws.trace_path(), "")?;

    let view = sys.view();
    let summary = format!(
        "deployed {} with seed {seed}: {} components, {} connectors, {} probes, {} checks",
        arch.name,
        view.components.len(),
        view.connectors.len(),
        view.probes.len(),
        sys.plan().checks.len()
    );
    let mut body = format!("Model `{}`, seed {seed}.\n\n```\n{report}\n```\n\nConstruction log:\n\n", path.display());
    for op in &construction {
        let _ = writeln!(body, "- {op}");
    }
    ws.append_section(&format!("deploy {}", arch.name), &body)?;

    let human = format!("{report}\n{summary}");
    Ok(Output::new(
        0,
        human,
        json!({
            "model": arch.name,
            "seed": seed,
            "report": report,
            "plan": sys.plan(),
            "construction": construction,
        }),
    ))
}

fn run_body(scenario: &str, run: &DebugRun) -> String {
    let deliveries = run.trace.iter().filter(|e| matches!(e, TraceEntry::Message(_))).count();
    let events = run.trace.iter().filter(|e| e.as_event().is_some()).count();
    let violations = run.violations().count();
    let errors = run
        .outcomes
        .iter()
        .filter(|o| matches!(o.result, CheckResult::EvalError(_)))
        .count();
    let mut body = format!(
        "Scenario `{scenario}`: {deliveries} deliveries, {events} events, {} checks, {violations} violations, {errors} evaluation errors.\n",
        run.outcomes.len()
    );
    let notes: Vec<&str> = run.notifications().collect();
    if !notes.is_empty() {
        body.push_str("\nNotifications:\n\n");
        for n in notes {
            let _ = writeln!(body, "- {n}");
        }
    }
    for o in &run.outcomes {
        if let CheckResult::EvalError(m) = &o.result {
            let _ = writeln!(body, "- {} at tick {}: evaluation error: {m}", o.check, o.tick);
        }
    }
    for e in &run.evolutions {
        let verdict = if e.accepted { "accepted" } else { "rejected" };
        let _ = write!(
            body,
            "\nReconfiguration `{}` at tick {}: {verdict}. The scenario was quiesced, evolved and resumed from the current tick.\n\n```\n{}\n```\n",
            e.script, e.tick, e.detail
        );
        if let Some(d) = &e.diff {
            body.push_str(&render_diff(d));
        }
    }
    body
}

pub fn run(ws: &Workspace, scenario: &str) -> Result<Output> {
    let mut sys = ws.load_system()?;
    let sc = ws.scenario(scenario)?;
    let config = ws.config()?;
    let scripts = ws.scripts()?;
    let ctx = ActionContext {
        root: ws.root.clone(),
        reconfigurations: ws.reconfigurations(&scripts)?,
        policy: config.actions,
    };
    let result = run_checked(&mut sys, &sc, &ctx)?;
    ws.append_trace(&trace_to_jsonl(&result.trace))?;
    ws.save_system(&sys)?;
    let body = run_body(&sc.name, &result);
    ws.append_section(&format!("run {}", sc.name), &body)?;

    let violations: Vec<_> = result.violations().collect();
    let code = if violations.is_empty() { 0 } else { 1 };
    Ok(Output::new(
        code,
        body.trim_end().to_string(),
        json!({
            "scenario": sc.name,
            "clock": sys.clock(),
            "violations": violations.len(),
            "outcomes": result.outcomes,
            "evolutions": result.evolutions,
        }),
    ))
}

pub fn events(ws: &Workspace, tail: Option<usize>) -> Result<Output> {
    ws.load_system()?;
    let text = fs::read_to_string(ws.trace_path()).unwrap_or_default();
    let lines: Vec<&str> = text.lines().collect();
    let start = tail.map_or(0, |n| lines.len().saturating_sub(n));
    let shown = &lines[start..];
    let entries = shown
        .iter()
        .map(|l| serde_json::from_str::<Value>(l))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| anyhow!("corrupt trace {}: {e}", ws.trace_path().display()))?;
    Ok(Output::new(0, shown.join("\n"), Value::Array(entries)))
}

pub fn status(ws: &Workspace) -> Result<Output> {
    let sys = ws.load_system()?;
    let view = sys.view();
    let mut human = format!(
        "model {}: {}, clock {}, seed {}, {} in flight\n\ncomponents ({}):\n",
        sys.model().name,
        sys.status(),
        sys.clock(),
        sys.seed(),
        sys.in_flight(),
        view.components.len()
    );
    for c in &view.components {
        let state = sys.instance(&c.name).map(|i| i.state).unwrap_or_default();
        let _ = writeln!(human, "  {} (received {}, emitted {})", c.name, state.received, state.emitted);
    }
    let _ = writeln!(human, "\nbindings ({}):", view.connectors.len());
    for k in &view.connectors {
        let _ = writeln!(human, "  {} : {} -> {}", k.id, k.source, k.target);
    }
    let _ = write!(human, "\nprobes ({}):", view.probes.len());
    for p in &view.probes {
        let checks: Vec<&str> = sys.plan().checks_for(&p.id).map(|c| c.id.as_str()).collect();
        let _ = write!(human, "\n  {} on {} [{}]", p.id, p.connector, checks.join(", "));
    }
    let states: serde_json::Map<String, Value> = sys
        .instances()
        .map(|i| (i.component.name.clone(), json!(i.state)))
        .collect();
    Ok(Output::new(
        0,
        human,
        json!({
            "model": sys.model().name,
            "status": sys.status(),
            "clock": sys.clock(),
            "seed": sys.seed(),
            "in_flight": sys.in_flight(),
            "components": view.components,
            "connectors": view.connectors,
            "probes": view.probes,
            "instances": states,
        }),
    ))
}

fn render_diff(d: &ModelDiff) -> String {
    if d.is_empty() {
        return "empty diff\n".to_string();
    }
    d.ops.iter().map(|op| format!("- {op}\n")).collect()
}

pub fn evolve_cmd(ws: &Workspace, model: &Path) -> Result<Output> {
    let (path, arch) = ws.load_model(model)?;
    let mut sys = ws.load_system()?;
    let scripts = ws.scripts()?;
    let config = ws.config()?;
    match evolve(&mut sys, &arch, scripts, &config.actions) {
        EvolveOutcome::Accepted {
            diff,
            report,
            plan,
            drained,
        } => {
            ws.append_trace(&trace_to_jsonl(&drained))?;
            ws.save_system(&sys)?;
            let body = format!(
                "Evolution to `{}` accepted.\n\n```\n{report}\n```\n\nDiff:\n\n{}",
                path.display(),
                render_diff(&diff)
            );
            ws.append_section(&format!("evolve {}", arch.name), &body)?;
            let human = format!("accepted\n{report}\n{}", render_diff(&diff).trim_end());
            Ok(Output::new(
                0,
                human,
                json!({ "accepted": true, "diff": diff, "report": report, "plan": plan }),
            ))
        }
        EvolveOutcome::Rejected(why) => {
            let body = format!("Evolution to `{}` rejected; the runtime is unchanged.\n\n```\n{why}\n```\n", path.display());
            ws.append_section(&format!("evolve {}", arch.name), &body)?;
            Ok(Output::new(
                1,
                format!("rejected: {why}"),
                json!({ "accepted": false, "reason": why.to_string() }),
            ))
        }
    }
}

/// Exit code for an error that escaped a command.
pub fn error_code(e: &anyhow::Error) -> u8 {
    if e.is::<InputError>() {
        2
    } else {
        match e.downcast_ref::<calico::runtime::RuntimeError>() {
            Some(calico::runtime::RuntimeError::GateFailed(_)) => 1,
            _ => 2,
        }
    }
}
