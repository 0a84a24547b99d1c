use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use calico::analysis::{analyze, AnalysisKind, Test, Variable};
use calico::debugger::{run_checked, ActionContext, ActionRecord, CheckResult, Reconfiguration};
use calico::plan::{plan, weave, Action, ActionPolicy};
use calico::runtime::{parse_scenarios, parse_scripts, BehaviorScript, RunningSystem, Scenario, Status, TraceEntry, Value};
use calico::sync::{evolve, EvolveOutcome, ReconfigOp};
use calico::{parse, Architecture};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/phr")
}

fn model(name: &str) -> Architecture {
    parse(&std::fs::read_to_string(corpus().join(name)).unwrap()).unwrap()
}

fn scripts() -> Vec<BehaviorScript> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(corpus().join("scripts")).unwrap() {
        out.extend(parse_scripts(&std::fs::read_to_string(entry.unwrap().path()).unwrap()).unwrap());
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

fn scenario(name: &str) -> Scenario {
    let text = std::fs::read_to_string(corpus().join("scenarios").join(format!("{name}.scenario"))).unwrap();
    parse_scenarios(&text).unwrap().remove(0)
}

fn deploy(policy: &ActionPolicy, seed: u64) -> (RunningSystem, Vec<ReconfigOp>) {
    let arch = model("phr.adl");
    let report = analyze(&arch).unwrap();
    let p = plan(&report, policy).unwrap();
    let cfg = weave(&p, &arch).unwrap();
    RunningSystem::instantiate(&arch, &cfg, scripts(), seed).unwrap()
}

#[test]
fn phr_has_one_partial_interaction() {
    let report = analyze(&model("phr.adl")).unwrap();
    assert!(report.gate_passed);
    let partial: Vec<_> = report.partial().collect();
    assert_eq!(partial.len(), 1, "{report}");
    assert_eq!(partial[0].analysis, AnalysisKind::Dataflow);
    assert_eq!(partial[0].subject, "toPda");
    let tests: Vec<_> = partial[0].residuals().iter().map(|r| (r.variable, r.test.clone())).collect();
    assert_eq!(
        tests,
        [
            (Variable::Size, Test::LessOrEqual(10_000_000)),
            (Variable::Type, Test::MemberOf(["jpg".to_string(), "txt".to_string()].into())),
        ]
    );
}

#[test]
fn direct_ticket_access_closes_the_gate() {
    let report = analyze(&model("phr-bad-auth.adl")).unwrap();
    assert!(!report.gate_passed);
    let bad: Vec<_> = report.incompatible().collect();
    assert_eq!(bad.len(), 1);
    assert_eq!(bad[0].analysis, AnalysisKind::Structural);
    assert_eq!(bad[0].subject, "clientTicket");
}

#[test]
fn converter_makes_the_pda_path_compatible() {
    let report = analyze(&model("phr-with-converter.adl")).unwrap();
    assert!(report.gate_passed);
    assert_eq!(report.partial().count(), 0, "{report}");
    assert_eq!(model("phr-with-converter.adl"), model("reconfig/insert-dataconverter.adl"));
}

#[test]
fn construction_log_ends_with_the_pda_probe() {
    let arch = model("phr.adl");
    let (sys, log) = deploy(&ActionPolicy::default(), 42);
    assert_eq!(log.len(), arch.components.len() + arch.connectors.len() + 1);
    let ReconfigOp::AttachProbe(p) = log.last().unwrap() else { panic!("{log:?}") };
    assert_eq!(p.connector, "toPda");
    assert!(sys.mirrors(&arch));
    assert_eq!(sys.reconfiguration_log(), log.as_slice());
}

#[test]
fn druggist_passes_and_radiologist_violates_size() {
    let (mut sys, _) = deploy(&ActionPolicy::default(), 42);
    let ctx = ActionContext::default();

    let run = run_checked(&mut sys, &scenario("druggist"), &ctx).unwrap();
    let events: Vec<_> = run.trace.iter().filter_map(TraceEntry::as_event).collect();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].captured[&Variable::Size], Value::Int(2_000_000));
    assert_eq!(events[0].captured[&Variable::Type], Value::Text("txt".into()));
    assert_eq!(run.outcomes.len(), 2);
    assert_eq!(run.violations().count(), 0);

    let run = run_checked(&mut sys, &scenario("radiologist"), &ctx).unwrap();
    let violations: Vec<_> = run.violations().collect();
    assert_eq!(violations.len(), 1);
    assert_eq!(violations[0].predicate.variable, Variable::Size);
    let CheckResult::Violation(msg) = &violations[0].result else { unreachable!() };
    assert!(msg.starts_with("data too large"));
    let Some(ActionRecord::Notified { entry }) = &violations[0].action else { panic!() };
    assert!(entry.contains("check-toPda-size") && entry.contains("toPda") && entry.contains("size=50000000"));
}

#[test]
fn reification_counts_match_deliveries() {
    let (mut sys, _) = deploy(&ActionPolicy::default(), 1);
    let trace = sys.run_scenario(&scenario("radiologist")).unwrap();
    let deliveries = trace
        .iter()
        .filter(|e| matches!(e, TraceEntry::Message(d) if d.connector == "toPda"))
        .count();
    let events = trace.iter().filter_map(TraceEntry::as_event).count();
    assert_eq!(deliveries, 1);
    assert_eq!(events, deliveries);
}

#[test]
fn evolving_to_the_converter_removes_the_probe() {
    let (mut sys, _) = deploy(&ActionPolicy::default(), 42);
    sys.run_scenario(&scenario("druggist")).unwrap();
    let pda_before = sys.instance("PDA").unwrap().state;
    assert_eq!(pda_before.received, 1);

    let target = model("phr-with-converter.adl");
    let outcome = evolve(&mut sys, &target, scripts(), &ActionPolicy::default());
    let EvolveOutcome::Accepted { diff, plan, .. } = outcome else { panic!("{outcome:?}") };
    let ops: Vec<String> = diff.ops.iter().map(ToString::to_string).collect();
    assert_eq!(
        ops,
        [
            "detach probe probe-toPda",
            "remove connector toPda",
            "add component DataConverter",
            "add connector convertedToPda : DataConverter.output -> PDA.display",
            "add connector toConverter : GlobalSearch.toPda -> DataConverter.input",
        ]
    );
    assert!(plan.is_empty());
    assert!(sys.mirrors(&target));
    assert!(sys.view().probes.is_empty());
    assert_eq!(sys.instance("PDA").unwrap().state, pda_before);
    assert_eq!(sys.status(), Status::Running);

    let run = run_checked(&mut sys, &scenario("radiologist"), &ActionContext::default()).unwrap();
    assert_eq!(run.violations().count(), 0);
    let shrunk = run.trace.iter().any(|e| {
        matches!(e, TraceEntry::Message(d) if d.connector == "convertedToPda" && d.attrs["size"] == Value::Int(10_000_000))
    });
    assert!(shrunk);
}

#[test]
fn probe_moves_when_the_converter_makes_no_promise() {
    let mut target = model("phr-with-converter.adl");
    target
        .contracts
        .retain(|c| !matches!(c, calico::model::Contract::Dataflow(d) if d.port.component == "DataConverter"));
    let (mut sys, _) = deploy(&ActionPolicy::default(), 42);
    let EvolveOutcome::Accepted { diff, .. } = evolve(&mut sys, &target, scripts(), &ActionPolicy::default()) else {
        panic!()
    };
    let first = diff.ops.first().unwrap();
    let last = diff.ops.last().unwrap();
    assert_eq!(first, &ReconfigOp::DetachProbe("probe-toPda".into()));
    assert!(matches!(last, ReconfigOp::AttachProbe(p) if p.connector == "convertedToPda"));
}

#[test]
fn rejected_evolution_leaves_the_runtime_bit_identical() {
    let (mut sys, _) = deploy(&ActionPolicy::default(), 42);
    sys.run_scenario(&scenario("druggist")).unwrap();
    let before = serde_json::to_string(&sys).unwrap();
    let outcome = evolve(&mut sys, &model("phr-bad-auth.adl"), scripts(), &ActionPolicy::default());
    assert!(!outcome.is_accepted());
    assert_eq!(serde_json::to_string(&sys).unwrap(), before);
}

#[test]
fn identical_evolution_is_an_empty_diff() {
    let (mut sys, _) = deploy(&ActionPolicy::default(), 42);
    let EvolveOutcome::Accepted { diff, .. } = evolve(&mut sys, &model("phr.adl"), scripts(), &ActionPolicy::default()) else {
        panic!()
    };
    assert!(diff.is_empty());
}

#[test]
fn reconfigure_action_evolves_once_per_run() {
    let policy = ActionPolicy {
        default: Action::Notify,
        overrides: [("check-toPda-size".to_string(), Action::Reconfigure("insert-dataconverter".into()))].into(),
    };
    let (mut sys, _) = deploy(&policy, 42);
    let ctx = ActionContext {
        root: PathBuf::new(),
        reconfigurations: BTreeMap::from([(
            "insert-dataconverter".to_string(),
            Reconfiguration {
                architecture: model("reconfig/insert-dataconverter.adl"),
                scripts: scripts(),
            },
        )]),
        policy: policy.clone(),
    };
    // Two oversized documents: the first triggers the reconfiguration, the
    // second already goes through the converter.
    let mut sc = scenario("radiologist");
    let mut again = sc.stimuli[1].clone();
    again.at = 500;
    sc.stimuli.push(again);

    let run = run_checked(&mut sys, &sc, &ctx).unwrap();
    assert_eq!(run.evolutions.len(), 1);
    assert!(run.evolutions[0].accepted);
    assert_eq!(run.violations().count(), 1);
    assert!(sys.mirrors(&model("phr-with-converter.adl")));
}

#[test]
fn log_action_appends_one_line_per_violation() {
    let dir = tempfile::tempdir().unwrap();
    let policy = ActionPolicy {
        default: Action::Log("violations.jsonl".into()),
        overrides: BTreeMap::new(),
    };
    let (mut sys, _) = deploy(&policy, 42);
    let ctx = ActionContext {
        root: dir.path().to_path_buf(),
        ..ActionContext::default()
    };
    run_checked(&mut sys, &scenario("radiologist"), &ctx).unwrap();
    let text = std::fs::read_to_string(dir.path().join("violations.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    let line: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(line["check"], "check-toPda-size");
    assert_eq!(line["result"], "violation");
    assert_eq!(line["captured"]["size"], 50_000_000);
}

#[test]
fn same_seed_same_trace() {
    let trace = |seed| {
        let (mut sys, _) = deploy(&ActionPolicy::default(), seed);
        let mut all = sys.run_scenario(&scenario("desk")).unwrap();
        all.extend(sys.run_scenario(&scenario("radiologist")).unwrap());
        calico::runtime::trace_to_jsonl(&all)
    };
    assert_eq!(trace(9), trace(9));
    assert_ne!(trace(9), trace(10));
}

#[test]
fn state_survives_a_serde_round_trip() {
    let (mut sys, _) = deploy(&ActionPolicy::default(), 3);
    sys.run_scenario(&scenario("druggist")).unwrap();
    let restored: RunningSystem = serde_json::from_str(&serde_json::to_string(&sys).unwrap()).unwrap();
    assert_eq!(restored, sys);
    let (mut a, mut b) = (sys, restored);
    assert_eq!(a.run_scenario(&scenario("desk")).unwrap(), b.run_scenario(&scenario("desk")).unwrap());
}
