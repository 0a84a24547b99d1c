use calico::analysis::analyze;
use calico::model::canonicalize;
use calico::plan::{plan, weave, ActionPolicy};
use calico::sync::{apply, diff};
use calico::testing::{mutate, random_architecture};
use calico::{parse, serialize};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn serialize_then_parse_is_canonical_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_architecture(&mut rng, 8, true);
        let text = serialize(&a).unwrap();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e:?}\n{text}")))?;
        prop_assert_eq!(&back, &canonicalize(&a).unwrap());
        prop_assert_eq!(serialize(&back).unwrap(), text);
    }

    #[test]
    fn diff_then_apply_reaches_the_target(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_architecture(&mut rng, 12, false);
        let b = mutate(&mut rng, &a, 12);
        let d = diff(&a, &b);
        prop_assert_eq!(canonicalize(&apply(&a, &d).unwrap()).unwrap(), canonicalize(&b).unwrap());
        prop_assert!(diff(&b, &b).is_empty());
    }

    #[test]
    fn every_residual_gets_exactly_one_check(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_architecture(&mut rng, 6, true);
        let Ok(report) = analyze(&a) else { return Ok(()) };
        if !report.gate_passed {
            prop_assert!(plan(&report, &ActionPolicy::default()).is_err());
            return Ok(());
        }
        let p = plan(&report, &ActionPolicy::default()).unwrap();
        let residuals: usize = report.partial().map(|v| v.residuals().len()).sum();
        prop_assert_eq!(p.checks.len(), residuals);
        for c in &p.checks {
            prop_assert!(p.probes.iter().any(|pr| pr.id == c.probe && pr.connector == c.predicate.connector));
        }
        let cfg = weave(&p, &a).unwrap();
        prop_assert_eq!(cfg.points.len(), p.probes.len());
    }

    #[test]
    fn analysis_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_architecture(&mut rng, 6, true);
        let mut shuffled = a.clone();
        shuffled.components.reverse();
        shuffled.connectors.reverse();
        shuffled.contracts.reverse();
        prop_assert_eq!(analyze(&a), analyze(&shuffled));
    }
}
