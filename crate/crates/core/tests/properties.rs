use proptest::prelude::*;

use exitwait::assertions::{
    entails, normalize, satisfies, view_shift, Assertion, NormalizedAssertion, ResourceBundle,
};
use exitwait::ghost::annotate;
use exitwait::lang::{parse, pretty, to_continuation, Command, ThreadPool};
use exitwait::oracle::explore;
use exitwait::pog::{build_pog, check_leaf_balance, random_sc_prefix, sibling_closed, to_dot};
use exitwait::proofs::{check_proof, derive, verify, Certificate, ProofTree, Verdict};
use exitwait::schedule::{random_fair, rotated_round_robin};
use exitwait::semantics::run;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn command() -> impl Strategy<Value = Command> {
    let leaf = prop_oneof![Just(Command::Exit), Just(Command::LoopSkip)];
    leaf.prop_recursive(4, 14, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Command::fork),
            (inner.clone(), inner).prop_map(|(a, b)| Command::seq(a, b)),
        ]
    })
}

fn assertion() -> impl Strategy<Value = Assertion> {
    let leaf = prop_oneof![
        Just(Assertion::True),
        Just(Assertion::False),
        Just(Assertion::Credit),
        (0u64..3).prop_map(Assertion::Obs),
    ];
    leaf.prop_recursive(3, 6, 2, |inner| (inner.clone(), inner).prop_map(|(a, b)| Assertion::star(a, b)))
}

fn bundle() -> impl Strategy<Value = ResourceBundle> {
    (prop::collection::vec(0u64..3, 0..3), 0u64..4).prop_map(|(chunks, credits)| ResourceBundle::new(chunks, credits))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn printing_then_parsing_normalizes(c in command()) {
        prop_assert_eq!(parse(&pretty(&c)).unwrap(), c.normalize());
        prop_assert_eq!(parse(&c.to_string()).unwrap(), c.normalize());
    }

    #[test]
    fn normalization_is_idempotent(c in command()) {
        let n = c.normalize();
        prop_assert!(n.is_normalized());
        prop_assert_eq!(n.normalize(), n.clone());
        prop_assert_eq!(n.atom_count(), c.atom_count());
    }

    #[test]
    fn continuation_has_one_item_per_atom(c in command()) {
        prop_assert_eq!(to_continuation(&c).len(), c.atoms().len());
    }

    #[test]
    fn satisfaction_survives_extra_resources(a in assertion(), b in bundle(), extra in bundle()) {
        if satisfies(&b, &a) {
            prop_assert!(satisfies(&b.union(&extra), &a));
        }
    }

    #[test]
    fn normal_form_keeps_models(a in assertion(), b in bundle()) {
        prop_assert_eq!(normalize(&a).satisfied_by(&b), satisfies(&b, &a));
        prop_assert_eq!(satisfies(&b, &normalize(&a).to_assertion()), satisfies(&b, &a));
    }

    #[test]
    fn entailment_is_sound(a in assertion(), c in assertion(), b in bundle()) {
        if entails(&a, &c) && satisfies(&b, &a) {
            prop_assert!(satisfies(&b, &c));
        }
    }

    #[test]
    fn entailment_implies_view_shift(a in assertion(), c in assertion()) {
        if entails(&a, &c) {
            prop_assert!(view_shift(&a, &c));
        }
        prop_assert!(view_shift(&a, &a));
    }

    #[test]
    fn found_proofs_check(c in command(), n in 0u64..3) {
        let c = c.normalize();
        if let Ok(t) = derive(&c, n) {
            prop_assert_eq!(check_proof(&t), Ok(()));
            prop_assert_eq!(normalize(&t.conclusion.pre), NormalizedAssertion::flat(vec![n], 0));
            prop_assert_eq!(&t.conclusion.cmd, &c);
        }
    }

    #[test]
    fn framing_credits_keeps_proofs_valid(c in command(), k in 0u64..3) {
        let c = c.normalize();
        if let Verdict::Verified(t) = verify(&c) {
            let framed = ProofTree::frame(t, Assertion::credits(k));
            prop_assert_eq!(check_proof(&framed), Ok(()));
        }
    }

    #[test]
    fn certificates_round_trip(c in command()) {
        let c = c.normalize();
        if let Verdict::Verified(t) = verify(&c) {
            let back = Certificate::from_json(&Certificate::from_tree(&t).to_json()).unwrap().to_tree().unwrap();
            prop_assert_eq!(back, t);
        }
    }

    #[test]
    fn looping_without_exit_is_rejected(c in command()) {
        if c.contains_loop() && !c.contains_exit() {
            prop_assert!(!verify(&c.normalize()).is_verified());
        }
    }

    #[test]
    fn verified_programs_do_not_diverge(c in command()) {
        let c = c.normalize();
        if verify(&c).is_verified() {
            prop_assert!(!explore(&c).diverges, "{}", c);
        }
    }

    #[test]
    fn oracle_agrees_with_rotated_round_robin(c in command()) {
        let c = c.normalize();
        let space = explore(&c);
        if !space.diverges {
            for offset in 0..3 {
                let (out, _) = run(&ThreadPool::initial(0, &c), &mut rotated_round_robin(offset), space.fuel());
                prop_assert!(out.terminates(), "{} under rotation {}", c, offset);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn oracle_agrees_with_random_fair_schedules(c in command(), seed in any::<u64>()) {
        let c = c.normalize();
        let space = explore(&c);
        if !space.diverges {
            for i in 0..100 {
                let window = 1 + (i % 5);
                let (out, _) = run(
                    &ThreadPool::initial(0, &c),
                    &mut random_fair(seed.wrapping_add(i as u64), window),
                    space.fuel() * window,
                );
                prop_assert!(out.terminates(), "{} seed {} window {}", c, seed, window);
            }
        }
    }

    #[test]
    fn annotation_projects_and_balances(c in command(), seed in any::<u64>()) {
        let c = c.normalize();
        let Verdict::Verified(proof) = verify(&c) else { return Ok(()) };
        let space = explore(&c);
        let (_, plain) = run(&ThreadPool::initial(0, &c), &mut random_fair(seed, 3), space.fuel() * 3);
        let annotated = annotate(&proof, &plain).unwrap();

        let real: Vec<_> = annotated
            .real_steps()
            .map(|(_, s)| (s.pool.erase(), s.step.tid, s.step.rule.erased().unwrap()))
            .collect();
        let expected: Vec<_> = plain.steps.iter().map(|s| (s.pool.clone(), s.label.tid, s.label.rule)).collect();
        prop_assert_eq!(real, expected);
        prop_assert_eq!(annotated.final_pool.erase(), plain.final_pool.clone());

        for s in &annotated.steps {
            prop_assert!(exitwait::ghost::check_balance(&s.pool));
            if let Some(split) = s.split {
                let held = s.pool.get(s.step.tid).unwrap().holding;
                prop_assert!(split.obligations <= held.obligations && split.credits <= held.credits);
            }
        }

        let g = build_pog(&annotated).unwrap();
        prop_assert!(g.edges_are_minimal());
        let dot = to_dot(&g, None);
        prop_assert_eq!(dot.matches(" -> ").count(), g.edges().len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let p = random_sc_prefix(&g, &mut rng);
            prop_assert!(sibling_closed(&p, &g));
            prop_assert!(check_leaf_balance(&g, &p).unwrap().balanced());
        }
    }
}
