use cmg_core::dynamics::compute_occupancy;
use cmg_core::equilibrium::{verify_cce, Verdict};
use cmg_core::game::ConstraintMode;
use cmg_core::lp::{solve_lp, LinearProgram, LpStatus, Relation, Sense};
use cmg_core::modifications::{apply_modification, MarkovModification};
use cmg_core::random::{random_game, random_markov_modification, random_policy, rng_from_seed, RandomGameSpec};
use proptest::prelude::*;

fn spec(h: usize, s: usize) -> RandomGameSpec {
    RandomGameSpec {
        horizon: h,
        num_states: s,
        action_sizes: vec![2, 2],
        num_constraints: 1,
        mode: ConstraintMode::Common,
        looseness: 0.9,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn occupancy_has_unit_mass_per_step(seed in any::<u64>(), h in 1usize..4, s in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let g = random_game(&mut rng, &spec(h, s)).unwrap();
        let d = compute_occupancy(&g, &random_policy(&mut rng, &g)).unwrap();
        let per_step = s * g.num_joint_actions();
        for t in 0..h {
            let mass: f64 = d.as_slice()[t * per_step..(t + 1) * per_step].iter().sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
            prop_assert!(d.as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn identity_modification_changes_nothing(seed in any::<u64>(), player in 0usize..2) {
        let mut rng = rng_from_seed(seed);
        let g = random_game(&mut rng, &spec(2, 2)).unwrap();
        let pi = random_policy(&mut rng, &g);
        let id = MarkovModification::identity(&g, player).unwrap();
        let a = compute_occupancy(&g, &pi).unwrap();
        let b = compute_occupancy(&g, &apply_modification(&g, &pi, &id).unwrap()).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn modified_policy_is_a_policy(seed in any::<u64>(), player in 0usize..2) {
        let mut rng = rng_from_seed(seed);
        let g = random_game(&mut rng, &spec(2, 2)).unwrap();
        let pi = random_policy(&mut rng, &g);
        let phi = random_markov_modification(&mut rng, &g, player).unwrap();
        let m = apply_modification(&g, &pi, &phi).unwrap();
        for t in 0..2 {
            for s in 0..2 {
                prop_assert!((m.row(t, s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaps_are_nonnegative(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let g = random_game(&mut rng, &spec(1, 1)).unwrap();
        let cert = verify_cce(&g, &random_policy(&mut rng, &g), 1e-9).unwrap();
        if cert.verdict != Verdict::InfeasiblePolicy {
            prop_assert!(cert.gaps.iter().all(|p| p.gap >= -1e-9));
        }
    }

    #[test]
    fn optimal_solutions_are_feasible(
        rows in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 0.0f64..2.0), 1..6),
        c in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let mut lp = LinearProgram::new(Sense::Max, c);
        for (a, b) in rows {
            lp.add(a, Relation::Le, b);
        }
        lp.add(vec![1.0; 3], Relation::Le, 10.0);
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(lp.max_violation(&sol.x) <= 1e-9);
    }
}
