mod common;

use mdp_approx::mdp::{
    bellman_optimal, bellman_policy, policy_evaluation, value_iteration, AffineTransform, FiniteMdp, Policy, ValueFn,
};
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_iteration_matches_policy_enumeration(seed in any::<u64>(), n_s in 2usize..5, n_a in 1usize..4, gamma in 0.1f64..0.9) {
        let mut r = rng(seed);
        let m = dense_mdp(&mut r, n_s, n_a, gamma);
        let sol = value_iteration(&m, tight()).unwrap();
        let oracle = brute_force_optimum(&m);
        prop_assert!(sup_gap(&sol.value, &oracle) < 1e-8);
        // The greedy policy is optimal too.
        let v_pi = exact_policy_value(&m, sol.policy.actions().unwrap());
        prop_assert!(sup_gap(&v_pi, &oracle) < 1e-8);
    }

    #[test]
    fn policy_evaluation_matches_linear_solve(seed in any::<u64>(), n_s in 1usize..7, n_a in 1usize..4, gamma in 0.01f64..0.95) {
        let mut r = rng(seed);
        let m = dense_mdp(&mut r, n_s, n_a, gamma);
        let pi = deterministic_policy(&mut r, n_s, n_a);
        let v = policy_evaluation(&m, &pi, tight()).unwrap();
        let exact = exact_policy_value(&m, pi.actions().unwrap());
        prop_assert!(sup_gap(&v, &exact) < 1e-8 * (1.0 + exact.iter().fold(0.0f64, |a, x| a.max(x.abs()))));
    }

    #[test]
    fn optimal_backup_is_a_monotone_contraction(seed in any::<u64>(), n_s in 1usize..7, n_a in 1usize..4, gamma in 0.01f64..0.99) {
        let mut r = rng(seed);
        let m = dense_mdp(&mut r, n_s, n_a, gamma);
        let u: Vec<f64> = (0..n_s).map(|_| r.gen_range(-10.0..10.0)).collect();
        let bump: Vec<f64> = (0..n_s).map(|_| r.gen_range(0.0..3.0)).collect();
        let v: Vec<f64> = u.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let t = AffineTransform::IDENTITY;
        let (bu, _) = bellman_optimal(&m, &ValueFn::from(u.clone()), t).unwrap();
        let (bv, _) = bellman_optimal(&m, &ValueFn::from(v.clone()), t).unwrap();
        for s in 0..n_s {
            prop_assert!(bu[s] <= bv[s] + 1e-12);
        }
        prop_assert!(sup_gap(&bu, &bv) <= gamma * sup_gap(&u, &v) + 1e-12);
    }

    #[test]
    fn transformed_backup_is_affine_in_cost(seed in any::<u64>(), a1 in 0.1f64..3.0, a2 in -5.0f64..5.0) {
        let mut r = rng(seed);
        let m = dense_mdp(&mut r, 4, 3, 0.7);
        let pi = deterministic_policy(&mut r, 4, 3);
        let v = ValueFn::from((0..4).map(|_| r.gen_range(-5.0..5.0)).collect::<Vec<_>>());
        let t = AffineTransform::new(a1, a2).unwrap();
        let direct = bellman_policy(&m, &pi, &v, t).unwrap();
        let via_model = bellman_policy(&m.with_transformed_cost(t), &pi, &v, AffineTransform::IDENTITY).unwrap();
        prop_assert!(sup_gap(&direct, &via_model) < 1e-12);
        for s in 0..4 {
            let a = pi.action(s).unwrap();
            let hand = a1 * m.cost(s, a) + a2 + 0.7 * (0..4).map(|s2| m.prob(s, a, s2) * v[s2]).sum::<f64>();
            prop_assert!((direct[s] - hand).abs() < 1e-12);
        }
    }

    #[test]
    fn transformed_model_value_is_affine(seed in any::<u64>(), a1 in 0.1f64..3.0, a2 in -5.0f64..5.0, gamma in 0.1f64..0.9) {
        let mut r = rng(seed);
        let m = dense_mdp(&mut r, 5, 3, gamma);
        let t = AffineTransform::new(a1, a2).unwrap();
        let base = value_iteration(&m, tight()).unwrap();
        let moved = value_iteration(&m.with_transformed_cost(t), tight()).unwrap();
        let expected = base.value.affine(a1, a2 / (1.0 - gamma));
        prop_assert!(sup_gap(&moved.value, &expected) < 1e-7 * (1.0 + a1) * (1.0 + a2.abs()));
        prop_assert_eq!(moved.policy, base.policy);
    }
}

#[test]
fn greedy_ties_break_toward_smallest_action() {
    // Two identical actions everywhere.
    let p = vec![0.5, 0.5, 0.5, 0.5, 1.0, 0.0, 1.0, 0.0];
    let m = FiniteMdp::dense(2, 2, p, vec![1.0, 1.0, 2.0, 2.0], 0.5).unwrap();
    let sol = value_iteration(&m, tight()).unwrap();
    assert_eq!(sol.policy, Policy::deterministic(vec![0, 0]));
}

#[test]
fn discount_outside_open_unit_interval_is_rejected() {
    let p = vec![1.0, 0.0, 0.0, 1.0];
    for g in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(FiniteMdp::dense(2, 1, p.clone(), vec![1.0, 2.0], g).is_err(), "{g}");
    }
}
