mod common;

use mdp_approx::bounds::{LossRoute, ValueSource};
use mdp_approx::ipm::{certainty_equivalence_bound, AdditiveNoiseSystem};
use mdp_approx::mdp::AffineTransform;
use mdp_approx::weighting::{certify_smallest_kappa, AssumptionStatus, WeightFn};

use common::*;

fn system(step: i64) -> AdditiveNoiseSystem {
    AdditiveNoiseSystem {
        noise: vec![(-step, 1.0 / 3.0), (0, 1.0 / 3.0), (step, 1.0 / 3.0)],
        ..AdditiveNoiseSystem::default()
    }
}

fn bound_for(sys: &AdditiveNoiseSystem, w: &WeightFn) -> mdp_approx::bounds::BoundReport {
    let solved = solve(sys.pair().unwrap());
    let t = AffineTransform::IDENTITY;
    let required = LossRoute::OpenLoop(ValueSource::Approx).required(t);
    let kappa = certify_smallest_kappa(&solved, w, t, &required).unwrap().kappa;
    certainty_equivalence_bound(&solved, sys.noise_mean_norm(), w, kappa).unwrap()
}

#[test]
fn bound_dominates_realized_gap_and_uses_adjacent_slopes() {
    let sys = system(1);
    let n = sys.n_states();
    let w = WeightFn::ones(n);
    let r = bound_for(&sys, &w);
    assert_eq!(r.status, AssumptionStatus::Certified);
    let solved = solve(sys.pair().unwrap());
    let v_hat = solved.approx_value();
    let lip = v_hat.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
    assert!((r.term("lipschitz").unwrap() - lip).abs() < 1e-9 * (1.0 + lip));
    assert!((sys.noise_mean_norm() - 2.0 / 3.0).abs() < 1e-15);
    let hand = 2.0 * sys.discount * (2.0 / 3.0) * lip / (1.0 - sys.discount * r.kappa);
    assert!((r.bound - hand).abs() < 1e-9 * hand);
    let v_star = solved.true_value().unwrap();
    let realized = weighted_gap(solved.deployed_value(), v_star, &w);
    assert!(realized <= r.bound + 1e-8, "{realized} > {}", r.bound);
}

#[test]
fn bound_scales_linearly_with_noise_magnitude() {
    let w = WeightFn::ones(system(1).n_states());
    let ratios: Vec<f64> = (1..=3)
        .map(|k| {
            let sys = system(k);
            bound_for(&sys, &w).bound / sys.noise_mean_norm()
        })
        .collect();
    for r in &ratios[1..] {
        assert!((r - ratios[0]).abs() < 1e-9 * ratios[0], "{ratios:?}");
    }
}

#[test]
fn noiseless_system_has_zero_bound() {
    let sys = AdditiveNoiseSystem {
        noise: vec![(0, 1.0)],
        ..AdditiveNoiseSystem::default()
    };
    let r = bound_for(&sys, &WeightFn::ones(sys.n_states()));
    assert_eq!(r.bound, 0.0);
}

#[test]
fn rejects_biased_noise() {
    let sys = AdditiveNoiseSystem {
        noise: vec![(0, 0.5), (1, 0.5)],
        ..AdditiveNoiseSystem::default()
    };
    assert!(sys.validate().is_err());
}
