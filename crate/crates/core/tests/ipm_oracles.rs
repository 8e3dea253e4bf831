mod common;

use mdp_approx::bounds::{performance_loss_bound, LossRoute, ValueSource};
use mdp_approx::ipm::{
    ipm_distance, ipm_performance_bound, minkowski, mismatch_from_distance, model_distance, DistanceScope, GroundMetric,
    IpmKind,
};
use mdp_approx::mdp::{AffineTransform, ValueFn};
use mdp_approx::mismatch::{mismatch_max, mismatch_policy_pair};
use mdp_approx::weighting::{kappa_model, WeightFn};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::*;

/// `sup ⟨f, p − q⟩` over `f` with `f_i − f_j ≤ c(i, j)` for all pairs.
fn dual_lp(p: &[f64], q: &[f64], c: impl Fn(usize, usize) -> f64) -> f64 {
    let n = p.len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let f: Vec<_> = (0..n).map(|i| lp.add_var(p[i] - q[i], (-1e6, 1e6))).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lp.add_constraint([(f[i], 1.0), (f[j], -1.0)], ComparisonOp::Le, c(i, j));
            }
        }
    }
    lp.solve().unwrap().objective()
}

/// Minimum transport cost from `p` to `q`.
fn primal_transport_lp(p: &[f64], q: &[f64], c: impl Fn(usize, usize) -> f64) -> f64 {
    let n = p.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let x: Vec<Vec<_>> = (0..n).map(|i| (0..n).map(|j| lp.add_var(c(i, j), (0.0, f64::INFINITY))).collect()).collect();
    for i in 0..n {
        let row: Vec<_> = (0..n).map(|j| (x[i][j], 1.0)).collect();
        lp.add_constraint(&row, ComparisonOp::Eq, p[i]);
        let col: Vec<_> = (0..n).map(|j| (x[j][i], 1.0)).collect();
        lp.add_constraint(&col, ComparisonOp::Eq, q[i]);
    }
    lp.solve().unwrap().objective()
}

fn euclidean_metric(r: &mut ChaCha8Rng, n: usize) -> (GroundMetric, Vec<f64>) {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (r.gen::<f64>(), r.gen::<f64>())).collect();
    let dist: Vec<f64> = (0..n * n)
        .map(|k| {
            let (a, b) = (pts[k / n], pts[k % n]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
        .collect();
    (GroundMetric::matrix(n, dist.clone()).unwrap(), dist)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-7 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn total_variation_matches_lp(seed in any::<u64>(), n in 2usize..9) {
        let mut r = rng(seed);
        let (p, q) = (distribution(&mut r, n), distribution(&mut r, n));
        let d = ipm_distance(&p, &q, &IpmKind::TotalVariation).unwrap();
        // Unit ball of span/2 is {|f| ≤ 1} up to constants.
        prop_assert!(close(d, dual_lp(&p, &q, |_, _| 2.0)));
    }

    #[test]
    fn weighted_total_variation_matches_lp(seed in any::<u64>(), n in 2usize..9) {
        let mut r = rng(seed);
        let (p, q) = (distribution(&mut r, n), distribution(&mut r, n));
        let w = random_weight(&mut r, n);
        let d = ipm_distance(&p, &q, &IpmKind::WeightedTotalVariation(w.clone())).unwrap();
        prop_assert!(close(d, dual_lp(&p, &q, |i, j| w[i] + w[j])));
    }

    #[test]
    fn wasserstein_on_labels_matches_both_lps(seed in any::<u64>(), n in 2usize..9) {
        let mut r = rng(seed);
        let (p, q) = (distribution(&mut r, n), distribution(&mut r, n));
        let labels: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let d = ipm_distance(&p, &q, &IpmKind::Wasserstein(GroundMetric::labels(labels.clone()).unwrap())).unwrap();
        let cost = |i: usize, j: usize| (labels[i] - labels[j]).abs();
        prop_assert!(close(d, primal_transport_lp(&p, &q, cost)));
        prop_assert!(close(d, dual_lp(&p, &q, cost)));
    }

    #[test]
    fn wasserstein_on_matrix_matches_both_lps(seed in any::<u64>(), n in 2usize..8) {
        let mut r = rng(seed);
        let (p, q) = (distribution(&mut r, n), distribution(&mut r, n));
        let (metric, dist) = euclidean_metric(&mut r, n);
        let d = ipm_distance(&p, &q, &IpmKind::Wasserstein(metric)).unwrap();
        let cost = |i: usize, j: usize| dist[i * n + j];
        prop_assert!(close(d, primal_transport_lp(&p, &q, cost)));
        prop_assert!(close(d, dual_lp(&p, &q, cost)));
    }

    #[test]
    fn minkowski_matches_pairwise_definition(seed in any::<u64>(), n in 2usize..9) {
        let mut r = rng(seed);
        let v: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
        let w = random_weight(&mut r, n);
        let (metric, dist) = euclidean_metric(&mut r, n);
        let pairs = || (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j);
        let tv = pairs().map(|(i, j)| (v[i] - v[j]).abs() / 2.0).fold(0.0, f64::max);
        let wtv = pairs().map(|(i, j)| (v[i] - v[j]).abs() / (w[i] + w[j])).fold(0.0, f64::max);
        let lip = pairs().map(|(i, j)| (v[i] - v[j]).abs() / dist[i * n + j]).fold(0.0, f64::max);
        prop_assert!(close(minkowski(&v, &IpmKind::TotalVariation).unwrap(), tv));
        prop_assert!(close(minkowski(&v, &IpmKind::WeightedTotalVariation(w)).unwrap(), wtv));
        prop_assert!(close(minkowski(&v, &IpmKind::Wasserstein(metric)).unwrap(), lip));
    }

    #[test]
    fn distance_mismatch_bounds_dominate_exact_mismatch(seed in any::<u64>(), n_s in 2usize..7, n_a in 1usize..4, a1 in 0.5f64..1.5, a2 in -1.0f64..1.0) {
        let mut r = rng(seed);
        let pair = random_pair(&mut r, n_s, n_a, 0.6);
        let w = random_weight(&mut r, n_s);
        let v = ValueFn::from((0..n_s).map(|_| r.gen_range(-10.0..10.0)).collect::<Vec<_>>());
        let t = AffineTransform::new(a1, a2).unwrap();
        let labels: Vec<f64> = (0..n_s).map(|i| i as f64).collect();
        let kinds = [
            IpmKind::TotalVariation,
            IpmKind::Wasserstein(GroundMetric::labels(labels).unwrap()),
            IpmKind::WeightedTotalVariation(random_weight(&mut r, n_s)),
        ];
        let pi = deterministic_policy(&mut r, n_s, n_a);
        let pi_hat = deterministic_policy(&mut r, n_s, n_a);
        let exact_pair = mismatch_policy_pair(&pair, &pi, &pi_hat, &v, &w, t).unwrap().value;
        let exact_max = mismatch_max(&pair, &v, &w, t).unwrap().value;
        for kind in &kinds {
            let rho = minkowski(&v, kind).unwrap();
            let scope = DistanceScope::Policies { pi: pi.clone(), pi_hat: pi_hat.clone() };
            let d = model_distance(&pair, scope, &w, t, kind).unwrap();
            let upper = mismatch_from_distance(&d, rho, 0.6);
            prop_assert!(exact_pair <= upper + 1e-9 * (1.0 + upper), "{}: {} > {}", kind.name(), exact_pair, upper);
            let d = model_distance(&pair, DistanceScope::Max, &w, t, kind).unwrap();
            let upper = mismatch_from_distance(&d, rho, 0.6);
            prop_assert!(exact_max <= upper + 1e-9 * (1.0 + upper), "{}: {} > {}", kind.name(), exact_max, upper);
        }
    }

    #[test]
    fn distance_loss_bounds_dominate_exact_ones(seed in any::<u64>(), n_s in 2usize..7, n_a in 1usize..4) {
        let gamma = 0.4;
        let mut r = rng(seed);
        let pair = random_pair(&mut r, n_s, n_a, gamma);
        let w = random_weight(&mut r, n_s);
        let kappa = kappa_model(pair.truth(), &w).unwrap().kappa.max(kappa_model(pair.approx(), &w).unwrap().kappa);
        prop_assume!(gamma * kappa < 0.99);
        let solved = solve(pair);
        let v_star = solved.true_value().unwrap().to_vec();
        let realized = weighted_gap(solved.deployed_value(), &v_star, &w);
        let t = AffineTransform::IDENTITY;
        for kind in [IpmKind::TotalVariation, IpmKind::WeightedTotalVariation(w.clone())] {
            for route in LossRoute::ALL {
                let exact = performance_loss_bound(&solved, &w, kappa, t, route).unwrap();
                let dist = ipm_performance_bound(&solved, &w, kappa, t, &kind, route).unwrap();
                prop_assert!(dist.bound >= exact.bound - 1e-9 * (1.0 + exact.bound), "{:?} {}", route, kind.name());
                if dist.certified() {
                    prop_assert!(realized <= dist.bound + 1e-9 * (1.0 + dist.bound));
                }
            }
        }
    }
}

#[test]
fn open_loop_route_uses_the_max_distances() {
    let mut r = rng(3);
    let pair = random_pair(&mut r, 5, 3, 0.4);
    let w = WeightFn::ones(5);
    let solved = solve(pair);
    let b = ipm_performance_bound(&solved, &w, 1.0, AffineTransform::IDENTITY, &IpmKind::TotalVariation, LossRoute::OpenLoop(ValueSource::Approx))
        .unwrap();
    let eps = b.term("eps_max").unwrap();
    let delta = b.term("delta_max").unwrap();
    let rho = b.term("rho").unwrap();
    let hand = 2.0 * (eps + 0.4 * rho * delta) / (1.0 - 0.4);
    assert!((b.bound - hand).abs() < 1e-12 * hand, "{} vs {hand}", b.bound);
}

#[test]
fn rejects_non_metric_matrices() {
    // Triangle inequality fails: d(0,2) > d(0,1) + d(1,2).
    let d = vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0];
    assert!(GroundMetric::matrix(3, d).is_err());
    let asym = vec![0.0, 1.0, 2.0, 0.0];
    assert!(GroundMetric::matrix(2, asym).is_err());
}
