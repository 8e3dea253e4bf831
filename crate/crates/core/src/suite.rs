//! Randomized soundness battery: every bound is checked against the quantity
//! it bounds on small random model pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{
    performance_loss_bound_with, policy_error_bound, value_error_bound_with, LossRoute, ValueRoute,
    ValueSource,
};
use crate::error::Result;
use crate::ipm::{
    ipm_distance, ipm_performance_bound_with, minkowski, mismatch_from_distance, model_distance,
    DistanceScope, GroundMetric, IpmKind,
};
use crate::mdp::{AffineTransform, FiniteMdp, Policy, SolveOptions, ValueFn};
use crate::mismatch::{mismatch_max, mismatch_optimal, mismatch_policy_pair, ModelPair, SolvedPair};
use crate::weighting::{check_assumptions, gamma_kappa_valid, kappa_model, WeightFn};

/// Shape of the random instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub instances: usize,
    pub seed: u64,
    pub max_states: usize,
    pub max_actions: usize,
    /// Random `(f, p, q)` triples per metric for the duality check.
    pub duality_trials: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            instances: 200,
            seed: 7,
            max_states: 8,
            max_actions: 4,
            duality_trials: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCheck {
    pub name: &'static str,
    pub evaluated: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen, negative when every check had slack.
    pub worst_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub instances: usize,
    /// Random pairs drawn, including those rejected for `γκ̄ ≥ 1`.
    pub attempts: usize,
    pub checks: Vec<SuiteCheck>,
}

impl SuiteReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

struct Tally {
    checks: Vec<SuiteCheck>,
}

impl Tally {
    /// Records `lhs ≤ rhs` up to a tolerance scaled by the magnitudes involved.
    fn le(&mut self, name: &'static str, lhs: f64, rhs: f64) {
        let tol = 1e-8 * (1.0 + lhs.abs().max(if rhs.is_finite() { rhs.abs() } else { 0.0 }));
        let excess = lhs - rhs;
        let ok = lhs <= rhs + tol;
        let check = match self.checks.iter_mut().find(|c| c.name == name) {
            Some(c) => c,
            None => {
                self.checks.push(SuiteCheck {
                    name,
                    evaluated: 0,
                    violations: 0,
                    worst_excess: f64::NEG_INFINITY,
                });
                self.checks.last_mut().expect("just pushed")
            }
        };
        check.evaluated += 1;
        if !ok {
            check.violations += 1;
        }
        if excess.is_finite() || excess == f64::INFINITY {
            check.worst_excess = check.worst_excess.max(excess);
        }
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Sparse rows make the transport and clipping paths non-trivial.
    let mut p: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.35) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    if p.iter().all(|x| *x == 0.0) {
        p[rng.gen_range(0..n)] = 1.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

fn random_policy(rng: &mut ChaCha8Rng, n_s: usize, n_a: usize) -> Policy {
    if rng.gen_bool(0.5) {
        Policy::deterministic((0..n_s).map(|_| rng.gen_range(0..n_a)).collect())
    } else {
        let probs = (0..n_s).flat_map(|_| random_distribution(rng, n_a)).collect();
        Policy::stochastic(n_s, n_a, probs).expect("rows are distributions")
    }
}

fn random_value(rng: &mut ChaCha8Rng, n: usize) -> ValueFn {
    ValueFn::from((0..n).map(|_| rng.gen_range(-10.0..10.0)).collect::<Vec<_>>())
}

fn random_pair(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> Result<(ModelPair, WeightFn, f64)> {
    let n_s = rng.gen_range(2..=opts.max_states);
    let n_a = rng.gen_range(1..=opts.max_actions);
    let gamma = rng.gen_range(0.1..0.6);
    let kernel = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n_s * n_a).flat_map(|_| random_distribution(rng, n_s)).collect() };
    let p = kernel(rng);
    let cost: Vec<f64> = (0..n_s * n_a).map(|_| rng.gen_range(0.0..5.0)).collect();
    let mix = rng.gen_range(0.0..0.5);
    let other = kernel(rng);
    let p_hat: Vec<f64> = p.iter().zip(&other).map(|(a, b)| (1.0 - mix) * a + mix * b).collect();
    let cost_hat: Vec<f64> = cost.iter().map(|c| c + rng.gen_range(-0.5..0.5)).collect();
    let truth = FiniteMdp::dense(n_s, n_a, p, cost, gamma)?;
    let approx = FiniteMdp::dense(n_s, n_a, p_hat, cost_hat, gamma)?;
    let w = WeightFn::new((0..n_s).map(|_| rng.gen_range(1.0..5.0)).collect())?;
    let kappa = kappa_model(&truth, &w)?.kappa.max(kappa_model(&approx, &w)?.kappa);
    Ok((ModelPair::new(truth, approx)?, w, kappa))
}

fn random_kinds(rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<IpmKind>> {
    let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let dist = (0..n * n)
        .map(|k| {
            let (a, b) = (pts[k / n], pts[k % n]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
        .collect();
    Ok(vec![
        IpmKind::TotalVariation,
        IpmKind::Wasserstein(GroundMetric::labels(labels)?),
        IpmKind::Wasserstein(GroundMetric::matrix(n, dist)?),
        IpmKind::WeightedTotalVariation(WeightFn::new((0..n).map(|_| rng.gen_range(1.0..4.0)).collect())?),
    ])
}

fn check_instance(rng: &mut ChaCha8Rng, tally: &mut Tally, pair: ModelPair, w: WeightFn, kappa: f64) -> Result<()> {
    let (n_s, n_a) = (pair.n_states(), pair.n_actions());
    let gamma = pair.discount();
    let options = SolveOptions::new(1e-12, 1_000_000)?;
    let solved = SolvedPair::solve(pair, options, true)?;
    let pair = solved.pair().clone();
    let alpha = AffineTransform::new(rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0))?;

    let pi = random_policy(rng, n_s, n_a);
    let pi_hat = random_policy(rng, n_s, n_a);
    let r = policy_error_bound(&solved, &pi, &pi_hat, &w, kappa)?;
    tally.le("policy-error", r.realized.unwrap_or(0.0), r.bound);

    let kinds = random_kinds(rng, n_s)?;
    for t in [AffineTransform::IDENTITY, alpha] {
        let report = check_assumptions(&solved, &w, kappa, t)?;
        for source in [ValueSource::Approx, ValueSource::True] {
            for route in [ValueRoute::PolicyPair(source), ValueRoute::Optimality(source)] {
                let r = value_error_bound_with(&solved, &w, &report, route)?;
                tally.le("value-error", r.realized.unwrap_or(0.0), r.bound);
            }
        }
        for route in LossRoute::ALL {
            let exact = performance_loss_bound_with(&solved, &w, &report, route)?;
            tally.le("performance-loss", exact.realized.unwrap_or(0.0), exact.bound);
            for kind in &kinds {
                let by_distance = ipm_performance_bound_with(&solved, &w, &report, kind, route)?;
                tally.le("distance-bound-dominance", exact.bound, by_distance.bound);
            }
        }
        for v in [solved.approx_value().clone(), random_value(rng, n_s)] {
            let opt = mismatch_optimal(&pair, &v, &w, t)?.value;
            let max = mismatch_max(&pair, &v, &w, t)?;
            tally.le("optimality-vs-max-mismatch", opt, max.value);

            for kind in &kinds {
                let rho = minkowski(&v, kind)?;
                let (a, b) = (random_policy(rng, n_s, n_a), random_policy(rng, n_s, n_a));
                let exact = mismatch_policy_pair(&pair, &a, &b, &v, &w, t)?.value;
                let scope = DistanceScope::Policies { pi: a, pi_hat: b };
                let d = model_distance(&pair, scope, &w, t, kind)?;
                tally.le("distance-mismatch", exact, mismatch_from_distance(&d, rho, gamma));
                let d = model_distance(&pair, DistanceScope::Max, &w, t, kind)?;
                tally.le("distance-mismatch", max.value, mismatch_from_distance(&d, rho, gamma));
            }
        }
    }
    Ok(())
}

/// `|Σ f(p − q)| ≤ ρ(f)·d(p, q)` on random triples.
fn check_duality(rng: &mut ChaCha8Rng, tally: &mut Tally, opts: &SuiteOptions) -> Result<()> {
    for _ in 0..opts.duality_trials {
        let n = rng.gen_range(2..=opts.max_states);
        let p = random_distribution(rng, n);
        let q = random_distribution(rng, n);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lhs = f.iter().zip(p.iter().zip(&q)).map(|(f, (p, q))| f * (p - q)).sum::<f64>().abs();
        for kind in random_kinds(rng, n)? {
            let d = ipm_distance(&p, &q, &kind)?;
            tally.le("ipm-duality", lhs, minkowski(&f, &kind)? * d);
        }
    }
    Ok(())
}

/// Draws random pairs until `opts.instances` of them satisfy `γκ̄ < 1` in
/// both models with a random weight, then checks every bound on each.
pub fn run_soundness_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tally = Tally { checks: Vec::new() };
    let mut attempts = 0;
    let mut accepted = 0;
    while accepted < opts.instances {
        attempts += 1;
        let (pair, w, kappa) = random_pair(&mut rng, opts)?;
        if !gamma_kappa_valid(pair.discount() * kappa) {
            continue;
        }
        check_instance(&mut rng, &mut tally, pair, w, kappa)?;
        accepted += 1;
    }
    check_duality(&mut rng, &mut tally, opts)?;
    Ok(SuiteReport {
        instances: accepted,
        attempts,
        checks: tally.checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let opts = SuiteOptions {
            instances: 5,
            duality_trials: 20,
            ..Default::default()
        };
        let a = run_soundness_suite(&opts).unwrap();
        let b = run_soundness_suite(&opts).unwrap();
        assert!(a.passed(), "{:?}", a.checks);
        assert_eq!(a, b);
    }
}
