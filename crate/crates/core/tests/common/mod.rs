#![allow(dead_code)]

use mdp_approx::mdp::{FiniteMdp, Policy, SolveOptions};
use mdp_approx::mismatch::{ModelPair, SolvedPair};
use mdp_approx::weighting::WeightFn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    if p.iter().all(|x| *x == 0.0) {
        p[rng.gen_range(0..n)] = 1.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

pub fn dense_mdp(rng: &mut ChaCha8Rng, n_s: usize, n_a: usize, gamma: f64) -> FiniteMdp {
    let p = (0..n_s * n_a).flat_map(|_| distribution(rng, n_s)).collect();
    let c = (0..n_s * n_a).map(|_| rng.gen_range(0.0..5.0)).collect();
    FiniteMdp::dense(n_s, n_a, p, c, gamma).unwrap()
}

/// A pair whose approximation perturbs both kernel and cost of the truth.
pub fn random_pair(rng: &mut ChaCha8Rng, n_s: usize, n_a: usize, gamma: f64) -> ModelPair {
    let truth = dense_mdp(rng, n_s, n_a, gamma);
    let other = dense_mdp(rng, n_s, n_a, gamma);
    let mix = rng.gen_range(0.05..0.5);
    let mut p_hat = Vec::with_capacity(n_s * n_a * n_s);
    let mut c_hat = Vec::with_capacity(n_s * n_a);
    for s in 0..n_s {
        for a in 0..n_a {
            for s2 in 0..n_s {
                p_hat.push((1.0 - mix) * truth.prob(s, a, s2) + mix * other.prob(s, a, s2));
            }
            c_hat.push(truth.cost(s, a) + rng.gen_range(-0.5..0.5));
        }
    }
    let approx = FiniteMdp::dense(n_s, n_a, p_hat, c_hat, gamma).unwrap();
    ModelPair::new(truth, approx).unwrap()
}

pub fn random_weight(rng: &mut ChaCha8Rng, n: usize) -> WeightFn {
    WeightFn::new((0..n).map(|_| rng.gen_range(1.0..5.0)).collect()).unwrap()
}

pub fn deterministic_policy(rng: &mut ChaCha8Rng, n_s: usize, n_a: usize) -> Policy {
    Policy::deterministic((0..n_s).map(|_| rng.gen_range(0..n_a)).collect())
}

pub fn solve(pair: ModelPair) -> SolvedPair {
    SolvedPair::solve(pair, tight(), true).unwrap()
}

pub fn tight() -> SolveOptions {
    SolveOptions::new(1e-12, 1_000_000).unwrap()
}

/// `(I − γP_π)⁻¹ c_π` by a dense LU solve.
pub fn exact_policy_value(mdp: &FiniteMdp, policy: &[usize]) -> Vec<f64> {
    let n = mdp.n_states();
    let g = mdp.discount();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for s in 0..n {
        let a = policy[s];
        c[s] = mdp.cost(s, a);
        for s2 in 0..n {
            m[(s, s2)] -= g * mdp.prob(s, a, s2);
        }
    }
    m.lu().solve(&c).unwrap().iter().copied().collect()
}

/// Optimal value by enumerating every deterministic policy.
pub fn brute_force_optimum(mdp: &FiniteMdp) -> Vec<f64> {
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut best = vec![f64::INFINITY; n_s];
    let mut policy = vec![0usize; n_s];
    loop {
        let v = exact_policy_value(mdp, &policy);
        for s in 0..n_s {
            best[s] = best[s].min(v[s]);
        }
        let mut k = 0;
        while k < n_s {
            policy[k] += 1;
            if policy[k] < n_a {
                break;
            }
            policy[k] = 0;
            k += 1;
        }
        if k == n_s {
            return best;
        }
    }
}

pub fn weighted_gap(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| (x - y).abs() / w).fold(0.0, f64::max)
}
