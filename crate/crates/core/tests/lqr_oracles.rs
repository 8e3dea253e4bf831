use mdp_approx::lqr::{
    certify_lq_stability, evaluate_linear_policy, lqr_performance_bound, lqr_realized_gap, solve_riccati,
    weighted_quadratic_sup, Alpha2, LqrModel, LqrSolveOptions,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar(a: f64, b: f64, q: f64, r: f64, sigma: f64, g: f64) -> LqrModel {
    LqrModel::from_row_major(1, 1, &[a], &[b], &[q], &[r], &[sigma], g).unwrap()
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.gen_range(-scale..scale))
}

fn random_psd(r: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let m = random_matrix(r, n, n, scale);
    &m * m.transpose()
}

/// A random pair with a perturbed approximation, or `None` when either model
/// is rejected.
fn random_pair(r: &mut ChaCha8Rng, n: usize) -> Option<(LqrModel, LqrModel)> {
    let g = r.gen_range(0.5..0.9);
    let a = random_matrix(r, n, n, 0.9);
    let b = random_matrix(r, n, 1, 1.0);
    let q = random_psd(r, n, 1.0) + DMatrix::identity(n, n) * 0.1;
    let rr = DMatrix::from_element(1, 1, r.gen_range(0.2..2.0));
    let sigma = random_psd(r, n, 0.3);
    let a_hat = &a + random_matrix(r, n, n, 0.05);
    let b_hat = &b + random_matrix(r, n, 1, 0.05);
    let sigma_hat = random_psd(r, n, 0.3);
    let m = LqrModel::new(a, b, q.clone(), rr.clone(), sigma, g).ok()?;
    let m_hat = LqrModel::new(a_hat, b_hat, q, rr, sigma_hat, g).ok()?;
    Some((m, m_hat))
}

/// Points in the plane on 3600 rays at radii spanning several decades.
fn probe_points() -> Vec<DVector<f64>> {
    let mut out = vec![DVector::zeros(2)];
    for k in 0..3600 {
        let t = std::f64::consts::PI * k as f64 / 3600.0;
        for e in -3..=6 {
            let r = 10f64.powi(e);
            out.push(DVector::from_vec(vec![r * t.cos(), r * t.sin()]));
        }
    }
    out
}

fn opts() -> LqrSolveOptions {
    LqrSolveOptions::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_riccati_matches_the_quadratic_root(a in -1.5f64..1.5, b in 0.2f64..2.0, q in 0.1f64..3.0, rr in 0.1f64..3.0, g in 0.1f64..0.95) {
        let m = scalar(a, b, q, rr, 0.0, g);
        let sol = solve_riccati(&m, opts()).unwrap();
        // γb²P² + (r(1 − γa²) − qγb²)P − qr = 0.
        let (qa, qb, qc) = (g * b * b, rr * (1.0 - g * a * a) - q * g * b * b, -q * rr);
        let root = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        prop_assert!((sol.p[(0, 0)] - root).abs() < 1e-9 * (1.0 + root));
        let gain = g * b * root * a / (rr + g * b * b * root);
        prop_assert!((sol.gain[(0, 0)] - gain).abs() < 1e-9 * (1.0 + gain.abs()));
    }

    #[test]
    fn policy_value_matches_truncated_series(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let Some((m, _)) = random_pair(&mut r, 2) else { return Ok(()) };
        let k = solve_riccati(&m, opts()).unwrap().gain;
        let v = evaluate_linear_policy(&m, &k, opts()).unwrap();
        let ak = m.closed_loop(&k);
        let stage = m.q() + k.transpose() * m.r() * &k;
        // Σ_t (√γ A_K)ᵗᵀ stage (√γ A_K)ᵗ, scaled so the powers stay finite.
        let scaled = &ak * m.discount().sqrt();
        let mut series = DMatrix::zeros(2, 2);
        let mut power = DMatrix::identity(2, 2);
        for _ in 0..20_000 {
            series += power.transpose() * &stage * &power;
            power = &scaled * power;
        }
        prop_assert!((&v.p - &series).amax() < 1e-8 * (1.0 + series.amax()));
        let offset = m.discount() * (m.noise_cov() * &series).trace() / (1.0 - m.discount());
        prop_assert!((v.offset - offset).abs() < 1e-8 * (1.0 + offset.abs()));
    }

    #[test]
    fn weighted_sup_matches_search(seed in any::<u64>(), ell in 0.01f64..2.0, c in -3.0f64..3.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let d = random_matrix(&mut r, 2, 2, 2.0);
        let d = (&d + d.transpose()) * 0.5;
        let closed = weighted_quadratic_sup(&d, c, ell);
        let searched = probe_points()
            .iter()
            .map(|s| (s.dot(&(&d * s)) + c).abs() / (1.0 + ell * s.norm_squared()))
            .fold(0.0, f64::max);
        prop_assert!(searched <= closed + 1e-12);
        prop_assert!(searched >= closed * (1.0 - 1e-5) - 1e-9);
    }

    #[test]
    fn stability_certificate_bounds_the_weight_growth(seed in any::<u64>(), ell in 0.01f64..1.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let Some((m, m_hat)) = random_pair(&mut r, 2) else { return Ok(()) };
        let truth = solve_riccati(&m, opts()).unwrap();
        let approx = solve_riccati(&m_hat, opts()).unwrap();
        let cert = certify_lq_stability(&m, &m_hat, &truth, &approx, ell).unwrap();
        let loops = [
            (&m, truth.gain.clone()),
            (&m, approx.gain.clone()),
            (&m_hat, approx.gain.clone()),
            (&m, cert.greedy_gain.clone()),
        ];
        for (model, k) in loops {
            let ak = model.closed_loop(&k);
            let tr = model.noise_cov().trace();
            for s in probe_points() {
                let next = &ak * &s;
                let ratio = (1.0 + ell * (next.norm_squared() + tr)) / (1.0 + ell * s.norm_squared());
                prop_assert!(ratio <= cert.kappa * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn realized_gap_matches_pointwise_search(seed in any::<u64>(), ell in 0.05f64..2.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let Some((m, m_hat)) = random_pair(&mut r, 2) else { return Ok(()) };
        let k_hat = solve_riccati(&m_hat, opts()).unwrap().gain;
        let Ok(gap) = lqr_realized_gap(&m, &k_hat, ell, opts()) else { return Ok(()) };
        let star = solve_riccati(&m, opts()).unwrap();
        let deployed = evaluate_linear_policy(&m, &k_hat, opts()).unwrap();
        let searched = probe_points()
            .iter()
            .map(|s| {
                let v = s.dot(&(&deployed.p * s)) + deployed.offset;
                let v_star = s.dot(&(&star.p * s)) + star.offset;
                (v - v_star).abs() / (1.0 + ell * s.norm_squared())
            })
            .fold(0.0, f64::max);
        prop_assert!(searched <= gap * (1.0 + 1e-9) + 1e-12);
        prop_assert!(searched >= gap * (1.0 - 1e-5) - 1e-9);
    }
}

/// Random scalar and 2-D pairs: the bound dominates the realized gap whenever
/// the certificate holds.
#[test]
fn bound_dominates_realized_gap_on_random_pairs() {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let mut certified = 0;
    for trial in 0..400 {
        let n = 1 + trial % 2;
        let Some((m, m_hat)) = random_pair(&mut r, n) else { continue };
        let ell = r.gen_range(0.01..1.0);
        let Ok(report) = lqr_performance_bound(&m, &m_hat, ell, Alpha2::Auto, opts()) else { continue };
        if !report.certified() {
            assert_eq!(report.bound, f64::INFINITY);
            continue;
        }
        certified += 1;
        let gap = lqr_realized_gap(&m, &report.k_hat, ell, opts()).unwrap();
        assert!(gap <= report.bound + 1e-8, "trial {trial}: {gap} > {}", report.bound);
    }
    assert!(certified >= 50, "only {certified} certified pairs");
}

#[test]
fn noiseless_twin_has_zero_mismatch() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let m = LqrModel::new(a, b, DMatrix::identity(2, 2), DMatrix::identity(1, 1), DMatrix::identity(2, 2) * 0.5, 0.7)
        .unwrap();
    let m_hat = m.with_noise_cov(DMatrix::zeros(2, 2)).unwrap();
    let report = lqr_performance_bound(&m, &m_hat, 0.01, Alpha2::Auto, opts()).unwrap();
    assert!(report.certified());
    assert!(report.rho_d_star <= 1e-9 && report.rho_d_pihat <= 1e-9);
    assert!(report.bound <= 1e-9, "{}", report.bound);
    // Without the offset the noise term shows up in the bound.
    let fixed = lqr_performance_bound(&m, &m_hat, 0.01, Alpha2::Fixed(0.0), opts()).unwrap();
    assert!((fixed.bound - 2.0 * report.d_sigma.abs() / (1.0 - report.cert.gamma_kappa)).abs() < 1e-6);
}

#[test]
fn rejects_unstabilizable_models() {
    // The second state is unstable under discount and receives no input.
    let a = [1.0, 0.0, 0.0, 2.0];
    let b = [1.0, 0.0];
    let err = LqrModel::from_row_major(2, 1, &a, &b, &[1.0, 0.0, 0.0, 1.0], &[1.0], &[0.0; 4], 0.9);
    assert!(err.is_err());
    // Fine once the discount tames it.
    assert!(LqrModel::from_row_major(2, 1, &a, &b, &[1.0, 0.0, 0.0, 1.0], &[1.0], &[0.0; 4], 0.2).is_ok());
}

#[test]
fn rejects_malformed_matrices() {
    assert!(LqrModel::from_row_major(1, 1, &[1.0], &[1.0], &[1.0], &[0.0], &[0.0], 0.9).is_err());
    assert!(LqrModel::from_row_major(1, 1, &[1.0], &[1.0], &[-1.0], &[1.0], &[0.0], 0.9).is_err());
    assert!(LqrModel::from_row_major(2, 1, &[1.0, 2.0, 0.0, 1.0], &[0.0, 1.0], &[1.0, 0.5, 0.0, 1.0], &[1.0], &[0.0; 4], 0.9).is_err());
    assert!(LqrModel::from_row_major(1, 1, &[f64::NAN], &[1.0], &[1.0], &[1.0], &[0.0], 0.9).is_err());
}
