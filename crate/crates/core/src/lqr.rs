//! Discounted linear-quadratic regulators: Riccati and Lyapunov solvers,
//! stability certificates for the weight `w(s) = 1 + ℓ·sᵀs`, and a closed-form
//! bound on the loss of deploying the approximate model's optimal gain.
//!
//! Dynamics are `s' = A s + B a + noise` with noise covariance `Σ`, cost
//! `sᵀQs + aᵀRa`. Linear policies are `a = −K s`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::weighting::gamma_kappa_valid;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
/// Relative singular-value cutoff for the rank tests.
const RANK_TOL: f64 = 1e-9;
/// Consecutive growing residuals that mark a Lyapunov iteration as divergent.
const DIVERGENCE_RUN: usize = 20;
/// Extra Riccati iterations allowed past the tolerance.
const POLISH_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrSolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LqrSolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    sigma: DMatrix<f64>,
    discount: f64,
}

fn check_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::invalid(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} has a non-finite entry")));
    }
    Ok(())
}

fn check_symmetric(what: &str, m: &DMatrix<f64>) -> Result<()> {
    let gap = (m - m.transpose()).amax();
    if gap > SYMMETRY_TOL {
        return Err(Error::invalid(format!("{what} is not symmetric (max gap {gap:e})")));
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Spectral radius of a symmetric matrix.
pub fn spectral_radius_sym(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.amax()
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

fn complex_rank_full(m: DMatrix<Complex<f64>>, n: usize) -> bool {
    let sv = m.singular_values();
    let top = sv.max().max(1.0);
    sv.len() >= n && sv.iter().filter(|&&x| x > RANK_TOL * top).count() >= n
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

/// Square root of a symmetric PSD matrix.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

impl LqrModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma: DMatrix<f64>,
        discount: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::invalid("LQR model needs at least one state and one input"));
        }
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, m)?;
        check_shape("Q", &q, n, n)?;
        check_shape("R", &r, m, m)?;
        check_shape("noise covariance", &sigma, n, n)?;
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid(format!("discount {discount} not in (0, 1)")));
        }
        for (what, mat, floor) in [("Q", &q, -PSD_TOL), ("noise covariance", &sigma, -PSD_TOL), ("R", &r, PSD_TOL)] {
            check_symmetric(what, mat)?;
            let low = min_eigenvalue(mat);
            if low < floor {
                return Err(Error::invalid(format!("{what} has eigenvalue {low:e} below {floor:e}")));
            }
        }
        let model = Self {
            a,
            b,
            q,
            r,
            sigma,
            discount,
        };
        model.check_stabilizable_detectable()?;
        Ok(model)
    }

    /// Builds a model from row-major slices.
    #[allow(clippy::too_many_arguments)]
    pub fn from_row_major(
        n_s: usize,
        n_a: usize,
        a: &[f64],
        b: &[f64],
        q: &[f64],
        r: &[f64],
        sigma: &[f64],
        discount: f64,
    ) -> Result<Self> {
        let mat = |what: &'static str, rows: usize, cols: usize, data: &[f64]| {
            Error::check_len(what, rows * cols, data.len())?;
            Ok::<_, Error>(DMatrix::from_row_slice(rows, cols, data))
        };
        Self::new(
            mat("A", n_s, n_s, a)?,
            mat("B", n_s, n_a, b)?,
            mat("Q", n_s, n_s, q)?,
            mat("R", n_a, n_a, r)?,
            mat("noise covariance", n_s, n_s, sigma)?,
            discount,
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Same model with a different noise covariance.
    pub fn with_noise_cov(&self, sigma: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.q.clone(), self.r.clone(), sigma, self.discount)
    }

    /// `A − BK`.
    pub fn closed_loop(&self, gain: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a - &self.b * gain
    }

    /// PBH tests on the discounted pair `(√γA, √γB)`: every eigenvalue of `A`
    /// with `√γ|λ| ≥ 1` must be controllable through `B` and observable
    /// through `Q^{1/2}`.
    fn check_stabilizable_detectable(&self) -> Result<()> {
        let n = self.n_states();
        let eig = self.a.clone().complex_eigenvalues();
        let q_half = to_complex(&psd_sqrt(&self.q));
        let a_c = to_complex(&self.a);
        let b_c = to_complex(&self.b);
        let sqrt_g = self.discount.sqrt();
        for lambda in eig.iter() {
            if sqrt_g * lambda.norm() < 1.0 - 1e-12 {
                continue;
            }
            let shifted = DMatrix::<Complex<f64>>::identity(n, n) * *lambda - &a_c;
            let mut ctrb = DMatrix::<Complex<f64>>::zeros(n, n + b_c.ncols());
            ctrb.view_mut((0, 0), (n, n)).copy_from(&shifted);
            ctrb.view_mut((0, n), (n, b_c.ncols())).copy_from(&b_c);
            if !complex_rank_full(ctrb, n) {
                return Err(Error::Unstable(format!(
                    "(A, B) is not stabilizable under discount: mode {lambda} is uncontrollable"
                )));
            }
            let mut obsv = DMatrix::<Complex<f64>>::zeros(2 * n, n);
            obsv.view_mut((0, 0), (n, n)).copy_from(&shifted);
            obsv.view_mut((n, 0), (n, n)).copy_from(&q_half);
            if !complex_rank_full(obsv, n) {
                return Err(Error::Unstable(format!(
                    "(A, Q^1/2) is not detectable under discount: mode {lambda} is unobservable"
                )));
            }
        }
        Ok(())
    }

    /// `γ(R + γBᵀPB)⁻¹BᵀPA`, the greedy gain for the quadratic value `sᵀPs`.
    pub fn greedy_gain(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let g = self.discount;
        let btp = self.b.transpose() * p;
        let lhs = &self.r + &btp * &self.b * g;
        let chol = lhs
            .cholesky()
            .ok_or_else(|| Error::Unstable("R + γBᵀPB is not positive definite".into()))?;
        Ok(chol.solve(&(btp * &self.a)) * g)
    }

    /// One application of the discounted Riccati map.
    pub fn riccati_map(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let g = self.discount;
        let atp = self.a.transpose() * p;
        let k = self.greedy_gain(p)?;
        // γAᵀPB·K = γ²AᵀPB(R + γBᵀPB)⁻¹BᵀPA.
        let next = &self.q + &atp * &self.a * g - &atp * &self.b * &k * g;
        Ok(symmetrize(&next))
    }

    /// `Q + KᵀRK + γ A_Kᵀ P A_K`.
    pub fn lyapunov_map(&self, gain: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
        let ak = self.closed_loop(gain);
        let next = &self.q + gain.transpose() * &self.r * gain + ak.transpose() * p * &ak * self.discount;
        symmetrize(&next)
    }

    /// `γ·Tr(Σ P)/(1 − γ)`, the constant term of a quadratic value function.
    pub fn value_offset(&self, p: &DMatrix<f64>) -> f64 {
        let g = self.discount;
        g * (&self.sigma * p).trace() / (1.0 - g)
    }
}

/// Optimal value `sᵀPs + q` and gain `K*`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub offset: f64,
    pub gain: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Fixed-point iteration of the Riccati map from `P₀ = Q`, stopping when
/// `‖P_{k+1} − P_k‖₂ ≤ tol·max(1, ‖P_{k+1}‖₂)`.
pub fn solve_riccati(model: &LqrModel, opts: LqrSolveOptions) -> Result<RiccatiSolution> {
    let mut p = model.q.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = model.riccati_map(&p)?;
        residual = spectral_radius_sym(&(&next - &p));
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tol * spectral_radius_sym(&p).max(1.0) {
            // Keep going while the residual still shrinks; downstream bounds
            // divide residual-sized quantities by small weight scales.
            for _ in 0..POLISH_STEPS {
                let next = model.riccati_map(&p)?;
                let r = spectral_radius_sym(&(&next - &p));
                if !(r < residual) {
                    break;
                }
                residual = r;
                p = next;
            }
            if min_eigenvalue(&p) < -1e-9 * spectral_radius_sym(&p).max(1.0) {
                return Err(Error::Unstable("Riccati fixed point is not positive semidefinite".into()));
            }
            let gain = model.greedy_gain(&p)?;
            return Ok(RiccatiSolution {
                offset: model.value_offset(&p),
                p,
                gain,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        solver: "riccati",
        iterations: opts.max_iter,
        residual,
    })
}

/// Value `sᵀP^π s + q^π` of the linear policy `a = −K s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub p: DMatrix<f64>,
    pub offset: f64,
    pub iterations: usize,
}

/// Fixed-point iteration of the Lyapunov map from `P₀ = 0`.
pub fn evaluate_linear_policy(model: &LqrModel, gain: &DMatrix<f64>, opts: LqrSolveOptions) -> Result<PolicyValue> {
    check_shape("gain", gain, model.n_inputs(), model.n_states())?;
    let n = model.n_states();
    let mut p = DMatrix::zeros(n, n);
    let mut last = f64::INFINITY;
    let mut growing = 0;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = model.lyapunov_map(gain, &p);
        residual = spectral_radius_sym(&(&next - &p));
        p = next;
        if !residual.is_finite() {
            return Err(Error::Unstable("linear policy value diverged".into()));
        }
        if residual <= opts.tol * spectral_radius_sym(&p).max(1.0) {
            return Ok(PolicyValue {
                offset: model.value_offset(&p),
                p,
                iterations: it,
            });
        }
        growing = if residual > last { growing + 1 } else { 0 };
        if growing >= DIVERGENCE_RUN {
            return Err(Error::Unstable(format!(
                "linear policy value diverges: residual grew for {DIVERGENCE_RUN} consecutive iterations"
            )));
        }
        last = residual;
    }
    Err(Error::Convergence {
        solver: "lyapunov",
        iterations: opts.max_iter,
        residual,
    })
}

/// `sup_s |sᵀDs + c| / (1 + ℓ·sᵀs)` for symmetric `D`, which equals
/// `max(|c|, ρ(D)/ℓ)`: along each eigendirection the ratio is monotone in
/// `sᵀs` between `c` and `λ/ℓ`.
pub fn weighted_quadratic_sup(d: &DMatrix<f64>, c: f64, ell: f64) -> f64 {
    c.abs().max(spectral_radius_sym(d) / ell)
}

/// Stability certificate for `w(s) = 1 + ℓ·sᵀs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqStabilityCert {
    pub ell: f64,
    /// `max(1 + ℓTr Σ, 1 + ℓTr Σ̂)`.
    pub noise_growth: f64,
    /// Largest squared operator norm among the relevant closed loops.
    pub closed_loop_growth: f64,
    pub kappa: f64,
    pub gamma_kappa: f64,
    pub valid: bool,
    /// Gain of the greedy policy for `V̂*` in the true model.
    pub greedy_gain: DMatrix<f64>,
}

fn check_pair(m: &LqrModel, m_hat: &LqrModel) -> Result<()> {
    Error::check_len("LQR pair states", m.n_states(), m_hat.n_states())?;
    Error::check_len("LQR pair inputs", m.n_inputs(), m_hat.n_inputs())?;
    if m.discount != m_hat.discount {
        return Err(Error::invalid("LQR pair discounts differ"));
    }
    Ok(())
}

fn check_ell(ell: f64) -> Result<()> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::invalid(format!("weight scale must be finite and > 0, got {ell}")));
    }
    Ok(())
}

/// `κ = max(noise growth, closed-loop growth)` over the loops `A − BK*`,
/// `A − BK̂*`, `Â − B̂K̂*` and `A − BK_μ`, with `K_μ` the greedy gain of
/// `V̂*` in the true model.
pub fn certify_lq_stability(
    m: &LqrModel,
    m_hat: &LqrModel,
    truth: &RiccatiSolution,
    approx: &RiccatiSolution,
    ell: f64,
) -> Result<LqStabilityCert> {
    check_pair(m, m_hat)?;
    check_ell(ell)?;
    let noise_growth = (1.0 + ell * m.sigma.trace()).max(1.0 + ell * m_hat.sigma.trace());
    let greedy_gain = m.greedy_gain(&approx.p)?;
    let loops = [
        m.closed_loop(&truth.gain),
        m.closed_loop(&approx.gain),
        m_hat.closed_loop(&approx.gain),
        m.closed_loop(&greedy_gain),
    ];
    let closed_loop_growth = loops.iter().map(|l| operator_norm(l).powi(2)).fold(0.0, f64::max);
    let kappa = noise_growth.max(closed_loop_growth);
    let gamma_kappa = m.discount * kappa;
    Ok(LqStabilityCert {
        ell,
        noise_growth,
        closed_loop_growth,
        kappa,
        gamma_kappa,
        valid: gamma_kappa_valid(gamma_kappa),
        greedy_gain,
    })
}

/// Cost offset `α₂` in the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha2 {
    /// `α₂ = −d_Σ`, which zeroes the constant mismatch.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrBoundReport {
    /// Optimality mismatch matrix at `V̂*`.
    pub d_star: DMatrix<f64>,
    /// Mismatch matrix of `π̂*` at `V̂*`.
    pub d_pihat: DMatrix<f64>,
    /// Optimal gain of the approximate model.
    pub k_hat: DMatrix<f64>,
    /// `γ·Tr((Σ − Σ̂)P̂)`.
    pub d_sigma: f64,
    pub alpha2: f64,
    pub rho_d_star: f64,
    pub rho_d_pihat: f64,
    pub cert: LqStabilityCert,
    pub bound: f64,
}

impl LqrBoundReport {
    pub fn ell(&self) -> f64 {
        self.cert.ell
    }

    pub fn kappa(&self) -> f64 {
        self.cert.kappa
    }

    pub fn certified(&self) -> bool {
        self.cert.valid
    }
}

/// Weighted loss bound for deploying `K̂*` in the true model with
/// `w(s) = 1 + ℓ·sᵀs`. Only the approximate Riccati solution enters the bound;
/// the true one is used for the stability certificate.
pub fn lqr_performance_bound(
    m: &LqrModel,
    m_hat: &LqrModel,
    ell: f64,
    alpha2: Alpha2,
    opts: LqrSolveOptions,
) -> Result<LqrBoundReport> {
    check_pair(m, m_hat)?;
    check_ell(ell)?;
    let approx = solve_riccati(m_hat, opts)?;
    let truth = solve_riccati(m, opts)?;
    let cert = certify_lq_stability(m, m_hat, &truth, &approx, ell)?;
    let p_hat = &approx.p;
    let k_hat = approx.gain.clone();

    let d_star = m.riccati_map(p_hat)? - p_hat;
    let d_pihat = m.lyapunov_map(&k_hat, p_hat) - p_hat;
    let d_sigma = m.discount * ((&m.sigma - &m_hat.sigma) * p_hat).trace();
    let alpha2 = match alpha2 {
        Alpha2::Auto => -d_sigma,
        Alpha2::Fixed(a) => a,
    };
    let rho_d_star = spectral_radius_sym(&d_star);
    let rho_d_pihat = spectral_radius_sym(&d_pihat);
    let constant = (d_sigma + alpha2).abs();
    let numerator = (rho_d_star / ell).max(constant) + (rho_d_pihat / ell).max(constant);
    let bound = if cert.gamma_kappa < 1.0 {
        numerator / (1.0 - cert.gamma_kappa)
    } else {
        f64::INFINITY
    };
    Ok(LqrBoundReport {
        d_star,
        d_pihat,
        k_hat,
        d_sigma,
        alpha2,
        rho_d_star,
        rho_d_pihat,
        cert,
        bound,
    })
}

/// Realized `‖V^{π̂*} − V*‖_w` for `w(s) = 1 + ℓ·sᵀs`.
pub fn lqr_realized_gap(m: &LqrModel, k_hat: &DMatrix<f64>, ell: f64, opts: LqrSolveOptions) -> Result<f64> {
    check_ell(ell)?;
    let truth = solve_riccati(m, opts)?;
    let deployed = evaluate_linear_policy(m, k_hat, opts)?;
    Ok(weighted_quadratic_sup(
        &(&deployed.p - &truth.p),
        deployed.offset - truth.offset,
        ell,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, q: f64, r: f64, sigma: f64, g: f64) -> LqrModel {
        LqrModel::from_row_major(1, 1, &[a], &[b], &[q], &[r], &[sigma], g).unwrap()
    }

    #[test]
    fn dead_state_needs_no_control() {
        for g in [0.1, 0.5, 0.95] {
            let sol = solve_riccati(&scalar(0.0, 1.0, 1.0, 1.0, 0.0, g), LqrSolveOptions::default()).unwrap();
            assert!((sol.p[(0, 0)] - 1.0).abs() < 1e-14);
            assert_eq!(sol.gain[(0, 0)], 0.0);
        }
    }

    #[test]
    fn scalar_riccati_root() {
        // p = 1 + 0.9p − 0.81p²/(1 + 0.9p); clearing the denominator gives
        // 0.9p² − 0.8p − 1 = 0.
        let sol = solve_riccati(&scalar(1.0, 1.0, 1.0, 1.0, 0.0, 0.9), LqrSolveOptions::default()).unwrap();
        let root = (0.8 + (0.64f64 + 3.6).sqrt()) / 1.8;
        assert!((sol.p[(0, 0)] - root).abs() < 1e-10, "{} vs {root}", sol.p[(0, 0)]);
    }

    #[test]
    fn scalar_geometric_series() {
        let m = scalar(0.5, 0.0, 1.0, 1.0, 0.0, 0.8);
        let pv = evaluate_linear_policy(&m, &DMatrix::zeros(1, 1), LqrSolveOptions::default()).unwrap();
        assert!((pv.p[(0, 0)] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn weighted_sup_formula() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -5.0]);
        assert_eq!(weighted_quadratic_sup(&d, 1.0, 2.0), 2.5);
        assert_eq!(weighted_quadratic_sup(&d, -7.0, 2.0), 7.0);
    }

    #[test]
    fn rejects_unstabilizable() {
        // Unstable mode with no input.
        let err = LqrModel::from_row_major(1, 1, &[2.0], &[0.0], &[1.0], &[1.0], &[0.0], 0.9);
        assert!(matches!(err, Err(Error::Unstable(_))));
    }

    #[test]
    fn divergent_policy_is_reported() {
        let m = scalar(2.0, 1.0, 1.0, 1.0, 0.0, 0.9);
        let err = evaluate_linear_policy(&m, &DMatrix::zeros(1, 1), LqrSolveOptions::default());
        assert!(matches!(err, Err(Error::Unstable(_))));
    }
}
