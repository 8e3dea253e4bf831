//! C interface to `mdp-approx`.
//!
//! Every function returns an [`MdpaStatus`]. On failure a message is kept per
//! thread and can be read with [`mdpa_last_error`]. Models and solved pairs
//! are opaque handles released with their `_free` function. Arrays are
//! row-major: kernels are `S × A × S`, costs `S × A`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mdp_approx::bounds::{performance_loss_bound, LossRoute, ValueSource};
use mdp_approx::ipm::{ipm_distance, GroundMetric, IpmKind};
use mdp_approx::lqr::{lqr_performance_bound, Alpha2, LqrModel, LqrSolveOptions};
use mdp_approx::mdp::{policy_evaluation, value_iteration, AffineTransform, FiniteMdp, Policy, SolveOptions};
use mdp_approx::mismatch::{ModelPair, SolvedPair};
use mdp_approx::weighting::{kappa_model, kappa_policy, AssumptionStatus, WeightFn};
use mdp_approx::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdpaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Dimension = 3,
    Convergence = 4,
    Unstable = 5,
    Panic = 6,
}

/// Values accepted by the `route` argument of [`mdpa_performance_loss_bound`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdpaRoute {
    PolicyPairApprox = 0,
    PolicyPairTrue = 1,
    OptimalityApprox = 2,
    OptimalityTrue = 3,
    OpenLoopApprox = 4,
    OpenLoopTrue = 5,
}

/// Values accepted by the `kind` argument of [`mdpa_ipm_distance`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdpaIpmKind {
    TotalVariation = 0,
    /// `aux` holds `n` point labels on the real line.
    WassersteinLabels = 1,
    /// `aux` holds an `n × n` distance matrix.
    WassersteinMatrix = 2,
    /// `aux` holds `n` weights, each at least 1.
    WeightedTotalVariation = 3,
}

/// Certification outcome, as in [`MdpaBound::status`].
pub const MDPA_CERTIFIED: i32 = 0;
pub const MDPA_NOT_CERTIFIED: i32 = 1;
pub const MDPA_UNCHECKED: i32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpaBound {
    /// Weighted-norm bound; `+inf` when `gamma * kappa >= 1`.
    pub bound: f64,
    pub kappa: f64,
    pub gamma_kappa: f64,
    /// The bounded quantity, or NaN when the true model was not solved.
    pub realized: f64,
    pub status: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpaLqrBound {
    pub rho_d_star: f64,
    pub rho_d_pihat: f64,
    pub d_sigma: f64,
    pub alpha2: f64,
    pub kappa: f64,
    pub gamma_kappa: f64,
    pub bound: f64,
    pub certified: bool,
}

/// A finite MDP.
pub struct MdpaMdp(FiniteMdp);

/// A true/approximate pair with both optima solved.
pub struct MdpaSolvedPair(SolvedPair);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MdpaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = status_of(&e);
        Failure(code, e.to_string())
    }
}

fn status_of(e: &Error) -> MdpaStatus {
    match e {
        Error::DimensionMismatch { .. } => MdpaStatus::Dimension,
        Error::Convergence { .. } => MdpaStatus::Convergence,
        Error::Unstable(_) => MdpaStatus::Unstable,
        Error::Experiment { source, .. } => status_of(source),
        _ => MdpaStatus::InvalidInput,
    }
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MdpaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MdpaStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MdpaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MdpaStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MdpaStatus::InvalidInput, msg.into())
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr.write(value);
    Ok(())
}

fn solve_options(tol: f64, max_iter: usize) -> Result<SolveOptions, Failure> {
    Ok(SolveOptions::new(tol, max_iter)?)
}

fn route_of(route: u32) -> Result<LossRoute, Failure> {
    Ok(match route {
        0 => LossRoute::PolicyPair(ValueSource::Approx),
        1 => LossRoute::PolicyPair(ValueSource::True),
        2 => LossRoute::Optimality(ValueSource::Approx),
        3 => LossRoute::Optimality(ValueSource::True),
        4 => LossRoute::OpenLoop(ValueSource::Approx),
        5 => LossRoute::OpenLoop(ValueSource::True),
        other => return Err(invalid(format!("unknown route {other}"))),
    })
}

fn status_code(s: AssumptionStatus) -> i32 {
    match s {
        AssumptionStatus::Certified => MDPA_CERTIFIED,
        AssumptionStatus::NotCertified => MDPA_NOT_CERTIFIED,
        AssumptionStatus::Unchecked => MDPA_UNCHECKED,
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn mdpa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Builds a model from a dense kernel (`n_states * n_actions * n_states`
/// entries) and cost (`n_states * n_actions`).
///
/// # Safety
/// Array arguments must point to at least the stated number of values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mdpa_mdp_new_dense(
    n_states: usize,
    n_actions: usize,
    kernel: *const f64,
    cost: *const f64,
    discount: f64,
    out: *mut *mut MdpaMdp,
) -> MdpaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let k_len = n_states.checked_mul(n_actions).and_then(|x| x.checked_mul(n_states));
        let k_len = k_len.ok_or_else(|| invalid("model size overflows"))?;
        let kernel = slice(kernel, k_len, "kernel")?.to_vec();
        let cost = slice(cost, n_states * n_actions, "cost")?.to_vec();
        let mdp = FiniteMdp::dense(n_states, n_actions, kernel, cost, discount)?;
        write(out, Box::into_raw(Box::new(MdpaMdp(mdp))), "out")
    })
}

/// # Safety
/// `mdp` must come from [`mdpa_mdp_new_dense`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mdpa_mdp_free(mdp: *mut MdpaMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// # Safety
/// `mdp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdpa_mdp_n_states(mdp: *const MdpaMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_states())
}

/// # Safety
/// `mdp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdpa_mdp_n_actions(mdp: *const MdpaMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.0.n_actions())
}

/// Optimal value into `value_out` (`n_states` entries) and, when
/// `policy_out` is not null, the greedy action per state.
///
/// # Safety
/// `mdp` must be a live handle; non-null outputs must hold `n_states` entries.
#[no_mangle]
pub unsafe extern "C" fn mdpa_value_iteration(
    mdp: *const MdpaMdp,
    tol: f64,
    max_iter: usize,
    value_out: *mut f64,
    policy_out: *mut usize,
) -> MdpaStatus {
    guard(|| {
        let m = &deref(mdp, "mdp")?.0;
        let n = m.n_states();
        let value = slice_mut(value_out, n, "value_out")?;
        let sol = value_iteration(m, solve_options(tol, max_iter)?)?;
        value.copy_from_slice(&sol.value);
        if !policy_out.is_null() {
            let actions = sol.policy.actions().expect("greedy policies are deterministic");
            slice_mut(policy_out, n, "policy_out")?.copy_from_slice(actions);
        }
        Ok(())
    })
}

fn policy_from(m: &FiniteMdp, actions: &[usize]) -> Result<Policy, Failure> {
    let p = Policy::deterministic(actions.to_vec());
    p.validate_for(m)?;
    Ok(p)
}

/// Value of the deterministic policy `policy` (`n_states` action indices).
///
/// # Safety
/// `mdp` must be a live handle; arrays must hold `n_states` entries.
#[no_mangle]
pub unsafe extern "C" fn mdpa_policy_evaluation(
    mdp: *const MdpaMdp,
    policy: *const usize,
    tol: f64,
    max_iter: usize,
    value_out: *mut f64,
) -> MdpaStatus {
    guard(|| {
        let m = &deref(mdp, "mdp")?.0;
        let n = m.n_states();
        let pi = policy_from(m, slice(policy, n, "policy")?)?;
        let value = slice_mut(value_out, n, "value_out")?;
        let v = policy_evaluation(m, &pi, solve_options(tol, max_iter)?)?;
        value.copy_from_slice(&v);
        Ok(())
    })
}

/// Expansion factor of `weight` under a deterministic policy.
///
/// # Safety
/// `mdp` must be a live handle; arrays must hold `n_states` entries.
#[no_mangle]
pub unsafe extern "C" fn mdpa_kappa_policy(
    mdp: *const MdpaMdp,
    policy: *const usize,
    weight: *const f64,
    kappa_out: *mut f64,
) -> MdpaStatus {
    guard(|| {
        let m = &deref(mdp, "mdp")?.0;
        let n = m.n_states();
        let pi = policy_from(m, slice(policy, n, "policy")?)?;
        let w = WeightFn::new(slice(weight, n, "weight")?.to_vec())?;
        write(kappa_out, kappa_policy(m, &pi, &w)?.kappa, "kappa_out")
    })
}

/// Expansion factor of `weight` over every action.
///
/// # Safety
/// `mdp` must be a live handle; `weight` must hold `n_states` entries.
#[no_mangle]
pub unsafe extern "C" fn mdpa_kappa_model(mdp: *const MdpaMdp, weight: *const f64, kappa_out: *mut f64) -> MdpaStatus {
    guard(|| {
        let m = &deref(mdp, "mdp")?.0;
        let w = WeightFn::new(slice(weight, m.n_states(), "weight")?.to_vec())?;
        write(kappa_out, kappa_model(m, &w)?.kappa, "kappa_out")
    })
}

/// Solves the approximate model, evaluates its optimal policy in the true
/// model and, when `solve_truth` is set, solves the true model too. The
/// models are copied; the handles stay owned by the caller.
///
/// # Safety
/// `truth` and `approx` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mdpa_pair_solve(
    truth: *const MdpaMdp,
    approx: *const MdpaMdp,
    tol: f64,
    max_iter: usize,
    solve_truth: bool,
    out: *mut *mut MdpaSolvedPair,
) -> MdpaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pair = ModelPair::new(deref(truth, "truth")?.0.clone(), deref(approx, "approx")?.0.clone())?;
        let solved = SolvedPair::solve(pair, solve_options(tol, max_iter)?, solve_truth)?;
        write(out, Box::into_raw(Box::new(MdpaSolvedPair(solved))), "out")
    })
}

/// # Safety
/// `pair` must come from [`mdpa_pair_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mdpa_pair_free(pair: *mut MdpaSolvedPair) {
    if !pair.is_null() {
        drop(Box::from_raw(pair));
    }
}

/// Value of the approximate model's optimal policy in the true model.
///
/// # Safety
/// `pair` must be a live handle; `value_out` must hold `n_states` entries.
#[no_mangle]
pub unsafe extern "C" fn mdpa_pair_deployed_value(pair: *const MdpaSolvedPair, value_out: *mut f64) -> MdpaStatus {
    guard(|| {
        let p = &deref(pair, "pair")?.0;
        let v = p.deployed_value();
        slice_mut(value_out, v.len(), "value_out")?.copy_from_slice(v);
        Ok(())
    })
}

/// Bound on the weighted loss of deploying the approximate optimal policy,
/// with cost transform `(alpha1, alpha2)` and a route from [`MdpaRoute`].
///
/// # Safety
/// `pair` must be a live handle; `weight` must hold `n_states` entries.
#[no_mangle]
pub unsafe extern "C" fn mdpa_performance_loss_bound(
    pair: *const MdpaSolvedPair,
    weight: *const f64,
    kappa: f64,
    alpha1: f64,
    alpha2: f64,
    route: u32,
    out: *mut MdpaBound,
) -> MdpaStatus {
    guard(|| {
        let p = &deref(pair, "pair")?.0;
        let w = WeightFn::new(slice(weight, p.pair().n_states(), "weight")?.to_vec())?;
        let t = AffineTransform::new(alpha1, alpha2)?;
        let r = performance_loss_bound(p, &w, kappa, t, route_of(route)?)?;
        let result = MdpaBound {
            bound: r.bound,
            kappa: r.kappa,
            gamma_kappa: r.gamma_kappa,
            realized: r.realized.unwrap_or(f64::NAN),
            status: status_code(r.status),
        };
        write(out, result, "out")
    })
}

/// Distance between two distributions on `n` points. `aux` depends on `kind`
/// (see [`MdpaIpmKind`]) and may be null for total variation.
///
/// # Safety
/// `p` and `q` must hold `n` entries, `aux` as required by `kind`.
#[no_mangle]
pub unsafe extern "C" fn mdpa_ipm_distance(
    kind: u32,
    n: usize,
    p: *const f64,
    q: *const f64,
    aux: *const f64,
    out: *mut f64,
) -> MdpaStatus {
    guard(|| {
        let p = slice(p, n, "p")?;
        let q = slice(q, n, "q")?;
        let kind = match kind {
            0 => IpmKind::TotalVariation,
            1 => IpmKind::Wasserstein(GroundMetric::labels(slice(aux, n, "aux")?.to_vec())?),
            2 => IpmKind::Wasserstein(GroundMetric::matrix(n, slice(aux, n * n, "aux")?.to_vec())?),
            3 => IpmKind::WeightedTotalVariation(WeightFn::new(slice(aux, n, "aux")?.to_vec())?),
            other => return Err(invalid(format!("unknown distance kind {other}"))),
        };
        write(out, ipm_distance(p, q, &kind)?, "out")
    })
}

#[allow(clippy::too_many_arguments)]
unsafe fn lqr_model(
    n_s: usize,
    n_a: usize,
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    sigma: *const f64,
    discount: f64,
) -> Result<LqrModel, Failure> {
    Ok(LqrModel::from_row_major(
        n_s,
        n_a,
        slice(a, n_s * n_s, "A")?,
        slice(b, n_s * n_a, "B")?,
        slice(q, n_s * n_s, "Q")?,
        slice(r, n_a * n_a, "R")?,
        slice(sigma, n_s * n_s, "noise covariance")?,
        discount,
    )?)
}

/// Bound for deploying the approximate model's optimal gain in the true
/// linear-quadratic model with weight `1 + ell * |s|^2`. Matrices are
/// row-major. A NaN `alpha2` picks the offset that cancels the noise term.
///
/// # Safety
/// Matrix arguments must hold the stated number of entries and `out` must be
/// writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mdpa_lqr_bound(
    n_states: usize,
    n_inputs: usize,
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    sigma: *const f64,
    a_hat: *const f64,
    b_hat: *const f64,
    q_hat: *const f64,
    r_hat: *const f64,
    sigma_hat: *const f64,
    discount: f64,
    ell: f64,
    alpha2: f64,
    out: *mut MdpaLqrBound,
) -> MdpaStatus {
    guard(|| {
        let m = lqr_model(n_states, n_inputs, a, b, q, r, sigma, discount)?;
        let m_hat = lqr_model(n_states, n_inputs, a_hat, b_hat, q_hat, r_hat, sigma_hat, discount)?;
        let alpha2 = if alpha2.is_nan() { Alpha2::Auto } else { Alpha2::Fixed(alpha2) };
        let rep = lqr_performance_bound(&m, &m_hat, ell, alpha2, LqrSolveOptions::default())?;
        let result = MdpaLqrBound {
            rho_d_star: rep.rho_d_star,
            rho_d_pihat: rep.rho_d_pihat,
            d_sigma: rep.d_sigma,
            alpha2: rep.alpha2,
            kappa: rep.kappa(),
            gamma_kappa: rep.cert.gamma_kappa,
            bound: rep.bound,
            certified: rep.certified(),
        };
        write(out, result, "out")
    })
}
