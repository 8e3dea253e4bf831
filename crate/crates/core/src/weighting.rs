//! Weight functions, weighted sup-norms and stability certificates.
//!
//! A policy is `(κ, w)` stable when its kernel inflates `w` by at most `κ`
//! in one step and `γκ < 1`. [`check_assumptions`] certifies the stability
//! conditions the bounds rely on by building one deterministic witness policy
//! per condition and measuring its `κ`. A failing witness means "not
//! certified", not "false": some other policy in the same set may still be
//! stable.

use std::fmt;
use std::ops::Deref;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{bellman_optimal, AffineTransform, FiniteMdp, Policy};
use crate::mismatch::SolvedPair;

/// Certificates need `γκ < 1 − VALIDITY_MARGIN`.
pub const VALIDITY_MARGIN: f64 = 1e-12;
/// Rounding slack when comparing a measured `κ` against a supplied one.
const KAPPA_REL_TOL: f64 = 1e-12;

pub fn gamma_kappa_valid(gamma_kappa: f64) -> bool {
    gamma_kappa < 1.0 - VALIDITY_MARGIN
}

/// A weight `w : S → [1, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFn(Vec<f64>);

impl WeightFn {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((s, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 1.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("weight at state {s} is {w}, must be finite and >= 1")));
        }
        Ok(Self(weights))
    }

    /// `w ≡ 1`, under which the weighted norm is the sup-norm.
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_uniform(&self) -> bool {
        self.0.iter().all(|&w| w == 1.0)
    }
}

impl Deref for WeightFn {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `max_s |v(s)| / w(s)`.
pub fn weighted_norm(v: &[f64], w: &WeightFn) -> Result<f64> {
    weighted_norm_argmax(v, w).map(|(n, _)| n)
}

/// Weighted norm together with the first state attaining it.
pub fn weighted_norm_argmax(v: &[f64], w: &WeightFn) -> Result<(f64, usize)> {
    Error::check_len("weighted norm", w.len(), v.len())?;
    let mut best = (0.0, 0);
    for (s, (x, ws)) in v.iter().zip(w.iter()).enumerate() {
        let r = x.abs() / ws;
        if r > best.0 {
            best = (r, s);
        }
    }
    Ok(best)
}

/// What a [`StabilityCert`] covers.
#[derive(Debug, Clone, PartialEq)]
pub enum CertScope {
    Policy(Policy),
    /// Every action at every state.
    Model,
}

/// A measured expansion factor `κ` for a weight, plus its validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCert {
    pub kappa: f64,
    pub weight: WeightFn,
    pub scope: CertScope,
    pub gamma_kappa: f64,
    pub valid: bool,
    /// `‖c_π‖_w` for a policy, `max_a ‖c(·, a)‖_w` for a model.
    pub cost_bound: f64,
    /// State (and action, for models) attaining `κ`.
    pub argmax_state: usize,
    pub argmax_action: Option<usize>,
}

impl StabilityCert {
    fn new(
        kappa: f64,
        weight: &WeightFn,
        scope: CertScope,
        gamma: f64,
        cost_bound: f64,
        argmax: (usize, Option<usize>),
    ) -> Self {
        let gamma_kappa = gamma * kappa;
        Self {
            kappa,
            weight: weight.clone(),
            scope,
            gamma_kappa,
            valid: gamma_kappa_valid(gamma_kappa),
            cost_bound,
            argmax_state: argmax.0,
            argmax_action: argmax.1,
        }
    }
}

#[inline]
fn expected_weight(mdp: &FiniteMdp, s: usize, a: usize, w: &[f64]) -> f64 {
    mdp.expect(s, a, w)
}

/// `κ_w(π) = max_s Σ_{s'} w(s') P_π(s'|s) / w(s)`.
pub fn kappa_policy(mdp: &FiniteMdp, policy: &Policy, w: &WeightFn) -> Result<StabilityCert> {
    Error::check_len("weight", mdp.n_states(), w.len())?;
    policy.validate_for(mdp)?;
    let (kappa, state) = policy_kappa_raw(mdp, policy, w);
    let cost: Vec<f64> = (0..mdp.n_states()).map(|s| mdp.policy_cost(policy, s)).collect();
    let cost_bound = weighted_norm(&cost, w)?;
    Ok(StabilityCert::new(
        kappa,
        w,
        CertScope::Policy(policy.clone()),
        mdp.discount(),
        cost_bound,
        (state, policy.action(state)),
    ))
}

fn policy_kappa_raw(mdp: &FiniteMdp, policy: &Policy, w: &WeightFn) -> (f64, usize) {
    let ratio = |s: usize| mdp.policy_expect(policy, s, w) / w[s];
    let ratios: Vec<f64> = if mdp.n_states() >= 1024 {
        (0..mdp.n_states()).into_par_iter().map(ratio).collect()
    } else {
        (0..mdp.n_states()).map(ratio).collect()
    };
    first_max(&ratios)
}

fn first_max(xs: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &x) in xs.iter().enumerate() {
        if x > best.0 {
            best = (x, i);
        }
    }
    best
}

/// `κ̄_w = max_{s,a} Σ_{s'} w(s') P(s'|s,a) / w(s)`, plus `c_max`.
pub fn kappa_model(mdp: &FiniteMdp, w: &WeightFn) -> Result<StabilityCert> {
    Error::check_len("weight", mdp.n_states(), w.len())?;
    let n_a = mdp.n_actions();
    let per_state = |s: usize| {
        let mut best = (f64::NEG_INFINITY, 0);
        let mut cost = 0.0f64;
        for a in 0..n_a {
            let r = expected_weight(mdp, s, a, w) / w[s];
            if r > best.0 {
                best = (r, a);
            }
            cost = cost.max(mdp.cost(s, a).abs() / w[s]);
        }
        (best, cost)
    };
    let rows: Vec<((f64, usize), f64)> = if mdp.n_states() * n_a >= 1 << 14 {
        (0..mdp.n_states()).into_par_iter().map(per_state).collect()
    } else {
        (0..mdp.n_states()).map(per_state).collect()
    };
    let mut best = (f64::NEG_INFINITY, 0, 0);
    let mut c_max = 0.0f64;
    for (s, ((r, a), c)) in rows.into_iter().enumerate() {
        if r > best.0 {
            best = (r, s, a);
        }
        c_max = c_max.max(c);
    }
    Ok(StabilityCert::new(
        best.0,
        w,
        CertScope::Model,
        mdp.discount(),
        c_max,
        (best.1, Some(best.2)),
    ))
}

/// The stability conditions the bounds depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AssumptionId {
    /// `π*` is stable in the true model and `π̂*` is stable in both models.
    OptimalPoliciesStable,
    /// The true-model greedy policy of `V̂*` is stable in the true model.
    TrueGreedyOfApproxValue,
    /// The approximate-model greedy policy of `V*` is stable in the approximate model.
    ApproxGreedyOfTrueValue,
    /// Every open-loop policy is stable in both models.
    OpenLoopStable,
    /// The greedy policy of `V̂*` in the transformed true model is stable in the true model.
    TransformedGreedyOfApproxValue,
    /// The approximate-model greedy policy of `V*_α` is stable in the approximate model.
    ApproxGreedyOfTransformedValue,
}

impl AssumptionId {
    pub const ALL: [AssumptionId; 6] = [
        AssumptionId::OptimalPoliciesStable,
        AssumptionId::TrueGreedyOfApproxValue,
        AssumptionId::ApproxGreedyOfTrueValue,
        AssumptionId::OpenLoopStable,
        AssumptionId::TransformedGreedyOfApproxValue,
        AssumptionId::ApproxGreedyOfTransformedValue,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AssumptionId::OptimalPoliciesStable => "optimal-policies-stable",
            AssumptionId::TrueGreedyOfApproxValue => "true-greedy-of-approx-value",
            AssumptionId::ApproxGreedyOfTrueValue => "approx-greedy-of-true-value",
            AssumptionId::OpenLoopStable => "open-loop-stable",
            AssumptionId::TransformedGreedyOfApproxValue => "transformed-greedy-of-approx-value",
            AssumptionId::ApproxGreedyOfTransformedValue => "approx-greedy-of-transformed-value",
        }
    }

    /// Whether the witness needs the true model's optimum.
    pub fn needs_truth(&self) -> bool {
        matches!(
            self,
            AssumptionId::OptimalPoliciesStable
                | AssumptionId::ApproxGreedyOfTrueValue
                | AssumptionId::ApproxGreedyOfTransformedValue
        )
    }
}

impl fmt::Display for AssumptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionStatus {
    Certified,
    /// The witness was checked and is not stable at the supplied `κ`.
    NotCertified,
    /// The witness needs the true model's optimum, which was not computed.
    Unchecked,
}

impl fmt::Display for AssumptionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssumptionStatus::Certified => "certified",
            AssumptionStatus::NotCertified => "not-certified",
            AssumptionStatus::Unchecked => "unchecked",
        })
    }
}

/// Which model a witness was measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSide {
    True,
    Approx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub role: &'static str,
    pub model: ModelSide,
    pub policy: Policy,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub assumption: AssumptionId,
    pub status: AssumptionStatus,
    pub witnesses: Vec<Witness>,
    /// Largest witness `κ`, i.e. the smallest `κ` that would certify this check.
    pub kappa_achieved: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub kappa: f64,
    pub discount: f64,
    pub transform: AffineTransform,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn check(&self, id: AssumptionId) -> &AssumptionCheck {
        self.checks
            .iter()
            .find(|c| c.assumption == id)
            .expect("every assumption is checked")
    }

    pub fn status(&self, id: AssumptionId) -> AssumptionStatus {
        self.check(id).status
    }

    /// Worst status among `ids`: any failure wins over unchecked.
    pub fn combined_status(&self, ids: &[AssumptionId]) -> AssumptionStatus {
        let statuses: Vec<_> = ids.iter().map(|&id| self.status(id)).collect();
        if statuses.contains(&AssumptionStatus::NotCertified) {
            AssumptionStatus::NotCertified
        } else if statuses.contains(&AssumptionStatus::Unchecked) {
            AssumptionStatus::Unchecked
        } else {
            AssumptionStatus::Certified
        }
    }

    pub fn all_certified(&self, ids: &[AssumptionId]) -> bool {
        self.combined_status(ids) == AssumptionStatus::Certified
    }

    /// Smallest `κ` certifying every check in `ids`; `None` if one is unchecked.
    pub fn required_kappa(&self, ids: &[AssumptionId]) -> Option<f64> {
        ids.iter()
            .map(|&id| self.check(id).kappa_achieved)
            .try_fold(f64::NEG_INFINITY, |acc, k| k.map(|k| acc.max(k)))
    }

    /// Re-judges the same witnesses against a different `κ`.
    pub fn with_kappa(&self, kappa: f64) -> AssumptionReport {
        let mut out = self.clone();
        out.kappa = kappa;
        for check in &mut out.checks {
            check.status = judge(&check.witnesses, check.assumption, kappa, self.discount);
        }
        out
    }
}

fn judge(witnesses: &[Witness], id: AssumptionId, kappa: f64, gamma: f64) -> AssumptionStatus {
    if witnesses.is_empty() && id.needs_truth() {
        return AssumptionStatus::Unchecked;
    }
    if !gamma_kappa_valid(gamma * kappa) || witnesses.iter().any(|w| w.kappa > kappa * (1.0 + KAPPA_REL_TOL)) {
        return AssumptionStatus::NotCertified;
    }
    AssumptionStatus::Certified
}

fn witness(
    role: &'static str,
    model: ModelSide,
    mdp: &FiniteMdp,
    policy: Policy,
    w: &WeightFn,
) -> Witness {
    let (kappa, _) = policy_kappa_raw(mdp, &policy, w);
    Witness {
        role,
        model,
        policy,
        kappa,
    }
}

/// The action attaining `κ̄` in `mdp`, and that `κ̄`.
fn worst_open_loop(mdp: &FiniteMdp, w: &WeightFn) -> Result<(usize, f64)> {
    let cert = kappa_model(mdp, w)?;
    Ok((cert.argmax_action.unwrap_or(0), cert.kappa))
}

/// Certifies every condition in [`AssumptionId`] against `(kappa, w)`.
///
/// `transform` applies to the two transformed-model conditions; the others
/// use the untransformed models. Conditions that need `V*` are reported as
/// unchecked when `solved` carries no true-model optimum.
pub fn check_assumptions(
    solved: &SolvedPair,
    w: &WeightFn,
    kappa: f64,
    transform: AffineTransform,
) -> Result<AssumptionReport> {
    let m = solved.pair().truth();
    let m_hat = solved.pair().approx();
    Error::check_len("weight", m.n_states(), w.len())?;
    let identity = AffineTransform::IDENTITY;
    let gamma = m.discount();
    let v_hat = solved.approx_value();
    let pi_hat = solved.approx_policy();

    let mut checks = Vec::with_capacity(6);
    let mut push = |id: AssumptionId, witnesses: Vec<Witness>| {
        let kappa_achieved = if witnesses.is_empty() {
            None
        } else {
            Some(witnesses.iter().map(|w| w.kappa).fold(f64::NEG_INFINITY, f64::max))
        };
        checks.push(AssumptionCheck {
            assumption: id,
            status: judge(&witnesses, id, kappa, gamma),
            witnesses,
            kappa_achieved,
        });
    };

    let mut optimal = vec![
        witness("pi_hat_star", ModelSide::True, m, pi_hat.clone(), w),
        witness("pi_hat_star", ModelSide::Approx, m_hat, pi_hat.clone(), w),
    ];
    if let Some(truth) = solved.truth_solution() {
        optimal.insert(0, witness("pi_star", ModelSide::True, m, truth.policy.clone(), w));
    } else {
        optimal.clear();
    }
    push(AssumptionId::OptimalPoliciesStable, optimal);

    let (_, mu_star) = bellman_optimal(m, v_hat, identity)?;
    push(
        AssumptionId::TrueGreedyOfApproxValue,
        vec![witness("mu_star", ModelSide::True, m, mu_star, w)],
    );

    let mu_hat = match solved.truth_solution() {
        Some(truth) => {
            let (_, mu_hat) = bellman_optimal(m_hat, &truth.value, identity)?;
            vec![witness("mu_hat_star", ModelSide::Approx, m_hat, mu_hat, w)]
        }
        None => Vec::new(),
    };
    push(AssumptionId::ApproxGreedyOfTrueValue, mu_hat);

    let (a_true, k_true) = worst_open_loop(m, w)?;
    let (a_hat, k_hat) = worst_open_loop(m_hat, w)?;
    let n = m.n_states();
    push(
        AssumptionId::OpenLoopStable,
        vec![
            Witness {
                role: "worst_open_loop",
                model: ModelSide::True,
                policy: Policy::open_loop(n, a_true),
                kappa: k_true,
            },
            Witness {
                role: "worst_open_loop",
                model: ModelSide::Approx,
                policy: Policy::open_loop(n, a_hat),
                kappa: k_hat,
            },
        ],
    );

    let (_, mu_alpha) = bellman_optimal(m, v_hat, transform)?;
    push(
        AssumptionId::TransformedGreedyOfApproxValue,
        vec![witness("mu_star_alpha", ModelSide::True, m, mu_alpha, w)],
    );

    let mu_hat_alpha = match solved.truth_solution() {
        Some(truth) => {
            let v_alpha = truth
                .value
                .affine(transform.alpha1(), transform.alpha2() / (1.0 - gamma));
            let (_, mu) = bellman_optimal(m_hat, &v_alpha, identity)?;
            vec![witness("mu_hat_star_alpha", ModelSide::Approx, m_hat, mu, w)]
        }
        None => Vec::new(),
    };
    push(AssumptionId::ApproxGreedyOfTransformedValue, mu_hat_alpha);

    Ok(AssumptionReport {
        kappa,
        discount: gamma,
        transform,
        checks,
    })
}

/// Runs [`check_assumptions`] at the smallest `κ` that certifies `ids`.
///
/// Unchecked conditions do not contribute; if none of `ids` could be
/// checked, `κ̄` of the two models is used.
pub fn certify_smallest_kappa(
    solved: &SolvedPair,
    w: &WeightFn,
    transform: AffineTransform,
    ids: &[AssumptionId],
) -> Result<AssumptionReport> {
    let probe = check_assumptions(solved, w, f64::INFINITY, transform)?;
    let kappa = ids
        .iter()
        .filter_map(|&id| probe.check(id).kappa_achieved)
        .reduce(f64::max);
    let kappa = match kappa {
        Some(k) => k,
        None => {
            let k_true = kappa_model(solved.pair().truth(), w)?.kappa;
            let k_hat = kappa_model(solved.pair().approx(), w)?.kappa;
            k_true.max(k_hat)
        }
    };
    Ok(probe.with_kappa(kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chain() -> FiniteMdp {
        // 3 states, 2 actions: action 0 stays, action 1 moves right (clipped).
        let n = 3;
        let mut p = vec![0.0; n * 2 * n];
        for s in 0..n {
            p[(s * 2) * n + s] = 1.0;
            p[(s * 2 + 1) * n + (s + 1).min(n - 1)] = 1.0;
        }
        FiniteMdp::dense(n, 2, p, vec![1.0, 2.0, 0.0, 3.0, 5.0, 1.0], 0.5).unwrap()
    }

    #[test]
    fn norm_examples() {
        let w = WeightFn::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(weighted_norm(&[0.0, 0.0], &w).unwrap(), 0.0);
        assert_eq!(weighted_norm(&[3.0, -4.0], &w).unwrap(), 3.0);
        assert!(weighted_norm(&[1.0], &w).is_err());
        assert!(WeightFn::new(vec![0.5]).is_err());
    }

    #[test]
    fn unit_weight_gives_unit_kappa() {
        let m = chain();
        let w = WeightFn::ones(3);
        assert_eq!(kappa_model(&m, &w).unwrap().kappa, 1.0);
        assert_eq!(kappa_policy(&m, &Policy::open_loop(3, 1), &w).unwrap().kappa, 1.0);
    }

    #[test]
    fn self_loops_preserve_weight() {
        let m = chain();
        let w = WeightFn::new(vec![1.0, 3.0, 7.0]).unwrap();
        let cert = kappa_policy(&m, &Policy::open_loop(3, 0), &w).unwrap();
        assert_eq!(cert.kappa, 1.0);
        assert!(cert.valid);
    }

    #[test]
    fn model_kappa_hand_values() {
        let m = chain();
        let w = WeightFn::new(vec![1.0, 3.0, 7.0]).unwrap();
        let cert = kappa_model(&m, &w).unwrap();
        // Moving right from state 0 triples the weight.
        assert_abs_diff_eq!(cert.kappa, 3.0);
        assert_eq!((cert.argmax_state, cert.argmax_action), (0, Some(1)));
        assert_abs_diff_eq!(cert.gamma_kappa, 1.5);
        assert!(!cert.valid);
        // c_max = max_a max_s |c(s,a)|/w(s) = max(1, 2, 0/3, 3/3, 5/7, 1/7)
        assert_abs_diff_eq!(cert.cost_bound, 2.0);
    }

    #[test]
    fn validity_gate_has_margin() {
        assert!(gamma_kappa_valid(0.999));
        assert!(!gamma_kappa_valid(1.0));
        assert!(!gamma_kappa_valid(1.0 - 1e-13));
    }
}
