//! Performance-loss bounds, value-error bounds and the envelopes built from them.
//!
//! Every bound is returned even when its stability conditions fail to
//! certify; the report then carries a non-certified status. Side-by-side
//! comparisons in the experiments need the numbers either way.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{policy_evaluation, AffineTransform, Policy, ValueFn};
use crate::mismatch::{
    mismatch_max, mismatch_optimal, mismatch_policy, mismatch_policy_pair, SolvedPair,
};
use crate::weighting::{
    check_assumptions, gamma_kappa_valid, kappa_policy, weighted_norm, AssumptionId,
    AssumptionReport, AssumptionStatus, WeightFn,
};

/// Which optimal value function a bound is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueSource {
    /// `V̂*`, available without solving the true model.
    Approx,
    /// `α₁ V*` (or `V*_α` for value-error bounds).
    True,
}

impl ValueSource {
    fn name(&self) -> &'static str {
        match self {
            ValueSource::Approx => "approx-value",
            ValueSource::True => "true-value",
        }
    }
}

/// Routes for bounding `‖V* − V̂*‖_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueRoute {
    /// Mismatch between `π*` in the true model and `π̂*` in the approximation.
    PolicyPair(ValueSource),
    /// Mismatch between the two optimality backups.
    Optimality(ValueSource),
}

/// Routes for bounding `‖V^{π̂*} − V*‖_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossRoute {
    PolicyPair(ValueSource),
    Optimality(ValueSource),
    /// Maximum mismatch over open-loop policies.
    OpenLoop(ValueSource),
}

impl LossRoute {
    pub const ALL: [LossRoute; 6] = [
        LossRoute::PolicyPair(ValueSource::Approx),
        LossRoute::PolicyPair(ValueSource::True),
        LossRoute::Optimality(ValueSource::Approx),
        LossRoute::Optimality(ValueSource::True),
        LossRoute::OpenLoop(ValueSource::Approx),
        LossRoute::OpenLoop(ValueSource::True),
    ];

    pub fn source(&self) -> ValueSource {
        match *self {
            LossRoute::PolicyPair(s) | LossRoute::Optimality(s) | LossRoute::OpenLoop(s) => s,
        }
    }

    /// Conditions the route relies on under `transform`.
    pub fn required(&self, transform: AffineTransform) -> Vec<AssumptionId> {
        let identity = transform.is_identity();
        let mut ids = vec![AssumptionId::OptimalPoliciesStable];
        match self {
            LossRoute::PolicyPair(_) => {}
            LossRoute::Optimality(ValueSource::Approx) => ids.push(if identity {
                AssumptionId::TrueGreedyOfApproxValue
            } else {
                AssumptionId::TransformedGreedyOfApproxValue
            }),
            LossRoute::Optimality(ValueSource::True) => ids.push(if identity {
                AssumptionId::ApproxGreedyOfTrueValue
            } else {
                AssumptionId::ApproxGreedyOfTransformedValue
            }),
            LossRoute::OpenLoop(_) => ids.push(AssumptionId::OpenLoopStable),
        }
        ids
    }

    fn name(&self) -> String {
        let head = match self {
            LossRoute::PolicyPair(_) => "policy-pair",
            LossRoute::Optimality(_) => "optimality",
            LossRoute::OpenLoop(_) => "open-loop",
        };
        format!("{head}/{}", self.source().name())
    }
}

impl ValueRoute {
    fn as_loss(&self) -> LossRoute {
        match *self {
            ValueRoute::PolicyPair(s) => LossRoute::PolicyPair(s),
            ValueRoute::Optimality(s) => LossRoute::Optimality(s),
        }
    }
}

/// What a [`BoundReport`] bounds and how.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundKind {
    /// `‖V^π − V̂^{π̂}‖_w` for two given policies.
    PolicyError,
    /// `‖V*_α − V̂*‖_w`.
    ValueError(ValueRoute),
    /// `‖V^{π̂*} − V*‖_w` from exact mismatches.
    PerformanceLoss(LossRoute),
    /// `‖V^{π̂*} − V*‖_w` from cost and kernel distances under an IPM.
    DistanceLoss { route: LossRoute, ipm: String },
    /// Certainty-equivalence loss on an additive-noise system.
    CertaintyEquivalence,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundKind::PolicyError => f.write_str("policy-error"),
            BoundKind::ValueError(r) => write!(f, "value-error/{}", r.as_loss().name()),
            BoundKind::PerformanceLoss(r) => write!(f, "loss/{}", r.name()),
            BoundKind::DistanceLoss { route, ipm } => write!(f, "distance-loss[{ipm}]/{}", route.name()),
            BoundKind::CertaintyEquivalence => f.write_str("certainty-equivalence"),
        }
    }
}

/// A named constituent of a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTerm {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Bound on the weighted norm; `+∞` when `γκ ≥ 1`.
    pub bound: f64,
    pub terms: Vec<BoundTerm>,
    pub kappa: f64,
    pub gamma_kappa: f64,
    pub weight: WeightFn,
    pub transform: AffineTransform,
    pub required: Vec<AssumptionId>,
    pub status: AssumptionStatus,
    pub assumptions: Option<AssumptionReport>,
    /// The bounded quantity itself, when it could be computed.
    pub realized: Option<f64>,
}

impl BoundReport {
    pub fn certified(&self) -> bool {
        self.status == AssumptionStatus::Certified
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }

    pub(crate) fn from_assumptions(
        kind: BoundKind,
        bound: f64,
        terms: Vec<BoundTerm>,
        weight: &WeightFn,
        report: &AssumptionReport,
        required: Vec<AssumptionId>,
        realized: Option<f64>,
    ) -> Self {
        let gamma_kappa = report.discount * report.kappa;
        Self {
            kind,
            bound: sanitize(bound, gamma_kappa),
            terms,
            kappa: report.kappa,
            gamma_kappa,
            weight: weight.clone(),
            transform: report.transform,
            status: report.combined_status(&required),
            required,
            assumptions: Some(report.clone()),
            realized,
        }
    }
}

fn sanitize(bound: f64, gamma_kappa: f64) -> f64 {
    if gamma_kappa >= 1.0 || bound.is_nan() {
        f64::INFINITY
    } else {
        bound.max(0.0)
    }
}

fn term(name: &'static str, value: f64) -> BoundTerm {
    BoundTerm { name, value }
}

fn need_truth(solved: &SolvedPair) -> Result<(&ValueFn, &Policy)> {
    match solved.truth_solution() {
        Some(t) => Ok((&t.value, &t.policy)),
        None => Err(Error::invalid(
            "this bound needs the true model's optimum; solve the pair with the oracle enabled",
        )),
    }
}

/// `‖V^π − V̂^{π̂}‖_w ≤ min{Δ^{π,π̂} V^π, Δ^{π,π̂} V̂^{π̂}} / (1 − γκ)`.
///
/// Certified when `π` is `(κ, w)` stable in the true model and `π̂` in the
/// approximate one.
pub fn policy_error_bound(
    solved: &SolvedPair,
    pi: &Policy,
    pi_hat: &Policy,
    w: &WeightFn,
    kappa: f64,
) -> Result<BoundReport> {
    let pair = solved.pair();
    let opts = solved.options();
    let id = AffineTransform::IDENTITY;
    let v_pi = policy_evaluation(pair.truth(), pi, opts)?;
    let v_hat_pi = policy_evaluation(pair.approx(), pi_hat, opts)?;
    let at_true = mismatch_policy_pair(pair, pi, pi_hat, &v_pi, w, id)?.value;
    let at_approx = mismatch_policy_pair(pair, pi, pi_hat, &v_hat_pi, w, id)?.value;
    let gamma_kappa = pair.discount() * kappa;
    let bound = at_true.min(at_approx) / (1.0 - gamma_kappa);
    let stable = kappa_policy(pair.truth(), pi, w)?.kappa <= kappa
        && kappa_policy(pair.approx(), pi_hat, w)?.kappa <= kappa
        && gamma_kappa_valid(gamma_kappa);
    Ok(BoundReport {
        kind: BoundKind::PolicyError,
        bound: sanitize(bound, gamma_kappa),
        terms: vec![
            term("mismatch_pair_at_true_value", at_true),
            term("mismatch_pair_at_approx_value", at_approx),
        ],
        kappa,
        gamma_kappa,
        weight: w.clone(),
        transform: id,
        required: Vec::new(),
        status: if stable {
            AssumptionStatus::Certified
        } else {
            AssumptionStatus::NotCertified
        },
        assumptions: None,
        realized: Some(weighted_norm(&v_pi.sub(&v_hat_pi)?, w)?),
    })
}

/// Bound on `‖V*_α − V̂*‖_w` where `V*_α = α₁V* + α₂/(1−γ)`.
pub fn value_error_bound(
    solved: &SolvedPair,
    w: &WeightFn,
    kappa: f64,
    transform: AffineTransform,
    route: ValueRoute,
) -> Result<BoundReport> {
    let report = check_assumptions(solved, w, kappa, transform)?;
    value_error_bound_with(solved, w, &report, route)
}

pub fn value_error_bound_with(
    solved: &SolvedPair,
    w: &WeightFn,
    report: &AssumptionReport,
    route: ValueRoute,
) -> Result<BoundReport> {
    let pair = solved.pair();
    let t = report.transform;
    let gamma = pair.discount();
    let one_minus = 1.0 - gamma * report.kappa;
    let v_hat = solved.approx_value();
    let pi_hat = solved.approx_policy();
    let truth = solved.true_value().map(|v| v.affine(t.alpha1(), t.alpha2() / (1.0 - gamma)));

    let (name, mismatch) = match route {
        ValueRoute::PolicyPair(source) => {
            let (_, pi_star) = need_truth(solved)?;
            let v = match source {
                ValueSource::Approx => v_hat.clone(),
                ValueSource::True => truth.clone().expect("truth solved"),
            };
            ("mismatch_pair", mismatch_policy_pair(pair, pi_star, pi_hat, &v, w, t)?.value)
        }
        ValueRoute::Optimality(ValueSource::Approx) => {
            ("mismatch_optimal", mismatch_optimal(pair, v_hat, w, t)?.value)
        }
        ValueRoute::Optimality(ValueSource::True) => {
            need_truth(solved)?;
            let v = truth.as_ref().expect("truth solved");
            ("mismatch_optimal", mismatch_optimal(pair, v, w, t)?.value)
        }
    };
    let realized = match &truth {
        Some(v) => Some(weighted_norm(&v.sub(v_hat)?, w)?),
        None => None,
    };
    let required = route.as_loss().required(t);
    Ok(BoundReport::from_assumptions(
        BoundKind::ValueError(route),
        mismatch / one_minus,
        vec![term(name, mismatch)],
        w,
        report,
        required,
        realized,
    ))
}

/// Bound on `‖V^{π̂*} − V*‖_w`, checking the route's conditions first.
pub fn performance_loss_bound(
    solved: &SolvedPair,
    w: &WeightFn,
    kappa: f64,
    transform: AffineTransform,
    route: LossRoute,
) -> Result<BoundReport> {
    let report = check_assumptions(solved, w, kappa, transform)?;
    performance_loss_bound_with(solved, w, &report, route)
}

/// Same as [`performance_loss_bound`] with precomputed condition checks;
/// `κ` and the transform come from `report`.
pub fn performance_loss_bound_with(
    solved: &SolvedPair,
    w: &WeightFn,
    report: &AssumptionReport,
    route: LossRoute,
) -> Result<BoundReport> {
    let pair = solved.pair();
    let t = report.transform;
    let a1 = t.alpha1();
    let gk = pair.discount() * report.kappa;
    let first = 1.0 / (a1 * (1.0 - gk));
    let second = (1.0 + gk) / (a1 * (1.0 - gk).powi(2));
    let pi_hat = solved.approx_policy();

    let v = match route.source() {
        ValueSource::Approx => solved.approx_value().clone(),
        ValueSource::True => need_truth(solved)?.0.affine(a1, 0.0),
    };

    let (bound, terms) = match route {
        LossRoute::PolicyPair(source) => {
            let (_, pi_star) = need_truth(solved)?;
            let own = mismatch_policy(pair, pi_hat, &v, w, t)?.value;
            let cross = mismatch_policy_pair(pair, pi_star, pi_hat, &v, w, t)?.value;
            let bound = match source {
                ValueSource::Approx => first * (own + cross),
                ValueSource::True => first * own + second * cross,
            };
            (bound, vec![term("mismatch_policy", own), term("mismatch_pair", cross)])
        }
        LossRoute::Optimality(source) => {
            let own = mismatch_policy(pair, pi_hat, &v, w, t)?.value;
            let opt = mismatch_optimal(pair, &v, w, t)?.value;
            let bound = match source {
                ValueSource::Approx => first * (own + opt),
                ValueSource::True => first * own + second * opt,
            };
            (bound, vec![term("mismatch_policy", own), term("mismatch_optimal", opt)])
        }
        LossRoute::OpenLoop(source) => {
            let max = mismatch_max(pair, &v, w, t)?.value;
            let bound = match source {
                ValueSource::Approx => 2.0 * max / (a1 * (1.0 - gk)),
                ValueSource::True => 2.0 * max / (a1 * (1.0 - gk).powi(2)),
            };
            (bound, vec![term("mismatch_max", max)])
        }
    };
    Ok(BoundReport::from_assumptions(
        BoundKind::PerformanceLoss(route),
        bound,
        terms,
        w,
        report,
        route.required(t),
        solved.realized_loss(w)?,
    ))
}

/// Convenience for the open-loop routes.
pub fn openloop_bound(
    solved: &SolvedPair,
    w: &WeightFn,
    kappa: f64,
    transform: AffineTransform,
    source: ValueSource,
) -> Result<BoundReport> {
    performance_loss_bound(solved, w, kappa, transform, LossRoute::OpenLoop(source))
}

/// Per-state bracket `lower ≤ V* ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEnvelope {
    /// `V^{π̂*}`.
    pub upper: ValueFn,
    pub lower: ValueFn,
    /// `upper − lower`.
    pub gap: Vec<f64>,
    /// Index of the family member attaining the gap at each state.
    pub source: Vec<usize>,
}

/// `lower(s) = V^{π̂*}(s) − bound · w(s)`.
pub fn envelope(solved: &SolvedPair, report: &BoundReport) -> Result<ValueEnvelope> {
    let upper = solved.deployed_value();
    Error::check_len("envelope weight", upper.len(), report.weight.len())?;
    let gap: Vec<f64> = report.weight.iter().map(|w| report.bound * w).collect();
    let lower = upper.iter().zip(&gap).map(|(u, g)| u - g).collect::<Vec<_>>();
    Ok(ValueEnvelope {
        upper: upper.clone(),
        lower: ValueFn::from(lower),
        gap,
        source: vec![0; upper.len()],
    })
}

/// Pointwise tightest envelope over several bounds of the same deployed policy.
///
/// Reports whose status is not-certified are skipped and listed in
/// `skipped`. Fails when nothing is left.
pub fn min_envelope(solved: &SolvedPair, reports: &[BoundReport]) -> Result<EnvelopeSweep> {
    let upper = solved.deployed_value();
    let n = upper.len();
    let mut gap = vec![f64::INFINITY; n];
    let mut source = vec![usize::MAX; n];
    let mut skipped = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        if r.status == AssumptionStatus::NotCertified || !r.bound.is_finite() {
            skipped.push(i);
            continue;
        }
        Error::check_len("envelope weight", n, r.weight.len())?;
        for s in 0..n {
            let g = r.bound * r.weight[s];
            if g < gap[s] {
                gap[s] = g;
                source[s] = i;
            }
        }
    }
    if skipped.len() == reports.len() {
        return Err(Error::invalid("no certified bound to build an envelope from"));
    }
    let lower = upper.iter().zip(&gap).map(|(u, g)| u - g).collect::<Vec<_>>();
    Ok(EnvelopeSweep {
        envelope: ValueEnvelope {
            upper: upper.clone(),
            lower: ValueFn::from(lower),
            gap,
            source,
        },
        reports: reports.to_vec(),
        skipped,
    })
}

#[derive(Debug, Clone)]
pub struct EnvelopeSweep {
    pub envelope: ValueEnvelope,
    /// One report per family member, in input order.
    pub reports: Vec<BoundReport>,
    /// Members left out because their conditions failed.
    pub skipped: Vec<usize>,
}

/// Tightest envelope over a family of `(w, κ)` pairs, each evaluated with `route`.
pub fn best_envelope_over_weights(
    solved: &SolvedPair,
    family: &[(WeightFn, f64)],
    route: LossRoute,
) -> Result<EnvelopeSweep> {
    let reports = family
        .par_iter()
        .map(|(w, kappa)| performance_loss_bound(solved, w, *kappa, AffineTransform::IDENTITY, route))
        .collect::<Result<Vec<_>>>()?;
    min_envelope(solved, &reports)
}

#[derive(Debug, Clone)]
pub struct TransformSweep {
    /// One report per grid point, in input order.
    pub reports: Vec<BoundReport>,
    /// Index of the smallest certified bound.
    pub best: Option<usize>,
}

impl TransformSweep {
    pub fn best_report(&self) -> Option<&BoundReport> {
        self.best.map(|i| &self.reports[i])
    }
}

/// Evaluates the optimality route at `V̂*` for each transform and keeps the
/// smallest certified bound.
pub fn best_bound_over_transforms(
    solved: &SolvedPair,
    w: &WeightFn,
    kappa: f64,
    grid: &[AffineTransform],
) -> Result<TransformSweep> {
    let route = LossRoute::Optimality(ValueSource::Approx);
    let reports = grid
        .par_iter()
        .map(|&t| performance_loss_bound(solved, w, kappa, t, route))
        .collect::<Result<Vec<_>>>()?;
    let best = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.status != AssumptionStatus::NotCertified)
        .min_by(|a, b| a.1.bound.total_cmp(&b.1.bound))
        .map(|(i, _)| i);
    Ok(TransformSweep { reports, best })
}
