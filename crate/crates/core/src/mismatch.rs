//! Bellman mismatch functionals between a true model and an approximation.
//!
//! Each functional is the weighted norm of the difference of two one-step
//! backups applied to the same value function. The true-model backup may use
//! an affine cost transform; the approximate backup never does.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{
    bellman_optimal, bellman_policy, policy_evaluation, value_iteration, AffineTransform,
    FiniteMdp, OptimalSolution, Policy, SolveOptions, ValueFn,
};
use crate::weighting::{weighted_norm, weighted_norm_argmax, WeightFn};

/// A true model and an approximate model over the same spaces and discount.
#[derive(Debug, Clone)]
pub struct ModelPair {
    truth: FiniteMdp,
    approx: FiniteMdp,
}

impl ModelPair {
    pub fn new(truth: FiniteMdp, approx: FiniteMdp) -> Result<Self> {
        Error::check_len("model pair states", truth.n_states(), approx.n_states())?;
        Error::check_len("model pair actions", truth.n_actions(), approx.n_actions())?;
        if truth.discount() != approx.discount() {
            return Err(Error::invalid(format!(
                "model pair discounts differ: {} vs {}",
                truth.discount(),
                approx.discount()
            )));
        }
        Ok(Self { truth, approx })
    }

    pub fn truth(&self) -> &FiniteMdp {
        &self.truth
    }

    pub fn approx(&self) -> &FiniteMdp {
        &self.approx
    }

    pub fn n_states(&self) -> usize {
        self.truth.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.truth.n_actions()
    }

    pub fn discount(&self) -> f64 {
        self.truth.discount()
    }
}

/// A model pair together with the solves every bound needs.
///
/// The approximate model is always solved and its optimal policy evaluated in
/// the true model. Solving the true model is optional; it is needed for
/// realized gaps and for the conditions that involve `V*`.
#[derive(Debug, Clone)]
pub struct SolvedPair {
    pair: ModelPair,
    approx: OptimalSolution,
    deployed: ValueFn,
    truth: Option<OptimalSolution>,
    options: SolveOptions,
}

impl SolvedPair {
    pub fn solve(pair: ModelPair, options: SolveOptions, solve_truth: bool) -> Result<Self> {
        let approx = value_iteration(pair.approx(), options)?;
        let deployed = policy_evaluation(pair.truth(), &approx.policy, options)?;
        let truth = if solve_truth {
            Some(value_iteration(pair.truth(), options)?)
        } else {
            None
        };
        Ok(Self {
            pair,
            approx,
            deployed,
            truth,
            options,
        })
    }

    pub fn pair(&self) -> &ModelPair {
        &self.pair
    }

    pub fn options(&self) -> SolveOptions {
        self.options
    }

    /// `V̂*`.
    pub fn approx_value(&self) -> &ValueFn {
        &self.approx.value
    }

    /// `π̂*`.
    pub fn approx_policy(&self) -> &Policy {
        &self.approx.policy
    }

    /// `V^{π̂*}`, the value of `π̂*` in the true model.
    pub fn deployed_value(&self) -> &ValueFn {
        &self.deployed
    }

    pub fn truth_solution(&self) -> Option<&OptimalSolution> {
        self.truth.as_ref()
    }

    /// `V*`.
    pub fn true_value(&self) -> Option<&ValueFn> {
        self.truth.as_ref().map(|t| &t.value)
    }

    /// `π*`.
    pub fn true_policy(&self) -> Option<&Policy> {
        self.truth.as_ref().map(|t| &t.policy)
    }

    /// Realized `‖V^{π̂*} − V*‖_w`, when the true model was solved.
    pub fn realized_loss(&self, w: &WeightFn) -> Result<Option<f64>> {
        match self.true_value() {
            Some(v_star) => Ok(Some(weighted_norm(&self.deployed.sub(v_star)?, w)?)),
            None => Ok(None),
        }
    }
}

/// Which functional a [`MismatchValue`] came from.
#[derive(Debug, Clone, PartialEq)]
pub enum MismatchKind {
    PolicyPair,
    Policy,
    Optimality,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchValue {
    pub value: f64,
    pub kind: MismatchKind,
    pub transform: AffineTransform,
    pub weight: WeightFn,
    pub argmax_state: usize,
    /// Maximizing action, for [`MismatchKind::Max`].
    pub argmax_action: Option<usize>,
}

fn check_inputs(pair: &ModelPair, v: &ValueFn, w: &WeightFn) -> Result<()> {
    Error::check_len("mismatch value function", pair.n_states(), v.len())?;
    Error::check_len("mismatch weight", pair.n_states(), w.len())
}

fn from_difference(
    a: &ValueFn,
    b: &ValueFn,
    w: &WeightFn,
    kind: MismatchKind,
    transform: AffineTransform,
) -> Result<MismatchValue> {
    let (value, argmax_state) = weighted_norm_argmax(&a.sub(b)?, w)?;
    Ok(MismatchValue {
        value,
        kind,
        transform,
        weight: w.clone(),
        argmax_state,
        argmax_action: None,
    })
}

/// `‖B^π_α v − B̂^{π̂} v‖_w`.
pub fn mismatch_policy_pair(
    pair: &ModelPair,
    pi: &Policy,
    pi_hat: &Policy,
    v: &ValueFn,
    w: &WeightFn,
    transform: AffineTransform,
) -> Result<MismatchValue> {
    check_inputs(pair, v, w)?;
    let lhs = bellman_policy(pair.truth(), pi, v, transform)?;
    let rhs = bellman_policy(pair.approx(), pi_hat, v, AffineTransform::IDENTITY)?;
    from_difference(&lhs, &rhs, w, MismatchKind::PolicyPair, transform)
}

/// `‖B^π_α v − B̂^π v‖_w`.
pub fn mismatch_policy(
    pair: &ModelPair,
    pi: &Policy,
    v: &ValueFn,
    w: &WeightFn,
    transform: AffineTransform,
) -> Result<MismatchValue> {
    let mut out = mismatch_policy_pair(pair, pi, pi, v, w, transform)?;
    out.kind = MismatchKind::Policy;
    Ok(out)
}

/// `‖B*_α v − B̂* v‖_w`.
pub fn mismatch_optimal(
    pair: &ModelPair,
    v: &ValueFn,
    w: &WeightFn,
    transform: AffineTransform,
) -> Result<MismatchValue> {
    check_inputs(pair, v, w)?;
    let (lhs, _) = bellman_optimal(pair.truth(), v, transform)?;
    let (rhs, _) = bellman_optimal(pair.approx(), v, AffineTransform::IDENTITY)?;
    from_difference(&lhs, &rhs, w, MismatchKind::Optimality, transform)
}

/// `max_a ‖B^{π_a}_α v − B̂^{π_a} v‖_w`, computed as the `(s, a)` maximum of
/// `|α₁c − ĉ + α₂ + γ(Pv − P̂v)| / w(s)`.
pub fn mismatch_max(
    pair: &ModelPair,
    v: &ValueFn,
    w: &WeightFn,
    transform: AffineTransform,
) -> Result<MismatchValue> {
    check_inputs(pair, v, w)?;
    let (m, m_hat) = (pair.truth(), pair.approx());
    let gamma = pair.discount();
    let per_state = |s: usize| {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..m.n_actions() {
            let xi = transform.apply(m.cost(s, a)) - m_hat.cost(s, a)
                + gamma * (m.expect(s, a, v) - m_hat.expect(s, a, v));
            let r = xi.abs() / w[s];
            if r > best.0 {
                best = (r, a);
            }
        }
        best
    };
    let rows: Vec<(f64, usize)> = if pair.n_states() * pair.n_actions() >= 1 << 14 {
        (0..pair.n_states()).into_par_iter().map(per_state).collect()
    } else {
        (0..pair.n_states()).map(per_state).collect()
    };
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (s, (r, a)) in rows.into_iter().enumerate() {
        if r > best.0 {
            best = (r, s, a);
        }
    }
    Ok(MismatchValue {
        value: best.0,
        kind: MismatchKind::Max,
        transform,
        weight: w.clone(),
        argmax_state: best.1,
        argmax_action: Some(best.2),
    })
}
