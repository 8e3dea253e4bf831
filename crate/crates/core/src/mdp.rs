//! Tabular MDPs, Bellman backups and the two fixed-point solvers.
//!
//! A [`FiniteMdp`] stores its kernel either densely (small and random test
//! models) or as sparse `(next_state, prob)` rows (the inventory model, whose
//! rows have at most `n + 1` reachable states). Every backup visits states in
//! index order and reduces each row in storage order, so results do not depend
//! on the number of worker threads.

use std::ops::Deref;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-sum tolerance for kernel and policy rows.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Below this many `(state, action)` pairs backups run single-threaded.
const PAR_THRESHOLD: usize = 1 << 14;

/// Cost transform `c ↦ α₁ c + α₂` with `α₁ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    alpha1: f64,
    alpha2: f64,
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        alpha1: 1.0,
        alpha2: 0.0,
    };

    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 > 0.0) || !alpha1.is_finite() || !alpha2.is_finite() {
            return Err(Error::invalid(format!(
                "affine transform needs finite alpha1 > 0 and finite alpha2, got ({alpha1}, {alpha2})"
            )));
        }
        Ok(Self { alpha1, alpha2 })
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    #[inline]
    pub fn apply(&self, cost: f64) -> f64 {
        self.alpha1 * cost + self.alpha2
    }

    pub fn is_identity(&self) -> bool {
        self.alpha1 == 1.0 && self.alpha2 == 0.0
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl std::fmt::Display for AffineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.alpha1, self.alpha2)
    }
}

/// A real-valued function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFn(Vec<f64>);

impl ValueFn {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(s) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("value function entry {s} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, k: f64) -> Self {
        Self(vec![k; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `s ↦ a·v(s) + b`.
    pub fn affine(&self, a: f64, b: f64) -> ValueFn {
        ValueFn(self.0.iter().map(|x| a * x + b).collect())
    }

    /// Pointwise `self − other`.
    pub fn sub(&self, other: &ValueFn) -> Result<ValueFn> {
        Error::check_len("value difference", self.len(), other.len())?;
        Ok(ValueFn(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }
}

impl Deref for ValueFn {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ValueFn {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// A stationary state-feedback policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// One action index per state.
    Deterministic(Vec<usize>),
    /// Row-major `n_states × n_actions` action distribution.
    Stochastic { n_actions: usize, probs: Vec<f64> },
}

impl Policy {
    pub fn deterministic(actions: Vec<usize>) -> Self {
        Policy::Deterministic(actions)
    }

    /// The policy that plays `action` in every state.
    pub fn open_loop(n_states: usize, action: usize) -> Self {
        Policy::Deterministic(vec![action; n_states])
    }

    pub fn stochastic(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        Error::check_len("stochastic policy", n_states * n_actions, probs.len())?;
        for (s, row) in probs.chunks(n_actions.max(1)).enumerate() {
            check_distribution(row).map_err(|e| Error::invalid(format!("policy row {s}: {e}")))?;
        }
        Ok(Policy::Stochastic { n_actions, probs })
    }

    pub fn n_states(&self) -> usize {
        match self {
            Policy::Deterministic(a) => a.len(),
            Policy::Stochastic { n_actions, probs } => probs.len() / (*n_actions).max(1),
        }
    }

    /// The chosen action at `s` for deterministic policies.
    pub fn action(&self, s: usize) -> Option<usize> {
        match self {
            Policy::Deterministic(a) => a.get(s).copied(),
            Policy::Stochastic { .. } => None,
        }
    }

    pub fn actions(&self) -> Option<&[usize]> {
        match self {
            Policy::Deterministic(a) => Some(a),
            Policy::Stochastic { .. } => None,
        }
    }

    pub fn validate_for(&self, mdp: &FiniteMdp) -> Result<()> {
        Error::check_len("policy states", mdp.n_states(), self.n_states())?;
        match self {
            Policy::Deterministic(actions) => {
                if let Some((s, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= mdp.n_actions()) {
                    return Err(Error::invalid(format!(
                        "policy picks action {a} at state {s}, but the model has {} actions",
                        mdp.n_actions()
                    )));
                }
                Ok(())
            }
            Policy::Stochastic { n_actions, .. } => {
                Error::check_len("policy actions", mdp.n_actions(), *n_actions)
            }
        }
    }

    /// Calls `f(action, probability)` for every action with positive mass at `s`.
    #[inline]
    pub(crate) fn for_each_action(&self, s: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            Policy::Deterministic(actions) => f(actions[s], 1.0),
            Policy::Stochastic { n_actions, probs } => {
                let row = &probs[s * n_actions..(s + 1) * n_actions];
                for (a, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        f(a, p);
                    }
                }
            }
        }
    }
}

fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(format!("entry {p} is negative or not finite"));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(format!("row sums to {total}"));
    }
    Ok(())
}

#[derive(Debug)]
enum Kernel {
    Dense(Vec<f64>),
    Sparse {
        offsets: Vec<usize>,
        next: Vec<u32>,
        probs: Vec<f64>,
    },
}

/// Iterator over the `(next_state, probability)` pairs of one kernel row.
pub enum RowIter<'a> {
    Dense(std::iter::Enumerate<std::slice::Iter<'a, f64>>),
    Sparse(std::iter::Zip<std::slice::Iter<'a, u32>, std::slice::Iter<'a, f64>>),
}

impl Iterator for RowIter<'_> {
    type Item = (usize, f64);

    #[inline]
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            RowIter::Dense(it) => it.find(|(_, p)| **p != 0.0).map(|(s, p)| (s, *p)),
            RowIter::Sparse(it) => it.next().map(|(s, p)| (*s as usize, *p)),
        }
    }
}

/// Tabular discounted-cost MDP `⟨S, A, P, c, γ⟩`.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    kernel: Arc<Kernel>,
    cost: Vec<f64>,
    discount: f64,
    labels: Option<Vec<i64>>,
    c_min: f64,
}

impl FiniteMdp {
    /// Builds a model from a dense row-major `S × A × S` kernel and `S × A` cost.
    pub fn dense(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        cost: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        check_shape(n_states, n_actions, discount)?;
        Error::check_len("dense kernel", n_states * n_actions * n_states, transition.len())?;
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            check_distribution(row).map_err(|e| {
                Error::invalid(format!(
                    "kernel row (s={}, a={}): {e}",
                    row_idx / n_actions,
                    row_idx % n_actions
                ))
            })?;
        }
        Self::finish(n_states, n_actions, Kernel::Dense(transition), cost, discount)
    }

    /// Builds a model from sparse rows listed in `(state, action)` row-major
    /// order. Repeated next states within a row are allowed and summed on use.
    pub fn from_sparse_rows<I>(
        n_states: usize,
        n_actions: usize,
        rows: I,
        cost: Vec<f64>,
        discount: f64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<(usize, f64)>>,
    {
        check_shape(n_states, n_actions, discount)?;
        if n_states > u32::MAX as usize {
            return Err(Error::invalid("sparse kernels support at most 2^32 states"));
        }
        let n_rows = n_states * n_actions;
        let mut offsets = Vec::with_capacity(n_rows + 1);
        let mut next = Vec::new();
        let mut probs = Vec::new();
        offsets.push(0);
        for (row_idx, row) in rows.into_iter().enumerate() {
            if row_idx >= n_rows {
                return Err(Error::DimensionMismatch {
                    context: "sparse kernel rows",
                    expected: n_rows,
                    actual: row_idx + 1,
                });
            }
            let row_probs: Vec<f64> = row.iter().map(|(_, p)| *p).collect();
            check_distribution(&row_probs).map_err(|e| {
                Error::invalid(format!(
                    "kernel row (s={}, a={}): {e}",
                    row_idx / n_actions,
                    row_idx % n_actions
                ))
            })?;
            for (s2, p) in row {
                if s2 >= n_states {
                    return Err(Error::invalid(format!("next state {s2} out of range")));
                }
                next.push(s2 as u32);
                probs.push(p);
            }
            offsets.push(next.len());
        }
        Error::check_len("sparse kernel rows", n_rows, offsets.len() - 1)?;
        Self::finish(
            n_states,
            n_actions,
            Kernel::Sparse {
                offsets,
                next,
                probs,
            },
            cost,
            discount,
        )
    }

    fn finish(
        n_states: usize,
        n_actions: usize,
        kernel: Kernel,
        cost: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        Error::check_len("cost matrix", n_states * n_actions, cost.len())?;
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("costs must be finite"));
        }
        let c_min = cost.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            n_states,
            n_actions,
            kernel: Arc::new(kernel),
            cost,
            discount,
            labels: None,
            c_min,
        })
    }

    /// Attaches integer state labels (e.g. inventory levels).
    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        Error::check_len("state labels", self.n_states, labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    /// Same kernel with a different cost matrix. The kernel is shared, not copied.
    pub fn with_cost(&self, cost: Vec<f64>) -> Result<Self> {
        Error::check_len("cost matrix", self.n_states * self.n_actions, cost.len())?;
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("costs must be finite"));
        }
        let c_min = cost.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            cost,
            c_min,
            ..self.clone()
        })
    }

    /// The model `M_α` with cost `α₁ c + α₂` and the same dynamics.
    pub fn with_transformed_cost(&self, t: AffineTransform) -> Self {
        let cost = self.cost.iter().map(|&c| t.apply(c)).collect::<Vec<_>>();
        self.with_cost(cost).expect("transformed costs stay finite")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `min_{s,a} c(s,a)`.
    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(*self.kernel, Kernel::Sparse { .. })
    }

    #[inline]
    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.n_actions + a]
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> RowIter<'_> {
        let r = s * self.n_actions + a;
        match &*self.kernel {
            Kernel::Dense(p) => {
                RowIter::Dense(p[r * self.n_states..(r + 1) * self.n_states].iter().enumerate())
            }
            Kernel::Sparse {
                offsets,
                next,
                probs,
            } => {
                let (lo, hi) = (offsets[r], offsets[r + 1]);
                RowIter::Sparse(next[lo..hi].iter().zip(probs[lo..hi].iter()))
            }
        }
    }

    /// `P(s' | s, a)`.
    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.row(s, a).filter(|(n, _)| *n == s2).map(|(_, p)| p).sum()
    }

    /// `Σ_{s'} P(s' | s, a) v(s')`.
    #[inline]
    pub fn expect(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let r = s * self.n_actions + a;
        match &*self.kernel {
            Kernel::Dense(p) => p[r * self.n_states..(r + 1) * self.n_states]
                .iter()
                .zip(v)
                .map(|(p, x)| p * x)
                .sum(),
            Kernel::Sparse {
                offsets,
                next,
                probs,
            } => {
                let (lo, hi) = (offsets[r], offsets[r + 1]);
                next[lo..hi]
                    .iter()
                    .zip(&probs[lo..hi])
                    .map(|(s2, p)| p * v[*s2 as usize])
                    .sum()
            }
        }
    }

    /// `c_π(s)`.
    pub fn policy_cost(&self, policy: &Policy, s: usize) -> f64 {
        let mut c = 0.0;
        policy.for_each_action(s, |a, p| c += p * self.cost(s, a));
        c
    }

    /// `Σ_{s'} P_π(s' | s) v(s')`.
    pub fn policy_expect(&self, policy: &Policy, s: usize, v: &[f64]) -> f64 {
        let mut e = 0.0;
        policy.for_each_action(s, |a, p| e += p * self.expect(s, a, v));
        e
    }

    /// Whether `other` has the same state space, action space and discount.
    pub fn same_shape(&self, other: &FiniteMdp) -> bool {
        self.n_states == other.n_states
            && self.n_actions == other.n_actions
            && self.discount == other.discount
    }

    fn check_value(&self, v: &[f64]) -> Result<()> {
        Error::check_len("value function", self.n_states, v.len())
    }

    fn parallel(&self) -> bool {
        self.n_states * self.n_actions >= PAR_THRESHOLD
    }
}

fn check_shape(n_states: usize, n_actions: usize, discount: f64) -> Result<()> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::invalid("state and action spaces must be nonempty"));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::invalid(format!("discount {discount} not in (0, 1)")));
    }
    Ok(())
}

/// Tolerances for the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

impl SolveOptions {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
        }
        Ok(Self { tol, max_iter })
    }
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub value: ValueFn,
    /// Greedy (smallest-index tie-break) policy at `value`.
    pub policy: Policy,
    pub iterations: usize,
}

#[inline]
fn greedy_at(
    mdp: &FiniteMdp,
    s: usize,
    v: &[f64],
    t: AffineTransform,
) -> (f64, usize) {
    let gamma = mdp.discount;
    let mut best = f64::INFINITY;
    let mut best_a = 0;
    for a in 0..mdp.n_actions {
        let q = t.apply(mdp.cost(s, a)) + gamma * mdp.expect(s, a, v);
        if q < best {
            best = q;
            best_a = a;
        }
    }
    (best, best_a)
}

fn optimal_backup_into(
    mdp: &FiniteMdp,
    v: &[f64],
    t: AffineTransform,
    out: &mut [f64],
    actions: &mut [usize],
) {
    if mdp.parallel() {
        out.par_iter_mut()
            .zip(actions.par_iter_mut())
            .enumerate()
            .for_each(|(s, (o, a))| (*o, *a) = greedy_at(mdp, s, v, t));
    } else {
        for (s, (o, a)) in out.iter_mut().zip(actions.iter_mut()).enumerate() {
            (*o, *a) = greedy_at(mdp, s, v, t);
        }
    }
}

fn policy_backup_into(
    mdp: &FiniteMdp,
    policy: &Policy,
    v: &[f64],
    t: AffineTransform,
    out: &mut [f64],
) {
    let gamma = mdp.discount;
    let at = |s: usize| t.apply(mdp.policy_cost(policy, s)) + gamma * mdp.policy_expect(policy, s, v);
    if mdp.n_states >= 1024 {
        out.par_iter_mut().enumerate().for_each(|(s, o)| *o = at(s));
    } else {
        for (s, o) in out.iter_mut().enumerate() {
            *o = at(s);
        }
    }
}

/// `s ↦ α₁ c_π(s) + α₂ + γ Σ P_π(s'|s) v(s')`.
pub fn bellman_policy(
    mdp: &FiniteMdp,
    policy: &Policy,
    v: &ValueFn,
    transform: AffineTransform,
) -> Result<ValueFn> {
    mdp.check_value(v)?;
    policy.validate_for(mdp)?;
    let mut out = vec![0.0; mdp.n_states];
    policy_backup_into(mdp, policy, v, transform, &mut out);
    Ok(ValueFn(out))
}

/// The optimality backup and its greedy policy (ties go to the smallest action).
pub fn bellman_optimal(
    mdp: &FiniteMdp,
    v: &ValueFn,
    transform: AffineTransform,
) -> Result<(ValueFn, Policy)> {
    mdp.check_value(v)?;
    let mut out = vec![0.0; mdp.n_states];
    let mut actions = vec![0; mdp.n_states];
    optimal_backup_into(mdp, v, transform, &mut out, &mut actions);
    Ok((ValueFn(out), Policy::Deterministic(actions)))
}

/// Iterates a monotone, constant-shift-equivariant `γ`-contraction from zero.
///
/// With `d = V_{k+1} − V_k ∈ [lo, hi]`, the iterate shifted by
/// `γ/(1−γ)·(lo+hi)/2` has Bellman residual at most `γ(hi−lo)/2`. Iteration
/// stops once that is `≤ tol·(1−γ)`, which gives `‖V − V_fix‖_∞ ≤ tol`.
fn iterate_fixed_point(
    n: usize,
    gamma: f64,
    opts: SolveOptions,
    solver: &'static str,
    mut step: impl FnMut(&[f64], &mut [f64]),
) -> Result<(Vec<f64>, usize)> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let target = opts.tol * (1.0 - gamma);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        step(&v, &mut next);
        let (lo, hi) = v
            .iter()
            .zip(&next)
            .map(|(a, b)| b - a)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        residual = gamma * (hi - lo) / 2.0;
        if residual <= target {
            let shift = gamma / (1.0 - gamma) * (lo + hi) / 2.0;
            next.iter_mut().for_each(|x| *x += shift);
            return Ok((next, it));
        }
        std::mem::swap(&mut v, &mut next);
    }
    Err(Error::Convergence {
        solver,
        iterations: opts.max_iter,
        residual,
    })
}

/// Optimal value function and greedy policy, with `‖B*V − V‖_∞ ≤ tol·(1−γ)`.
pub fn value_iteration(mdp: &FiniteMdp, opts: SolveOptions) -> Result<OptimalSolution> {
    let mut scratch = vec![0; mdp.n_states];
    let (values, iterations) =
        iterate_fixed_point(mdp.n_states, mdp.discount, opts, "value iteration", |v, out| {
            optimal_backup_into(mdp, v, AffineTransform::IDENTITY, out, &mut scratch)
        })?;
    let value = ValueFn(values);
    let (_, policy) = bellman_optimal(mdp, &value, AffineTransform::IDENTITY)?;
    Ok(OptimalSolution {
        value,
        policy,
        iterations,
    })
}

/// `V^π` as the fixed point of `B^π`, with `‖B^πV − V‖_∞ ≤ tol·(1−γ)`.
pub fn policy_evaluation(mdp: &FiniteMdp, policy: &Policy, opts: SolveOptions) -> Result<ValueFn> {
    policy.validate_for(mdp)?;
    let (values, _) =
        iterate_fixed_point(mdp.n_states, mdp.discount, opts, "policy evaluation", |v, out| {
            policy_backup_into(mdp, policy, v, AffineTransform::IDENTITY, out)
        })?;
    Ok(ValueFn(values))
}
