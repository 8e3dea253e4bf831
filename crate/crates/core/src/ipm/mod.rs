//! Integral probability metrics on finite state spaces and the bounds built
//! from cost and kernel distances between two models.
//!
//! Three metrics are supported, each paired with the Minkowski functional of
//! its function ball so that `|Σ f (p − q)| ≤ ρ(f) · d(p, q)`:
//!
//! | metric            | `d(p, q)`                    | `ρ(f)`                                  |
//! |-------------------|------------------------------|-----------------------------------------|
//! | total variation   | `Σ |p − q|`                  | `(max f − min f) / 2`                   |
//! | Wasserstein       | optimal transport cost       | Lipschitz constant                      |
//! | weighted TV       | `Σ w |p − q|`                | `max |f(s) − f(s')| / (w(s) + w(s'))`   |

mod certainty;
mod transport;

pub use certainty::{certainty_equivalence_bound, AdditiveNoiseSystem};

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::{BoundKind, BoundReport, BoundTerm, LossRoute, ValueSource};
use crate::error::{Error, Result};
use crate::mdp::{bellman_optimal, AffineTransform, FiniteMdp, Policy, ValueFn};
use crate::mismatch::{ModelPair, SolvedPair};
use crate::weighting::{check_assumptions, AssumptionReport, WeightFn};

/// Distribution inputs must sum to one within this tolerance.
pub const DISTRIBUTION_TOL: f64 = 1e-9;

/// Ground metric for the Wasserstein distance.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundMetric {
    /// `d(s, s') = |label(s) − label(s')|`.
    Labels(Vec<f64>),
    /// Row-major `n × n` distance matrix.
    Matrix { n: usize, dist: Vec<f64> },
}

impl GroundMetric {
    pub fn labels(labels: Vec<f64>) -> Result<Self> {
        if labels.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("metric labels must be finite"));
        }
        Ok(GroundMetric::Labels(labels))
    }

    pub fn from_labels_i64(labels: &[i64]) -> Self {
        GroundMetric::Labels(labels.iter().map(|&x| x as f64).collect())
    }

    /// Validates a distance matrix: nonnegative, symmetric, zero diagonal,
    /// and the triangle inequality (every triple for `n ≤ 64`, a fixed
    /// random sample of triples above that).
    pub fn matrix(n: usize, dist: Vec<f64>) -> Result<Self> {
        Error::check_len("distance matrix", n * n, dist.len())?;
        let d = |i: usize, j: usize| dist[i * n + j];
        for i in 0..n {
            if d(i, i) != 0.0 {
                return Err(Error::invalid(format!("distance matrix diagonal at {i} is not zero")));
            }
            for j in 0..n {
                let x = d(i, j);
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(Error::invalid(format!("distance ({i}, {j}) = {x} is not finite and >= 0")));
                }
                if (x - d(j, i)).abs() > 1e-12 * x.max(1.0) {
                    return Err(Error::invalid(format!("distance matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        let triangle = |i: usize, j: usize, k: usize| d(i, k) <= d(i, j) + d(j, k) + 1e-12;
        if n <= 64 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if !triangle(i, j, k) {
                            return Err(Error::invalid(format!("triangle inequality fails at ({i}, {j}, {k})")));
                        }
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            for _ in 0..20_000 {
                let t = sample(&mut rng, n, 3);
                let (i, j, k) = (t.index(0), t.index(1), t.index(2));
                if !triangle(i, j, k) {
                    return Err(Error::invalid(format!("triangle inequality fails at ({i}, {j}, {k})")));
                }
            }
        }
        Ok(GroundMetric::Matrix { n, dist })
    }

    pub fn n_points(&self) -> usize {
        match self {
            GroundMetric::Labels(l) => l.len(),
            GroundMetric::Matrix { n, .. } => *n,
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self {
            GroundMetric::Labels(l) => (l[i] - l[j]).abs(),
            GroundMetric::Matrix { n, dist } => dist[i * n + j],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IpmKind {
    TotalVariation,
    Wasserstein(GroundMetric),
    WeightedTotalVariation(WeightFn),
}

impl IpmKind {
    pub fn name(&self) -> &'static str {
        match self {
            IpmKind::TotalVariation => "total-variation",
            IpmKind::Wasserstein(_) => "wasserstein",
            IpmKind::WeightedTotalVariation(_) => "weighted-total-variation",
        }
    }

    fn check_size(&self, n: usize) -> Result<()> {
        match self {
            IpmKind::TotalVariation => Ok(()),
            IpmKind::Wasserstein(g) => Error::check_len("ground metric", n, g.n_points()),
            IpmKind::WeightedTotalVariation(w) => Error::check_len("ipm weight", n, w.len()),
        }
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::invalid(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// `d(p, q)` for two distributions over the same finite set.
pub fn ipm_distance(p: &[f64], q: &[f64], kind: &IpmKind) -> Result<f64> {
    Error::check_len("ipm distributions", p.len(), q.len())?;
    kind.check_size(p.len())?;
    check_distribution(p, "first distribution")?;
    check_distribution(q, "second distribution")?;
    let diff: Vec<(usize, f64)> = p
        .iter()
        .zip(q)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, (a, b))| (i, a - b))
        .collect();
    Ok(signed_measure_norm(&diff, kind))
}

/// The IPM norm of a zero-mass signed measure given as sparse `(point, mass)`
/// entries with distinct points.
fn signed_measure_norm(diff: &[(usize, f64)], kind: &IpmKind) -> f64 {
    match kind {
        IpmKind::TotalVariation => diff.iter().map(|(_, d)| d.abs()).sum(),
        IpmKind::WeightedTotalVariation(w) => diff.iter().map(|(i, d)| w[*i] * d.abs()).sum(),
        IpmKind::Wasserstein(GroundMetric::Labels(labels)) => {
            let mut pts: Vec<(f64, f64)> = diff.iter().map(|&(i, d)| (labels[i], d)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cdf = 0.0;
            let mut total = 0.0;
            for k in 0..pts.len().saturating_sub(1) {
                cdf += pts[k].1;
                total += cdf.abs() * (pts[k + 1].0 - pts[k].0);
            }
            total
        }
        IpmKind::Wasserstein(metric @ GroundMetric::Matrix { .. }) => {
            let supply: Vec<(usize, f64)> = diff.iter().filter(|(_, d)| *d > 0.0).copied().collect();
            let demand: Vec<(usize, f64)> =
                diff.iter().filter(|(_, d)| *d < 0.0).map(|&(i, d)| (i, -d)).collect();
            transport::min_transport_cost(&supply, &demand, |a, b| metric.distance(a, b))
        }
    }
}

/// Minkowski functional `ρ(f)` of the metric's function ball.
///
/// The Wasserstein functional is `+∞` when two points at distance zero carry
/// different values.
pub fn minkowski(v: &[f64], kind: &IpmKind) -> Result<f64> {
    kind.check_size(v.len())?;
    if v.is_empty() {
        return Ok(0.0);
    }
    Ok(match kind {
        IpmKind::TotalVariation => {
            let (lo, hi) = v
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            (hi - lo) / 2.0
        }
        IpmKind::Wasserstein(GroundMetric::Labels(labels)) => {
            let mut pts: Vec<(f64, f64)> = labels.iter().copied().zip(v.iter().copied()).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            // On a line the steepest slope is between neighbours.
            let mut lip = 0.0f64;
            for pair in pts.windows(2) {
                let (dx, dv) = (pair[1].0 - pair[0].0, (pair[1].1 - pair[0].1).abs());
                if dx == 0.0 {
                    if dv > 0.0 {
                        return Ok(f64::INFINITY);
                    }
                } else {
                    lip = lip.max(dv / dx);
                }
            }
            lip
        }
        IpmKind::Wasserstein(metric @ GroundMetric::Matrix { .. }) => {
            let n = v.len();
            let mut lip = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    let (d, dv) = (metric.distance(i, j), (v[i] - v[j]).abs());
                    if d == 0.0 {
                        if dv > 0.0 {
                            return Ok(f64::INFINITY);
                        }
                    } else {
                        lip = lip.max(dv / d);
                    }
                }
            }
            lip
        }
        IpmKind::WeightedTotalVariation(w) => {
            let n = v.len();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (i + 1..n)
                        .map(|j| (v[i] - v[j]).abs() / (w[i] + w[j]))
                        .fold(0.0f64, f64::max)
                })
                .reduce(|| 0.0, f64::max)
        }
    })
}

/// Which policies a [`ModelDistance`] compares.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceScope {
    /// `π` in the true model against `π̂` in the approximate model.
    Policies { pi: Policy, pi_hat: Policy },
    /// Every `(s, a)` in both models.
    Max,
}

/// Weighted cost distance `eps` and kernel distance `delta` between two models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDistance {
    pub eps: f64,
    pub delta: f64,
    pub scope: DistanceScope,
    pub transform: AffineTransform,
    pub ipm: IpmKind,
    pub weight: WeightFn,
}

fn policy_row(mdp: &FiniteMdp, policy: &Policy, s: usize, sign: f64, acc: &mut BTreeMap<usize, f64>) {
    policy.for_each_action(s, |a, pa| {
        for (s2, p) in mdp.row(s, a) {
            *acc.entry(s2).or_insert(0.0) += sign * pa * p;
        }
    });
}

fn collect_diff(acc: BTreeMap<usize, f64>) -> Vec<(usize, f64)> {
    acc.into_iter().filter(|(_, d)| *d != 0.0).collect()
}

/// Cost distance and kernel distance under `ipm`, weighted by `1/w(s)`.
pub fn model_distance(
    pair: &ModelPair,
    scope: DistanceScope,
    w: &WeightFn,
    transform: AffineTransform,
    ipm: &IpmKind,
) -> Result<ModelDistance> {
    let n = pair.n_states();
    Error::check_len("distance weight", n, w.len())?;
    ipm.check_size(n)?;
    let (m, m_hat) = (pair.truth(), pair.approx());

    let per_state = |s: usize| -> (f64, f64) {
        match &scope {
            DistanceScope::Policies { pi, pi_hat } => {
                let c = transform.apply(m.policy_cost(pi, s)) - m_hat.policy_cost(pi_hat, s);
                let mut acc = BTreeMap::new();
                policy_row(m, pi, s, 1.0, &mut acc);
                policy_row(m_hat, pi_hat, s, -1.0, &mut acc);
                let d = signed_measure_norm(&collect_diff(acc), ipm);
                (c.abs() / w[s], d / w[s])
            }
            DistanceScope::Max => {
                let mut best = (0.0f64, 0.0f64);
                for a in 0..m.n_actions() {
                    let c = transform.apply(m.cost(s, a)) - m_hat.cost(s, a);
                    let mut acc = BTreeMap::new();
                    for (s2, p) in m.row(s, a) {
                        *acc.entry(s2).or_insert(0.0) += p;
                    }
                    for (s2, p) in m_hat.row(s, a) {
                        *acc.entry(s2).or_insert(0.0) -= p;
                    }
                    let d = signed_measure_norm(&collect_diff(acc), ipm);
                    best = (best.0.max(c.abs() / w[s]), best.1.max(d / w[s]));
                }
                best
            }
        }
    };
    if let DistanceScope::Policies { pi, pi_hat } = &scope {
        pi.validate_for(m)?;
        pi_hat.validate_for(m_hat)?;
    }
    let rows: Vec<(f64, f64)> = if n * pair.n_actions() >= 1 << 12 {
        (0..n).into_par_iter().map(per_state).collect()
    } else {
        (0..n).map(per_state).collect()
    };
    let (eps, delta) = rows
        .into_iter()
        .fold((0.0f64, 0.0f64), |(e, d), (e2, d2)| (e.max(e2), d.max(d2)));
    Ok(ModelDistance {
        eps,
        delta,
        scope,
        transform,
        ipm: ipm.clone(),
        weight: w.clone(),
    })
}

/// `eps + γ·ρ(v)·delta`, an upper bound on the matching mismatch functional.
pub fn mismatch_from_distance(dist: &ModelDistance, rho_v: f64, gamma: f64) -> f64 {
    if dist.delta == 0.0 {
        dist.eps
    } else {
        dist.eps + gamma * rho_v * dist.delta
    }
}

/// Distance-based counterpart of [`crate::bounds::performance_loss_bound`].
pub fn ipm_performance_bound(
    solved: &SolvedPair,
    w: &WeightFn,
    kappa: f64,
    transform: AffineTransform,
    ipm: &IpmKind,
    route: LossRoute,
) -> Result<BoundReport> {
    let report = check_assumptions(solved, w, kappa, transform)?;
    ipm_performance_bound_with(solved, w, &report, ipm, route)
}

pub fn ipm_performance_bound_with(
    solved: &SolvedPair,
    w: &WeightFn,
    report: &AssumptionReport,
    ipm: &IpmKind,
    route: LossRoute,
) -> Result<BoundReport> {
    let pair = solved.pair();
    let t = report.transform;
    let a1 = t.alpha1();
    let gamma = pair.discount();
    let gk = gamma * report.kappa;
    let first = 1.0 / (a1 * (1.0 - gk));
    let second = (1.0 + gk) / (a1 * (1.0 - gk).powi(2));
    let pi_hat = solved.approx_policy().clone();

    let truth = || {
        solved.truth_solution().ok_or_else(|| {
            Error::invalid("this bound needs the true model's optimum; solve the pair with the oracle enabled")
        })
    };
    // ρ of the value the route is evaluated at, already scaled by α₁ for V*.
    let rho = match route.source() {
        ValueSource::Approx => minkowski(solved.approx_value(), ipm)?,
        ValueSource::True => a1 * minkowski(&truth()?.value, ipm)?,
    };
    let dist = |pi: &Policy, pi_hat: &Policy| {
        model_distance(
            pair,
            DistanceScope::Policies {
                pi: pi.clone(),
                pi_hat: pi_hat.clone(),
            },
            w,
            t,
            ipm,
        )
    };
    let piece = |d: &ModelDistance| mismatch_from_distance(d, rho, gamma);

    let mut terms = vec![BoundTerm {
        name: "rho",
        value: rho,
    }];
    let mut push = |name_eps: &'static str, name_delta: &'static str, d: &ModelDistance| {
        terms.push(BoundTerm {
            name: name_eps,
            value: d.eps,
        });
        terms.push(BoundTerm {
            name: name_delta,
            value: d.delta,
        });
    };

    let bound = match route {
        LossRoute::OpenLoop(source) => {
            let d = model_distance(pair, DistanceScope::Max, w, t, ipm)?;
            push("eps_max", "delta_max", &d);
            match source {
                ValueSource::Approx => 2.0 * piece(&d) / (a1 * (1.0 - gk)),
                ValueSource::True => 2.0 * piece(&d) / (a1 * (1.0 - gk).powi(2)),
            }
        }
        LossRoute::PolicyPair(_) | LossRoute::Optimality(_) => {
            let own = dist(&pi_hat, &pi_hat)?;
            push("eps_own", "delta_own", &own);
            let cross = match route {
                LossRoute::PolicyPair(_) => dist(&truth()?.policy, &pi_hat)?,
                LossRoute::Optimality(ValueSource::Approx) => {
                    let (_, mu) = bellman_optimal(pair.truth(), solved.approx_value(), t)?;
                    dist(&mu, &pi_hat)?
                }
                _ => {
                    let v_alpha: ValueFn =
                        truth()?.value.affine(a1, t.alpha2() / (1.0 - gamma));
                    let (_, mu_hat) =
                        bellman_optimal(pair.approx(), &v_alpha, AffineTransform::IDENTITY)?;
                    dist(&truth()?.policy, &mu_hat)?
                }
            };
            push("eps_cross", "delta_cross", &cross);
            match route.source() {
                ValueSource::Approx => first * (piece(&own) + piece(&cross)),
                ValueSource::True => first * piece(&own) + second * piece(&cross),
            }
        }
    };
    Ok(BoundReport::from_assumptions(
        BoundKind::DistanceLoss {
            route,
            ipm: ipm.name().to_string(),
        },
        bound,
        terms,
        w,
        report,
        route.required(t),
        solved.realized_loss(w)?,
    ))
}
