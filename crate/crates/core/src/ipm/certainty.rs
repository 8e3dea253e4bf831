//! Certainty-equivalent control on a quantized scalar system with additive noise.

use serde::{Deserialize, Serialize};

use super::{minkowski, GroundMetric, IpmKind};
use crate::bounds::{BoundKind, BoundReport, BoundTerm, LossRoute, ValueSource};
use crate::error::{Error, Result};
use crate::mdp::{AffineTransform, FiniteMdp};
use crate::mismatch::{ModelPair, SolvedPair};
use crate::weighting::{check_assumptions, WeightFn};

/// `s' = clip(round(drift·s) + a + N)` on the integer grid `−half_width..=half_width`,
/// with actions `−max_action..=max_action` and cost `state_cost·s² + action_cost·a²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveNoiseSystem {
    pub half_width: i64,
    pub max_action: i64,
    pub drift: f64,
    /// `(offset, probability)` pairs; offsets are integer grid steps.
    pub noise: Vec<(i64, f64)>,
    pub state_cost: f64,
    pub action_cost: f64,
    pub discount: f64,
}

impl Default for AdditiveNoiseSystem {
    fn default() -> Self {
        Self {
            half_width: 20,
            max_action: 3,
            drift: 0.8,
            noise: vec![(-1, 1.0 / 3.0), (0, 1.0 / 3.0), (1, 1.0 / 3.0)],
            state_cost: 1.0,
            action_cost: 0.5,
            discount: 0.5,
        }
    }
}

impl AdditiveNoiseSystem {
    pub fn validate(&self) -> Result<()> {
        if self.half_width < 1 || self.max_action < 0 {
            return Err(Error::invalid("half_width must be >= 1 and max_action >= 0"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::invalid(format!("discount {} not in (0, 1)", self.discount)));
        }
        if !self.drift.is_finite() || !(self.state_cost >= 0.0) || !(self.action_cost >= 0.0) {
            return Err(Error::invalid("drift must be finite and cost weights >= 0"));
        }
        if self.noise.is_empty() || self.noise.iter().any(|(_, p)| !(*p >= 0.0)) {
            return Err(Error::invalid("noise must be a nonempty list of nonnegative probabilities"));
        }
        let total: f64 = self.noise.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > super::DISTRIBUTION_TOL {
            return Err(Error::invalid(format!("noise probabilities sum to {total}")));
        }
        let mean: f64 = self.noise.iter().map(|(n, p)| *n as f64 * p).sum();
        if mean.abs() > 1e-12 {
            return Err(Error::invalid(format!("noise must be zero-mean, got mean {mean}")));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        (2 * self.half_width + 1) as usize
    }

    pub fn n_actions(&self) -> usize {
        (2 * self.max_action + 1) as usize
    }

    pub fn labels(&self) -> Vec<f64> {
        (-self.half_width..=self.half_width).map(|s| s as f64).collect()
    }

    /// `E|N|`, exact from the noise distribution.
    pub fn noise_mean_norm(&self) -> f64 {
        self.noise.iter().map(|(n, p)| n.unsigned_abs() as f64 * p).sum()
    }

    fn next_index(&self, s: i64, a: i64, n: i64) -> usize {
        let h = self.half_width;
        let base = (self.drift * s as f64).round() as i64;
        ((base + a + n).clamp(-h, h) + h) as usize
    }

    fn build(&self, noisy: bool) -> Result<FiniteMdp> {
        self.validate()?;
        let (h, m) = (self.half_width, self.max_action);
        let mut cost = Vec::with_capacity(self.n_states() * self.n_actions());
        let mut rows = Vec::with_capacity(self.n_states() * self.n_actions());
        for s in -h..=h {
            for a in -m..=m {
                cost.push(self.state_cost * (s * s) as f64 + self.action_cost * (a * a) as f64);
                let mut row: Vec<(usize, f64)> = Vec::new();
                if noisy {
                    for &(n, p) in &self.noise {
                        let next = self.next_index(s, a, n);
                        match row.iter_mut().find(|(i, _)| *i == next) {
                            Some((_, mass)) => *mass += p,
                            None => row.push((next, p)),
                        }
                    }
                } else {
                    row.push((self.next_index(s, a, 0), 1.0));
                }
                rows.push(row);
            }
        }
        FiniteMdp::from_sparse_rows(self.n_states(), self.n_actions(), rows, cost, self.discount)?
            .with_labels((-h..=h).collect())
    }

    pub fn stochastic(&self) -> Result<FiniteMdp> {
        self.build(true)
    }

    /// The same system with the noise replaced by its mean.
    pub fn deterministic(&self) -> Result<FiniteMdp> {
        self.build(false)
    }

    /// The stochastic model as truth and the deterministic one as approximation.
    pub fn pair(&self) -> Result<ModelPair> {
        ModelPair::new(self.stochastic()?, self.deterministic()?)
    }
}

/// `2γ·E‖N‖·Lip(V̂*)/(1 − γκ)` for the certainty-equivalent policy.
///
/// `solved` must pair the stochastic model (truth) with its noise-free
/// counterpart (approximation); both share costs and carry state labels.
pub fn certainty_equivalence_bound(
    solved: &SolvedPair,
    noise_mean_norm: f64,
    w: &WeightFn,
    kappa: f64,
) -> Result<BoundReport> {
    if !(noise_mean_norm >= 0.0) || !noise_mean_norm.is_finite() {
        return Err(Error::invalid(format!("noise mean norm {noise_mean_norm} must be finite and >= 0")));
    }
    let pair = solved.pair();
    if pair.truth().costs() != pair.approx().costs() {
        return Err(Error::invalid("certainty-equivalence bound needs identical costs in both models"));
    }
    let labels = pair
        .approx()
        .labels()
        .ok_or_else(|| Error::invalid("certainty-equivalence bound needs state labels for the metric"))?;
    let metric = GroundMetric::from_labels_i64(labels);
    let lip = minkowski(solved.approx_value(), &IpmKind::Wasserstein(metric))?;
    let t = AffineTransform::IDENTITY;
    let report = check_assumptions(solved, w, kappa, t)?;
    let gamma = pair.discount();
    let gk = gamma * kappa;
    // 0·∞ would arise for a noiseless system with a non-Lipschitz value.
    let bound = if noise_mean_norm == 0.0 {
        0.0
    } else {
        2.0 * gamma * noise_mean_norm * lip / (1.0 - gk)
    };
    Ok(BoundReport::from_assumptions(
        BoundKind::CertaintyEquivalence,
        bound,
        vec![
            BoundTerm {
                name: "noise_mean_norm",
                value: noise_mean_norm,
            },
            BoundTerm {
                name: "lipschitz",
                value: lip,
            },
        ],
        w,
        &report,
        LossRoute::OpenLoop(ValueSource::Approx).required(t),
        solved.realized_loss(w)?,
    ))
}
