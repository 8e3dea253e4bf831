//! Single-item inventory model with binomial demand and backlogging.
//!
//! Stock levels run over `−s_max..=s_max` (negative means backlog); the
//! order quantity runs over `0..=s_max`. The next level is
//! `clip(s + a − W)` with `W ~ Binomial(n, q)`, and the per-step cost is
//! `p·a + c_h·s` for `s ≥ 0` and `p·a − c_s·s` for `s < 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::weighting::WeightFn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryParams {
    pub s_max: usize,
    pub discount: f64,
    pub demand_n: u32,
    pub demand_q: f64,
    pub hold_cost: f64,
    pub short_cost: f64,
    pub proc_cost: f64,
}

impl InventoryParams {
    /// The reference "true" model used by the experiments.
    pub fn default_truth() -> Self {
        Self {
            s_max: 500,
            discount: 0.75,
            demand_n: 10,
            demand_q: 0.4,
            hold_cost: 4.0,
            short_cost: 2.0,
            proc_cost: 5.0,
        }
    }

    /// The reference approximate model used by the experiments.
    pub fn default_approx() -> Self {
        Self {
            demand_q: 0.5,
            hold_cost: 3.8,
            ..Self::default_truth()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_max == 0 {
            return Err(Error::invalid("s_max must be at least 1"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::invalid(format!("discount {} not in (0, 1)", self.discount)));
        }
        if !(0.0..=1.0).contains(&self.demand_q) {
            return Err(Error::invalid(format!("demand_q {} not in [0, 1]", self.demand_q)));
        }
        for (name, c) in [
            ("hold_cost", self.hold_cost),
            ("short_cost", self.short_cost),
            ("proc_cost", self.proc_cost),
        ] {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {c}")));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        2 * self.s_max + 1
    }

    pub fn n_actions(&self) -> usize {
        self.s_max + 1
    }

    /// Stock level of state index `i`.
    pub fn label(&self, i: usize) -> i64 {
        i as i64 - self.s_max as i64
    }

    /// State index of stock level `s` (clipped to the grid).
    pub fn index(&self, s: i64) -> usize {
        let m = self.s_max as i64;
        (s.clamp(-m, m) + m) as usize
    }

    pub fn labels(&self) -> Vec<i64> {
        (0..self.n_states()).map(|i| self.label(i)).collect()
    }

    pub fn cost(&self, s: i64, a: usize) -> f64 {
        let stock = if s >= 0 {
            self.hold_cost * s as f64
        } else {
            -self.short_cost * s as f64
        };
        self.proc_cost * a as f64 + stock
    }
}

/// `P(W = k)` for `W ~ Binomial(n, q)`, summing to 1 up to one rounding.
///
/// Terms are formed in log space; the rounding residual is moved onto the mode.
pub fn binomial_pmf(n: u32, q: f64) -> Vec<f64> {
    let n_us = n as usize;
    if q <= 0.0 {
        let mut pmf = vec![0.0; n_us + 1];
        pmf[0] = 1.0;
        return pmf;
    }
    if q >= 1.0 {
        let mut pmf = vec![0.0; n_us + 1];
        pmf[n_us] = 1.0;
        return pmf;
    }
    let (lq, lp) = (q.ln(), (1.0 - q).ln());
    let mut log_choose = 0.0;
    let mut pmf = Vec::with_capacity(n_us + 1);
    for k in 0..=n {
        if k > 0 {
            log_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        pmf.push((log_choose + k as f64 * lq + (n - k) as f64 * lp).exp());
    }
    let mode = pmf
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let total: f64 = pmf.iter().sum();
    pmf[mode] += 1.0 - total;
    pmf
}

/// Builds the model with a sparse kernel (at most `n + 1` entries per row).
pub fn build_inventory(params: &InventoryParams) -> Result<FiniteMdp> {
    params.validate()?;
    let pmf = binomial_pmf(params.demand_n, params.demand_q);
    let (n_s, n_a) = (params.n_states(), params.n_actions());
    let mut cost = Vec::with_capacity(n_s * n_a);
    for i in 0..n_s {
        for a in 0..n_a {
            cost.push(params.cost(params.label(i), a));
        }
    }
    let rows = (0..n_s).flat_map(|i| {
        let pmf = &pmf;
        (0..n_a).map(move |a| {
            let s = params.label(i);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(pmf.len());
            for (k, &p) in pmf.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let next = params.index(s + a as i64 - k as i64);
                // Demand outcomes are visited in order, so clipped
                // duplicates are always adjacent.
                match row.last_mut() {
                    Some((last, mass)) if *last == next => *mass += p,
                    _ => row.push((next, p)),
                }
            }
            row
        })
    });
    FiniteMdp::from_sparse_rows(n_s, n_a, rows, cost, params.discount)?.with_labels(params.labels())
}

/// `w(s) = 1 + ℓ·(ĉ_h·max(s, 0) + ĉ_s·max(−s, 0))` using the approximate model's costs.
pub fn build_weight(params_hat: &InventoryParams, ell: f64) -> Result<WeightFn> {
    if !(ell >= 0.0) || !ell.is_finite() {
        return Err(Error::invalid(format!("weight scale must be finite and >= 0, got {ell}")));
    }
    let w = params_hat
        .labels()
        .into_iter()
        .map(|s| {
            let shape = params_hat.hold_cost * s.max(0) as f64 + params_hat.short_cost * (-s).max(0) as f64;
            1.0 + ell * shape
        })
        .collect();
    WeightFn::new(w)
}

/// A grid of weight scales `ℓ` for [`build_weight`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFamilySpec {
    pub ell_values: Vec<f64>,
}

impl WeightFamilySpec {
    pub fn new(ell_values: Vec<f64>) -> Result<Self> {
        if ell_values.is_empty() {
            return Err(Error::invalid("weight family is empty"));
        }
        if let Some(e) = ell_values.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return Err(Error::invalid(format!("weight scale {e} must be finite and >= 0")));
        }
        Ok(Self { ell_values })
    }

    /// `{0, 0.5e-2, …, 2.5e-2}`.
    pub fn policy_stability_grid() -> Self {
        Self {
            ell_values: (0..=5).map(|k| k as f64 * 0.5e-2).collect(),
        }
    }

    /// `{0, 0.25e-4, …, 2.0e-4}`.
    pub fn model_stability_grid() -> Self {
        Self {
            ell_values: (0..=8).map(|k| k as f64 * 0.25e-4).collect(),
        }
    }

    pub fn weights(&self, params_hat: &InventoryParams) -> Result<Vec<WeightFn>> {
        self.ell_values.iter().map(|&ell| build_weight(params_hat, ell)).collect()
    }
}
