//! The inventory envelope experiments.

use rayon::prelude::*;

use super::plot::{line_plot, Series};
use super::{num_label, tag, CsvTable, ExperimentConfig, ExperimentOutput, InventoryConfig, InventoryExperiment};
use crate::bounds::{envelope, min_envelope, performance_loss_bound, performance_loss_bound_with, BoundReport, LossRoute, ValueSource};
use crate::error::Result;
use crate::inventory::{build_inventory, build_weight, InventoryParams, WeightFamilySpec};
use crate::mdp::{AffineTransform, SolveOptions};
use crate::mismatch::{ModelPair, SolvedPair};
use crate::weighting::{certify_smallest_kappa, kappa_model, AssumptionId, WeightFn};

const ROUTE: LossRoute = LossRoute::Optimality(ValueSource::Approx);

/// Runs one inventory experiment.
pub fn run_inventory(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let inv = &config.inventory;
    let name = inv.experiment.name();
    tag(name, run_inner(inv, config.solver.options()?, config.oracle()))
}

fn run_inner(inv: &InventoryConfig, options: SolveOptions, oracle: bool) -> Result<ExperimentOutput> {
    let pair = ModelPair::new(build_inventory(&inv.truth)?, build_inventory(&inv.approx)?)?;
    let solved = SolvedPair::solve(pair, options, oracle)?;
    let mut ctx = Context::new(inv, &solved)?;
    match inv.experiment {
        InventoryExperiment::ImBound => ctx.im_bound()?,
        InventoryExperiment::WeightFamily => ctx.weight_family()?,
        InventoryExperiment::Alpha => ctx.alpha()?,
        InventoryExperiment::ModelStability => ctx.model_stability()?,
    }
    Ok(ctx.out)
}

struct Context<'a> {
    inv: &'a InventoryConfig,
    solved: &'a SolvedPair,
    labels: Vec<f64>,
    out: ExperimentOutput,
}

/// Certifies the route's conditions at the smallest `κ` and evaluates the bound.
fn policy_stability_bound(solved: &SolvedPair, w: &WeightFn, t: AffineTransform) -> Result<BoundReport> {
    let report = certify_smallest_kappa(solved, w, t, &ROUTE.required(t))?;
    performance_loss_bound_with(solved, w, &report, ROUTE)
}

fn params_text(p: &InventoryParams) -> String {
    format!(
        "({}, {}, {}, {}, {}, {}, {})",
        p.s_max, p.discount, p.demand_n, p.demand_q, p.hold_cost, p.short_cost, p.proc_cost
    )
}

fn assumption_text(r: &BoundReport) -> String {
    let Some(a) = &r.assumptions else {
        return String::new();
    };
    r.required
        .iter()
        .map(|id: &AssumptionId| format!("{id}:{}", a.check(*id).status))
        .collect::<Vec<_>>()
        .join(" ")
}

impl<'a> Context<'a> {
    fn new(inv: &'a InventoryConfig, solved: &'a SolvedPair) -> Result<Self> {
        let labels = inv.approx.labels().into_iter().map(|s| s as f64).collect();
        let mut out = ExperimentOutput::new(inv.experiment.name());
        out.report.push(format!("truth  {}", params_text(&inv.truth)));
        out.report.push(format!("approx {}", params_text(&inv.approx)));
        Ok(Self {
            inv,
            solved,
            labels,
            out,
        })
    }

    fn base_table(&self, extra: &[String]) -> CsvTable {
        let mut header = vec!["s".to_string(), "V_hat_pi".to_string()];
        header.extend(extra.iter().cloned());
        if self.solved.true_value().is_some() {
            header.push("V_star".into());
        }
        let mut t = CsvTable::new(header);
        t.meta("experiment", self.inv.experiment.name())
            .meta("truth", params_text(&self.inv.truth))
            .meta("approx", params_text(&self.inv.approx))
            .meta("discount", self.solved.pair().discount());
        t
    }

    fn fill_rows(&self, table: &mut CsvTable, columns: &[&[f64]]) -> Result<()> {
        let upper = self.solved.deployed_value();
        let truth = self.solved.true_value();
        for i in 0..self.labels.len() {
            let mut row = vec![self.labels[i], upper[i]];
            row.extend(columns.iter().map(|c| c[i]));
            if let Some(v) = truth {
                row.push(v[i]);
            }
            table.push_row(row)?;
        }
        Ok(())
    }

    fn describe(&mut self, table: &mut CsvTable, key: &str, r: &BoundReport) {
        table
            .meta(format!("{key}.kappa"), r.kappa)
            .meta(format!("{key}.gamma_kappa"), r.gamma_kappa)
            .meta(format!("{key}.bound"), r.bound)
            .meta(format!("{key}.status"), r.status)
            .meta(format!("{key}.assumptions"), assumption_text(r));
        if let Some(real) = r.realized {
            table.meta(format!("{key}.realized"), real);
        }
        self.out.report.push(format!(
            "{key}: kappa={:.6} gamma*kappa={:.6} bound={:.6e} status={}{}",
            r.kappa,
            r.gamma_kappa,
            r.bound,
            r.status,
            r.realized.map(|x| format!(" realized={x:.6e}")).unwrap_or_default()
        ));
    }

    /// Full-range and zoomed plots of the table's columns.
    fn plots(&mut self, stem: &str, title: &str, table: &CsvTable) {
        let series: Vec<Series> = table.header[1..]
            .iter()
            .filter(|h| h.as_str() != "best_ell")
            .map(|h| Series::new(h.clone(), table.column(h).expect("column exists")))
            .collect();
        let zoom = (self.inv.zoom[0] as f64, self.inv.zoom[1] as f64);
        self.out.plots.push((format!("{stem}.svg"), line_plot(title, "s", &self.labels, &series, None)));
        self.out.plots.push((
            format!("{stem}_zoom.svg"),
            line_plot(&format!("{title} (zoomed)"), "s", &self.labels, &series, Some(zoom)),
        ));
    }

    fn lower(&self, r: &BoundReport) -> Result<Vec<f64>> {
        Ok(envelope(self.solved, r)?.lower.into_inner())
    }

    fn im_bound(&mut self) -> Result<()> {
        let n = self.labels.len();
        let w = build_weight(&self.inv.approx, self.inv.ell)?;
        let id = AffineTransform::IDENTITY;
        let (weighted, sup) = rayon::join(
            || policy_stability_bound(self.solved, &w, id),
            || policy_stability_bound(self.solved, &WeightFn::ones(n), id),
        );
        let (weighted, sup) = (weighted?, sup?);
        let mut table = self.base_table(&["lower_weighted".into(), "lower_sup".into()]);
        table.meta("ell", self.inv.ell);
        self.describe(&mut table, "weighted", &weighted);
        self.describe(&mut table, "sup", &sup);
        self.fill_rows(&mut table, &[&self.lower(&weighted)?, &self.lower(&sup)?])?;
        self.out.statuses.push(weighted.status);
        self.plots("fig_im_bound", "Weighted vs sup-norm lower bounds", &table);
        self.out.tables.push(("fig_im_bound.csv".into(), table));
        Ok(())
    }

    fn family_tables(&mut self, stem: &str, title: &str, ells: &[f64], reports: Vec<BoundReport>) -> Result<()> {
        let mut lowers = Vec::with_capacity(ells.len());
        for (ell, r) in ells.iter().zip(&reports) {
            let lower = self.lower(r)?;
            let key = format!("ell_{}", num_label(*ell));
            let mut table = self.base_table(&["lower".into()]);
            table.meta("ell", ell);
            self.describe(&mut table, &key, r);
            self.fill_rows(&mut table, &[&lower])?;
            self.out.tables.push((format!("{stem}_{key}.csv"), table));
            self.out.statuses.push(r.status);
            lowers.push(lower);
        }
        let mut header: Vec<String> = ells.iter().map(|e| format!("lower_ell_{}", num_label(*e))).collect();
        header.extend(["lower_min".to_string(), "best_ell".to_string()]);
        let mut table = self.base_table(&header);
        let sweep = min_envelope(self.solved, &reports).ok();
        let n = self.labels.len();
        let (lower_min, best) = match &sweep {
            Some(s) => (
                s.envelope.lower.to_vec(),
                s.envelope.source.iter().map(|&i| ells[i]).collect(),
            ),
            None => (vec![f64::NEG_INFINITY; n], vec![f64::NAN; n]),
        };
        if let Some(s) = &sweep {
            let skipped: Vec<String> = s.skipped.iter().map(|&i| num_label(ells[i])).collect();
            table.meta("skipped_ell", skipped.join(" "));
        }
        let mut cols: Vec<&[f64]> = lowers.iter().map(|l| l.as_slice()).collect();
        cols.push(&lower_min);
        cols.push(&best);
        self.fill_rows(&mut table, &cols)?;
        self.plots(stem, title, &table);
        self.out.tables.push((format!("{stem}.csv"), table));
        Ok(())
    }

    fn weight_family(&mut self) -> Result<()> {
        let ells = match &self.inv.ell_values {
            Some(v) => WeightFamilySpec::new(v.clone())?,
            None => WeightFamilySpec::policy_stability_grid(),
        }
        .ell_values;
        let weights = WeightFamilySpec { ell_values: ells.clone() }.weights(&self.inv.approx)?;
        let reports = weights
            .par_iter()
            .map(|w| policy_stability_bound(self.solved, w, AffineTransform::IDENTITY))
            .collect::<Result<Vec<_>>>()?;
        self.family_tables("fig_weight_family", "Lower bounds per weight scale", &ells, reports)
    }

    fn model_stability(&mut self) -> Result<()> {
        let ells = match &self.inv.ell_values {
            Some(v) => WeightFamilySpec::new(v.clone())?,
            None => WeightFamilySpec::model_stability_grid(),
        }
        .ell_values;
        let weights = WeightFamilySpec { ell_values: ells.clone() }.weights(&self.inv.approx)?;
        let pair = self.solved.pair();
        let reports = weights
            .par_iter()
            .map(|w| {
                let k_true = kappa_model(pair.truth(), w)?.kappa;
                let k_hat = kappa_model(pair.approx(), w)?.kappa;
                performance_loss_bound(self.solved, w, k_true.max(k_hat), AffineTransform::IDENTITY, ROUTE)
            })
            .collect::<Result<Vec<_>>>()?;
        self.family_tables("fig_model_stability", "Lower bounds under model stability", &ells, reports)
    }

    fn alpha(&mut self) -> Result<()> {
        let w = build_weight(&self.inv.approx, self.inv.ell)?;
        let transforms = self
            .inv
            .transforms
            .iter()
            .map(|[a1, a2]| AffineTransform::new(*a1, *a2))
            .collect::<Result<Vec<_>>>()?;
        let reports = transforms
            .par_iter()
            .map(|&t| policy_stability_bound(self.solved, &w, t))
            .collect::<Result<Vec<_>>>()?;
        let keys: Vec<String> = transforms
            .iter()
            .map(|t| format!("alpha_{}_{}", num_label(t.alpha1()), num_label(t.alpha2())))
            .collect();
        let header: Vec<String> = keys.iter().map(|k| format!("lower_{k}")).collect();
        let mut table = self.base_table(&header);
        table.meta("ell", self.inv.ell);
        let mut lowers = Vec::new();
        for (key, r) in keys.iter().zip(&reports) {
            self.describe(&mut table, key, r);
            self.out.statuses.push(r.status);
            lowers.push(self.lower(r)?);
        }
        let cols: Vec<&[f64]> = lowers.iter().map(|l| l.as_slice()).collect();
        self.fill_rows(&mut table, &cols)?;
        self.plots("fig_alpha", "Lower bounds per cost transform", &table);
        self.out.tables.push(("fig_alpha.csv".into(), table));
        Ok(())
    }
}
