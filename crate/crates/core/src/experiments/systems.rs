//! LQR, certainty-equivalence and soundness-battery runs.

use nalgebra::DMatrix;

use super::{tag, CsvTable, ExperimentConfig, ExperimentOutput, LqrMatrices, MatrixSpec};
use crate::bounds::{envelope, LossRoute, ValueSource};
use crate::error::{Error, Result};
use crate::ipm::certainty_equivalence_bound;
use crate::lqr::{lqr_performance_bound, lqr_realized_gap, Alpha2, LqrModel, LqrSolveOptions};
use crate::mdp::AffineTransform;
use crate::mismatch::SolvedPair;
use crate::suite::{run_soundness_suite, SuiteOptions};
use crate::weighting::{certify_smallest_kappa, AssumptionStatus, WeightFn};

/// Parses `"1 0; 0 1"` (rows split by `;`, entries by whitespace or `,`).
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let rows = text
        .split(';')
        .map(|row| {
            row.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad matrix entry `{t}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Config(format!("matrix `{text}` is empty or ragged")));
    }
    Ok(rows)
}

fn to_matrix(what: &str, rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Config(format!("matrix {what} is empty or ragged")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), width, rows.into_iter().flatten()))
}

fn build_lqr(spec: &LqrMatrices, fallback: Option<&LqrModel>, discount: f64) -> Result<LqrModel> {
    let get = |what: &str, m: &Option<MatrixSpec>, base: Option<&DMatrix<f64>>| -> Result<Option<DMatrix<f64>>> {
        match m {
            Some(m) => Ok(Some(to_matrix(what, m.rows()?)?)),
            None => Ok(base.cloned()),
        }
    };
    let a = get("a", &spec.a, fallback.map(LqrModel::a))?
        .ok_or_else(|| Error::Config("LQR model needs matrix `a`".into()))?;
    let b = get("b", &spec.b, fallback.map(LqrModel::b))?
        .ok_or_else(|| Error::Config("LQR model needs matrix `b`".into()))?;
    let (n, m) = (a.nrows(), b.ncols());
    let q = get("q", &spec.q, fallback.map(LqrModel::q))?.unwrap_or_else(|| DMatrix::identity(n, n));
    let r = get("r", &spec.r, fallback.map(LqrModel::r))?.unwrap_or_else(|| DMatrix::identity(m, m));
    let sigma = get("sigma", &spec.sigma, fallback.map(LqrModel::noise_cov))?.unwrap_or_else(|| DMatrix::zeros(n, n));
    LqrModel::new(a, b, q, r, sigma, discount)
}

/// Bound for deploying the approximate model's LQR gain in the true model.
pub fn run_lqr(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    tag("lqr", lqr_inner(config))
}

fn lqr_inner(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let c = &config.lqr;
    let m = build_lqr(&c.truth(), None, c.discount)?;
    let m_hat = build_lqr(&c.approx, Some(&m), c.discount)?;
    let alpha2 = c.alpha2.map_or(Alpha2::Auto, Alpha2::Fixed);
    let opts = LqrSolveOptions::default();
    let r = lqr_performance_bound(&m, &m_hat, c.ell, alpha2, opts)?;
    let realized = if config.oracle() {
        Some(lqr_realized_gap(&m, &r.k_hat, c.ell, opts)?)
    } else {
        None
    };

    let mut out = ExperimentOutput::new("lqr");
    let mut header = vec![
        "rho_d_star",
        "rho_d_pihat",
        "d_sigma",
        "alpha2",
        "ell",
        "noise_growth",
        "closed_loop_growth",
        "kappa",
        "gamma_kappa",
        "bound",
    ];
    let mut row = vec![
        r.rho_d_star,
        r.rho_d_pihat,
        r.d_sigma,
        r.alpha2,
        r.ell(),
        r.cert.noise_growth,
        r.cert.closed_loop_growth,
        r.kappa(),
        r.cert.gamma_kappa,
        r.bound,
    ];
    if let Some(x) = realized {
        header.push("realized");
        row.push(x);
    }
    for (h, v) in header.iter().zip(&row) {
        out.report.push(format!("{h:<20} {v:.10e}"));
    }
    let status = if r.certified() {
        AssumptionStatus::Certified
    } else {
        AssumptionStatus::NotCertified
    };
    out.report.push(format!("status               {status}"));
    let mut table = CsvTable::new(header);
    table
        .meta("experiment", "lqr")
        .meta("discount", m.discount())
        .meta("status", status)
        .meta("k_hat", format!("{:?}", r.k_hat.transpose().as_slice()));
    table.push_row(row)?;
    out.tables.push(("lqr.csv".into(), table));
    out.statuses.push(status);
    Ok(out)
}

/// Loss of the certainty-equivalent policy on the additive-noise grid system.
pub fn run_ce(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    tag("ce", ce_inner(config))
}

fn ce_inner(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let c = &config.ce;
    let sys = &c.system;
    let solved = SolvedPair::solve(sys.pair()?, config.solver.options()?, config.oracle())?;
    let labels = sys.labels();
    let w = WeightFn::new(labels.iter().map(|s| 1.0 + c.ell * s.abs()).collect())?;
    let t = AffineTransform::IDENTITY;
    let required = LossRoute::OpenLoop(ValueSource::Approx).required(t);
    let kappa = certify_smallest_kappa(&solved, &w, t, &required)?.kappa;
    let r = certainty_equivalence_bound(&solved, sys.noise_mean_norm(), &w, kappa)?;
    let env = envelope(&solved, &r)?;

    let mut out = ExperimentOutput::new("ce");
    for (name, v) in [
        ("noise_mean_norm", r.term("noise_mean_norm").unwrap_or(f64::NAN)),
        ("lipschitz", r.term("lipschitz").unwrap_or(f64::NAN)),
        ("kappa", r.kappa),
        ("gamma_kappa", r.gamma_kappa),
        ("bound", r.bound),
    ] {
        out.report.push(format!("{name:<16} {v:.10e}"));
    }
    if let Some(x) = r.realized {
        out.report.push(format!("{:<16} {x:.10e}", "realized"));
    }
    out.report.push(format!("{:<16} {}", "status", r.status));

    let mut header = vec!["s", "V_hat_pi", "V_hat_star", "lower"];
    let truth = solved.true_value();
    if truth.is_some() {
        header.push("V_star");
    }
    let mut table = CsvTable::new(header);
    table
        .meta("experiment", "ce")
        .meta("noise_mean_norm", sys.noise_mean_norm())
        .meta("bound", r.bound)
        .meta("kappa", r.kappa)
        .meta("status", r.status);
    for i in 0..labels.len() {
        let mut row = vec![labels[i], env.upper[i], solved.approx_value()[i], env.lower[i]];
        if let Some(v) = truth {
            row.push(v[i]);
        }
        table.push_row(row)?;
    }
    out.tables.push(("ce.csv".into(), table));
    out.statuses.push(r.status);
    Ok(out)
}

/// The randomized soundness battery.
pub fn run_suite(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let opts = SuiteOptions {
        instances: config.suite.instances,
        seed: config.seed.unwrap_or(SuiteOptions::default().seed),
        duality_trials: config.suite.duality_trials,
        ..SuiteOptions::default()
    };
    let report = tag("random-suite", run_soundness_suite(&opts))?;
    let mut out = ExperimentOutput::new("random-suite");
    out.report.push(format!(
        "{} instances ({} drawn), seed {}",
        report.instances, report.attempts, opts.seed
    ));
    for c in &report.checks {
        out.report.push(format!(
            "{:<28} {} evaluated={} violations={} worst_excess={:.3e}",
            c.name,
            if c.violations == 0 { "PASS" } else { "FAIL" },
            c.evaluated,
            c.violations,
            c.worst_excess
        ));
    }
    out.report.push(format!("total violations: {}", report.violations()));
    out.failed = !report.passed();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_inline_matrices() {
        assert_eq!(parse_matrix("1 0; 0 1").unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(parse_matrix("0.5, -2").unwrap(), vec![vec![0.5, -2.0]]);
        assert!(parse_matrix("1 2; 3").is_err());
        assert!(parse_matrix("x").is_err());
    }

    #[test]
    fn noiseless_twin_gives_zero_bound() {
        let mut config = ExperimentConfig::default();
        config.lqr.a = Some(MatrixSpec::Inline("1 0.1; 0 1".into()));
        config.lqr.b = Some(MatrixSpec::Inline("0; 1".into()));
        config.lqr.sigma = Some(MatrixSpec::Inline("0.5 0; 0 0.5".into()));
        config.lqr.approx.sigma = Some(MatrixSpec::Inline("0 0; 0 0".into()));
        config.lqr.ell = 0.01;
        config.lqr.discount = 0.7;
        let out = run_lqr(&config).unwrap();
        let t = out.table("lqr.csv").unwrap();
        assert!(t.column("bound").unwrap()[0] <= 1e-9, "{:?}", out.report);
    }
}
