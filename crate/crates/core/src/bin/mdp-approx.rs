use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mdp_approx::experiments::{
    run_ce, run_inventory, run_lqr, run_suite, ExperimentConfig, ExperimentOutput, InventoryExperiment, MatrixSpec,
};
use mdp_approx::Result;

/// Performance-loss bounds for policies computed on an approximate model.
#[derive(Debug, Parser)]
#[command(name = "mdp-approx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV tables and plots.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    emit_plots: bool,
    /// Do not solve the true model (drops V_star columns and realized gaps).
    #[arg(long, global = true)]
    no_oracle: bool,
    /// Seed for randomized runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Inventory-management envelope experiments.
    Inventory {
        /// fig_im_bound, fig_weight_family, fig_alpha or fig_model_stability.
        #[arg(long)]
        experiment: Option<InventoryExperiment>,
        /// Weight scale for the single-weight experiments.
        #[arg(long)]
        ell: Option<f64>,
    },
    /// Closed-form bound for a linear-quadratic regulator pair.
    Lqr(LqrArgs),
    /// Certainty-equivalence bound on the additive-noise grid system.
    Ce(CeArgs),
    /// Randomized soundness battery over small finite model pairs.
    RandomSuite {
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        duality_trials: Option<usize>,
    },
}

/// Matrices are written inline as `"1 0; 0 1"`.
#[derive(Debug, Args)]
struct LqrArgs {
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    r: Option<String>,
    /// Noise covariance of the true model.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    a_hat: Option<String>,
    #[arg(long)]
    b_hat: Option<String>,
    #[arg(long)]
    q_hat: Option<String>,
    #[arg(long)]
    r_hat: Option<String>,
    /// Noise covariance of the approximate model.
    #[arg(long)]
    sigma_hat: Option<String>,
    #[arg(long)]
    discount: Option<f64>,
    /// Weight `1 + ell·|s|²`.
    #[arg(long)]
    ell: Option<f64>,
    /// Fixed cost offset instead of the noise-cancelling default.
    #[arg(long, allow_hyphen_values = true)]
    alpha2: Option<f64>,
}

#[derive(Debug, Args)]
struct CeArgs {
    #[arg(long)]
    half_width: Option<i64>,
    #[arg(long)]
    max_action: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    drift: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,
    /// Weight `1 + ell·|s|`.
    #[arg(long)]
    ell: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_matrix(slot: &mut Option<MatrixSpec>, value: Option<String>) {
    if let Some(v) = value {
        *slot = Some(MatrixSpec::Inline(v));
    }
}

fn build_config(cli: Cli) -> Result<(ExperimentConfig, Command)> {
    let mut config = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if cli.common.out.is_some() {
        config.out_dir = cli.common.out;
    }
    config.emit_plots |= cli.common.emit_plots;
    if cli.common.no_oracle {
        config.oracle = Some(false);
    }
    if cli.common.seed.is_some() {
        config.seed = cli.common.seed;
    }
    match &cli.command {
        Command::Inventory { experiment, ell } => {
            set(&mut config.inventory.experiment, *experiment);
            set(&mut config.inventory.ell, *ell);
        }
        Command::Lqr(a) => {
            let c = &mut config.lqr;
            set_matrix(&mut c.a, a.a.clone());
            set_matrix(&mut c.b, a.b.clone());
            set_matrix(&mut c.q, a.q.clone());
            set_matrix(&mut c.r, a.r.clone());
            set_matrix(&mut c.sigma, a.sigma.clone());
            set_matrix(&mut c.approx.a, a.a_hat.clone());
            set_matrix(&mut c.approx.b, a.b_hat.clone());
            set_matrix(&mut c.approx.q, a.q_hat.clone());
            set_matrix(&mut c.approx.r, a.r_hat.clone());
            set_matrix(&mut c.approx.sigma, a.sigma_hat.clone());
            set(&mut c.discount, a.discount);
            set(&mut c.ell, a.ell);
            if a.alpha2.is_some() {
                c.alpha2 = a.alpha2;
            }
        }
        Command::Ce(a) => {
            let s = &mut config.ce.system;
            set(&mut s.half_width, a.half_width);
            set(&mut s.max_action, a.max_action);
            set(&mut s.drift, a.drift);
            set(&mut s.discount, a.discount);
            set(&mut config.ce.ell, a.ell);
        }
        Command::RandomSuite {
            instances,
            duality_trials,
        } => {
            set(&mut config.suite.instances, *instances);
            set(&mut config.suite.duality_trials, *duality_trials);
        }
    }
    Ok((config, cli.command))
}

fn run(cli: Cli) -> Result<ExperimentOutput> {
    let (config, command) = build_config(cli)?;
    let out = match command {
        Command::Inventory { .. } => run_inventory(&config)?,
        Command::Lqr(_) => run_lqr(&config)?,
        Command::Ce(_) => run_ce(&config)?,
        Command::RandomSuite { .. } => run_suite(&config)?,
    };
    for line in &out.report {
        println!("{line}");
    }
    if !out.tables.is_empty() {
        let dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        for path in out.write(&dir, config.emit_plots)? {
            println!("wrote {}", path.display());
        }
    }
    if out.uncertified_only() {
        println!("no result could be certified (gamma*kappa >= 1)");
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => ExitCode::from(out.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
