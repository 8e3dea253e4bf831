//! Experiment configuration, orchestration and output.
//!
//! A run produces [`ExperimentOutput`]: CSV tables (the contract), optional
//! SVG plots, and a short text report. Nothing touches the filesystem until
//! [`ExperimentOutput::write`].

pub mod csv;
mod inventory;
pub mod plot;
mod systems;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::inventory::InventoryParams;
use crate::ipm::AdditiveNoiseSystem;
use crate::mdp::SolveOptions;
use crate::weighting::AssumptionStatus;

pub use csv::CsvTable;
pub use inventory::run_inventory;
pub use systems::{parse_matrix, run_ce, run_lqr, run_suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InventoryExperiment {
    /// Weighted against sup-norm envelope at a single weight.
    ImBound,
    /// Envelope over a family of weight scales.
    WeightFamily,
    /// Envelopes under different cost transforms.
    Alpha,
    /// Envelopes certified by whole-model stability.
    ModelStability,
}

impl InventoryExperiment {
    pub const ALL: [InventoryExperiment; 4] = [
        InventoryExperiment::ImBound,
        InventoryExperiment::WeightFamily,
        InventoryExperiment::Alpha,
        InventoryExperiment::ModelStability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InventoryExperiment::ImBound => "fig_im_bound",
            InventoryExperiment::WeightFamily => "fig_weight_family",
            InventoryExperiment::Alpha => "fig_alpha",
            InventoryExperiment::ModelStability => "fig_model_stability",
        }
    }
}

impl FromStr for InventoryExperiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|e| e.name()).collect();
                Error::Config(format!("unknown inventory experiment `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

impl<'de> Deserialize<'de> for InventoryExperiment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> Result<SolveOptions> {
        SolveOptions::new(self.tol, self.max_iter)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InventoryConfig {
    pub experiment: InventoryExperiment,
    pub truth: InventoryParams,
    pub approx: InventoryParams,
    /// Weight scale for the single-weight experiments.
    pub ell: f64,
    /// Weight scales for the family experiments; each has its own default grid.
    pub ell_values: Option<Vec<f64>>,
    /// `[α₁, α₂]` pairs.
    pub transforms: Vec<[f64; 2]>,
    /// Stock range of the zoomed plots.
    pub zoom: [i64; 2],
}

impl Default for InventoryConfig {
    fn default() -> Self {
        Self {
            experiment: InventoryExperiment::ImBound,
            truth: InventoryParams::default_truth(),
            approx: InventoryParams::default_approx(),
            ell: 1.5e-2,
            ell_values: None,
            transforms: vec![[1.0, 0.0], [0.98, 0.8]],
            zoom: [-10, 10],
        }
    }
}

/// A matrix given either as rows or inline as `"1 0; 0 1"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Inline(String),
}

impl MatrixSpec {
    pub fn rows(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            MatrixSpec::Rows(r) => Ok(r.clone()),
            MatrixSpec::Inline(s) => parse_matrix(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrMatrices {
    pub a: Option<MatrixSpec>,
    pub b: Option<MatrixSpec>,
    pub q: Option<MatrixSpec>,
    pub r: Option<MatrixSpec>,
    pub sigma: Option<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrConfig {
    pub discount: f64,
    /// Weight `w(s) = 1 + ell·sᵀs`.
    pub ell: f64,
    /// Cost offset; `None` picks the one that cancels the noise term.
    pub alpha2: Option<f64>,
    /// The true model. `A` and `B` are required; `Q`, `R` default to the
    /// identity and the noise covariance to zero.
    pub a: Option<MatrixSpec>,
    pub b: Option<MatrixSpec>,
    pub q: Option<MatrixSpec>,
    pub r: Option<MatrixSpec>,
    pub sigma: Option<MatrixSpec>,
    /// Overrides for the approximate model; missing entries copy the truth.
    pub approx: LqrMatrices,
}

impl LqrConfig {
    pub fn truth(&self) -> LqrMatrices {
        LqrMatrices {
            a: self.a.clone(),
            b: self.b.clone(),
            q: self.q.clone(),
            r: self.r.clone(),
            sigma: self.sigma.clone(),
        }
    }
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            discount: 0.9,
            ell: 1.0,
            alpha2: None,
            a: None,
            b: None,
            q: None,
            r: None,
            sigma: None,
            approx: LqrMatrices::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CeConfig {
    pub system: AdditiveNoiseSystem,
    /// Weight `w(s) = 1 + ell·|s|`.
    pub ell: f64,
}

impl Default for CeConfig {
    fn default() -> Self {
        Self {
            system: AdditiveNoiseSystem::default(),
            ell: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub instances: usize,
    pub duality_trials: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            duality_trials: 1000,
        }
    }
}

/// Everything a run can be configured with. Every field has a default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub out_dir: Option<PathBuf>,
    pub emit_plots: bool,
    /// Solve the true model too (needed for `V*` columns and realized gaps).
    pub oracle: Option<bool>,
    pub seed: Option<u64>,
    pub solver: SolverConfig,
    pub inventory: InventoryConfig,
    pub lqr: LqrConfig,
    pub ce: CeConfig,
    pub suite: SuiteConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn oracle(&self) -> bool {
        self.oracle.unwrap_or(true)
    }
}

/// Tables, plots and a text summary of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub name: String,
    pub tables: Vec<(String, CsvTable)>,
    pub plots: Vec<(String, String)>,
    pub report: Vec<String>,
    /// Status of each headline result.
    pub statuses: Vec<AssumptionStatus>,
    /// A check inside the run failed (soundness battery only).
    pub failed: bool,
}

impl ExperimentOutput {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            tables: Vec::new(),
            plots: Vec::new(),
            report: Vec::new(),
            statuses: Vec::new(),
            failed: false,
        }
    }

    pub fn table(&self, file: &str) -> Option<&CsvTable> {
        self.tables.iter().find(|(f, _)| f == file).map(|(_, t)| t)
    }

    /// True when there were headline results and none of them could be certified.
    pub fn uncertified_only(&self) -> bool {
        !self.statuses.is_empty() && self.statuses.iter().all(|s| *s == AssumptionStatus::NotCertified)
    }

    /// `0` on success, `2` when nothing could be certified, `1` when a check failed.
    pub fn exit_code(&self) -> i32 {
        if self.failed {
            1
        } else if self.uncertified_only() {
            2
        } else {
            0
        }
    }

    /// Writes tables (and plots when asked) into `dir`, returning the paths.
    pub fn write(&self, dir: &Path, plots: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (file, table) in &self.tables {
            let path = dir.join(file);
            table.write(&path)?;
            written.push(path);
        }
        if plots {
            for (file, svg) in &self.plots {
                let path = dir.join(file);
                std::fs::write(&path, svg)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Wraps an error with the experiment it came from.
fn tag<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Experiment {
        experiment: name.to_string(),
        source: Box::new(e),
    })
}

/// Short stable text for a weight scale or transform component in file and
/// column names.
fn num_label(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('e') {
        format!("{x:e}")
    } else {
        s
    }
}
