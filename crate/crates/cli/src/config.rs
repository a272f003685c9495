//! Run configuration: a single JSON document shared by every subcommand.
//!
//! The file is strict — unknown keys anywhere are rejected so that typos
//! surface as configuration errors instead of silently falling back to
//! defaults.  Every section is optional and fills in documented defaults,
//! which keeps minimal configs short:
//!
//! ```json
//! { "model": { "name": "two_two" } }
//! ```
//!
//! [`RunConfig::validate`] checks the numeric ranges that the solvers
//! assume (resolution at least 2, damping in (0, 1], positive horizon)
//! and reports the offending field by its JSON path.

use mmfg_core::model::{load_builtin, ModelSpec};
use mmfg_core::Result as CoreResult;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Model selection: builtin name plus numeric parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Builtin registry name (`two_two`, `cyber4`, `decoupled`).
    pub name: String,
    /// Parameter overrides merged into the builtin defaults.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

/// Discretization of the simplex and of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Simplex resolution: measures live on the lattice with denominator `K`.
    #[serde(rename = "K", default = "default_k")]
    pub k: u32,
    /// Uniform time steps; `None` lets each solver pick its own default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_steps: Option<usize>,
}

/// Fixed-point iteration controls for the equilibrium solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Damping weight on the fresh best response, in (0, 1].
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Exploitability threshold declaring convergence.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Iteration cap; hitting it without converging exits with code 3.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

/// Monte Carlo controls shared by `simulate` and rate validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// Number of independent sample paths.
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Root seed; equal seeds reproduce byte-identical outputs.
    #[serde(default)]
    pub seed: u64,
    /// How many paths to keep time series for in `paths.csv`.
    #[serde(default = "default_record_paths")]
    pub record_paths: usize,
}

/// Which convergence study to run and against what reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    /// Population sizes to compare against the reference solve.
    #[serde(rename = "N_list", default = "default_n_list")]
    pub n_list: Vec<u32>,
    /// Resolution of the reference solve; must be at least `max(N_list)`.
    #[serde(rename = "K_ref", default = "default_k_ref")]
    pub k_ref: u32,
    /// Compare costs under fixed policies or optimized values.
    #[serde(default)]
    pub kind: StudyKind,
}

/// Study flavor: fixed-policy costs or optimal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// Fixed-policy expected costs.
    #[default]
    Cost,
    /// Optimal value functions.
    Value,
}

/// Top-level run configuration, one JSON object per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model selection (required).
    pub model: ModelSection,
    /// Time horizon override; defaults to the builtin's own horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Discretization controls.
    #[serde(default)]
    pub grid: GridSection,
    /// Equilibrium iteration controls.
    #[serde(default)]
    pub solver: SolverSection,
    /// Monte Carlo controls.
    #[serde(default)]
    pub simulation: SimulationSection,
    /// Convergence study controls.
    #[serde(default)]
    pub study: StudySection,
    /// Output directory; overridden by `--out` and the `MMFG_OUT` variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_k() -> u32 {
    16
}
fn default_damping() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    100
}
fn default_n_paths() -> usize {
    1000
}
fn default_record_paths() -> usize {
    10
}
fn default_n_list() -> Vec<u32> {
    vec![4, 8, 16, 32]
}
fn default_k_ref() -> u32 {
    128
}

impl Default for GridSection {
    fn default() -> Self {
        Self { k: default_k(), time_steps: None }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            damping: default_damping(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            seed: 0,
            record_paths: default_record_paths(),
        }
    }
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            n_list: default_n_list(),
            k_ref: default_k_ref(),
            kind: StudyKind::default(),
        }
    }
}

impl RunConfig {
    /// Read, parse, and validate a configuration file.
    pub fn load(path: &Path) -> std::result::Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| format!("cannot parse {}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// Check numeric ranges, naming the offending field on failure.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.model.name.is_empty() {
            return Err("model.name must not be empty".into());
        }
        if let Some(t) = self.horizon {
            if !t.is_finite() || t <= 0.0 {
                return Err(format!("horizon must be positive and finite, got {t}"));
            }
        }
        if self.grid.k < 2 {
            return Err(format!("grid.K must be at least 2, got {}", self.grid.k));
        }
        if let Some(steps) = self.grid.time_steps {
            if steps == 0 {
                return Err("grid.time_steps must be positive".into());
            }
        }
        if !(self.solver.damping > 0.0 && self.solver.damping <= 1.0) {
            return Err(format!(
                "solver.damping must lie in (0, 1], got {}",
                self.solver.damping
            ));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) {
            return Err(format!(
                "solver.tol must be positive and finite, got {}",
                self.solver.tol
            ));
        }
        if self.simulation.n_paths == 0 {
            return Err("simulation.n_paths must be at least 1".into());
        }
        if self.study.n_list.is_empty() {
            return Err("study.N_list must not be empty".into());
        }
        Ok(())
    }

    /// Instantiate the configured model, applying the horizon override.
    pub fn build_model(&self) -> CoreResult<ModelSpec> {
        let mut params = self.model.params.clone();
        if let Some(t) = self.horizon {
            params.insert("horizon".to_string(), t);
        }
        load_builtin(&self.model.name, &params)
    }
}
