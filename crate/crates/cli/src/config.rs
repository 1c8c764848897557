//! Experiment configuration: TOML key = value with sections, strict about
//! unknown keys (a typo is an error, never silently ignored).

use lorentz_core::kernel2d::InitialLaw;
use lorentz_core::scattering::{ScatterModel, ThetaTable};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub billiard: BilliardSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub kernel_eval: KernelEvalSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 means all available cores. Results never depend
    /// on this value.
    #[serde(default)]
    pub threads: usize,
}

fn default_seed() -> u64 {
    lorentz_core::verify::DEFAULT_SEED
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: default_seed(), out_dir: None, threads: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    /// `hard-sphere` or `table:<csv path>`.
    #[serde(default = "default_scatterer")]
    pub scatterer: String,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_dimension() -> usize {
    2
}
fn default_scatterer() -> String {
    "hard-sphere".into()
}
fn default_gamma() -> f64 {
    1.5
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            dimension: default_dimension(),
            scatterer: default_scatterer(),
            gamma: default_gamma(),
        }
    }
}

impl ModelSection {
    pub fn scatter_model(&self, relative_to: Option<&Path>) -> Result<ScatterModel, String> {
        if self.scatterer == "hard-sphere" {
            return Ok(ScatterModel::HardSphere);
        }
        if let Some(path) = self.scatterer.strip_prefix("table:") {
            let mut p = PathBuf::from(path);
            if p.is_relative() {
                if let Some(base) = relative_to.and_then(|c| c.parent()) {
                    p = base.join(p);
                }
            }
            return ThetaTable::from_csv(&p)
                .map(ScatterModel::Table)
                .map_err(|e| format!("loading scatterer table: {e}"));
        }
        Err(format!("unknown scatterer {:?} (use hard-sphere or table:<path>)", self.scatterer))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilliardSection {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_l_max")]
    pub l_max: f64,
    #[serde(default = "default_eps_graze")]
    pub eps_graze: f64,
}

fn default_radius() -> f64 {
    1e-3
}
fn default_l_max() -> f64 {
    lorentz_core::billiard::DEFAULT_L_MAX
}
fn default_eps_graze() -> f64 {
    lorentz_core::billiard::DEFAULT_EPS_GRAZE
}

impl Default for BilliardSection {
    fn default() -> Self {
        BilliardSection {
            radius: default_radius(),
            l_max: default_l_max(),
            eps_graze: default_eps_graze(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_trajectories")]
    pub trajectories: u64,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<u64>,
    /// `stationary-discrete`, `stationary-continuous`, or `custom:<w>`.
    #[serde(default = "default_initial")]
    pub initial: String,
    /// How many member trajectories to export as CSV.
    #[serde(default = "default_dump")]
    pub dump_trajectories: u64,
}

fn default_trajectories() -> u64 {
    1000
}
fn default_steps() -> u64 {
    10_000
}
fn default_checkpoints() -> Vec<u64> {
    vec![100, 1_000, 10_000]
}
fn default_initial() -> String {
    "stationary-discrete".into()
}
fn default_dump() -> u64 {
    1
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            trajectories: default_trajectories(),
            steps: default_steps(),
            checkpoints: default_checkpoints(),
            initial: default_initial(),
            dump_trajectories: default_dump(),
        }
    }
}

impl EnsembleSection {
    pub fn initial_law(&self) -> Result<InitialLaw, String> {
        self.initial.parse().map_err(|e| format!("{e}"))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.trajectories == 0 {
            return Err("ensemble.trajectories must be >= 1".into());
        }
        if self.steps == 0 {
            return Err("ensemble.steps must be >= 1".into());
        }
        if self.checkpoints.iter().any(|&c| c == 0 || c > self.steps) {
            return Err("ensemble.checkpoints must lie in 1..=steps".into());
        }
        self.initial_law()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEvalSection {
    #[serde(default = "default_w_grid")]
    pub w: Vec<f64>,
    #[serde(default = "default_z_grid")]
    pub z: Vec<f64>,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_x_points")]
    pub x_points: usize,
}

fn default_w_grid() -> Vec<f64> {
    vec![-0.8, -0.4, 0.0, 0.4, 0.8]
}
fn default_z_grid() -> Vec<f64> {
    vec![-0.8, -0.4, 0.0, 0.4, 0.8]
}
fn default_x_max() -> f64 {
    2.0
}
fn default_x_points() -> usize {
    200
}

impl Default for KernelEvalSection {
    fn default() -> Self {
        KernelEvalSection {
            w: default_w_grid(),
            z: default_z_grid(),
            x_max: default_x_max(),
            x_points: default_x_points(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    #[serde(default = "default_grids")]
    pub grids: Vec<usize>,
}

fn default_grids() -> Vec<usize> {
    vec![200, 400]
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection { grids: default_grids() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// `full` (the accepted configuration) or `quick` (3 orders of
    /// magnitude fewer samples; statistical gates may then fail).
    #[serde(default = "default_scale")]
    pub scale: String,
}

fn default_scale() -> String {
    "full".into()
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { scale: default_scale() }
    }
}

/// Loads a config, or the builtin defaults when `path` is None.
pub fn load(path: Option<&Path>) -> Result<(ExperimentConfig, Vec<u8>), String> {
    match path {
        None => Ok((ExperimentConfig::default(), Vec::new())),
        Some(p) => {
            let bytes =
                std::fs::read(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| format!("{} is not UTF-8", p.display()))?;
            let cfg: ExperimentConfig =
                toml::from_str(text).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok((cfg, bytes))
        }
    }
}
