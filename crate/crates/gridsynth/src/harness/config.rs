//! Experiment configuration, loadable from TOML or JSON with full defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ieee39::CaseBounds;
use super::HarnessError;

/// Which disturbance input matrix the synthesis stage uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BdMode {
    /// Take `B_d` from the discretized plant (available in simulation
    /// studies).
    FromModel,
    /// Identity restricted to the frequency rows — the fully data-driven
    /// stand-in when the plant is opaque.
    FrequencyRows,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Load this case file instead of generating one.
    pub case_file: Option<PathBuf>,
    pub seed: u64,
    /// Sampling period in seconds.
    pub ts: f64,
    /// Number of recorded transitions in the collected dataset.
    pub dataset_len: usize,
    pub probe_amplitude: f64,
    /// Stochastic disturbance amplitude during data collection.
    pub collect_noise_amplitude: f64,
    /// Multiplier on the recorded disturbance energy bound.
    pub d_bar_inflation: f64,
    /// Step disturbance magnitude (p.u.) and location (external bus label).
    pub step_magnitude: f64,
    pub step_bus: u32,
    pub step_at: usize,
    /// Stochastic disturbance amplitude during the experiment run.
    pub noise_amplitude: f64,
    pub activation_step: usize,
    pub horizon: usize,
    pub stochastic_horizon: usize,
    /// Trailing window for steady-state metrics.
    pub trailing_window: usize,
    /// Reserve the weight design believes each device has (uniform value
    /// when the per-device list is empty; internal inertia-bus order).
    pub reserves_believed: Vec<f64>,
    pub reserve_uniform: f64,
    /// Actual reserves bounding device output in saturated runs.
    pub reserves_actual: Vec<f64>,
    pub q_ia_scale: f64,
    pub q2_scale: f64,
    pub r_bar: f64,
    pub q_jitter: f64,
    /// Indices into the case line table whose flows are penalized.
    pub tie_lines: Vec<usize>,
    pub sweep_costs: Vec<f64>,
    pub big_m: f64,
    /// Prior norm bound on the dynamics; absent keeps the multiplier purely
    /// data-driven.
    pub psi_bar: Option<f64>,
    /// Strictness margin for all shifted cones.
    pub eps: f64,
    pub gamma_hi: f64,
    pub gamma_tol_rel: f64,
    pub bisect_max_iter: usize,
    pub bd_mode: BdMode,
    pub topo_solve_budget: usize,
    pub solver: String,
    pub solver_accuracy: f64,
    pub solver_max_iter: u32,
    pub case_bounds: CaseBounds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case_file: None,
            seed: 0,
            ts: 1.0,
            dataset_len: 400,
            probe_amplitude: 0.2,
            collect_noise_amplitude: 0.05,
            d_bar_inflation: 1.0,
            step_magnitude: -2.0,
            step_bus: 31,
            step_at: 10,
            noise_amplitude: 0.0,
            activation_step: 25,
            horizon: 300,
            stochastic_horizon: 500,
            trailing_window: 50,
            reserves_believed: Vec::new(),
            reserve_uniform: 1.0,
            reserves_actual: Vec::new(),
            q_ia_scale: 0.2,
            q2_scale: 0.8,
            r_bar: 1e3,
            q_jitter: 1e-9,
            tie_lines: Vec::new(),
            sweep_costs: vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.8],
            big_m: 1e8,
            psi_bar: None,
            eps: 1e-8,
            gamma_hi: 1e3,
            gamma_tol_rel: 1e-2,
            bisect_max_iter: 40,
            bd_mode: BdMode::FromModel,
            topo_solve_budget: 2000,
            solver: "clarabel".to_string(),
            solver_accuracy: 1e-8,
            solver_max_iter: 200,
            case_bounds: CaseBounds::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HarnessError::Serde(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Serde(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.activation_step < self.step_at {
            return Err(HarnessError::Config(format!(
                "controller activation (step {}) must not precede the disturbance (step {})",
                self.activation_step, self.step_at
            )));
        }
        if self.ts <= 0.0 {
            return Err(HarnessError::Config("sampling period must be positive".into()));
        }
        if self.dataset_len == 0 {
            return Err(HarnessError::Config("dataset length must be positive".into()));
        }
        if self.horizon <= self.activation_step {
            return Err(HarnessError::Config("horizon ends before controller activation".into()));
        }
        Ok(())
    }

    /// Believed reserves resolved to one value per device.
    pub fn believed_reserves(&self, n_devices: usize) -> Result<Vec<f64>, HarnessError> {
        resolve_reserves(&self.reserves_believed, self.reserve_uniform, n_devices)
    }

    /// Actual reserves resolved to one value per device (defaults to the
    /// believed ones).
    pub fn actual_reserves(&self, n_devices: usize) -> Result<Vec<f64>, HarnessError> {
        if self.reserves_actual.is_empty() {
            self.believed_reserves(n_devices)
        } else {
            resolve_reserves(&self.reserves_actual, self.reserve_uniform, n_devices)
        }
    }
}

fn resolve_reserves(
    listed: &[f64],
    uniform: f64,
    n_devices: usize,
) -> Result<Vec<f64>, HarnessError> {
    if listed.is_empty() {
        return Ok(vec![uniform; n_devices]);
    }
    if listed.len() != n_devices {
        return Err(HarnessError::Config(format!(
            "{} reserves listed for {n_devices} devices",
            listed.len()
        )));
    }
    Ok(listed.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn activation_before_disturbance_rejected() {
        let config = ExperimentConfig { activation_step: 5, step_at: 10, ..Default::default() };
        assert!(config.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let config = ExperimentConfig { seed: 9, probe_amplitude: 0.3, ..Default::default() };
        let text = toml::to_string(&config).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.seed, 9);
        assert_eq!(back.probe_amplitude, 0.3);
    }

    #[test]
    fn reserve_resolution() {
        let config = ExperimentConfig::default();
        assert_eq!(config.believed_reserves(3).unwrap(), vec![1.0, 1.0, 1.0]);
        let config = ExperimentConfig {
            reserves_believed: vec![1.0, 2.0],
            reserves_actual: vec![0.5, 0.5],
            ..Default::default()
        };
        assert_eq!(config.actual_reserves(2).unwrap(), vec![0.5, 0.5]);
        assert!(config.believed_reserves(3).is_err());
    }
}
