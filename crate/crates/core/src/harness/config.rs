//! Run configuration: a flat TOML key-value file; unknown keys are errors.
//!
//! Every key is optional; missing values take the per-problem defaults in
//! [`ProblemSpec::from_config`](super::problems::ProblemSpec::from_config).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw configuration as read from disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// `sine_wave_streaming`, `gaussian_diffusion`, `streaming_doppler_shift`,
    /// `transparent_shock`, `transparent_vortex` or `solver_bench`.
    pub problem: String,
    /// Polynomial degree `k` (1 or 2).
    pub degree: Option<usize>,
    /// Spatial elements in `x¹`.
    pub nx: Option<usize>,
    /// Spatial elements in `x²` (vortex only).
    pub ny: Option<usize>,
    /// Energy elements (ignored on monochromatic problems).
    pub ne: Option<usize>,
    pub v_max: Option<f64>,
    /// Shock width parameter `H`.
    pub shock_width: Option<f64>,
    /// `approximate` (default) or `exact`.
    pub closure: Option<String>,
    pub energy_limiter: Option<bool>,
    pub t_end: Option<f64>,
    /// `theorem1` or `benchmark03`.
    pub cfl_mode: Option<String>,
    /// Multiplier on the time step of the chosen mode.
    pub cfl_factor: Option<f64>,
    /// Safety factor of the realizability time step.
    pub cfl_safety: Option<f64>,
    /// `fe`, `ssprk2`, `ssprk3` or `fbe`.
    pub scheme: Option<String>,
    /// `anderson` (default) or `picard`.
    pub solver_engine: Option<String>,
    pub anderson_depth: Option<usize>,
    pub solver_tol: Option<f64>,
    pub solver_max_iter: Option<usize>,
    /// Balance rows are written every this many steps (and at the end).
    pub output_interval: Option<usize>,
    /// Hard cap on the number of steps (debugging aid).
    pub max_steps: Option<usize>,
    /// Spectrum probe positions `x¹` (the vortex probes along `x² = 0`).
    pub probes: Option<Vec<f64>>,
    pub output_dir: Option<String>,
    pub seed: Option<u64>,
    // Convergence study.
    pub n_list: Option<Vec<usize>>,
    pub degrees: Option<Vec<usize>>,
    pub reference_n: Option<usize>,
    /// Time at which convergence errors are measured.
    pub t_error: Option<f64>,
    // Solver bench.
    pub bench_v: Option<Vec<f64>>,
    pub bench_h: Option<Vec<f64>>,
    pub trials: Option<usize>,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::from_toml_str("problem = \"sine_wave_streaming\"\nbogus = 1\n");
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn round_trip_keeps_values() {
        let cfg = Config::from_toml_str("problem = \"transparent_shock\"\nnx = 40\nshock_width = 0.001\n").unwrap();
        assert_eq!(cfg.nx, Some(40));
        let again = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }
}
