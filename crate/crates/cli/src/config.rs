//! Run configuration: a single TOML file with `key = value` entries.
//!
//! Unknown keys are rejected. `print-config` emits every field explicitly, so
//! the printed form reparses to an identical configuration.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use hawkes_ei::{FeedbackSpec, InhibitionSpec, KernelSpec, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub chaos: ChaosSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Volterra,
    OdeReduction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Network size N.
    pub n: u32,
    /// Simulation / solving horizon T.
    pub horizon: f64,
    /// Solver grid step.
    pub dt: f64,
    pub seed: u64,
    /// Fraction of the horizon discarded before long-time summaries.
    pub burn_in: f64,
    pub out_dir: PathBuf,
    /// Explosion guard for the simulator.
    pub event_cap: u64,
    /// Relative amplitude above which the tail counts as oscillating.
    pub osc_threshold: f64,
    /// Mean-field solver selection.
    pub method: SolverMethod,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            n: 1000,
            horizon: 50.0,
            dt: 0.01,
            seed: 1,
            burn_in: 0.5,
            out_dir: PathBuf::from("out"),
            event_cap: 100_000_000,
            osc_threshold: 0.05,
            method: SolverMethod::Volterra,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosSection {
    pub pop_sizes: Vec<u32>,
    pub replicas: u32,
}

impl Default for ChaosSection {
    fn default() -> Self {
        ChaosSection { pop_sizes: vec![250, 1000, 4000], replicas: 20 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSpec {
                alpha: 0.8,
                mu_a: 1.0,
                mu_b: 1.0,
                h1: KernelSpec::Exponential { theta: 0.5 },
                h2: KernelSpec::Exponential { theta: 1.0 },
                h3: KernelSpec::Exponential { theta: 1.0 },
                h4: KernelSpec::Exponential { theta: 0.5 },
                phi_ba: InhibitionSpec::Polynomial { tau: 1.0, beta: 1.0 },
                phi_ab: FeedbackSpec::Identity,
            },
            run: RunSection::default(),
            chaos: ChaosSection::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.model.validate().map_err(|e| e.to_string())?;
        if cfg.run.horizon.is_nan() || cfg.run.horizon <= 0.0 {
            return Err(format!("run.horizon must be positive, got {}", cfg.run.horizon));
        }
        if cfg.run.dt.is_nan() || cfg.run.dt <= 0.0 {
            return Err(format!("run.dt must be positive, got {}", cfg.run.dt));
        }
        if !(0.0..=0.9).contains(&cfg.run.burn_in) {
            return Err(format!("run.burn_in must lie in [0, 0.9], got {}", cfg.run.burn_in));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }
}
