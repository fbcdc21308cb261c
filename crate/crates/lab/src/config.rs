//! Experiment and simulation configs, read from single JSON files.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use flowldp_core::arratia::CrossingMode;
use flowldp_core::flow_sim::SimMode;
use flowldp_core::kernels::KernelSpec;
use flowldp_core::metrics::WeightedNorm;
use flowldp_core::pathmaps::{HittingSet, PiecewiseLinearPath};
use serde::{Deserialize, Serialize};

/// Smallest replica count accepted for a rare-event sweep.
pub const MIN_REPLICAS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Simulator {
    /// n-point motion of the smoothly correlated flow.
    Smooth,
    /// Coalescing Brownian motions, run as `x(u, ε t)`.
    Arratia,
    /// `d` independent Brownian coordinates of variance `ε t`; `starts` is
    /// the starting point in `R^d`.
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BallNorm {
    #[default]
    Sup,
    /// Gauss–Hermite weighted norm; the starts must be the quadrature nodes.
    Weighted,
}

/// Centre of a ball event: one column per particle on `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentrePath {
    pub times: Vec<f64>,
    /// `values[i][j]`: particle `i` at `times[j]`.
    pub values: Vec<Vec<f64>>,
}

impl CentrePath {
    pub fn to_path(&self) -> Result<PiecewiseLinearPath<f64>> {
        Ok(PiecewiseLinearPath::from_rows(self.times.clone(), &self.values)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// `x(u_0, 1) ≥ c` for a single particle.
    EndpointAtLeast(f64),
    /// Every particle in one cluster by `t_c`.
    CoalesceBy(f64),
    /// The particle vector enters `set` by `t_c`.
    HitSetBy { set: HittingSet<f64>, t_c: f64 },
    /// `‖x - h‖ ≤ δ` in the chosen norm.
    BallAroundPath {
        h: CentrePath,
        delta: f64,
        #[serde(default)]
        norm: BallNorm,
    },
}

fn default_prediction_steps() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub simulator: Simulator,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub starts: Vec<f64>,
    pub event: Event,
    pub epsilon_list: Vec<f64>,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub crossing_mode: CrossingMode,
    /// Grid size for the variational prediction.
    #[serde(default = "default_prediction_steps")]
    pub prediction_steps: usize,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.name.is_empty(), "name must not be empty");
        ensure!(!self.starts.is_empty(), "starts must not be empty");
        ensure!(self.starts.iter().all(|s| s.is_finite()), "starts must be finite");
        ensure!(!self.epsilon_list.is_empty(), "epsilon_list must not be empty");
        ensure!(
            self.epsilon_list.iter().all(|&e| e > 0.0 && e <= 1.0),
            "epsilon_list values must lie in (0, 1]"
        );
        ensure!(
            self.epsilon_list.windows(2).all(|w| w[1] < w[0]),
            "epsilon_list must be strictly decreasing"
        );
        ensure!(self.steps >= 1, "steps must be at least 1");
        ensure!(
            self.replicas >= MIN_REPLICAS,
            "replicas must be at least {MIN_REPLICAS}, got {}",
            self.replicas
        );
        ensure!(self.prediction_steps >= 1, "prediction_steps must be at least 1");
        if self.simulator != Simulator::Stopped {
            ensure!(
                self.starts.windows(2).all(|w| w[1] > w[0]),
                "starts must be strictly increasing"
            );
        }
        if self.simulator == Simulator::Smooth {
            self.kernel.build::<f64>()?;
            if let SimMode::Frozen(m) = self.mode {
                ensure!(m >= 1 && self.steps % m == 0, "frozen block count {m} must divide steps");
            }
        }
        let n = self.starts.len();
        match &self.event {
            Event::EndpointAtLeast(c) => {
                ensure!(c.is_finite(), "endpoint level must be finite");
                ensure!(n == 1, "endpoint_at_least needs exactly one particle, got {n}");
            }
            Event::CoalesceBy(t_c) => {
                ensure!(
                    self.simulator == Simulator::Arratia,
                    "coalesce_by is only evaluable on the arratia simulator"
                );
                ensure!(*t_c > 0.0 && *t_c <= 1.0, "t_c must lie in (0, 1]");
                ensure!(n >= 2, "coalesce_by needs at least two particles");
            }
            Event::HitSetBy { set, t_c } => {
                set.validate()?;
                ensure!(set.dim() == n, "hitting set has dimension {} but there are {n} particles", set.dim());
                ensure!(*t_c > 0.0 && *t_c <= 1.0, "t_c must lie in (0, 1]");
            }
            Event::BallAroundPath { h, delta, norm } => {
                ensure!(*delta > 0.0, "delta must be positive");
                ensure!(h.values.len() == n, "ball centre has {} rows but there are {n} particles", h.values.len());
                h.to_path()?;
                if *norm == BallNorm::Weighted {
                    let nodes = WeightedNorm::<f64>::new(n)?;
                    let matches = nodes.nodes().iter().zip(&self.starts).all(|(a, b)| (a - b).abs() <= 1e-9);
                    if !matches {
                        bail!("weighted ball events need the starts at the {n} Gauss–Hermite nodes");
                    }
                }
            }
        }
        Ok(())
    }
}

fn default_measure_times() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

/// Config for `simulate-smooth` and `simulate-arratia`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(default)]
    pub kernel: KernelSpec,
    pub starts: Vec<f64>,
    pub epsilon: f64,
    pub steps: usize,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub crossing_mode: CrossingMode,
    pub replicas: usize,
    pub seed: u64,
    /// Times at which `simulate-arratia` records `μ_t`.
    #[serde(default = "default_measure_times")]
    pub measure_times: Vec<f64>,
}

impl SimulationConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        ensure!(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0, "epsilon must lie in (0, 1]");
        ensure!(cfg.replicas >= 1, "replicas must be at least 1");
        ensure!(
            cfg.measure_times.iter().all(|t| (0.0..=1.0).contains(t)),
            "measure_times must lie in [0, 1]"
        );
        Ok(cfg)
    }
}

/// Config for `gamma-estimate`: `2^level` particles at `k / 2^level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaConfig {
    pub level: u32,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub crossing_mode: CrossingMode,
    #[serde(default = "one")]
    pub epsilon: f64,
}

fn one() -> f64 {
    1.0
}

impl GammaConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        ensure!((1..=20).contains(&cfg.level), "level must lie in 1..=20");
        ensure!(cfg.replicas >= 1, "replicas must be at least 1");
        ensure!(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0, "epsilon must lie in (0, 1]");
        Ok(cfg)
    }

    pub fn starts(&self) -> Vec<f64> {
        let n = 1usize << self.level;
        (0..n).map(|k| k as f64 / n as f64).collect()
    }
}
