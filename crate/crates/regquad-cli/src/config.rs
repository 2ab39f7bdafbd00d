//! Experiment configuration: a JSON document describing one experiment,
//! the instance family it runs on, the solvers to compare, and the output
//! location. CLI flags can override the seed, output directory, and
//! iteration budget.

use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use regquad::instances::{InstanceKind, InstanceSpec};
use regquad::solvers::SolverConfig;

/// Which experiment family a config file describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    /// One instance, every listed solver, full traces plus envelopes.
    Single,
    /// One instance per `N`, each solver run exactly `N` iterations.
    Sweep,
    /// Beta-distributed eigenvalue spectrum, trace comparison.
    Beta,
    /// Residual landscape over an `L x s` parameter grid.
    Grid,
    /// Rank-one construction: gradient vs composite step, with the scalar
    /// recursion prediction.
    OneStep,
    /// Solvers wrapped in the resisting oracle; replay and distance report.
    Resist,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Single => "single",
            ExperimentId::Sweep => "sweep",
            ExperimentId::Beta => "beta",
            ExperimentId::Grid => "grid",
            ExperimentId::OneStep => "one-step",
            ExperimentId::Resist => "resist",
        }
    }
}

/// A solver selectable from configs and the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    /// Gradient descent with the theoretical step size.
    Gd,
    /// Adaptive gradient descent (backtracking smoothness estimate).
    Adaptive,
    /// Composite linearized method.
    Composite,
    /// Krylov subspace solver.
    Krylov,
    /// High-accuracy direct solver (secular equation).
    Exact,
}

impl MethodId {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Gd => "gd",
            MethodId::Adaptive => "adaptive",
            MethodId::Composite => "composite",
            MethodId::Krylov => "krylov",
            MethodId::Exact => "exact",
        }
    }
}

/// Solver knobs carried by the config file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub grad_tol: Option<f64>,
    pub m0: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iters: 1000, grad_tol: None, m0: 1.0 }
    }
}

impl SolverSettings {
    pub fn to_solver_config(self, record_trace: bool) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            m0: self.m0,
            record_trace,
            ..SolverConfig::default()
        }
    }
}

/// Value lists for sweep-style experiments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepRanges {
    pub n_values: Vec<usize>,
    pub l_values: Vec<f64>,
    pub s_values: Vec<f64>,
}

/// Shape parameters for the beta-spectrum experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment, as described by a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub solvers: Vec<MethodId>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub sweep: SweepRanges,
    #[serde(default)]
    pub beta: Option<BetaParams>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub max_iters: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
            self.instance.seed = Some(seed);
        }
        if let Some(dir) = &overrides.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(max_iters) = overrides.max_iters {
            self.solver.max_iters = max_iters;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.instance.validate().context("instance spec")?;
        match self.experiment {
            ExperimentId::Sweep => {
                if self.sweep.n_values.is_empty() {
                    bail!("sweep experiment needs sweep.n_values");
                }
                if self.solvers.is_empty() {
                    bail!("sweep experiment needs at least one solver");
                }
                if self.instance.kind == InstanceKind::MultiStep {
                    let cap = (self.instance.dim - 1) / 2;
                    if let Some(&worst) = self.sweep.n_values.iter().find(|&&n| n > cap) {
                        bail!(
                            "sweep N = {worst} exceeds the dimension budget: \
                             multi-step instances need N <= (dim-1)/2 = {cap}"
                        );
                    }
                }
                if self.sweep.n_values.iter().any(|&n| n == 0) {
                    bail!("sweep N values must be >= 1");
                }
            }
            ExperimentId::Grid => {
                if self.sweep.l_values.is_empty() || self.sweep.s_values.is_empty() {
                    bail!("grid experiment needs sweep.l_values and sweep.s_values");
                }
                if self.solvers.is_empty() {
                    bail!("grid experiment needs at least one solver");
                }
                self.instance.budget().map_err(anyhow::Error::from).context(
                    "grid experiment measures the residual at iteration N; set instance.N",
                )?;
            }
            ExperimentId::Beta => {
                if self.beta.is_none() {
                    bail!("beta experiment needs the beta: {{alpha, beta}} parameters");
                }
                if self.solvers.is_empty() {
                    bail!("beta experiment needs at least one solver");
                }
            }
            ExperimentId::Resist => {
                if self.instance.kind != InstanceKind::MultiStep {
                    bail!("resist experiment wraps multi-step instances");
                }
                if self.solvers.is_empty() {
                    bail!("resist experiment needs at least one solver");
                }
                let n = self.instance.budget().map_err(anyhow::Error::from)?;
                let cap = (self.instance.dim - 1) / 2;
                if n > cap {
                    bail!("resist N = {n} exceeds (dim-1)/2 = {cap}");
                }
            }
            ExperimentId::OneStep => {
                if self.instance.kind != InstanceKind::OneStep {
                    bail!("one-step experiment needs a one-step instance spec");
                }
                self.instance.budget().map_err(anyhow::Error::from).context(
                    "one-step experiment runs N iterations; set instance.N",
                )?;
            }
            ExperimentId::Single => {
                if self.solvers.is_empty() {
                    bail!("single experiment needs at least one solver");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_sweep_json() -> serde_json::Value {
        serde_json::json!({
            "experiment": "sweep",
            "instance": {
                "kind": "multi-step",
                "dim": 41, "p": 3.0, "s": 1.0, "mu": 0.0, "L": 1.0,
                "r": "auto", "N": 20, "pi_mode": "heuristic"
            },
            "solvers": ["krylov"],
            "sweep": {"n_values": [5, 10, 20]}
        })
    }

    #[test]
    fn sweep_config_parses_and_validates() {
        let config: ExperimentConfig = serde_json::from_value(minimal_sweep_json()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.experiment, ExperimentId::Sweep);
        assert_eq!(config.out_dir, PathBuf::from("out"));
        assert_eq!(config.solver.max_iters, 1000);
    }

    #[test]
    fn oversized_sweep_budget_is_rejected_before_running() {
        let mut json = minimal_sweep_json();
        json["sweep"]["n_values"] = serde_json::json!([5, 21]);
        let config: ExperimentConfig = serde_json::from_value(json).unwrap();
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("N <= (dim-1)/2"), "unexpected message: {err}");
    }

    #[test]
    fn overrides_replace_seed_dir_and_budget() {
        let mut config: ExperimentConfig = serde_json::from_value(minimal_sweep_json()).unwrap();
        config.apply(&Overrides {
            seed: Some(7),
            out_dir: Some(PathBuf::from("elsewhere")),
            max_iters: Some(3),
        });
        assert_eq!(config.seed, Some(7));
        assert_eq!(config.instance.seed, Some(7));
        assert_eq!(config.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(config.solver.max_iters, 3);
    }
}
