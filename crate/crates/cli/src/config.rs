//! Experiment configuration (TOML, unknown keys rejected).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub problem: ProblemConfig,
    pub step: StepConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub probes: ProbeConfig,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// `sgm`, `psgm`, `prox_sgm` or `resolvent_sgm`.
    pub method: String,
    pub iterations: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Wgc,
    Sgc,
    Necessary,
    Rate,
    Floor,
    InverseT,
}

impl Check {
    pub fn as_str(self) -> &'static str {
        match self {
            Check::Wgc => "wgc",
            Check::Sgc => "sgc",
            Check::Necessary => "necessary",
            Check::Rate => "rate",
            Check::Floor => "floor",
            Check::InverseT => "inverse_t",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Kaczmarz {
        #[serde(default = "default_rows")]
        rows: usize,
        #[serde(default = "default_cols")]
        cols: usize,
        #[serde(default = "default_problem_seed")]
        seed: u64,
        /// Standard deviation of right-hand-side noise; 0 gives a consistent system.
        #[serde(default)]
        noise: f64,
    },
    TwoPoint,
    QuadraticL1 {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_ridge")]
        ridge: f64,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_sparsity")]
        sparsity: f64,
        #[serde(default = "default_problem_seed")]
        seed: u64,
    },
    CustomMatrixFile {
        path: PathBuf,
    },
}

fn default_rows() -> usize {
    20
}
fn default_cols() -> usize {
    5
}
fn default_problem_seed() -> u64 {
    42
}
fn default_dim() -> usize {
    10
}
fn default_components() -> usize {
    20
}
fn default_ridge() -> f64 {
    0.1
}
fn default_noise() -> f64 {
    0.5
}
fn default_sparsity() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepConfig {
    Constant {
        gamma: f64,
    },
    /// Largest-contraction constant step for the method.
    Recommend,
    /// `γ_t = c/(1 + t)`; `c` defaults to `2/μ`.
    InverseT {
        #[serde(default)]
        c: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    #[default]
    None,
    L1 {
        weight: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Hyperplane {
        normal: Vec<f64>,
        offset: f64,
    },
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    /// Linear monotone operator given by its rows.
    Operator {
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_probe_count")]
    pub count: usize,
    #[serde(default = "default_probe_scales")]
    pub scales: Vec<f64>,
}

fn default_probe_count() -> usize {
    32
}
fn default_probe_scales() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: default_probe_count(),
            scales: default_probe_scales(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: &str| Err(CliError::Config(format!("`{key}`: {msg}")));
        let e = &self.experiment;
        if e.name.is_empty() || e.name.contains(['/', '\\']) || e.name == "." || e.name == ".." {
            return bad("experiment.name", "must be a nonempty file name");
        }
        if e.iterations == 0 {
            return bad("experiment.iterations", "must be at least 1");
        }
        if e.replications == 0 {
            return bad("experiment.replications", "must be at least 1");
        }
        if e.method.parse::<constep::solvers::Method>().is_err() {
            return bad(
                "experiment.method",
                "expected sgm, psgm, prox_sgm or resolvent_sgm",
            );
        }
        let mut seen = e.checks.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != e.checks.len() {
            return bad("experiment.checks", "each check may be listed once");
        }
        match self.step {
            StepConfig::Constant { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                return bad("step.gamma", "must be positive and finite");
            }
            StepConfig::InverseT { c: Some(c) } if !(c > 0.0 && c.is_finite()) => {
                return bad("step.c", "must be positive and finite");
            }
            _ => {}
        }
        if self.probes.count == 0 || self.probes.scales.is_empty() {
            return bad("probes", "need at least one point and one scale");
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}
