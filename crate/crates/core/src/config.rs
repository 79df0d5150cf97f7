//! Experiment configuration: flat TOML with a strict schema.
//!
//! Every key is optional in the file. Missing keys take the defaults for the
//! chosen model and backend, and the resolved configuration (all keys
//! explicit) is what gets written next to the outputs and hashed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::models::{Model, ModelKind, ParameterVector};
use crate::sampler::{ProposalConfig, ProposalKind};
use crate::target::Backend;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Kalman,
    Particle,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Kalman => "kalman",
            BackendKind::Particle => "particle",
        })
    }
}

/// File layout before defaults are applied.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<ModelKind>,
    backend: Option<BackendKind>,
    particles: Option<usize>,
    lag: Option<usize>,
    proposal: Option<String>,
    step_pmh0: Option<f64>,
    step_pmh1: Option<f64>,
    step_qmh: Option<f64>,
    memory: Option<usize>,
    delta: Option<f64>,
    warmup_step: Option<f64>,
    iterations: Option<usize>,
    burn_in: Option<usize>,
    replications: Option<usize>,
    seed: Option<u64>,
    data: Option<PathBuf>,
    output: Option<PathBuf>,
    pilot_iterations: Option<usize>,
    pilot_step: Option<f64>,
    thinning: Option<usize>,
    record_timing: Option<bool>,
    steps: Option<usize>,
    theta: Option<Vec<f64>>,
    initial: Option<Vec<f64>>,
    grid: Option<Vec<String>>,
    backends: Option<Vec<BackendKind>>,
    histogram_bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub backend: BackendKind,
    /// Particle count `N` for the particle backend.
    pub particles: usize,
    /// Fixed-lag smoother lag.
    pub lag: usize,
    /// Proposal for `run`, e.g. `dbfgs` or `ibfgs-flip`.
    pub proposal: String,
    pub step_pmh0: f64,
    pub step_pmh1: f64,
    pub step_qmh: f64,
    pub memory: usize,
    pub delta: f64,
    pub warmup_step: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub output: PathBuf,
    pub pilot_iterations: usize,
    pub pilot_step: f64,
    /// Every `thinning`-th post-burn-in draw is used for state estimation.
    pub thinning: usize,
    /// Write measured iteration times into trace CSVs (otherwise zeros).
    pub record_timing: bool,
    /// Number of observations `T` for `simulate`.
    pub steps: usize,
    /// Natural parameters used by `simulate`.
    pub theta: Vec<f64>,
    /// Natural-coordinate initial state of every chain.
    pub initial: Vec<f64>,
    /// Proposals of the `benchmark` grid.
    pub grid: Vec<String>,
    /// Backends of the `benchmark` grid.
    pub backends: Vec<BackendKind>,
    pub histogram_bins: usize,
}

pub const DEFAULT_GRID: [&str; 9] = [
    "pmh0",
    "pmh1",
    "dbfgs",
    "ibfgs-flip",
    "ibfgs-reg",
    "ibfgs-hyb",
    "ebfgs-flip",
    "ebfgs-reg",
    "ebfgs-hyb",
];

/// Step sizes `(eps_0, eps_1)` of pMH0/pMH1.
pub fn default_pmh_steps(backend: BackendKind) -> (f64, f64) {
    match backend {
        BackendKind::Kalman => (1.37, 0.57),
        BackendKind::Particle => (1.48, 0.47),
    }
}

impl ExperimentConfig {
    pub fn defaults(model: ModelKind, backend: BackendKind) -> Self {
        Self::resolve(RawConfig { model: Some(model), backend: Some(backend), ..RawConfig::default() })
            .expect("defaults are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::resolve(raw)
    }

    /// Reads a config file. A relative `data` path is taken relative to the file.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(d), Some(dir)) = (&cfg.data, path.parent()) {
            if d.is_relative() {
                cfg.data = Some(dir.join(d));
            }
        }
        Ok(cfg)
    }

    fn resolve(raw: RawConfig) -> Result<Self, ConfigError> {
        let model = raw.model.unwrap_or(ModelKind::Lgss);
        let backend = raw.backend.unwrap_or(match model {
            ModelKind::Lgss => BackendKind::Kalman,
            ModelKind::Sv => BackendKind::Particle,
        });
        let (eps0, eps1) = default_pmh_steps(backend);
        let m = Model::default_for(model);
        let theta = raw.theta.unwrap_or_else(|| match model {
            ModelKind::Lgss => vec![0.2, 0.5, 1.0],
            ModelKind::Sv => m.priors().iter().map(|p| p.mean()).collect(),
        });
        let initial = raw.initial.unwrap_or_else(|| match model {
            // chains start at the data-generating parameters
            ModelKind::Lgss => theta.clone(),
            ModelKind::Sv => m.priors().iter().map(|p| p.mean()).collect(),
        });
        let cfg = ExperimentConfig {
            model,
            backend,
            particles: raw.particles.unwrap_or(match model {
                ModelKind::Lgss => 1000,
                ModelKind::Sv => 1500,
            }),
            lag: raw.lag.unwrap_or(10),
            proposal: raw.proposal.unwrap_or_else(|| "dbfgs".into()),
            step_pmh0: raw.step_pmh0.unwrap_or(eps0),
            step_pmh1: raw.step_pmh1.unwrap_or(eps1),
            step_qmh: raw.step_qmh.unwrap_or(0.5),
            memory: raw.memory.unwrap_or(20),
            delta: raw.delta.unwrap_or(1.0),
            warmup_step: raw.warmup_step.unwrap_or(0.01),
            iterations: raw.iterations.unwrap_or(10_000),
            burn_in: raw.burn_in.unwrap_or(3_000),
            replications: raw.replications.unwrap_or(1),
            seed: raw.seed.unwrap_or(0),
            data: raw.data,
            output: raw.output.unwrap_or_else(|| PathBuf::from("out")),
            pilot_iterations: raw.pilot_iterations.unwrap_or(5_000),
            pilot_step: raw.pilot_step.unwrap_or(0.1),
            thinning: raw.thinning.unwrap_or(50),
            record_timing: raw.record_timing.unwrap_or(false),
            steps: raw.steps.unwrap_or(500),
            theta,
            initial,
            grid: raw.grid.unwrap_or_else(|| DEFAULT_GRID.iter().map(|s| s.to_string()).collect()),
            backends: raw.backends.unwrap_or_else(|| vec![backend]),
            histogram_bins: raw.histogram_bins.unwrap_or(50),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let model = Model::default_for(self.model);
        let needs_lgss = |b: BackendKind| b == BackendKind::Kalman && self.model != ModelKind::Lgss;
        if needs_lgss(self.backend) || self.backends.iter().any(|&b| needs_lgss(b)) {
            return bad("the kalman backend is only available for the lgss model".into());
        }
        if self.backends.is_empty() {
            return bad("`backends` must not be empty".into());
        }
        if self.particles < 2 {
            return bad(format!("`particles` must be at least 2, got {}", self.particles));
        }
        if self.lag == 0 {
            return bad("`lag` must be positive".into());
        }
        self.proposal_kind()?;
        if self.grid.is_empty() {
            return bad("`grid` must not be empty".into());
        }
        for g in &self.grid {
            g.parse::<ProposalKind>().map_err(ConfigError::Invalid)?;
        }
        for (name, v) in [
            ("step_pmh0", self.step_pmh0),
            ("step_pmh1", self.step_pmh1),
            ("step_qmh", self.step_qmh),
            ("delta", self.delta),
            ("warmup_step", self.warmup_step),
            ("pilot_step", self.pilot_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("`{name}` must be positive, got {v}"));
            }
        }
        if self.memory < 2 {
            return bad(format!("`memory` must be at least 2, got {}", self.memory));
        }
        if self.iterations <= self.burn_in {
            return bad(format!("`iterations` ({}) must exceed `burn_in` ({})", self.iterations, self.burn_in));
        }
        if self.iterations <= self.memory {
            return bad("`iterations` must exceed `memory`".into());
        }
        if self.replications == 0 {
            return bad("`replications` must be positive".into());
        }
        if self.pilot_iterations < 20 {
            return bad("`pilot_iterations` must be at least 20".into());
        }
        if self.thinning == 0 || self.histogram_bins == 0 {
            return bad("`thinning` and `histogram_bins` must be positive".into());
        }
        if self.steps == 0 {
            return bad("`steps` must be positive".into());
        }
        for (name, v) in [("theta", &self.theta), ("initial", &self.initial)] {
            if v.len() != model.dim() {
                return bad(format!("`{name}` needs {} values for {}, got {}", model.dim(), self.model, v.len()));
            }
            if model.log_prior(&ParameterVector::natural(v)).map(f64::is_finite) != Ok(true) {
                return bad(format!("`{name}` = {v:?} is outside the parameter support"));
            }
        }
        Ok(())
    }

    pub fn proposal_kind(&self) -> Result<ProposalKind, ConfigError> {
        self.proposal.parse().map_err(ConfigError::Invalid)
    }

    pub fn target_backend(&self, backend: BackendKind) -> Backend {
        match backend {
            BackendKind::Kalman => Backend::Kalman,
            BackendKind::Particle => Backend::Particle { particles: self.particles, lag: self.lag },
        }
    }

    /// Proposal settings for `kind` on `backend`. pMH preconditioners are
    /// attached by the caller.
    pub fn proposal_config(&self, kind: ProposalKind, backend: BackendKind) -> ProposalConfig {
        let (step0, step1) = if backend == self.backend {
            (self.step_pmh0, self.step_pmh1)
        } else {
            default_pmh_steps(backend)
        };
        match kind {
            ProposalKind::Pmh0 => ProposalConfig::pmh0(step0, None),
            ProposalKind::Pmh1 => ProposalConfig::pmh1(step1, None),
            ProposalKind::Qmh { strategy } => {
                ProposalConfig::qmh(strategy, self.step_qmh, self.memory, self.delta, self.warmup_step)
            }
        }
    }

    /// Canonical TOML with every key explicit.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_for_lgss_kalman() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!((c.model, c.backend), (ModelKind::Lgss, BackendKind::Kalman));
        assert_eq!((c.step_pmh0, c.step_pmh1, c.step_qmh), (1.37, 0.57, 0.5));
        assert_eq!((c.memory, c.warmup_step, c.particles, c.lag), (20, 0.01, 1000, 10));
        assert_eq!((c.iterations, c.burn_in), (10_000, 3_000));
        assert_eq!(c.initial, vec![0.2, 0.5, 1.0]);
    }

    #[test]
    fn particle_and_sv_defaults() {
        let c = ExperimentConfig::from_toml_str("backend = \"particle\"").unwrap();
        assert_eq!((c.step_pmh0, c.step_pmh1), (1.48, 0.47));
        let sv = ExperimentConfig::from_toml_str("model = \"sv\"").unwrap();
        assert_eq!((sv.backend, sv.particles), (BackendKind::Particle, 1500));
        assert_eq!(sv.initial.len(), 4);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::from_toml_str("model = \"sv\"\nseed = 7\ndata = \"r.csv\"").unwrap();
        let back = ExperimentConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
        let other = ExperimentConfig::from_toml_str("model = \"sv\"\nseed = 8\ndata = \"r.csv\"").unwrap();
        assert_ne!(c.hash(), other.hash());
    }

    #[test]
    fn schema_is_strict() {
        for text in [
            "unknown_key = 1",
            "model = \"arma\"",
            "particles = \"many\"",
            "model = \"sv\"\nbackend = \"kalman\"",
            "proposal = \"nuts\"",
            "grid = [\"pmh0\", \"bfgs\"]",
            "iterations = 100\nburn_in = 100",
            "delta = 0.0",
            "theta = [0.2, 1.5, 1.0]",
            "initial = [0.2, 0.5]",
            "steps = 0",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
