//! Implementations of the `qnmh` subcommands.

mod benchmark;
mod ingest;
mod run;
mod simulate;
mod sv_case;

use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{BackendKind, ConfigError, ExperimentConfig};
use crate::diagnostics::DiagnosticsError;
use crate::models::{DataSet, Model, ModelError, ParameterVector};
use crate::rng::derive_seed;
use crate::sampler::{ChainSettings, ChainTrace, SamplerError};
use crate::target::{SsmTarget, TargetError};

pub use benchmark::{benchmark, BenchmarkOutput, CellFailure};
pub use ingest::{ingest_bitcoin, log_returns, IngestOutput, PriceRow};
pub use run::{prepared_proposal, run, RunOutput};
pub use simulate::{simulate, SimulateOutput};
pub use sv_case::{mixture_quantile, sv_casestudy, StateEstimate, SvOutput};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CommandError {
    pub fn kind(&self) -> &'static str {
        match self {
            CommandError::Config(_) => "config",
            CommandError::Model(_) => "model",
            CommandError::Target(_) => "target",
            CommandError::Sampler(_) => "sampler",
            CommandError::Diagnostics(_) => "diagnostics",
            CommandError::Input(_) => "input",
            CommandError::Io { .. } => "io",
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> Value {
        json!({ "error": self.kind(), "message": self.to_string() })
    }
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CommandError + '_ {
    move |e| CommandError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub(crate) fn load_data(config: &ExperimentConfig) -> Result<DataSet, CommandError> {
    let path = config.data.as_ref().ok_or_else(|| CommandError::Input("`data` is not set in the config".into()))?;
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    Ok(DataSet::read_csv(file)?)
}

pub(crate) fn build_target(config: &ExperimentConfig, data: DataSet, backend: BackendKind) -> Result<SsmTarget, CommandError> {
    Ok(SsmTarget::new(Model::default_for(config.model), data, config.target_backend(backend))?)
}

/// Seed of replication `r`; shared by every proposal in a grid.
pub fn replication_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, 100 + r as u64)
}

/// Seed of the pilot run for pMH preconditioning.
pub fn pilot_seed(seed: u64) -> u64 {
    derive_seed(seed, 99)
}

/// Chain settings for `config` with its `initial` point mapped to unconstrained coordinates.
pub fn chain_settings(config: &ExperimentConfig, seed: u64) -> Result<ChainSettings, CommandError> {
    let model = Model::default_for(config.model);
    let initial = model.to_unconstrained(&ParameterVector::natural(&config.initial))?.into_values();
    Ok(ChainSettings { iterations: config.iterations, burn_in: config.burn_in, seed, initial })
}

/// Trace CSV plus its sidecar.
pub(crate) fn write_trace(
    path: &Path,
    trace: &ChainTrace,
    command: &str,
    config: &ExperimentConfig,
    extra: Value,
) -> Result<(), CommandError> {
    crate::io::write_with(path, |w| trace.write_csv(w, config.record_timing).map_err(crate::io::csv_error))
        .map_err(io_err(path))?;
    let mut extra = extra;
    extra["proposal"] = json!(trace.proposal);
    extra["parameters"] = json!(trace.parameter_names);
    extra["burn_in"] = json!(trace.burn_in);
    crate::io::write_sidecar(path, &crate::io::provenance(command, config, trace.seed, extra)).map_err(io_err(path))
}

pub(crate) fn thread_pool(jobs: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}
