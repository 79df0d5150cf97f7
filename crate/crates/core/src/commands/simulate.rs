use serde::Serialize;
use serde_json::json;

use super::{io_err, CommandError};
use crate::config::ExperimentConfig;
use crate::models::{DataSet, Model, ParameterVector};

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub path: std::path::PathBuf,
    pub steps: usize,
    pub mean: f64,
    pub sd: f64,
    #[serde(skip)]
    pub data: DataSet,
}

/// Draws `steps` observations at `theta` and writes `data.csv` to the output directory.
pub fn simulate(config: &ExperimentConfig) -> Result<SimulateOutput, CommandError> {
    let model = Model::default_for(config.model);
    let data = model.simulate(&ParameterVector::natural(&config.theta), config.steps, config.seed)?;
    let path = config.output.join("data.csv");
    crate::io::write_with(&path, |w| data.write_csv(w)).map_err(io_err(&path))?;
    let y = data.observations();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = if y.len() > 1 { (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let extra = json!({ "theta": config.theta, "steps": config.steps, "mean": mean, "sd": sd });
    crate::io::write_sidecar(&path, &crate::io::provenance("simulate", config, config.seed, extra))
        .map_err(io_err(&path))?;
    Ok(SimulateOutput { path, steps: data.len(), mean, sd, data })
}
