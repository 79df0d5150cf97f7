use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::run::prepared_proposal;
use super::{build_target, chain_settings, io_err, load_data, replication_seed, write_trace, CommandError};
use crate::config::{BackendKind, ExperimentConfig};
use crate::diagnostics::{summarize, MetricsReport};
use crate::sampler::{run_chain, ChainTrace, ProposalConfig, ProposalKind};
use crate::target::SsmTarget;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub backend: BackendKind,
    pub proposal: String,
    /// `None` when the whole cell failed before any replication ran.
    pub replication: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkOutput {
    pub rows: Vec<MetricsReport>,
    pub failures: Vec<CellFailure>,
    #[serde(skip)]
    pub traces: BTreeMap<String, Vec<ChainTrace>>,
}

impl BenchmarkOutput {
    pub fn row(&self, backend: BackendKind, proposal: &str) -> Option<&MetricsReport> {
        let label = cell_label(backend, proposal);
        self.rows.iter().find(|r| r.label == label)
    }
}

pub fn cell_label(backend: BackendKind, proposal: &str) -> String {
    format!("{backend}/{proposal}")
}

struct Cell {
    backend: BackendKind,
    kind: ProposalKind,
    proposal: Result<ProposalConfig, String>,
}

/// Runs the (backend x proposal) grid with `replications` chains per cell.
///
/// pMH cells share one pilot preconditioner per backend. Every replication
/// is an independent job writing its own trace; failures are recorded per
/// cell and the report is assembled afterwards.
pub fn benchmark(config: &ExperimentConfig, jobs: Option<usize>) -> Result<BenchmarkOutput, CommandError> {
    let data = load_data(config)?;
    let kinds: Vec<ProposalKind> = config.grid.iter().map(|g| g.parse().map_err(CommandError::Input)).collect::<Result<_, _>>()?;
    let targets: Vec<(BackendKind, SsmTarget)> = config
        .backends
        .iter()
        .map(|&b| Ok((b, build_target(config, data.clone(), b)?)))
        .collect::<Result<_, CommandError>>()?;

    let mut cells = Vec::new();
    for (backend, target) in &targets {
        let mut pilot: Option<DMatrix<f64>> = None;
        let mut pilot_error: Option<String> = None;
        for &kind in &kinds {
            let proposal = match &pilot_error {
                Some(e) if matches!(kind, ProposalKind::Pmh0 | ProposalKind::Pmh1) => Err(e.clone()),
                _ => prepared_proposal(config, target, kind, *backend, &mut pilot).map_err(|e| {
                    let msg = format!("pilot run failed: {e}");
                    pilot_error = Some(msg.clone());
                    msg
                }),
            };
            cells.push(Cell { backend: *backend, kind, proposal });
        }
    }

    let work: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.proposal.is_ok())
        .flat_map(|(i, _)| (0..config.replications).map(move |r| (i, r)))
        .collect();
    let pool = super::thread_pool(jobs);
    let results: Vec<((usize, usize), Result<ChainTrace, String>)> = pool.install(|| {
        work.par_iter()
            .map(|&(i, r)| {
                let cell = &cells[i];
                let target = &targets.iter().find(|(b, _)| *b == cell.backend).expect("built").1;
                let proposal = cell.proposal.as_ref().expect("filtered");
                let result = chain_settings(config, replication_seed(config.seed, r))
                    .and_then(|s| Ok(run_chain(target, proposal, &s)?))
                    .and_then(|trace| {
                        let path = config
                            .output
                            .join(cell.backend.to_string())
                            .join(cell.kind.to_string())
                            .join(format!("rep{r}.csv"));
                        write_trace(&path, &trace, "benchmark", config, json!({ "backend": cell.backend, "replication": r }))?;
                        Ok(trace)
                    })
                    .map_err(|e| e.to_string());
                ((i, r), result)
            })
            .collect()
    });

    let mut failures = Vec::new();
    let mut per_cell: Vec<Vec<ChainTrace>> = cells.iter().map(|_| Vec::new()).collect();
    for c in &cells {
        if let Err(e) = &c.proposal {
            failures.push(CellFailure { backend: c.backend, proposal: c.kind.to_string(), replication: None, message: e.clone() });
        }
    }
    for ((i, r), res) in results {
        match res {
            Ok(t) => per_cell[i].push(t),
            Err(message) => failures.push(CellFailure {
                backend: cells[i].backend,
                proposal: cells[i].kind.to_string(),
                replication: Some(r),
                message,
            }),
        }
    }

    let mut rows = Vec::new();
    let mut traces = BTreeMap::new();
    for (c, ts) in cells.iter().zip(per_cell) {
        if ts.is_empty() {
            continue;
        }
        let label = cell_label(c.backend, &c.kind.to_string());
        match summarize(&label, &ts, config.burn_in) {
            Ok(r) => rows.push(r),
            Err(e) => failures.push(CellFailure {
                backend: c.backend,
                proposal: c.kind.to_string(),
                replication: None,
                message: e.to_string(),
            }),
        }
        traces.insert(label, ts);
    }

    let out = BenchmarkOutput { rows, failures, traces };
    let prov = crate::io::provenance("benchmark", config, config.seed, json!({}));
    let path = config.output.join("report.json");
    crate::io::write_json(&path, &out).map_err(io_err(&path))?;
    crate::io::write_sidecar(&path, &prov).map_err(io_err(&path))?;
    let path = config.output.join("report.csv");
    crate::io::write_with(&path, |w| {
        use std::io::Write;
        writeln!(w, "{}", MetricsReport::CSV_HEADER)?;
        for r in &out.rows {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    })
    .map_err(io_err(&path))?;
    crate::io::write_sidecar(&path, &prov).map_err(io_err(&path))?;
    Ok(out)
}
