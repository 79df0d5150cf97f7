use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use super::{build_target, chain_settings, io_err, load_data, pilot_seed, replication_seed, write_trace, CommandError};
use crate::config::{BackendKind, ExperimentConfig};
use crate::diagnostics::{posterior_summary, summarize, write_histogram_csv, MetricsReport, ParameterSummary};
use crate::sampler::{pilot_run, run_chain, ChainTrace, ProposalConfig, ProposalKind};
use crate::target::SsmTarget;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub posterior: Vec<ParameterSummary>,
    pub traces: Vec<ChainTrace>,
    pub preconditioner: Option<DMatrix<f64>>,
}

/// Proposal for `kind`, running the pilot chain first for pMH proposals.
pub fn prepared_proposal(
    config: &ExperimentConfig,
    target: &SsmTarget,
    kind: ProposalKind,
    backend: BackendKind,
    pilot: &mut Option<DMatrix<f64>>,
) -> Result<ProposalConfig, CommandError> {
    let mut proposal = config.proposal_config(kind, backend);
    if matches!(kind, ProposalKind::Pmh0 | ProposalKind::Pmh1) {
        if pilot.is_none() {
            let initial = chain_settings(config, 0)?.initial;
            let (_, p) = pilot_run(target, initial, config.pilot_iterations, config.pilot_step, pilot_seed(config.seed))?;
            *pilot = Some(p);
        }
        proposal.preconditioner = pilot.clone();
    }
    Ok(proposal)
}

/// Runs `replications` chains of the configured proposal and writes their
/// traces, the metrics report and the posterior histograms of replication 0.
pub fn run(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunOutput, CommandError> {
    let kind = config.proposal_kind()?;
    let target = build_target(config, load_data(config)?, config.backend)?;
    let mut pilot = None;
    let proposal = prepared_proposal(config, &target, kind, config.backend, &mut pilot)?;

    let pool = super::thread_pool(jobs);
    let traces: Vec<ChainTrace> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| -> Result<ChainTrace, CommandError> {
                let trace = run_chain(&target, &proposal, &chain_settings(config, replication_seed(config.seed, r))?)?;
                let path = config.output.join(format!("trace_rep{r}.csv"));
                write_trace(&path, &trace, "run", config, json!({ "replication": r }))?;
                Ok(trace)
            })
            .collect::<Result<_, _>>()
    })?;

    let report = summarize(&kind.to_string(), &traces, config.burn_in)?;
    let posterior = posterior_summary(&traces[0], config.burn_in, config.histogram_bins);
    let out = &config.output;
    let prov = |extra| crate::io::provenance("run", config, config.seed, extra);

    let path = out.join("metrics.json");
    crate::io::write_json(&path, &report).map_err(io_err(&path))?;
    crate::io::write_sidecar(&path, &prov(json!({}))).map_err(io_err(&path))?;
    let path = out.join("metrics.csv");
    crate::io::write_with(&path, |w| {
        use std::io::Write;
        writeln!(w, "{}", MetricsReport::CSV_HEADER)?;
        writeln!(w, "{}", report.csv_row())
    })
    .map_err(io_err(&path))?;
    crate::io::write_sidecar(&path, &prov(json!({}))).map_err(io_err(&path))?;
    for p in &posterior {
        let path = out.join(format!("posterior_{}.csv", p.name));
        crate::io::write_with(&path, |w| write_histogram_csv(w, &p.histogram).map_err(crate::io::csv_error))
            .map_err(io_err(&path))?;
        crate::io::write_sidecar(&path, &prov(json!({ "parameter": p.name, "replication": 0 }))).map_err(io_err(&path))?;
    }
    let path = out.join("posterior.json");
    crate::io::write_json(&path, &posterior).map_err(io_err(&path))?;
    crate::io::write_sidecar(&path, &prov(json!({ "replication": 0 }))).map_err(io_err(&path))?;
    if let Some(p) = &pilot {
        let path = out.join("preconditioner.json");
        let rows: Vec<Vec<f64>> = p.row_iter().map(|r| r.iter().copied().collect()).collect();
        crate::io::write_json(&path, &rows).map_err(io_err(&path))?;
        let extra = json!({ "pilot_seed": pilot_seed(config.seed) });
        crate::io::write_sidecar(&path, &prov(extra)).map_err(io_err(&path))?;
    }
    Ok(RunOutput { report, posterior, traces, preconditioner: pilot })
}
