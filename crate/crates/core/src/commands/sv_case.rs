use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use statrs::function::erf::erfc;

use super::{build_target, chain_settings, io_err, load_data, replication_seed, write_trace, CommandError};
use crate::config::{BackendKind, ExperimentConfig};
use crate::diagnostics::{posterior_summary, spearman, write_histogram_csv, ParameterSummary};
use crate::models::{ModelKind, Moments, SvLeverage};
use crate::rng::{derive_seed, stream_rng};
use crate::sampler::{run_chain, ChainTrace};
use crate::smc::{bootstrap_pf_with_rng, fixed_lag_state_moments};

/// Log-volatility estimate at one time step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateEstimate {
    pub t: usize,
    pub y: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SvOutput {
    pub acceptance_rate: f64,
    pub backend_failures: usize,
    pub posterior: Vec<ParameterSummary>,
    /// Posterior probability of `phi > 0.8`.
    pub phi_above_0_8: f64,
    pub draws_used: usize,
    pub draws_failed: usize,
    /// Spearman correlation of `|y_t|` with the posterior-mean `x_t`.
    pub abs_return_volatility_correlation: f64,
    /// Written to `states.csv`.
    #[serde(skip)]
    pub states: Vec<StateEstimate>,
    #[serde(skip)]
    pub trace: ChainTrace,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `p`-quantile of the equal-weight mixture of `N(mean, var)` components, by bisection.
pub fn mixture_quantile(components: &[Moments], p: f64) -> f64 {
    let sd = |m: &Moments| m.var.max(0.0).sqrt();
    let mut lo = components.iter().map(|m| m.mean - 10.0 * sd(m)).fold(f64::INFINITY, f64::min);
    let mut hi = components.iter().map(|m| m.mean + 10.0 * sd(m)).fold(f64::NEG_INFINITY, f64::max);
    let cdf = |x: f64| {
        components
            .iter()
            .map(|m| {
                let s = sd(m);
                if s > 0.0 {
                    normal_cdf((x - m.mean) / s)
                } else {
                    f64::from(u8::from(x >= m.mean))
                }
            })
            .sum::<f64>()
            / components.len() as f64
    };
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// SV posterior and log-volatility path.
///
/// The state estimate averages the fixed-lag smoothed moments of `x_t` over
/// every `thinning`-th post-burn-in parameter draw, each with a fresh
/// particle filter; the 95% band comes from the Gaussian mixture of the
/// per-draw moments.
pub fn sv_casestudy(config: &ExperimentConfig, jobs: Option<usize>) -> Result<SvOutput, CommandError> {
    if config.model != ModelKind::Sv {
        return Err(CommandError::Input("sv-casestudy needs `model = \"sv\"`".into()));
    }
    let kind = config.proposal_kind()?;
    let data = load_data(config)?;
    let target = build_target(config, data.clone(), BackendKind::Particle)?;
    let proposal = super::run::prepared_proposal(config, &target, kind, BackendKind::Particle, &mut None)?;
    let trace = run_chain(&target, &proposal, &chain_settings(config, replication_seed(config.seed, 0))?)?;
    let out = &config.output;
    write_trace(&out.join("trace.csv"), &trace, "sv-casestudy", config, json!({}))?;

    let posterior = posterior_summary(&trace, config.burn_in, config.histogram_bins);
    let prov = |extra| crate::io::provenance("sv-casestudy", config, config.seed, extra);
    for p in &posterior {
        let path = out.join(format!("posterior_{}.csv", p.name));
        crate::io::write_with(&path, |w| write_histogram_csv(w, &p.histogram).map_err(crate::io::csv_error))
            .map_err(io_err(&path))?;
        crate::io::write_sidecar(&path, &prov(json!({ "parameter": p.name }))).map_err(io_err(&path))?;
    }

    let post = trace.post_burn_in();
    let phi_above = post.iter().filter(|r| r.natural[1] > 0.8).count() as f64 / post.len() as f64;
    let draws: Vec<Vec<f64>> = post.iter().step_by(config.thinning).map(|r| r.natural.iter().copied().collect()).collect();
    let model = SvLeverage::default();
    let y = data.observations();
    let state_seed = derive_seed(config.seed, 2);
    let moments: Vec<Option<Vec<Moments>>> = super::thread_pool(jobs).install(|| {
        draws
            .par_iter()
            .enumerate()
            .map(|(j, theta)| {
                let mut rng = stream_rng(state_seed, j as u64);
                let sys = bootstrap_pf_with_rng(&model, theta, y, config.particles, &mut rng).ok()?;
                fixed_lag_state_moments(&sys, config.lag).ok()
            })
            .collect()
    });
    let used: Vec<&Vec<Moments>> = moments.iter().flatten().collect();
    let states: Vec<StateEstimate> = if used.is_empty() {
        Vec::new()
    } else {
        (1..=y.len())
            .map(|t| {
                let comps: Vec<Moments> = used.iter().map(|m| m[t]).collect();
                StateEstimate {
                    t,
                    y: y[t - 1],
                    mean: comps.iter().map(|m| m.mean).sum::<f64>() / comps.len() as f64,
                    lower: mixture_quantile(&comps, 0.025),
                    upper: mixture_quantile(&comps, 0.975),
                }
            })
            .collect()
    };
    let correlation = if states.len() >= 2 {
        let abs_y: Vec<f64> = states.iter().map(|s| s.y.abs()).collect();
        let means: Vec<f64> = states.iter().map(|s| s.mean).collect();
        spearman(&abs_y, &means)
    } else {
        f64::NAN
    };

    let path = out.join("states.csv");
    crate::io::write_with(&path, |w| {
        use std::io::Write;
        writeln!(w, "t,y,mean,lower,upper")?;
        for s in &states {
            writeln!(w, "{},{},{},{},{}", s.t, s.y, s.mean, s.lower, s.upper)?;
        }
        Ok(())
    })
    .map_err(io_err(&path))?;
    crate::io::write_sidecar(&path, &prov(json!({ "thinning": config.thinning, "draws": used.len() })))
        .map_err(io_err(&path))?;

    let output = SvOutput {
        acceptance_rate: trace.acceptance_rate(),
        backend_failures: trace.records.iter().filter(|r| r.backend_failure).count(),
        posterior,
        phi_above_0_8: phi_above,
        draws_used: used.len(),
        draws_failed: draws.len() - used.len(),
        abs_return_volatility_correlation: correlation,
        states,
        trace,
    };
    let path = out.join("summary.json");
    crate::io::write_json(&path, &output).map_err(io_err(&path))?;
    crate::io::write_sidecar(&path, &prov(json!({}))).map_err(io_err(&path))?;
    Ok(output)
}
