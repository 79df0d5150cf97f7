//! Inefficiency factors, per-cell run summaries and posterior histograms.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::ChainTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("series needs at least 10 values, got {0}")]
    TooShort(usize),
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("no traces to summarize")]
    Empty,
    #[error("burn-in {burn_in} leaves no samples in a trace of length {len}")]
    BurnIn { burn_in: usize, len: usize },
}

/// Integrated autocorrelation time `1 + 2 sum_k rho_k`.
///
/// The sum stops before the first lag with non-positive autocorrelation and
/// never exceeds `min(n / 2, 1000)` lags. A constant series returns
/// `f64::INFINITY`.
pub fn iact(series: &[f64]) -> Result<f64, DiagnosticsError> {
    let n = series.len();
    if n < 10 {
        return Err(DiagnosticsError::TooShort(n));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFinite);
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = centred.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let max_lag = (n / 2).min(1000);
    let mut sum = 0.0;
    for lag in 1..=max_lag {
        let ck: f64 = centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum();
        let rho = ck / c0;
        if rho <= 0.0 {
            break;
        }
        sum += rho;
    }
    Ok(1.0 + 2.0 * sum)
}

/// Batch-means estimate `b Var(batch means) / Var(series)` with `batches`
/// equal batches; a remainder at the end is dropped.
///
/// Unlike [`iact`] it sees dependence at any lag shorter than a batch, such
/// as the lag-`M` correlation of an `M`-order chain.
pub fn batch_means_iact(series: &[f64], batches: usize) -> Result<f64, DiagnosticsError> {
    let n = series.len();
    if n < 10 || batches < 2 || n / batches < 2 {
        return Err(DiagnosticsError::TooShort(n));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFinite);
    }
    let var = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    let b = n / batches;
    let v = var(series);
    if v == 0.0 {
        return Ok(f64::INFINITY);
    }
    let means: Vec<f64> = series.chunks_exact(b).map(|c| c.iter().sum::<f64>() / b as f64).collect();
    Ok(b as f64 * var(&means) / v)
}

/// Batches used for [`MetricsReport::max_if_batch`].
pub const IF_BATCHES: usize = 50;

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    quantile_sorted(values, q)
}

pub fn median(values: &mut [f64]) -> f64 {
    quantile(values, 0.5)
}

/// Distance between the 25% and 75% quantiles.
pub fn iqr(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25)
}

/// Medians over replications of one (backend, proposal) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub replications: usize,
    pub acceptance_rate: f64,
    pub correction_fraction: f64,
    /// Median over replications of each parameter's inefficiency factor.
    pub if_per_parameter: Vec<f64>,
    /// Median over replications of the per-trace maximum IF.
    pub max_if: f64,
    pub max_if_iqr: f64,
    /// As `max_if`, with [`batch_means_iact`] over [`IF_BATCHES`] batches.
    pub max_if_batch: f64,
    /// Median time per iteration in milliseconds.
    pub iteration_ms: f64,
    /// `iteration_ms * max_if`.
    pub time_per_effective_sample_ms: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "label,replications,acceptance_rate,correction_fraction,max_if,max_if_iqr,max_if_batch,iteration_ms,time_per_effective_sample_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.label,
            self.replications,
            self.acceptance_rate,
            self.correction_fraction,
            self.max_if,
            self.max_if_iqr,
            self.max_if_batch,
            self.iteration_ms,
            self.time_per_effective_sample_ms
        )
    }
}

/// Inefficiency factors of each parameter's natural-coordinate series after burn-in.
pub fn trace_ifs(trace: &ChainTrace, burn_in: usize) -> Result<Vec<f64>, DiagnosticsError> {
    if burn_in >= trace.len() {
        return Err(DiagnosticsError::BurnIn { burn_in, len: trace.len() });
    }
    (0..trace.dim())
        .map(|i| iact(&trace.records[burn_in..].iter().map(|r| r.natural[i]).collect::<Vec<_>>()))
        .collect()
}

/// Median (and IQR for max-IF) of the per-trace metrics.
///
/// Acceptance rate is measured after burn-in; the correction fraction over all
/// post-warmup proposals.
pub fn summarize(label: &str, traces: &[ChainTrace], burn_in: usize) -> Result<MetricsReport, DiagnosticsError> {
    if traces.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    let mut acc = Vec::with_capacity(traces.len());
    let mut cor = Vec::with_capacity(traces.len());
    let mut max_if = Vec::with_capacity(traces.len());
    let mut max_if_batch = Vec::with_capacity(traces.len());
    let mut times = Vec::with_capacity(traces.len());
    let dim = traces[0].dim();
    let mut per_param: Vec<Vec<f64>> = vec![Vec::with_capacity(traces.len()); dim];
    for t in traces {
        let ifs = trace_ifs(t, burn_in)?;
        let post = &t.records[burn_in..];
        acc.push(post.iter().filter(|r| r.accepted).count() as f64 / post.len() as f64);
        cor.push(t.correction_fraction());
        max_if.push(ifs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        // NaN when the trace is too short for the batches
        let batch = (0..dim).map(|i| {
            batch_means_iact(&post.iter().map(|r| r.natural[i]).collect::<Vec<_>>(), IF_BATCHES).unwrap_or(f64::NAN)
        });
        max_if_batch.push(batch.fold(f64::NEG_INFINITY, f64::max));
        for (p, v) in per_param.iter_mut().zip(&ifs) {
            p.push(*v);
        }
        times.push(t.median_iteration_time_us() / 1000.0);
    }
    let iteration_ms = median(&mut times);
    let max_if_median = median(&mut max_if.clone());
    Ok(MetricsReport {
        label: label.to_string(),
        replications: traces.len(),
        acceptance_rate: median(&mut acc),
        correction_fraction: median(&mut cor),
        if_per_parameter: per_param.iter_mut().map(|v| median(v)).collect(),
        max_if: max_if_median,
        max_if_iqr: iqr(&mut max_if),
        max_if_batch: median(&mut max_if_batch),
        iteration_ms,
        time_per_effective_sample_ms: iteration_ms * max_if_median,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub histogram: Vec<HistogramBin>,
}

/// Equal-width histogram normalized to integrate to one.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| HistogramBin {
            left: lo + i as f64 * width,
            right: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
            density: c as f64 / (n * width),
        })
        .collect()
}

pub fn write_histogram_csv<W: Write>(w: W, bins: &[HistogramBin]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_left", "bin_right", "density"])?;
    for b in bins {
        out.write_record([b.left.to_string(), b.right.to_string(), b.density.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-parameter posterior mean, sd and histogram of the natural-coordinate draws after burn-in.
pub fn posterior_summary(trace: &ChainTrace, burn_in: usize, bins: usize) -> Vec<ParameterSummary> {
    let post = &trace.records[burn_in.min(trace.len())..];
    (0..trace.dim())
        .map(|i| {
            let x: Vec<f64> = post.iter().map(|r| r.natural[i]).collect();
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            ParameterSummary {
                name: trace.parameter_names.get(i).cloned().unwrap_or_else(|| format!("theta_{}", i + 1)),
                mean,
                sd,
                histogram: histogram(&x, bins),
            }
        })
        .collect()
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `NaN` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
