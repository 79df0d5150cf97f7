use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::quasi_newton::Correction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Random-walk iterations that seed the quasi-Newton memory.
    Warmup,
    Main,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    /// 1-based iteration index `k`.
    pub iteration: usize,
    /// Chain state in unconstrained coordinates.
    pub theta: DVector<f64>,
    pub natural: DVector<f64>,
    pub log_target: f64,
    pub log_likelihood: f64,
    pub gradient: Option<DVector<f64>>,
    pub candidate: DVector<f64>,
    pub candidate_log_target: f64,
    pub accepted: bool,
    pub phase: Phase,
    pub corrected: Option<Correction>,
    /// The curvature estimate or its factorization fell back to `delta I`.
    pub fallback: bool,
    /// The target evaluation failed at the candidate, which was rejected.
    pub backend_failure: bool,
    pub time_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub proposal: String,
    pub parameter_names: Vec<String>,
    pub seed: u64,
    pub burn_in: usize,
    pub initial: DVector<f64>,
    pub records: Vec<ChainRecord>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn post_burn_in(&self) -> &[ChainRecord] {
        &self.records[self.burn_in.min(self.records.len())..]
    }

    /// Natural-coordinate series of parameter `i` after burn-in.
    pub fn natural_series(&self, i: usize) -> Vec<f64> {
        self.post_burn_in().iter().map(|r| r.natural[i]).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        let post = self.post_burn_in();
        if post.is_empty() {
            return 0.0;
        }
        post.iter().filter(|r| r.accepted).count() as f64 / post.len() as f64
    }

    /// Corrected curvature estimates over all post-warmup proposals.
    pub fn correction_fraction(&self) -> f64 {
        let main: Vec<_> = self.records.iter().filter(|r| r.phase == Phase::Main).collect();
        if main.is_empty() {
            return 0.0;
        }
        main.iter().filter(|r| r.corrected.is_some()).count() as f64 / main.len() as f64
    }

    /// `k,theta_1..theta_p,logpost,accepted,corrected,time_us` with natural
    /// parameter values. `time_us` is written as 0 unless `record_timing`.
    pub fn write_csv<W: Write>(&self, w: W, record_timing: bool) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("theta_{i}")));
        header.extend(["logpost", "accepted", "corrected", "time_us"].map(String::from));
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.natural.iter().map(|v| v.to_string()));
            row.push(r.log_target.to_string());
            row.push(u8::from(r.accepted).to_string());
            row.push(u8::from(r.corrected.is_some()).to_string());
            row.push(if record_timing { r.time_us } else { 0 }.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn median_iteration_time_us(&self) -> f64 {
        let mut t: Vec<f64> = self.records.iter().map(|r| r.time_us as f64).collect();
        crate::diagnostics::median(&mut t)
    }
}
