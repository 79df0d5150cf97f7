use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;

use super::*;
use crate::diagnostics::iact;
use crate::quasi_newton::{Correction, Strategy};
use crate::target::GaussianTarget;

fn settings(iterations: usize, burn_in: usize, seed: u64, initial: &[f64]) -> ChainSettings {
    ChainSettings { iterations, burn_in, seed, initial: DVector::from_row_slice(initial) }
}

fn strip_timing(mut t: ChainTrace) -> ChainTrace {
    for r in &mut t.records {
        r.time_us = 0;
    }
    t
}

fn mean_within_mc_error(trace: &ChainTrace, i: usize, truth: f64, sigmas: f64) {
    let x: Vec<f64> = trace.post_burn_in().iter().map(|r| r.theta[i]).collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var * iact(&x).unwrap() / n).sqrt();
    assert!((mean - truth).abs() < sigmas * se, "{}: coordinate {i} mean {mean}, truth {truth}, se {se}", trace.proposal);
}

#[test]
fn vanishing_step_never_leaves_start() {
    let target = GaussianTarget::standard(2);
    let trace = run_chain(&target, &ProposalConfig::pmh0(1e-9, None), &settings(500, 100, 1, &[0.3, -0.2])).unwrap();
    assert_eq!(trace.acceptance_rate(), 1.0);
    for r in &trace.records {
        assert!((&r.theta - DVector::from_vec(vec![0.3, -0.2])).amax() < 1e-6);
    }
}

#[test]
fn gaussian_recovery_pmh0_2d() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
    let target = GaussianTarget::new(DVector::from_vec(vec![1.0, -2.0]), cov.clone()).unwrap();
    let trace = run_chain(&target, &ProposalConfig::pmh0(1.7, Some(cov)), &settings(50_000, 1000, 3, &[0.0, 0.0])).unwrap();
    mean_within_mc_error(&trace, 0, 1.0, 3.0);
    mean_within_mc_error(&trace, 1, -2.0, 3.0);
}

#[test]
fn gaussian_recovery_qmh_variants() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
    let target = GaussianTarget::new(DVector::from_vec(vec![1.0, -2.0]), cov).unwrap();
    for strategy in [Strategy::Dbfgs, Strategy::Ibfgs(Correction::Flip), Strategy::Ebfgs(Correction::Hyb)] {
        let config = ProposalConfig::qmh(strategy, 1.0, 20, 1.0, 0.5);
        let trace = run_chain(&target, &config, &settings(20_000, 2000, 5, &[1.0, -2.0])).unwrap();
        mean_within_mc_error(&trace, 0, 1.0, 4.0);
        mean_within_mc_error(&trace, 1, -2.0, 4.0);
    }
}

#[test]
fn identical_seed_gives_identical_trace() {
    let target = GaussianTarget::standard(3);
    for config in [
        ProposalConfig::pmh1(0.8, None),
        ProposalConfig::qmh(Strategy::Ibfgs(Correction::Reg), 0.5, 10, 1.0, 0.1),
    ] {
        let a = run_chain(&target, &config, &settings(1000, 200, 9, &[0.1, 0.2, 0.3])).unwrap();
        let b = run_chain(&target, &config, &settings(1000, 200, 9, &[0.1, 0.2, 0.3])).unwrap();
        let c = run_chain(&target, &config, &settings(1000, 200, 10, &[0.1, 0.2, 0.3])).unwrap();
        assert_eq!(strip_timing(a.clone()), strip_timing(b));
        assert_ne!(strip_timing(a), strip_timing(c));
    }
}

#[test]
fn rejected_qmh_step_returns_to_anchor() {
    let target = GaussianTarget::standard(2);
    let m = 7;
    let config = ProposalConfig::qmh(Strategy::Dbfgs, 1.5, m, 1.0, 0.3);
    let trace = run_chain(&target, &config, &settings(3000, 100, 2, &[0.0, 0.0])).unwrap();
    let mut rejections = 0;
    for (i, r) in trace.records.iter().enumerate() {
        if r.phase == Phase::Main && !r.accepted {
            rejections += 1;
            let k = i + 1;
            assert_eq!(r.theta, trace.records[k - m - 1].theta, "iteration {k}");
        }
        assert_eq!(r.phase == Phase::Warmup, i < m);
    }
    assert!(rejections > 100);
}

#[test]
#[allow(clippy::needless_range_loop)]
fn pmh0_transitions_balance_between_bins() {
    let target = GaussianTarget::standard(1);
    let trace = run_chain(&target, &ProposalConfig::pmh0(2.4, None), &settings(200_000, 1000, 4, &[0.0])).unwrap();
    let bin = |x: f64| ((x + 2.5).floor() as i64).clamp(0, 4) as usize;
    let mut counts = [[0u64; 5]; 5];
    for w in trace.post_burn_in().windows(2) {
        counts[bin(w[0].theta[0])][bin(w[1].theta[0])] += 1;
    }
    for a in 0..5 {
        for b in a + 1..5 {
            let (ab, ba) = (counts[a][b] as f64, counts[b][a] as f64);
            assert!((ab - ba).abs() <= 4.0 * (ab + ba).sqrt().max(1.0), "{a}->{b}: {ab} vs {ba}");
        }
    }
}

#[test]
fn pilot_preconditioner_recovers_covariance() {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let l = cov.clone().cholesky().unwrap().l();
    let n = 20_000;
    let records: Vec<ChainRecord> = (0..n)
        .map(|k| {
            let xi = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &l * xi;
            ChainRecord {
                iteration: k + 1,
                natural: x.clone(),
                theta: x.clone(),
                log_target: 0.0,
                log_likelihood: 0.0,
                gradient: None,
                candidate: x,
                candidate_log_target: 0.0,
                accepted: true,
                phase: Phase::Main,
                corrected: None,
                fallback: false,
                backend_failure: false,
                time_us: 0,
            }
        })
        .collect();
    let mut trace = ChainTrace {
        proposal: "iid".into(),
        parameter_names: vec![],
        seed: 0,
        burn_in: 0,
        initial: DVector::zeros(2),
        records,
    };
    let p = pilot_preconditioner(&trace).unwrap();
    // Wishart sd of entry (i, j) is sqrt((S_ij^2 + S_ii S_jj) / n)
    for i in 0..2 {
        for j in 0..2 {
            let sd = ((cov[(i, j)].powi(2) + cov[(i, i)] * cov[(j, j)]) / n as f64).sqrt();
            assert!((p[(i, j)] - cov[(i, j)]).abs() < 4.0 * sd);
        }
    }
    for r in &mut trace.records {
        r.theta = DVector::from_vec(vec![1.0, 1.0]);
    }
    assert_eq!(pilot_preconditioner(&trace).unwrap_err(), SamplerError::TooFewDistinct);
}

#[test]
fn rank_deficient_covariance_is_jittered() {
    let samples: Vec<DVector<f64>> = (0..10).map(|k| DVector::from_vec(vec![k as f64, 2.0 * k as f64])).collect();
    let c = jitter_to_spd(empirical_covariance(&samples).unwrap());
    assert!(c.cholesky().is_some());
}

#[test]
fn invalid_configs_are_rejected() {
    let target = GaussianTarget::standard(2);
    let s = settings(100, 10, 0, &[0.0, 0.0]);
    assert!(run_chain(&target, &ProposalConfig::pmh0(0.0, None), &s).is_err());
    assert!(run_chain(&target, &ProposalConfig::pmh0(1.0, Some(DMatrix::identity(3, 3))), &s).is_err());
    assert!(run_chain(&target, &ProposalConfig::qmh(Strategy::Dbfgs, 1.0, 1, 1.0, 0.1), &s).is_err());
    assert!(run_chain(&target, &ProposalConfig::pmh0(1.0, None), &settings(10, 10, 0, &[0.0, 0.0])).is_err());
}

#[test]
fn proposal_names_round_trip() {
    for name in ["pmh0", "pmh1", "dbfgs", "ibfgs-flip", "ibfgs-reg", "ibfgs-hyb", "ebfgs-flip", "ebfgs-reg", "ebfgs-hyb"] {
        let kind: ProposalKind = name.parse().unwrap();
        assert_eq!(kind.to_string(), name);
    }
    for bad in ["pmh2", "ibfgs", "dbfgs-flip", "ibfgs-none", ""] {
        assert!(bad.parse::<ProposalKind>().is_err(), "{bad}");
    }
}
