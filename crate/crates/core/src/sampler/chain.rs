use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::kernel::{mh_accept, PmhKernel};
use super::trace::{ChainRecord, ChainTrace, Phase};
use super::{empirical_covariance, ProposalConfig, ProposalKind, SamplerError};
use crate::gaussian::spd_inverse;
use crate::quasi_newton::{build_curvature, Correction, GradientMemory, MemoryEntry, QnProposal, Strategy};
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::target::{EvalKey, Evaluation, LogTarget};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    /// Number of iterations `K` after the initial state.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Initial state in unconstrained coordinates.
    pub initial: DVector<f64>,
}

#[derive(Clone)]
struct State {
    theta: DVector<f64>,
    eval: Evaluation,
}

struct Step {
    candidate: DVector<f64>,
    candidate_eval: Option<Evaluation>,
    accepted: bool,
    corrected: Option<Correction>,
    fallback: bool,
    backend_failure: bool,
}

struct Runner<'a, T: LogTarget + ?Sized> {
    target: &'a T,
    eval_seed: u64,
}

impl<T: LogTarget + ?Sized> Runner<'_, T> {
    /// `None` when the backend failed; the candidate then counts as zero density.
    fn evaluate(&self, theta: &DVector<f64>, with_gradient: bool, k: usize) -> Option<Evaluation> {
        self.target.evaluate(theta, with_gradient, EvalKey { seed: self.eval_seed, stream: k as u64 }).ok()
    }
}

fn entry(theta: &DVector<f64>, eval: &Evaluation, iteration: usize) -> MemoryEntry {
    MemoryEntry {
        theta: theta.clone(),
        gradient: eval.gradient.clone().expect("quasi-Newton chains always evaluate gradients"),
        log_target: eval.log_target,
        iteration,
    }
}

/// Runs one Metropolis-Hastings chain.
///
/// `pmh0`/`pmh1` are first-order chains. `qmh` uses a symmetric random walk of
/// per-coordinate step `warmup_step` for the first `M` iterations, then
/// proposes around the state `M` iterations back with the quasi-Newton
/// curvature of the last `M` states and, on rejection, returns to that state.
/// The reverse density is evaluated as `q(theta_{k-M} | psi')` where `psi'`
/// drops the oldest memory entry, appends the candidate and is anchored at it.
///
/// Target evaluations at iteration `k` use stream `k` of a seed derived from
/// `settings.seed`, so traces depend only on the settings.
pub fn run_chain<T: LogTarget + ?Sized>(
    target: &T,
    proposal: &ProposalConfig,
    settings: &ChainSettings,
) -> Result<ChainTrace, SamplerError> {
    let dim = target.dim();
    proposal.validate(dim)?;
    if settings.initial.len() != dim {
        return Err(SamplerError::InvalidConfig(format!(
            "initial state has {} coordinates, the target {dim}",
            settings.initial.len()
        )));
    }
    if settings.iterations <= settings.burn_in {
        return Err(SamplerError::InvalidConfig("iterations must exceed the burn-in".into()));
    }
    let runner = Runner { target, eval_seed: derive_seed(settings.seed, 1) };
    let mut rng = stream_rng(settings.seed, 0);
    let needs_gradient = !matches!(proposal.kind, ProposalKind::Pmh0);

    let initial_eval = target.evaluate(&settings.initial, needs_gradient, EvalKey { seed: runner.eval_seed, stream: 0 })?;
    if !initial_eval.log_target.is_finite() {
        return Err(SamplerError::InitialState("the log-target is not finite at the initial state".into()));
    }

    let pmh = match proposal.kind {
        ProposalKind::Pmh0 | ProposalKind::Pmh1 => Some(
            PmhKernel::new(proposal.preconditioner_or_identity(dim), proposal.step_size)
                .ok_or_else(|| SamplerError::InvalidConfig("preconditioner is not positive definite".into()))?,
        ),
        ProposalKind::Qmh { .. } => None,
    };
    let warmup_kernel = PmhKernel::new(DMatrix::identity(dim, dim), proposal.warmup_step).expect("identity is SPD");

    let is_qmh = matches!(proposal.kind, ProposalKind::Qmh { .. });
    let mut memory = GradientMemory::new(proposal.memory.max(1));
    // full chain states matching the memory entries, oldest first
    let mut history: VecDeque<State> = VecDeque::with_capacity(proposal.memory + 1);
    if is_qmh {
        memory.push(entry(&settings.initial, &initial_eval, 0));
        history.push_back(State { theta: settings.initial.clone(), eval: initial_eval.clone() });
    }
    let mut empirical_precision: Option<DMatrix<f64>> = None;

    let mut current = State { theta: settings.initial.clone(), eval: initial_eval };
    let mut states: Vec<DVector<f64>> = Vec::new();
    let mut records = Vec::with_capacity(settings.iterations);

    for k in 1..=settings.iterations {
        let start = Instant::now();
        let (phase, step, next) = match proposal.kind {
            ProposalKind::Pmh0 | ProposalKind::Pmh1 => {
                let kernel = pmh.as_ref().expect("built above");
                let g = current.eval.gradient.as_ref();
                let candidate = kernel.propose(&current.theta, g, &mut rng);
                let eval = runner.evaluate(&candidate, needs_gradient, k);
                let u: f64 = rng.random();
                let (accepted, backend_failure) = match &eval {
                    Some(e) if e.log_target.is_finite() => {
                        let fwd = kernel.log_density(&candidate, &current.theta, g);
                        let rev = kernel.log_density(&current.theta, &candidate, e.gradient.as_ref());
                        (mh_accept(e.log_target, current.eval.log_target, rev, fwd, u), false)
                    }
                    Some(_) => (false, false),
                    None => (false, true),
                };
                let next = if accepted {
                    Some(State { theta: candidate.clone(), eval: eval.clone().expect("accepted") })
                } else {
                    None
                };
                let step = Step { candidate, candidate_eval: eval, accepted, corrected: None, fallback: false, backend_failure };
                (Phase::Main, step, next)
            }
            ProposalKind::Qmh { strategy } => {
                if k <= proposal.memory {
                    let candidate = warmup_kernel.propose(&current.theta, None, &mut rng);
                    let eval = runner.evaluate(&candidate, true, k);
                    let u: f64 = rng.random();
                    let (accepted, backend_failure) = match &eval {
                        Some(e) => (mh_accept(e.log_target, current.eval.log_target, 0.0, 0.0, u), false),
                        None => (false, true),
                    };
                    let next = accepted.then(|| State { theta: candidate.clone(), eval: eval.clone().expect("accepted") });
                    let step = Step { candidate, candidate_eval: eval, accepted, corrected: None, fallback: false, backend_failure };
                    (Phase::Warmup, step, next)
                } else {
                    let (step, next) = qn_step(&runner, &memory, strategy, proposal, empirical_precision.as_ref(), k, &mut rng);
                    (Phase::Main, step, next)
                }
            }
        };
        match next {
            Some(s) => current = s,
            // after warmup a rejected qMH proposal returns to the anchor theta_{k-M}
            None if is_qmh && phase == Phase::Main => current = history.front().expect("seeded").clone(),
            None => {}
        }
        if is_qmh {
            memory.push(entry(&current.theta, &current.eval, k));
            if history.len() == proposal.memory {
                history.pop_front();
            }
            history.push_back(current.clone());
        }
        states.push(current.theta.clone());
        if k == settings.burn_in && matches!(proposal.kind, ProposalKind::Qmh { strategy: Strategy::Ibfgs(Correction::Hyb) | Strategy::Ebfgs(Correction::Hyb) }) {
            empirical_precision = empirical_covariance(&states[settings.burn_in / 2..]).and_then(|c| spd_inverse(&c));
        }
        let time_us = start.elapsed().as_micros() as u64;
        records.push(ChainRecord {
            iteration: k,
            natural: target.to_natural(&current.theta),
            theta: current.theta.clone(),
            log_target: current.eval.log_target,
            log_likelihood: current.eval.log_likelihood,
            gradient: current.eval.gradient.clone(),
            candidate: step.candidate,
            candidate_log_target: step.candidate_eval.map_or(f64::NEG_INFINITY, |e| e.log_target),
            accepted: step.accepted,
            phase,
            corrected: step.corrected,
            fallback: step.fallback,
            backend_failure: step.backend_failure,
            time_us,
        });
    }

    Ok(ChainTrace {
        proposal: proposal.kind.to_string(),
        parameter_names: target.parameter_names(),
        seed: settings.seed,
        burn_in: settings.burn_in,
        initial: settings.initial.clone(),
        records,
    })
}

fn qn_step<T: LogTarget + ?Sized>(
    runner: &Runner<'_, T>,
    memory: &GradientMemory,
    strategy: Strategy,
    proposal: &ProposalConfig,
    empirical_precision: Option<&DMatrix<f64>>,
    k: usize,
    rng: &mut StreamRng,
) -> (Step, Option<State>) {
    let anchor = memory.oldest().expect("memory is seeded with the initial state");
    let forward_curvature = build_curvature(memory, strategy, proposal.delta, empirical_precision);
    let forward = QnProposal::new(anchor, &forward_curvature, proposal.step_size, proposal.delta);
    let candidate = forward.sample(rng);
    let eval = runner.evaluate(&candidate, true, k);
    let u: f64 = rng.random();
    let corrected = forward_curvature.corrected;
    let fallback = forward_curvature.fallback_identity || forward.repaired;
    let (accepted, backend_failure) = match &eval {
        Some(e) if e.log_target.is_finite() => {
            let new_entry = entry(&candidate, e, k);
            let shifted = memory.shifted(new_entry.clone());
            let reverse_curvature = build_curvature(&shifted, strategy, proposal.delta, empirical_precision);
            let reverse = QnProposal::new(&new_entry, &reverse_curvature, proposal.step_size, proposal.delta);
            let fwd = forward.log_density(&candidate);
            let rev = reverse.log_density(&anchor.theta);
            (mh_accept(e.log_target, anchor.log_target, rev, fwd, u), false)
        }
        Some(_) => (false, false),
        None => (false, true),
    };
    let next = accepted.then(|| State { theta: candidate.clone(), eval: eval.clone().expect("accepted") });
    (Step { candidate, candidate_eval: eval, accepted, corrected, fallback, backend_failure }, next)
}

/// A short pMH0 run with identity covariance whose latter-half sample
/// covariance serves as the pMH preconditioner.
pub fn pilot_run<T: LogTarget + ?Sized>(
    target: &T,
    initial: DVector<f64>,
    iterations: usize,
    step_size: f64,
    seed: u64,
) -> Result<(ChainTrace, DMatrix<f64>), SamplerError> {
    let config = ProposalConfig::pmh0(step_size, None);
    let trace = run_chain(target, &config, &ChainSettings { iterations, burn_in: iterations / 2, seed, initial })?;
    let p = super::pilot_preconditioner(&trace)?;
    Ok((trace, p))
}
