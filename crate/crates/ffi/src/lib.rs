//! C ABI for `qnmh`.
//!
//! Objects are opaque handles created by `qnmh_*_new`/`qnmh_*_simulate`
//! style constructors and released with the matching `qnmh_*_free`.
//! Every fallible call returns a [`QnmhStatus`]; on failure the message is
//! kept per thread and read with [`qnmh_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::DVector;

use qnmh::commands::{self, CommandError};
use qnmh::config::{BackendKind, ConfigError, ExperimentConfig};
use qnmh::models::{DataSet, Model, ModelKind, ParameterVector};
use qnmh::sampler::{run_chain, ChainTrace};
use qnmh::target::{Backend, EvalKey, LogTarget, SsmTarget};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnmhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Config = 4,
    Model = 5,
    Target = 6,
    Sampler = 7,
    Diagnostics = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnmhModel {
    Lgss = 0,
    Sv = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnmhBackend {
    Kalman = 0,
    Particle = 1,
}

impl From<QnmhModel> for ModelKind {
    fn from(m: QnmhModel) -> Self {
        match m {
            QnmhModel::Lgss => ModelKind::Lgss,
            QnmhModel::Sv => ModelKind::Sv,
        }
    }
}

/// Observations `y_1..y_T`, optionally with the simulated states.
pub struct QnmhDataSet(DataSet);

/// Log-posterior of a model's parameters given a data set.
pub struct QnmhTarget(SsmTarget);

/// Output of one chain.
pub struct QnmhTrace(ChainTrace);

struct Failure(QnmhStatus, String);

impl From<CommandError> for Failure {
    fn from(e: CommandError) -> Self {
        let status = match &e {
            CommandError::Config(_) | CommandError::Input(_) => QnmhStatus::Config,
            CommandError::Model(_) => QnmhStatus::Model,
            CommandError::Target(_) => QnmhStatus::Target,
            CommandError::Sampler(_) => QnmhStatus::Sampler,
            CommandError::Diagnostics(_) => QnmhStatus::Diagnostics,
            CommandError::Io { .. } => QnmhStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

macro_rules! impl_failure {
    ($($t:ty => $s:ident),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure(QnmhStatus::$s, e.to_string())
            }
        })*
    };
}

impl_failure!(
    ConfigError => Config,
    qnmh::models::ModelError => Model,
    qnmh::target::TargetError => Target,
    qnmh::sampler::SamplerError => Sampler,
    qnmh::diagnostics::DiagnosticsError => Diagnostics
);

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(QnmhStatus::InvalidArgument, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QnmhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QnmhStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            QnmhStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure(QnmhStatus::NullPointer, "null input buffer".into()));
    }
    // SAFETY: caller provides `len` readable elements at `ptr`.
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

unsafe fn handle<'a, T>(ptr: *const T) -> Result<&'a T, Failure> {
    // SAFETY: non-null handles come from this library and are still alive.
    unsafe { ptr.as_ref() }.ok_or_else(|| Failure(QnmhStatus::NullPointer, "null handle".into()))
}

unsafe fn out_ref<'a, T>(ptr: *mut T) -> Result<&'a mut T, Failure> {
    // SAFETY: caller provides a writable location.
    unsafe { ptr.as_mut() }.ok_or_else(|| Failure(QnmhStatus::NullPointer, "null output pointer".into()))
}

unsafe fn string<'a>(ptr: *const c_char) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(QnmhStatus::NullPointer, "null string".into()));
    }
    // SAFETY: caller provides a nul-terminated string.
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| invalid("string is not UTF-8"))
}

/// Copies `values` into `buf` when `cap` suffices; `*len` always receives the
/// required length.
unsafe fn fill<T: Copy>(values: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), Failure> {
    if !len.is_null() {
        // SAFETY: checked non-null; caller provides a writable location.
        unsafe { *len = values.len() };
    }
    if buf.is_null() {
        return if cap == 0 { Ok(()) } else { Err(Failure(QnmhStatus::NullPointer, "null output buffer".into())) };
    }
    if cap < values.len() {
        return Err(Failure(QnmhStatus::BufferTooSmall, format!("buffer holds {cap} values, {} needed", values.len())));
    }
    // SAFETY: `buf` has room for `cap >= values.len()` elements.
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qnmh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn qnmh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Simulates `steps` observations from `model` at natural parameters `theta`.
///
/// # Safety
/// `theta` holds `dim` values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qnmh_dataset_simulate(
    model: QnmhModel,
    theta: *const f64,
    dim: usize,
    steps: usize,
    seed: u64,
    out: *mut *mut QnmhDataSet,
) -> QnmhStatus {
    guard(|| {
        let theta = unsafe { slice(theta, dim)? };
        let target = unsafe { out_ref(out)? };
        let data = Model::default_for(model.into()).simulate(&ParameterVector::natural(theta), steps, seed)?;
        *target = Box::into_raw(Box::new(QnmhDataSet(data)));
        Ok(())
    })
}

/// Wraps `len` observations.
///
/// # Safety
/// `y` holds `len` values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qnmh_dataset_new(y: *const f64, len: usize, out: *mut *mut QnmhDataSet) -> QnmhStatus {
    guard(|| {
        let y = unsafe { slice(y, len)? };
        let target = unsafe { out_ref(out)? };
        *target = Box::into_raw(Box::new(QnmhDataSet(DataSet::observations_only(y.to_vec())?)));
        Ok(())
    })
}

/// Number of observations, 0 for a null handle.
///
/// # Safety
/// `data` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qnmh_dataset_len(data: *const QnmhDataSet) -> usize {
    unsafe { data.as_ref() }.map_or(0, |d| d.0.len())
}

/// Copies the observations into `buf`; `*len` receives the count.
///
/// # Safety
/// `data` is a live handle; `buf` has room for `cap` values; `len` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn qnmh_dataset_observations(
    data: *const QnmhDataSet,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> QnmhStatus {
    guard(|| unsafe { fill(handle(data)?.0.observations(), buf, cap, len) })
}

/// # Safety
/// `data` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qnmh_dataset_free(data: *mut QnmhDataSet) {
    if !data.is_null() {
        // SAFETY: created by `Box::into_raw` in this library.
        drop(unsafe { Box::from_raw(data) });
    }
}

/// Posterior target for `model` on `data`. `particles` and `lag` are used by
/// the particle backend only.
///
/// # Safety
/// `data` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qnmh_target_new(
    model: QnmhModel,
    data: *const QnmhDataSet,
    backend: QnmhBackend,
    particles: usize,
    lag: usize,
    out: *mut *mut QnmhTarget,
) -> QnmhStatus {
    guard(|| {
        let data = unsafe { handle(data)? };
        let target = unsafe { out_ref(out)? };
        let backend = match backend {
            QnmhBackend::Kalman => Backend::Kalman,
            QnmhBackend::Particle => Backend::Particle { particles, lag },
        };
        let t = SsmTarget::new(Model::default_for(model.into()), data.0.clone(), backend)?;
        *target = Box::into_raw(Box::new(QnmhTarget(t)));
        Ok(())
    })
}

/// Parameter dimension, 0 for a null handle.
///
/// # Safety
/// `target` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qnmh_target_dim(target: *const QnmhTarget) -> usize {
    unsafe { target.as_ref() }.map_or(0, |t| t.0.dim())
}

/// Log-target at unconstrained `theta_bar`. When `gradient` is non-null it
/// receives `dim` values (NaN where the density is zero). `seed` drives the
/// particle backend.
///
/// # Safety
/// `target` is a live handle; `theta_bar` holds `dim` values; `log_target`
/// is writable; `gradient` is null or has room for `dim` values.
#[no_mangle]
pub unsafe extern "C" fn qnmh_target_evaluate(
    target: *const QnmhTarget,
    theta_bar: *const f64,
    dim: usize,
    seed: u64,
    log_target: *mut f64,
    gradient: *mut f64,
) -> QnmhStatus {
    guard(|| {
        let t = unsafe { handle(target)? };
        if dim != t.0.dim() {
            return Err(invalid(format!("expected {} parameters, got {dim}", t.0.dim())));
        }
        let u = DVector::from_column_slice(unsafe { slice(theta_bar, dim)? });
        let lt = unsafe { out_ref(log_target)? };
        let eval = t.0.evaluate(&u, !gradient.is_null(), EvalKey { seed, stream: 0 })?;
        *lt = eval.log_target;
        if !gradient.is_null() {
            let g = eval.gradient.map_or_else(|| vec![f64::NAN; dim], |g| g.as_slice().to_vec());
            unsafe { fill(&g, gradient, dim, std::ptr::null_mut())? };
        }
        Ok(())
    })
}

/// # Safety
/// `target` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qnmh_target_free(target: *mut QnmhTarget) {
    if !target.is_null() {
        // SAFETY: created by `Box::into_raw` in this library.
        drop(unsafe { Box::from_raw(target) });
    }
}

/// Runs one chain on `target` with the proposal and chain settings of a
/// `qnmh` TOML config (keys not given take their defaults; `data` is
/// ignored). pMH proposals run their pilot chain first.
///
/// # Safety
/// `target` is a live handle; `config_toml` is a nul-terminated string;
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qnmh_run_chain(
    target: *const QnmhTarget,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut QnmhTrace,
) -> QnmhStatus {
    guard(|| {
        let t = unsafe { handle(target)? };
        let text = unsafe { string(config_toml)? };
        let dest = unsafe { out_ref(out)? };
        let mut cfg = ExperimentConfig::from_toml_str(text)?;
        if cfg.model != t.0.model().kind() {
            return Err(invalid(format!("config model {} does not match the target", cfg.model)));
        }
        cfg.backend = match t.0.backend() {
            Backend::Kalman => BackendKind::Kalman,
            Backend::Particle { particles, lag } => {
                cfg.particles = particles;
                cfg.lag = lag;
                BackendKind::Particle
            }
        };
        let kind = cfg.proposal_kind()?;
        let proposal = commands::prepared_proposal(&cfg, &t.0, kind, cfg.backend, &mut None)?;
        let trace = run_chain(&t.0, &proposal, &commands::chain_settings(&cfg, seed)?)?;
        *dest = Box::into_raw(Box::new(QnmhTrace(trace)));
        Ok(())
    })
}

/// Number of records (iterations), 0 for a null handle.
///
/// # Safety
/// `trace` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qnmh_trace_len(trace: *const QnmhTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.0.len())
}

/// Parameter dimension, 0 for a null handle.
///
/// # Safety
/// `trace` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qnmh_trace_dim(trace: *const QnmhTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.0.dim())
}

/// Natural-coordinate states, row-major `len x dim`.
///
/// # Safety
/// `trace` is a live handle; `buf` has room for `cap` values; `len` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn qnmh_trace_states(trace: *const QnmhTrace, buf: *mut f64, cap: usize, len: *mut usize) -> QnmhStatus {
    guard(|| {
        let t = unsafe { handle(trace)? };
        let v: Vec<f64> = t.0.records.iter().flat_map(|r| r.natural.iter().copied()).collect();
        unsafe { fill(&v, buf, cap, len) }
    })
}

/// Log-target of each state.
///
/// # Safety
/// As [`qnmh_trace_states`].
#[no_mangle]
pub unsafe extern "C" fn qnmh_trace_log_target(
    trace: *const QnmhTrace,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> QnmhStatus {
    guard(|| {
        let t = unsafe { handle(trace)? };
        let v: Vec<f64> = t.0.records.iter().map(|r| r.log_target).collect();
        unsafe { fill(&v, buf, cap, len) }
    })
}

/// Acceptance indicator (0 or 1) of each iteration.
///
/// # Safety
/// As [`qnmh_trace_states`].
#[no_mangle]
pub unsafe extern "C" fn qnmh_trace_accepted(trace: *const QnmhTrace, buf: *mut u8, cap: usize, len: *mut usize) -> QnmhStatus {
    guard(|| {
        let t = unsafe { handle(trace)? };
        let v: Vec<u8> = t.0.records.iter().map(|r| u8::from(r.accepted)).collect();
        unsafe { fill(&v, buf, cap, len) }
    })
}

/// Post-burn-in acceptance rate, NaN for a null handle.
///
/// # Safety
/// `trace` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qnmh_trace_acceptance_rate(trace: *const QnmhTrace) -> f64 {
    unsafe { trace.as_ref() }.map_or(f64::NAN, |t| t.0.acceptance_rate())
}

/// Writes the trace CSV (`time_us` included only when `record_timing` is non-zero).
///
/// # Safety
/// `trace` is a live handle; `path` is a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qnmh_trace_write_csv(trace: *const QnmhTrace, path: *const c_char, record_timing: u8) -> QnmhStatus {
    guard(|| {
        let t = unsafe { handle(trace)? };
        let path = Path::new(unsafe { string(path)? });
        qnmh::io::write_with(path, |w| t.0.write_csv(w, record_timing != 0).map_err(qnmh::io::csv_error))
            .map_err(|e| Failure(QnmhStatus::Io, format!("{}: {e}", path.display())))
    })
}

/// # Safety
/// `trace` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qnmh_trace_free(trace: *mut QnmhTrace) {
    if !trace.is_null() {
        // SAFETY: created by `Box::into_raw` in this library.
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Inefficiency factor of a series of `len` values.
///
/// # Safety
/// `series` holds `len` values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qnmh_iact(series: *const f64, len: usize, out: *mut f64) -> QnmhStatus {
    guard(|| {
        let x = unsafe { slice(series, len)? };
        let dest = unsafe { out_ref(out)? };
        *dest = qnmh::diagnostics::iact(x)?;
        Ok(())
    })
}
