//! C ABI over the `sdbli` toolkit.
//!
//! Handles are opaque and owned by the caller once returned; free each with
//! its matching `_free` function. Every entry point returns an
//! [`SdbliStatus`]; on failure [`sdbli_last_error`] describes the cause on
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sdbli::forward::solve_forward;
use sdbli::solver::{run_sdbli_stream, IterationTrace, StopReason};
use sdbli::{Experiment, ExperimentConfig, GridFunction, GridSpec, NewtonConfig, SdbliError};

/// Status codes. Values 0 to 4 match the `sdbli` command's exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdbliStatus {
    Ok = 0,
    InvariantFailure = 1,
    ConfigError = 2,
    MissingInput = 3,
    SolverFailure = 4,
    /// A required pointer was null or a buffer had the wrong length.
    InvalidArgument = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdbliStopReason {
    Budget = 0,
    APriori = 1,
    Frozen = 2,
}

/// A built experiment: truth, noisy data, surrogates and constants.
pub struct SdbliProblem {
    inner: Experiment,
}

/// The record of one run.
pub struct SdbliTrace {
    inner: IterationTrace,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdbliConstants {
    pub l_f: f64,
    pub l_m: f64,
    pub mu_hat: f64,
    pub c_m_delta: f64,
    pub c_n_hat: f64,
    pub sigma: f64,
    /// Nonzero when the step-size condition holds with these constants.
    pub admissible: i32,
}

/// One iteration. `err_to_truth` is NaN when no truth was attached.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdbliRecord {
    pub k: usize,
    pub i_k: usize,
    pub residual: f64,
    pub omega_k: f64,
    pub lambda_k: f64,
    pub err_to_truth: f64,
    pub ball_exit: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(SdbliStatus, String);

impl From<SdbliError> for Failure {
    fn from(e: SdbliError) -> Self {
        let status = match e {
            SdbliError::Config { .. } => SdbliStatus::ConfigError,
            SdbliError::Parse(_) => SdbliStatus::MissingInput,
            _ => SdbliStatus::SolverFailure,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(SdbliStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SdbliStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SdbliStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SdbliStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn out_slice<'a>(buf: *mut f64, len: usize, want: usize) -> Result<&'a mut [f64], Failure> {
    if buf.is_null() {
        return Err(invalid("output buffer is null"));
    }
    if len != want {
        return Err(invalid(&format!("buffer holds {len} values, expected {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(buf, len))
}

/// Message for the last failure on this thread, or null after a success.
/// The pointer stays valid until the next call into this library from the
/// same thread.
#[no_mangle]
pub extern "C" fn sdbli_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds an experiment from a JSON config document (UTF-8, NUL-terminated).
///
/// # Safety
/// `config_json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdbli_problem_from_config_json(
    config_json: *const c_char,
    out: *mut *mut SdbliProblem,
) -> SdbliStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            return Err(invalid("null argument"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|_| Failure(SdbliStatus::ConfigError, "config is not UTF-8".into()))?;
        let cfg = ExperimentConfig::from_json(text)?;
        let inner = Experiment::build(&cfg)?;
        *out = Box::into_raw(Box::new(SdbliProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`sdbli_problem_from_config_json`] and not be
/// used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sdbli_problem_free(problem: *mut SdbliProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Interior points per axis.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdbli_problem_grid_size(problem: *const SdbliProblem, n: *mut usize) -> SdbliStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        *n.as_mut().ok_or_else(|| invalid("n is null"))? = p.inner.spec().n();
        Ok(())
    })
}

/// Number of equations `P`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdbli_problem_equations(problem: *const SdbliProblem, p: *mut usize) -> SdbliStatus {
    guard(|| {
        let pr = deref(problem, "problem")?;
        *p.as_mut().ok_or_else(|| invalid("p is null"))? = pr.inner.partition.len();
        Ok(())
    })
}

/// Copies the true source (`n*n` values, row-major) into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbli_problem_truth(
    problem: *const SdbliProblem,
    buf: *mut f64,
    len: usize,
) -> SdbliStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        let truth = p.inner.truth().values();
        out_slice(buf, len, truth.len())?.copy_from_slice(truth);
        Ok(())
    })
}

/// Estimated constants and the admissibility verdict.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdbli_problem_constants(
    problem: *const SdbliProblem,
    out: *mut SdbliConstants,
) -> SdbliStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.inner;
        let c = p.constants;
        *out.as_mut().ok_or_else(|| invalid("out is null"))? = SdbliConstants {
            l_f: c.l_f,
            l_m: c.l_m,
            mu_hat: c.mu_hat,
            c_m_delta: c.c_m_delta,
            c_n_hat: c.c_n_hat,
            sigma: p.sigma,
            admissible: i32::from(p.admissibility().step_condition_holds),
        };
        Ok(())
    })
}

/// Runs the iteration on index stream `stream` of the configured seed.
///
/// # Safety
/// `problem` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdbli_run(
    problem: *const SdbliProblem,
    stream: u64,
    out: *mut *mut SdbliTrace,
) -> SdbliStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.inner;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = ptr::null_mut();
        let trace = run_sdbli_stream(&p.u0, &p.problem(), &p.solver_config(), p.delta_total(), stream)?;
        *out = Box::into_raw(Box::new(SdbliTrace { inner: trace }));
        Ok(())
    })
}

/// # Safety
/// `trace` must come from [`sdbli_run`] and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn sdbli_trace_free(trace: *mut SdbliTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of records, one per step taken.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdbli_trace_len(trace: *const SdbliTrace, len: *mut usize) -> SdbliStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        *len.as_mut().ok_or_else(|| invalid("len is null"))? = t.inner.records.len();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdbli_trace_record(
    trace: *const SdbliTrace,
    index: usize,
    out: *mut SdbliRecord,
) -> SdbliStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        let r = t
            .inner
            .records
            .get(index)
            .ok_or_else(|| invalid(&format!("record {index} out of range")))?;
        *out.as_mut().ok_or_else(|| invalid("out is null"))? = SdbliRecord {
            k: r.k,
            i_k: r.i_k,
            residual: r.residual,
            omega_k: r.omega_k,
            lambda_k: r.lambda_k,
            err_to_truth: r.err_to_truth.unwrap_or(f64::NAN),
            ball_exit: i32::from(r.ball_exit),
        };
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdbli_trace_stop(
    trace: *const SdbliTrace,
    reason: *mut SdbliStopReason,
    k_stop: *mut usize,
) -> SdbliStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.inner;
        *reason.as_mut().ok_or_else(|| invalid("reason is null"))? = match t.stop_reason {
            StopReason::Budget => SdbliStopReason::Budget,
            StopReason::APriori => SdbliStopReason::APriori,
            StopReason::Frozen => SdbliStopReason::Frozen,
        };
        if let Some(k) = k_stop.as_mut() {
            *k = t.k_stop;
        }
        Ok(())
    })
}

/// Copies the final iterate into `buf` (`n*n` values).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbli_trace_final_u(trace: *const SdbliTrace, buf: *mut f64, len: usize) -> SdbliStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        let u = t.inner.final_u.values();
        out_slice(buf, len, u.len())?.copy_from_slice(u);
        Ok(())
    })
}

/// Solves the state equation for source `u` on the `n × n` interior grid,
/// writing the state into `y` (both `n*n` values, row-major).
///
/// # Safety
/// `u` and `y` must hold `n*n` doubles each and may not overlap.
#[no_mangle]
pub unsafe extern "C" fn sdbli_forward_solve(n: usize, u: *const f64, y: *mut f64) -> SdbliStatus {
    guard(|| {
        if u.is_null() {
            return Err(invalid("u is null"));
        }
        let spec = GridSpec::new(n).map_err(|e| Failure(SdbliStatus::InvalidArgument, e.to_string()))?;
        let src = GridFunction::from_values(spec, std::slice::from_raw_parts(u, spec.len()).to_vec())
            .map_err(|e| Failure(SdbliStatus::InvalidArgument, e.to_string()))?;
        let state = solve_forward(&src, &NewtonConfig::default())?;
        out_slice(y, spec.len(), spec.len())?.copy_from_slice(state.y.values());
        Ok(())
    })
}
