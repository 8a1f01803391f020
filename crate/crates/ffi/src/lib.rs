//! C ABI for the noonsim simulator.
//!
//! Configurations and results are opaque handles created and released through
//! this API. Every fallible call returns a [`NoonsimStatus`]; on failure the
//! message is available from [`noonsim_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use noonsim::config::Config;
use noonsim::protocol::{run_protocol, SimResult};
use noonsim::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoonsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Invalid configuration or parameters.
    Config = 3,
    /// Integrator or integrity failure during a run.
    Runtime = 4,
    OutOfRange = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Observables at one output time.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoonsimSample {
    pub t_us: f64,
    /// Fidelity with the target state of steps 1, 2 and 3.
    pub fidelity: [f64; 3],
    /// Qudit level populations.
    pub populations: [f64; 5],
    /// Mean photon number in cavities 1 and 2.
    pub nbar: [f64; 2],
    pub leakage: f64,
}

/// Parsed and resolved configuration.
pub struct NoonsimConfig {
    inner: Config,
}

/// Outcome of a run.
pub struct NoonsimResult {
    inner: SimResult,
    warnings: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: NoonsimStatus, msg: impl Into<String>) -> NoonsimStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> NoonsimStatus {
    let status = if e.is_runtime() { NoonsimStatus::Runtime } else { NoonsimStatus::Config };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> NoonsimStatus) -> NoonsimStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(NoonsimStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn noonsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn noonsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a JSON configuration.
///
/// # Safety
/// `json` must be NULL or a NUL-terminated string; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn noonsim_config_from_json(json: *const c_char, out: *mut *mut NoonsimConfig) -> NoonsimStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(NoonsimStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(NoonsimStatus::InvalidUtf8, e.to_string()),
        };
        match Config::from_json(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(NoonsimConfig { inner: cfg }));
                NoonsimStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from [`noonsim_config_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn noonsim_config_free(cfg: *mut NoonsimConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Writes the SHA-256 hex digest of the resolved configuration (64 characters
/// plus NUL) into `buf`, which must hold at least `len` bytes.
///
/// # Safety
/// `cfg` must be a live handle; `buf` must be writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn noonsim_config_hash(cfg: *const NoonsimConfig, buf: *mut c_char, len: usize) -> NoonsimStatus {
    guard(|| {
        if cfg.is_null() || buf.is_null() {
            return fail(NoonsimStatus::NullPointer, "null argument");
        }
        let hash = (*cfg).inner.hash();
        if len < hash.len() + 1 {
            return fail(NoonsimStatus::OutOfRange, format!("buffer of {len} bytes is too small"));
        }
        ptr::copy_nonoverlapping(hash.as_ptr(), buf.cast::<u8>(), hash.len());
        *buf.add(hash.len()) = 0;
        NoonsimStatus::Ok
    })
}

/// Runs the protocol described by `cfg`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn noonsim_run(cfg: *const NoonsimConfig, out: *mut *mut NoonsimResult) -> NoonsimStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return fail(NoonsimStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let cfg = &(*cfg).inner;
        let run = cfg.protocol_params().and_then(|p| run_protocol(&p, &cfg.run_settings()?));
        match run {
            Ok(r) => {
                let warnings = r.warnings.iter().filter_map(|w| CString::new(w.replace('\0', " ")).ok()).collect();
                *out = Box::into_raw(Box::new(NoonsimResult { inner: r, warnings }));
                NoonsimStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `res` must be NULL or a handle from [`noonsim_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn noonsim_result_free(res: *mut NoonsimResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of integrated steps (1 to 3), or 0 for NULL.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn noonsim_result_step_count(res: *const NoonsimResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.at_boundaries.len())
}

/// Fidelity `F_p(τ_p)` for step `step` in 1..=3.
///
/// # Safety
/// `res` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn noonsim_result_step_fidelity(
    res: *const NoonsimResult,
    step: usize,
    out: *mut f64,
) -> NoonsimStatus {
    guard(|| {
        if res.is_null() || out.is_null() {
            return fail(NoonsimStatus::NullPointer, "null argument");
        }
        let f = (*res).inner.step_fidelities();
        match step.checked_sub(1).and_then(|k| f.get(k)) {
            Some(&v) => {
                *out = v;
                NoonsimStatus::Ok
            }
            None => fail(NoonsimStatus::OutOfRange, format!("step {step} not in 1..={}", f.len())),
        }
    })
}

/// Fidelity of the last integrated step at the end of the run.
///
/// # Safety
/// `res` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn noonsim_result_final_fidelity(res: *const NoonsimResult, out: *mut f64) -> NoonsimStatus {
    guard(|| {
        if res.is_null() || out.is_null() {
            return fail(NoonsimStatus::NullPointer, "null argument");
        }
        *out = (*res).inner.final_fidelity();
        NoonsimStatus::Ok
    })
}

/// Number of output samples, or 0 for NULL.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn noonsim_result_sample_count(res: *const NoonsimResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.series.len())
}

/// Copies sample `index` into `out`.
///
/// # Safety
/// `res` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn noonsim_result_sample(
    res: *const NoonsimResult,
    index: usize,
    out: *mut NoonsimSample,
) -> NoonsimStatus {
    guard(|| {
        if res.is_null() || out.is_null() {
            return fail(NoonsimStatus::NullPointer, "null argument");
        }
        let r = &(*res).inner;
        match (r.times.get(index), r.series.get(index)) {
            (Some(&t), Some(o)) => {
                *out = NoonsimSample {
                    t_us: t,
                    fidelity: o.fidelity,
                    populations: o.populations,
                    nbar: o.nbar,
                    leakage: o.leakage,
                };
                NoonsimStatus::Ok
            }
            _ => fail(NoonsimStatus::OutOfRange, format!("sample {index} not below {}", r.series.len())),
        }
    })
}

/// Number of warnings attached to the run, or 0 for NULL.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn noonsim_result_warning_count(res: *const NoonsimResult) -> usize {
    res.as_ref().map_or(0, |r| r.warnings.len())
}

/// Warning `index` as a NUL-terminated string owned by the result, or NULL when out of range.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn noonsim_result_warning(res: *const NoonsimResult, index: usize) -> *const c_char {
    res.as_ref().and_then(|r| r.warnings.get(index)).map_or(ptr::null(), |w| w.as_ptr())
}
