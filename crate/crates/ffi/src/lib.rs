//! C ABI over the `edgedisp` library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free`. Every fallible call returns an [`EdStatus`]; on
//! failure [`ed_last_error`] describes the problem until the next call on
//! the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use edgedisp::harness::{generate_instance, GeneratorSpec};
use edgedisp::model::{GlobalState, ValidatedInstance};
use edgedisp::policy::{make_policy, selfish_actions};
use edgedisp::sim::{run, RunOutput};
use edgedisp::valuefn::approx_value;
use edgedisp::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    UnknownPolicy = 6,
    BudgetExceeded = 7,
    SchemaVersion = 8,
    Panic = 99,
}

/// A validated problem instance.
pub struct EdInstance(Arc<ValidatedInstance>);

/// The recorded output of one simulation run.
pub struct EdRun(RunOutput);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EdDims {
    pub num_aps: usize,
    pub num_servers: usize,
    pub num_job_types: usize,
    pub slots_per_interval: usize,
    pub max_queue_len: usize,
    pub discount: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EdRunSummary {
    pub intervals: u64,
    pub mean_cost: f64,
    pub mean_jobs_in_system: f64,
    pub mean_response_intervals: f64,
    pub mean_response_slots: f64,
    pub drop_rate: f64,
    pub arrivals: u64,
    pub completions: u64,
    pub drops: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> EdStatus {
    match err {
        Error::Io(_) => EdStatus::Io,
        Error::Json(_) | Error::Csv(_) | Error::Parse { .. } => EdStatus::Parse,
        Error::UnknownPolicy(_) => EdStatus::UnknownPolicy,
        Error::BudgetExceeded { .. } => EdStatus::BudgetExceeded,
        Error::SchemaVersion { .. } => EdStatus::SchemaVersion,
        _ => EdStatus::InvalidArgument,
    }
}

/// Runs `body`, turning errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), (EdStatus, String)>) -> EdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            EdStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside edgedisp");
            EdStatus::Panic
        }
    }
}

fn lib(err: Error) -> (EdStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (EdStatus, String) {
    (EdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, (EdStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| (EdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn instance<'a>(ptr: *const EdInstance) -> Result<&'a EdInstance, (EdStatus, String)> {
    // SAFETY: non-null handles come from this library.
    unsafe { ptr.as_ref() }.ok_or_else(|| null("instance"))
}

/// Message for the last failed call on this thread; empty after success.
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ed_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ed_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates an instance JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ed_instance_load(path: *const c_char, out: *mut *mut EdInstance) -> EdStatus {
    guard(|| {
        let path = unsafe { text(path, "path") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = ValidatedInstance::load(Path::new(path)).map_err(lib)?;
        unsafe { *out = Box::into_raw(Box::new(EdInstance(Arc::new(inst)))) };
        Ok(())
    })
}

/// Parses and validates an instance from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ed_instance_from_json(json: *const c_char, out: *mut *mut EdInstance) -> EdStatus {
    guard(|| {
        let json = unsafe { text(json, "json") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = ValidatedInstance::from_json(json).map_err(lib)?;
        unsafe { *out = Box::into_raw(Box::new(EdInstance(Arc::new(inst)))) };
        Ok(())
    })
}

/// Generates the default synthetic benchmark instance for `seed`.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ed_instance_generate(seed: u64, out: *mut *mut EdInstance) -> EdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = generate_instance(&GeneratorSpec { seed, ..GeneratorSpec::default() }).map_err(lib)?;
        unsafe { *out = Box::into_raw(Box::new(EdInstance(Arc::new(inst)))) };
        Ok(())
    })
}

/// # Safety
/// `inst` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ed_instance_free(inst: *mut EdInstance) {
    if !inst.is_null() {
        drop(unsafe { Box::from_raw(inst) });
    }
}

/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ed_instance_dims(inst: *const EdInstance, out: *mut EdDims) -> EdStatus {
    guard(|| {
        let inst = unsafe { instance(inst) }?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let cfg = inst.0.config();
        *out = EdDims {
            num_aps: cfg.num_aps,
            num_servers: cfg.num_servers,
            num_job_types: cfg.num_job_types,
            slots_per_interval: cfg.slots_per_interval,
            max_queue_len: cfg.max_queue_len,
            discount: cfg.discount,
        };
        Ok(())
    })
}

/// Approximate discounted cost of holding the selfish table from the
/// empty state.
///
/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ed_approx_value_empty(inst: *const EdInstance, out: *mut f64) -> EdStatus {
    guard(|| {
        let inst = unsafe { instance(inst) }?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let actions = selfish_actions(&inst.0);
        *out = approx_value(&GlobalState::empty(&inst.0, &actions), &actions, &inst.0).map_err(lib)?.total;
        Ok(())
    })
}

/// Simulates `intervals` broadcast intervals under the named policy
/// (`static`, `random`, `selfish`, `queue_aware` or `mdp`).
///
/// # Safety
/// `inst` must be a live handle, `policy` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ed_simulate(
    inst: *const EdInstance,
    policy: *const c_char,
    intervals: u64,
    seed: u64,
    out: *mut *mut EdRun,
) -> EdStatus {
    guard(|| {
        let inst = unsafe { instance(inst) }?;
        let name = unsafe { text(policy, "policy") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut pol = make_policy(name, Arc::clone(&inst.0), seed).map_err(lib)?;
        let result = run(&inst.0, pol.as_mut(), intervals as usize, seed).map_err(lib)?;
        unsafe { *out = Box::into_raw(Box::new(EdRun(result))) };
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ed_run_summary(run: *const EdRun, out: *mut EdRunSummary) -> EdStatus {
    guard(|| {
        let run = unsafe { run.as_ref() }.ok_or_else(|| null("run"))?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let s = run.0.summary();
        *out = EdRunSummary {
            intervals: s.intervals,
            mean_cost: s.cost.mean,
            mean_jobs_in_system: s.jobs_in_system.mean,
            mean_response_intervals: s.response_intervals.mean,
            mean_response_slots: s.response_slots.mean,
            drop_rate: s.drop_rate,
            arrivals: s.total_arrivals,
            completions: s.total_completions,
            drops: s.total_drops,
        };
        Ok(())
    })
}

/// Copies up to `capacity` per-interval costs into `buf` and stores the
/// total number available in `len`. Pass `buf = NULL` to query the length.
///
/// # Safety
/// `run` must be a live handle, `buf` null or valid for `capacity`
/// doubles, and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn ed_run_costs(run: *const EdRun, buf: *mut f64, capacity: usize, len: *mut usize) -> EdStatus {
    guard(|| {
        let run = unsafe { run.as_ref() }.ok_or_else(|| null("run"))?;
        let len = unsafe { len.as_mut() }.ok_or_else(|| null("len"))?;
        let costs = run.0.costs();
        *len = costs.len();
        if !buf.is_null() {
            let n = capacity.min(costs.len());
            // SAFETY: caller guarantees `buf` holds `capacity` doubles.
            unsafe { std::ptr::copy_nonoverlapping(costs.as_ptr(), buf, n) };
        }
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ed_run_free(run: *mut EdRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}
