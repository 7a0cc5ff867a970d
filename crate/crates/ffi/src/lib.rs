//! C interface to the qjet scenario runner.
//!
//! Scenarios and finished runs are opaque handles. Every fallible call returns a
//! [`QjetStatus`]; the message of the last failure on the calling thread is available
//! from [`qjet_last_error`]. Strings returned as `char *` are owned by the caller and
//! released with [`qjet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qjet::cli::{self, RunArgs, RunSummary, Scenario};
use qjet::Error;

/// Status codes; the non-zero run codes match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QjetStatus {
    Ok = 0,
    Failure = 1,
    Config = 2,
    Numerical = 3,
    CheckFailed = 4,
    NullPointer = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

/// A parsed scenario together with pending overrides.
pub struct QjetScenario {
    scenario: Scenario,
    source: String,
    text: String,
    overrides: RunArgs,
}

/// Outcome of a finished run.
pub struct QjetRun {
    summary: RunSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: QjetStatus, msg: impl Into<String>) -> QjetStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> QjetStatus {
    let status = match cli::exit_code(e) {
        cli::EXIT_CONFIG => QjetStatus::Config,
        cli::EXIT_NUMERICAL => QjetStatus::Numerical,
        _ => QjetStatus::Failure,
    };
    fail(status, e.to_string())
}

fn guarded(f: impl FnOnce() -> QjetStatus) -> QjetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == QjetStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(QjetStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, QjetStatus> {
    if p.is_null() {
        return Err(fail(QjetStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(QjetStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

fn owned_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> QjetStatus {
    if out.is_null() {
        return fail(QjetStatus::NullPointer, "null output pointer");
    }
    *out = Box::into_raw(Box::new(value));
    QjetStatus::Ok
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn qjet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qjet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn qjet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a scenario from a TOML path or a built-in name.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_load(spec: *const c_char, out: *mut *mut QjetScenario) -> QjetStatus {
    guarded(|| {
        let spec = try_ffi!(read_str(spec));
        match cli::load_scenario(spec) {
            Ok((scenario, source, text)) => {
                store(out, QjetScenario { scenario, source, text, overrides: RunArgs::default() })
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Parse a scenario from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_parse(text: *const c_char, out: *mut *mut QjetScenario) -> QjetStatus {
    guarded(|| {
        let text = try_ffi!(read_str(text));
        match Scenario::from_toml(text) {
            Ok(scenario) => store(
                out,
                QjetScenario { scenario, source: "ffi".into(), text: text.into(), overrides: RunArgs::default() },
            ),
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_free(scenario: *mut QjetScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

unsafe fn scenario_mut<'a>(p: *mut QjetScenario) -> Result<&'a mut QjetScenario, QjetStatus> {
    p.as_mut().ok_or_else(|| fail(QjetStatus::NullPointer, "null scenario handle"))
}

/// Scenario name; free with `qjet_string_free`.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_name(scenario: *const QjetScenario) -> *mut c_char {
    scenario.as_ref().map_or(ptr::null_mut(), |s| owned_string(&s.scenario.name))
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_set_seed(scenario: *mut QjetScenario, seed: u64) -> QjetStatus {
    guarded(|| {
        try_ffi!(scenario_mut(scenario)).overrides.seed = Some(seed);
        QjetStatus::Ok
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_set_truncation(scenario: *mut QjetScenario, order: u32) -> QjetStatus {
    guarded(|| {
        try_ffi!(scenario_mut(scenario)).overrides.truncation = Some(order);
        QjetStatus::Ok
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_set_dt(scenario: *mut QjetScenario, dt: f64) -> QjetStatus {
    guarded(|| {
        try_ffi!(scenario_mut(scenario)).overrides.dt = Some(dt);
        QjetStatus::Ok
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_set_t_final(scenario: *mut QjetScenario, t_final: f64) -> QjetStatus {
    guarded(|| {
        try_ffi!(scenario_mut(scenario)).overrides.t_final = Some(t_final);
        QjetStatus::Ok
    })
}

/// Run the scenario, writing its outputs and manifest into `output_dir`.
/// A run whose acceptance checks fail still produces a handle and returns
/// `QJET_STATUS_CHECK_FAILED`.
///
/// # Safety
/// `scenario` must be a live handle, `output_dir` a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qjet_scenario_run(
    scenario: *const QjetScenario,
    output_dir: *const c_char,
    out: *mut *mut QjetRun,
) -> QjetStatus {
    guarded(|| {
        let handle = try_ffi!(scenario.as_ref().ok_or_else(|| fail(QjetStatus::NullPointer, "null scenario handle")));
        let dir = try_ffi!(read_str(output_dir));
        if out.is_null() {
            return fail(QjetStatus::NullPointer, "null output pointer");
        }
        let mut s = handle.scenario.clone();
        let overrides = match cli::apply_overrides(&mut s, &handle.overrides) {
            Ok(o) => o,
            Err(e) => return from_error(&e),
        };
        match cli::run_scenario(&s, &handle.source, &handle.text, &overrides, Path::new(dir)) {
            Ok(summary) => {
                let checks_failed = summary.exit_code == cli::EXIT_CHECK_FAILED;
                let status = store(out, QjetRun { summary });
                if checks_failed {
                    fail(QjetStatus::CheckFailed, "acceptance checks failed")
                } else {
                    status
                }
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `run` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn qjet_run_free(run: *mut QjetRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Exit code the command-line tool would report for this run.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_run_exit_code(run: *const QjetRun) -> i32 {
    run.as_ref().map_or(cli::EXIT_OTHER, |r| r.summary.exit_code)
}

/// Number of output files written.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_run_file_count(run: *const QjetRun) -> usize {
    run.as_ref().map_or(0, |r| r.summary.files.len())
}

/// Name of output file `index`, relative to the output directory; free with `qjet_string_free`.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_run_file_name(run: *const QjetRun, index: usize) -> *mut c_char {
    match run.as_ref().and_then(|r| r.summary.files.get(index)) {
        Some(name) => owned_string(name),
        None => {
            set_error("file index out of range");
            ptr::null_mut()
        }
    }
}

/// Run diagnostics as a JSON document; free with `qjet_string_free`.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qjet_run_diagnostics_json(run: *const QjetRun) -> *mut c_char {
    run.as_ref().map_or(ptr::null_mut(), |r| owned_string(&r.summary.diagnostics.to_string()))
}

/// Number of built-in scenarios.
#[no_mangle]
pub extern "C" fn qjet_builtin_count() -> usize {
    cli::BUILTIN.len()
}

/// Name of built-in scenario `index`; free with `qjet_string_free`.
#[no_mangle]
pub extern "C" fn qjet_builtin_name(index: usize) -> *mut c_char {
    match cli::BUILTIN.get(index) {
        Some((name, _)) => owned_string(name),
        None => {
            set_error("built-in index out of range");
            ptr::null_mut()
        }
    }
}
