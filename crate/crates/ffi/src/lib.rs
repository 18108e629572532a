//! C interface to jointkern.
//!
//! Models are opaque `JkModel` handles. Every fallible call returns a
//! `JkStatus` whose values match the command-line exit codes; on failure
//! the message is available from `jk_last_error` until the next call on
//! the same thread. Strings returned through out-pointers are owned by the
//! caller and released with `jk_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use jointkern::cli::{CliError, Session};
use jointkern::codec::{decode_trace, decode_uniforms, encode_uniforms, trace_record};
use jointkern::model::{parse_model, Model};
use jointkern::rng::derive_seed;
use serde_json::Value as Json;

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JkStatus {
    Ok = 0,
    AuditFailed = 1,
    Usage = 2,
    Syntax = 3,
    Eval = 4,
    Validation = 5,
    Internal = 6,
}

/// A loaded model and its current interventions.
pub struct JkModel {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status(e: &CliError) -> JkStatus {
    match e.exit_code() {
        1 => JkStatus::AuditFailed,
        2 => JkStatus::Usage,
        3 => JkStatus::Syntax,
        4 => JkStatus::Eval,
        5 => JkStatus::Validation,
        _ => JkStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<JkStatus, CliError>) -> JkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status(&e)
        }
        Err(_) => {
            set_error("internal error".into());
            JkStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, CliError> {
    if p.is_null() {
        return Err(CliError::Usage(format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| CliError::Usage(format!("{what} is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, CliError> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn model<'a>(m: *const JkModel) -> Result<&'a JkModel, CliError> {
    m.as_ref().ok_or_else(|| CliError::Usage("model handle is null".into()))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<JkStatus, CliError> {
    if out.is_null() {
        return Err(CliError::Usage("output pointer is null".into()));
    }
    *out = CString::new(s).map_err(|_| CliError::Eval("output contains a nul byte".into()))?.into_raw();
    Ok(JkStatus::Ok)
}

fn parse_json(s: &str, what: &str) -> Result<Json, CliError> {
    serde_json::from_str(s).map_err(|e| CliError::Syntax(format!("{what}: {e}")))
}

unsafe fn put_model(out: *mut *mut JkModel, m: Model) -> Result<JkStatus, CliError> {
    if out.is_null() {
        return Err(CliError::Usage("output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(JkModel { session: Session::new(m) }));
    Ok(JkStatus::Ok)
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jk_model_load(path: *const c_char, out: *mut *mut JkModel) -> JkStatus {
    guard(|| {
        let m = parse_model(Path::new(text(path, "path")?))?;
        put_model(out, m)
    })
}

/// Parses a model from JSON text.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jk_model_from_json(json: *const c_char, out: *mut *mut JkModel) -> JkStatus {
    guard(|| {
        let m = Model::from_text(text(json, "model")?)?;
        put_model(out, m)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `m` must come from `jk_model_load` or `jk_model_from_json` and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jk_model_free(m: *mut JkModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Forces box `box_id` to the JSON value `value` in later calls.
///
/// # Safety
/// `m` must be a live handle; the strings must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn jk_model_intervene(m: *mut JkModel, box_id: *const c_char, value: *const c_char) -> JkStatus {
    guard(|| {
        let m = m.as_mut().ok_or_else(|| CliError::Usage("model handle is null".into()))?;
        m.session.assign(text(box_id, "box id")?, text(value, "value")?)?;
        Ok(JkStatus::Ok)
    })
}

/// Removes all interventions.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn jk_model_clear_interventions(m: *mut JkModel) {
    if let Some(m) = m.as_mut() {
        m.session.clear_interventions();
    }
}

/// Draws `n` sample records as JSON lines. `input` may be null for models
/// without inputs.
///
/// # Safety
/// `m` must be a live handle, `input` null or nul-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn jk_sample_jsonl(m: *const JkModel, n: u64, seed: u64, input: *const c_char, out: *mut *mut c_char) -> JkStatus {
    guard(|| {
        let s = &model(m)?.session;
        let k = s.kernel()?;
        let z = s.input(&k, opt_text(input, "input")?)?;
        let mut lines = String::new();
        for i in 0..n {
            let (t, x) = k.sample_with_trace(&z, derive_seed(seed, i))?;
            let lp = k.joint_log_density(&z, &t)?;
            lines.push_str(&trace_record(&k, &t, &x, Some(lp)));
            lines.push('\n');
        }
        put_string(out, lines)
    })
}

/// Joint log density of a trace, given as a record or a bare trace object.
///
/// # Safety
/// `m` must be a live handle, strings nul-terminated or null where allowed,
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn jk_logpdf(m: *const JkModel, trace: *const c_char, input: *const c_char, out: *mut f64) -> JkStatus {
    guard(|| {
        let s = &model(m)?.session;
        let k = s.kernel()?;
        let z = s.input(&k, opt_text(input, "input")?)?;
        let j = parse_json(text(trace, "trace")?, "trace")?;
        let t = decode_trace(&k, j.get("trace").unwrap_or(&j)).map_err(|e| CliError::Eval(e.to_string()))?;
        let lp = k.joint_log_density(&z, &t)?;
        if out.is_null() {
            return Err(CliError::Usage("output pointer is null".into()));
        }
        *out = lp;
        Ok(JkStatus::Ok)
    })
}

/// Uniforms that reproduce a trace, as a JSON object keyed by box.
///
/// # Safety
/// As for `jk_logpdf`.
#[no_mangle]
pub unsafe extern "C" fn jk_abduct(m: *const JkModel, trace: *const c_char, input: *const c_char, out: *mut *mut c_char) -> JkStatus {
    guard(|| {
        let s = &model(m)?.session;
        let k = s.kernel()?;
        let z = s.input(&k, opt_text(input, "input")?)?;
        let j = parse_json(text(trace, "trace")?, "trace")?;
        let t = decode_trace(&k, j.get("trace").unwrap_or(&j)).map_err(|e| CliError::Eval(e.to_string()))?;
        if k.joint_log_density(&z, &t)? == f64::NEG_INFINITY {
            return Err(CliError::Eval("trace has zero density".into()));
        }
        put_string(out, encode_uniforms(&k.abduct(&z, &t)?))
    })
}

/// Replays uniforms through the intervened model, writing the resulting
/// record.
///
/// # Safety
/// As for `jk_logpdf`.
#[no_mangle]
pub unsafe extern "C" fn jk_counterfactual(m: *const JkModel, uniforms: *const c_char, input: *const c_char, out: *mut *mut c_char) -> JkStatus {
    guard(|| {
        let s = &model(m)?.session;
        let k = s.kernel()?;
        let z = s.input(&k, opt_text(input, "input")?)?;
        let j = parse_json(text(uniforms, "uniforms")?, "uniforms")?;
        let mut u = decode_uniforms(&j).map_err(|e| CliError::Eval(e.to_string()))?;
        u.retain(|id, _| !s.intervention().contains_key(id));
        let (t, x) = k.replay(&z, &u)?;
        put_string(out, trace_record(&k, &t, &x, None))
    })
}

/// Runs the audit and writes its JSON report. Returns `AuditFailed` with
/// the report written when a test fails.
///
/// # Safety
/// `m` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn jk_spw(m: *const JkModel, n: u64, seed: u64, out: *mut *mut c_char) -> JkStatus {
    guard(|| {
        let report = model(m)?.session.spw_report(n as usize, seed)?;
        let passed = report.passed();
        put_string(out, serde_json::to_string(&report).expect("reports serialize"))?;
        if !passed {
            set_error("audit failed".into());
        }
        Ok(if passed { JkStatus::Ok } else { JkStatus::AuditFailed })
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call.
#[no_mangle]
pub extern "C" fn jk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
