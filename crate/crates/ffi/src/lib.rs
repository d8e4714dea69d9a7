//! C ABI for corona-lab.
//!
//! Measures live behind opaque handles created by `corona_lab_measure_new` or
//! `corona_lab_measure_from_json` and released with `corona_lab_measure_free`.
//! Every fallible call returns a `CoronaLabStatus`; the message of the last
//! failure on the calling thread is available from `corona_lab_last_error`.
//! Strings returned through out-parameters are owned by the caller and must be
//! released with `corona_lab_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use corona_lab::constants::{full_constants, ConstantsConfig};
use corona_lab::explorer::score;
use corona_lab::harness::{full_report, HarnessConfig};
use corona_lab::measure::{parse_measure, Atom, DiscreteMeasure};
use corona_lab::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoronaLabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    CommonAtom = 4,
    NotConverged = 5,
    Internal = 6,
}

/// Opaque measure handle.
pub struct CoronaLabMeasure {
    inner: DiscreteMeasure,
}

/// Constants of a pair. Infinite values are reported as IEEE infinity.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoronaLabConstants {
    pub opnorm: f64,
    pub cchi_forward: f64,
    pub cchi_backward: f64,
    pub cm_forward: f64,
    pub cm_backward: f64,
    pub q: f64,
    pub pq: f64,
    pub pivotal_forward: f64,
    pub pivotal_backward: f64,
    /// 1 when the operator-norm iteration converged.
    pub converged: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CoronaLabStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) => CoronaLabStatus::Parse,
        Error::CommonAtom(_) => CoronaLabStatus::CommonAtom,
        Error::Io(_) => CoronaLabStatus::Internal,
        _ => CoronaLabStatus::InvalidArgument,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (CoronaLabStatus, String)>) -> CoronaLabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CoronaLabStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CoronaLabStatus::Internal
        }
    }
}

fn fail(e: Error) -> (CoronaLabStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CoronaLabStatus, String) {
    (CoronaLabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn measure_ref<'a>(m: *const CoronaLabMeasure, what: &str) -> Result<&'a DiscreteMeasure, (CoronaLabStatus, String)> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null(what))
}

fn boxed(m: DiscreteMeasure) -> *mut CoronaLabMeasure {
    Box::into_raw(Box::new(CoronaLabMeasure { inner: m }))
}

fn depth_ok(depth: u32) -> Result<(), (CoronaLabStatus, String)> {
    if depth > 24 {
        return Err((CoronaLabStatus::InvalidArgument, format!("depth {depth} exceeds 24")));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn corona_lab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn corona_lab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a measure from `len` positions and weights.
///
/// # Safety
/// `positions` and `weights` must point to `len` readable doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn corona_lab_measure_new(
    positions: *const f64,
    weights: *const f64,
    len: usize,
    out: *mut *mut CoronaLabMeasure,
) -> CoronaLabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if positions.is_null() || weights.is_null() {
            return Err(null("positions or weights"));
        }
        let xs = std::slice::from_raw_parts(positions, len);
        let ws = std::slice::from_raw_parts(weights, len);
        let atoms = xs.iter().zip(ws).map(|(&x, &w)| Atom::new(x, w)).collect();
        let m = DiscreteMeasure::new("ffi", atoms).map_err(fail)?;
        *out = boxed(m);
        Ok(())
    })
}

/// Parses a measure file (`{"label": .., "atoms": [{"x": .., "w": ..}]}`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corona_lab_measure_from_json(
    json: *const c_char,
    out: *mut *mut CoronaLabMeasure,
) -> CoronaLabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (CoronaLabStatus::Parse, format!("invalid UTF-8: {e}")))?;
        *out = boxed(parse_measure(text).map_err(fail)?);
        Ok(())
    })
}

/// Releases a measure. Null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn corona_lab_measure_free(m: *mut CoronaLabMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of distinct atoms and total mass.
///
/// # Safety
/// `m` must be a live handle; `len` and `mass` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn corona_lab_measure_info(
    m: *const CoronaLabMeasure,
    len: *mut usize,
    mass: *mut f64,
) -> CoronaLabStatus {
    guard(|| {
        let m = measure_ref(m, "measure")?;
        if let Some(l) = len.as_mut() {
            *l = m.len();
        }
        if let Some(w) = mass.as_mut() {
            *w = m.total_mass();
        }
        Ok(())
    })
}

/// Constants of `(mu, nu)` at the given lattice depth on the unshifted
/// lattice pair. Returns `NotConverged` (with `out` filled) when the
/// operator-norm iteration hit its cap.
///
/// # Safety
/// `mu`, `nu` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corona_lab_constants(
    mu: *const CoronaLabMeasure,
    nu: *const CoronaLabMeasure,
    depth: u32,
    out: *mut CoronaLabConstants,
) -> CoronaLabStatus {
    let mut converged = true;
    let status = guard(|| {
        let (m, n) = (measure_ref(mu, "mu")?, measure_ref(nu, "nu")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        depth_ok(depth)?;
        let cfg = ConstantsConfig { depth, ..ConstantsConfig::default() };
        let c = full_constants(m, n, &cfg).map_err(fail)?;
        *out = CoronaLabConstants {
            opnorm: c.opnorm,
            cchi_forward: c.cchi_forward,
            cchi_backward: c.cchi_backward,
            cm_forward: c.cm_forward,
            cm_backward: c.cm_backward,
            q: c.q,
            pq: c.pq.value,
            pivotal_forward: c.pivotal_forward,
            pivotal_backward: c.pivotal_backward,
            converged: c.opnorm_converged as u8,
        };
        converged = c.opnorm_converged;
        Ok(())
    });
    if status == CoronaLabStatus::Ok && !converged {
        set_error("operator norm iteration did not converge");
        return CoronaLabStatus::NotConverged;
    }
    status
}

/// Explorer score of a disjointly supported pair.
///
/// # Safety
/// `mu`, `nu` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corona_lab_score(
    mu: *const CoronaLabMeasure,
    nu: *const CoronaLabMeasure,
    depth: u32,
    out: *mut f64,
) -> CoronaLabStatus {
    guard(|| {
        let (m, n) = (measure_ref(mu, "mu")?, measure_ref(nu, "nu")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        depth_ok(depth)?;
        let cfg = ConstantsConfig { depth, ..ConstantsConfig::default() };
        *out = score(m, n, &cfg).map_err(fail)?.score;
        Ok(())
    })
}

/// Full verification report as JSON. `samples` sets the ensemble size of the
/// lemma checks. The string must be released with `corona_lab_string_free`.
///
/// # Safety
/// `mu`, `nu` must be live handles; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corona_lab_verify_json(
    mu: *const CoronaLabMeasure,
    nu: *const CoronaLabMeasure,
    depth: u32,
    samples: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> CoronaLabStatus {
    guard(|| {
        let (m, n) = (measure_ref(mu, "mu")?, measure_ref(nu, "nu")?);
        let out = out_json.as_mut().ok_or_else(|| null("out_json"))?;
        *out = ptr::null_mut();
        depth_ok(depth)?;
        let mut cfg = HarnessConfig { ensemble_samples: samples, seed, ..HarnessConfig::default() };
        cfg.constants.depth = depth;
        let report = full_report(m, n, &cfg).map_err(fail)?;
        let text = serde_json::to_string(&report).map_err(|e| fail(e.into()))?;
        *out = CString::new(text).map_err(|e| (CoronaLabStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn corona_lab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
