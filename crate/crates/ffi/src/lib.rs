//! C interface to the verifier.
//!
//! Ensembles are loaded from bundle directories into opaque handles. Every
//! fallible call returns an [`AvStatus`]; on failure a message describing
//! the error is kept per thread and can be copied out with
//! [`av_last_error_message`]. Strings passed in must be NUL-terminated
//! UTF-8.

use std::cell::RefCell;
use std::ffi::CStr;
use std::path::Path;
use std::ptr;

use avprob::bundle::Bundle;
use avprob::ensemble::Ensemble;
use avprob::metrics::{pan_scores, Answer, AnswerSet};
use avprob::Error;
use libc::{c_char, size_t};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad configuration or arguments.
    Usage = 3,
    /// Unreadable or inconsistent input data.
    Data = 4,
    /// Numerical failure inside the model.
    Numeric = 5,
    Panic = 6,
}

/// Opaque ensemble handle.
pub struct AvEnsemble {
    inner: Ensemble,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AvVerdict {
    /// Same-author score in `[0, 1]`; exactly 0.5 for a non-response.
    pub value: f64,
    pub is_nonresponse: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AvScores {
    pub auc: f64,
    pub c_at_1: f64,
    pub f_05_u: f64,
    pub f1: f64,
    pub brier: f64,
    pub overall: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: AvStatus, msg: impl Into<String>) -> AvStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> AvStatus {
    if e.is_numeric() {
        AvStatus::Numeric
    } else if e.is_usage() {
        AvStatus::Usage
    } else {
        AvStatus::Data
    }
}

fn from_error(e: Error) -> AvStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

fn guarded(f: impl FnOnce() -> AvStatus) -> AvStatus {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AvStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AvStatus> {
    if p.is_null() {
        return Err(fail(AvStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AvStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Load the bundle directory at `path` into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer. The
/// handle written to `out` must be released with [`av_ensemble_free`].
#[no_mangle]
pub unsafe extern "C" fn av_ensemble_load(path: *const c_char, out: *mut *mut AvEnsemble) -> AvStatus {
    guarded(|| {
        if out.is_null() {
            return fail(AvStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let ensemble = match Bundle::load(Path::new(path)).and_then(|b| b.ensemble()) {
            Ok(e) => e,
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(AvEnsemble { inner: ensemble }));
        AvStatus::Ok
    })
}

/// Number of ensemble members.
///
/// # Safety
/// `handle` must come from [`av_ensemble_load`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn av_ensemble_len(handle: *const AvEnsemble, out: *mut size_t) -> AvStatus {
    if handle.is_null() || out.is_null() {
        return fail(AvStatus::NullPointer, "handle or out is null");
    }
    *out = (*handle).inner.len();
    AvStatus::Ok
}

/// Score one pair of texts. With `use_detector` false every trial is
/// answered.
///
/// # Safety
/// `handle` must come from [`av_ensemble_load`]; the texts must be
/// NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn av_ensemble_score(
    handle: *const AvEnsemble,
    text1: *const c_char,
    text2: *const c_char,
    use_detector: bool,
    out: *mut AvVerdict,
) -> AvStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            return fail(AvStatus::NullPointer, "handle or out is null");
        }
        let (t1, t2) = match (str_arg(text1, "text1"), str_arg(text2, "text2")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let ens = &(*handle).inner;
        let featurizer = &ens.members[0].featurizer;
        let f1 = featurizer.featurize_text(t1);
        let f2 = featurizer.featurize_text(t2);
        match ens.predict_features(&f1, &f2, use_detector) {
            Ok(v) => {
                *out = AvVerdict {
                    value: v.value,
                    is_nonresponse: v.is_nonresponse,
                };
                AvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `handle` must come from [`av_ensemble_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn av_ensemble_free(handle: *mut AvEnsemble) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Evaluation metrics for `n` answers. `truth[i]` is nonzero for
/// same-author trials; a value of exactly 0.5 is a non-response.
///
/// # Safety
/// `values` and `truth` must point to `n` readable elements; `out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn av_evaluate(
    values: *const f64,
    truth: *const u8,
    n: size_t,
    out: *mut AvScores,
) -> AvStatus {
    guarded(|| {
        if values.is_null() || truth.is_null() || out.is_null() {
            return fail(AvStatus::NullPointer, "values, truth or out is null");
        }
        let values = std::slice::from_raw_parts(values, n);
        let truth = std::slice::from_raw_parts(truth, n);
        let answers = values
            .iter()
            .zip(truth)
            .enumerate()
            .map(|(i, (&value, &t))| Answer {
                id: i.to_string(),
                value,
                truth: t != 0,
            })
            .collect();
        match AnswerSet::new(answers).and_then(|s| pan_scores(&s)) {
            Ok(s) => {
                *out = AvScores {
                    auc: s.auc,
                    c_at_1: s.c_at_1,
                    f_05_u: s.f_05_u,
                    f1: s.f1,
                    brier: s.brier,
                    overall: s.overall,
                };
                AvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Copy the calling thread's last error message into `buf` (truncated and
/// NUL-terminated). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn av_last_error_message(buf: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn av_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
