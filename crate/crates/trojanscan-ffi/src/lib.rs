//! C ABI for the Trojan detector.
//!
//! Bindings follow the usual opaque-handle pattern: constructors return a
//! status code and write a pointer through an out-parameter; every handle
//! has a matching `_free`; per-thread error text is available through
//! [`ts_last_error_message`].
//!
//! The generated header lands in `include/trojanscan.h` when this crate is
//! built.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use trojanscan::artifacts;
use trojanscan::diffnet::{Network, Tensor};
use trojanscan::mntd::{compute_auc, BlackBox, MetaState};
use trojanscan::Error;

/// Status code returned by every fallible binding.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    TsOk = 0,
    TsNullPointer = 1,
    TsInvalidArgument = 2,
    TsShapeMismatch = 3,
    TsIoError = 4,
    TsParseError = 5,
    TsNonFinite = 6,
    TsPanic = 7,
}

/// Opaque task network handle.
pub struct TsModel {
    inner: Network,
}

/// Opaque detector handle (queries + meta-classifier).
pub struct TsMetaState {
    inner: MetaState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn remember_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> TsStatus {
    match err {
        Error::Shape(_) => TsStatus::TsShapeMismatch,
        Error::InvalidInput(_) => TsStatus::TsInvalidArgument,
        Error::NonFinite(_) => TsStatus::TsNonFinite,
        Error::Io { .. } => TsStatus::TsIoError,
        Error::Parse { .. } => TsStatus::TsParseError,
    }
}

fn fail(err: Error) -> TsStatus {
    remember_error(&err.to_string());
    status_of(&err)
}

fn null_pointer(what: &str) -> TsStatus {
    remember_error(&format!("{what} must not be null"));
    TsStatus::TsNullPointer
}

/// Run a closure, translating panics into `TsPanic` instead of unwinding
/// across the ABI.
fn guarded(f: impl FnOnce() -> TsStatus) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            remember_error("internal panic");
            TsStatus::TsPanic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, TsStatus> {
    if ptr.is_null() {
        return Err(null_pointer(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        remember_error(&format!("{what} is not valid UTF-8"));
        TsStatus::TsInvalidArgument
    })
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message for the most recent error on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

fn write_model(out: *mut *mut TsModel, net: Network) -> TsStatus {
    let handle = Box::new(TsModel { inner: net });
    unsafe { *out = Box::into_raw(handle) };
    TsStatus::TsOk
}

/// Load a model file (JSON) from `path`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer;
/// on success the caller owns the handle and must release it with
/// [`ts_model_free`].
#[no_mangle]
pub unsafe extern "C" fn ts_model_load(path: *const c_char, out: *mut *mut TsModel) -> TsStatus {
    guarded(|| {
        if out.is_null() {
            return null_pointer("out");
        }
        let path = match cstr_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match artifacts::read_model(Path::new(path)) {
            Ok(net) => write_model(out, net),
            Err(e) => fail(e),
        }
    })
}

/// Parse a model from a JSON string.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer;
/// the returned handle is released with [`ts_model_free`].
#[no_mangle]
pub unsafe extern "C" fn ts_model_from_json(
    json: *const c_char,
    out: *mut *mut TsModel,
) -> TsStatus {
    guarded(|| {
        if out.is_null() {
            return null_pointer("out");
        }
        let json = match cstr_arg(json, "json") {
            Ok(j) => j,
            Err(status) => return status,
        };
        match artifacts::model_from_json(json, "json argument") {
            Ok(net) => write_model(out, net),
            Err(e) => fail(e),
        }
    })
}

/// Release a model handle; a null pointer is a no-op.
///
/// # Safety
/// `model` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_model_free(model: *mut TsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input width of the model, or 0 on a null handle.
///
/// # Safety
/// `model` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn ts_model_input_dim(model: *const TsModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim())
}

/// Number of classes, or 0 on a null handle.
///
/// # Safety
/// `model` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn ts_model_num_classes(model: *const TsModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.output_dim())
}

/// Class probabilities for one input vector.
///
/// `input_len` must equal the model's input width and `probs_len` the class
/// count.
///
/// # Safety
/// `model` must be a live handle; `input` must point to `input_len`
/// readable doubles and `probs_out` to `probs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_model_predict(
    model: *const TsModel,
    input: *const f64,
    input_len: usize,
    probs_out: *mut f64,
    probs_len: usize,
) -> TsStatus {
    guarded(|| {
        let model = match model.as_ref() {
            Some(m) => m,
            None => return null_pointer("model"),
        };
        if input.is_null() || probs_out.is_null() {
            return null_pointer("input/probs_out");
        }
        let c = model.inner.output_dim();
        if probs_len != c {
            return fail(Error::shape(format!(
                "probs_len {probs_len} does not match class count {c}"
            )));
        }
        let data = std::slice::from_raw_parts(input, input_len).to_vec();
        let batch = match Tensor::from_vec(&[1, input_len], data) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match model.inner.predict_probs(&batch) {
            Ok(probs) => {
                std::ptr::copy_nonoverlapping(probs.data().as_ptr(), probs_out, c);
                TsStatus::TsOk
            }
            Err(e) => fail(e),
        }
    })
}

fn write_state(out: *mut *mut TsMetaState, state: MetaState) -> TsStatus {
    let handle = Box::new(TsMetaState { inner: state });
    unsafe { *out = Box::into_raw(handle) };
    TsStatus::TsOk
}

/// Load a detector state file (JSON) from `path`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer;
/// the returned handle is released with [`ts_meta_state_free`].
#[no_mangle]
pub unsafe extern "C" fn ts_meta_state_load(
    path: *const c_char,
    out: *mut *mut TsMetaState,
) -> TsStatus {
    guarded(|| {
        if out.is_null() {
            return null_pointer("out");
        }
        let path = match cstr_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match artifacts::read_meta_state(Path::new(path)) {
            Ok(state) => write_state(out, state),
            Err(e) => fail(e),
        }
    })
}

/// Parse a detector state from a JSON string.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer;
/// the returned handle is released with [`ts_meta_state_free`].
#[no_mangle]
pub unsafe extern "C" fn ts_meta_state_from_json(
    json: *const c_char,
    out: *mut *mut TsMetaState,
) -> TsStatus {
    guarded(|| {
        if out.is_null() {
            return null_pointer("out");
        }
        let json = match cstr_arg(json, "json") {
            Ok(j) => j,
            Err(status) => return status,
        };
        match artifacts::meta_state_from_json(json, "json argument") {
            Ok(state) => write_state(out, state),
            Err(e) => fail(e),
        }
    })
}

/// Release a detector handle; a null pointer is a no-op.
///
/// # Safety
/// `state` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_meta_state_free(state: *mut TsMetaState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of query inputs, or 0 on a null handle.
///
/// # Safety
/// `state` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn ts_meta_state_query_count(state: *const TsMetaState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.k())
}

/// Expected model input width, or 0 on a null handle.
///
/// # Safety
/// `state` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn ts_meta_state_input_dim(state: *const TsMetaState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.d_x())
}

/// Expected class count, or 0 on a null handle.
///
/// # Safety
/// `state` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn ts_meta_state_num_classes(state: *const TsMetaState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.c())
}

/// Score a model: higher means more likely Trojaned. The model is only
/// queried through forward evaluation.
///
/// # Safety
/// `state` and `model` must be live handles; `score_out` must point to a
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn ts_score_model(
    state: *const TsMetaState,
    model: *const TsModel,
    score_out: *mut f64,
) -> TsStatus {
    guarded(|| {
        let state = match state.as_ref() {
            Some(s) => s,
            None => return null_pointer("state"),
        };
        let model = match model.as_ref() {
            Some(m) => m,
            None => return null_pointer("model"),
        };
        if score_out.is_null() {
            return null_pointer("score_out");
        }
        match state.inner.score_target(&model.inner) {
            Ok(score) => {
                *score_out = score;
                TsStatus::TsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Rank-based AUC with the half-tie rule: the probability that a random
/// Trojan score outranks a random benign score.
///
/// # Safety
/// `scores_trojan` and `scores_benign` must point to `n_trojan` and
/// `n_benign` readable doubles; `auc_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_compute_auc(
    scores_trojan: *const f64,
    n_trojan: usize,
    scores_benign: *const f64,
    n_benign: usize,
    auc_out: *mut f64,
) -> TsStatus {
    guarded(|| {
        if scores_trojan.is_null() || scores_benign.is_null() || auc_out.is_null() {
            return null_pointer("scores/auc_out");
        }
        let pos = std::slice::from_raw_parts(scores_trojan, n_trojan);
        let neg = std::slice::from_raw_parts(scores_benign, n_benign);
        match compute_auc(pos, neg) {
            Ok(auc) => {
                *auc_out = auc;
                TsStatus::TsOk
            }
            Err(e) => fail(e),
        }
    })
}
