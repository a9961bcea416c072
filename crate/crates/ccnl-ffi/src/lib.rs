//! C ABI for the classifier: load a checkpoint, classify (source,
//! translated) text pairs, and score label sequences. All functions
//! return a status code; on failure a thread-local message is readable
//! via `ccnl_last_error`. Handles are opaque and must be released with
//! `ccnl_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::path::Path;
use std::ptr;

use ccnl_core::checkpoint;
use ccnl_core::data::{Example, ParallelExample};
use ccnl_core::eval::macro_f1;
use ccnl_core::model::CcnlModel;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcnlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    LoadFailed = 3,
    PredictFailed = 4,
    MetricFailed = 5,
}

/// Opaque model handle.
pub struct CcnlModelHandle {
    model: CcnlModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
}

/// Copy the most recent error message for this thread into `buffer`
/// (NUL-terminated, truncated to `length` bytes). Returns the full
/// message length in bytes, excluding the NUL. A `buffer` of NULL or a
/// `length` of 0 only queries the length.
#[no_mangle]
pub unsafe extern "C" fn ccnl_last_error(buffer: *mut c_char, length: usize) -> usize {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        let bytes = message.as_bytes();
        if !buffer.is_null() && length > 0 {
            let n = bytes.len().min(length - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buffer as *mut u8, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static version string of the underlying library, NUL-terminated.
#[no_mangle]
pub extern "C" fn ccnl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, CcnlStatus> {
    if p.is_null() {
        set_error(format!("{what} is NULL"));
        return Err(CcnlStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        CcnlStatus::InvalidUtf8
    })
}

/// Load a model checkpoint from `path` into a new handle written to
/// `out`. On failure `out` is untouched.
#[no_mangle]
pub unsafe extern "C" fn ccnl_model_load(
    path: *const c_char,
    out: *mut *mut CcnlModelHandle,
) -> CcnlStatus {
    if out.is_null() {
        set_error("out is NULL");
        return CcnlStatus::NullArgument;
    }
    let path = match read_str(path, "path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match checkpoint::load(Path::new(path)) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(CcnlModelHandle { model }));
            CcnlStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            CcnlStatus::LoadFailed
        }
    }
}

/// Release a handle returned by `ccnl_model_load`. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ccnl_model_free(handle: *mut CcnlModelHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Classify one (source-language, translated) text pair. Writes the
/// predicted label (0 or 1) to `out_label` and, when `out_probs` is not
/// NULL, the two class probabilities to `out_probs[0..2]`.
#[no_mangle]
pub unsafe extern "C" fn ccnl_predict(
    handle: *const CcnlModelHandle,
    source_text: *const c_char,
    target_text: *const c_char,
    out_label: *mut u8,
    out_probs: *mut f64,
) -> CcnlStatus {
    if handle.is_null() || out_label.is_null() {
        set_error("handle or out_label is NULL");
        return CcnlStatus::NullArgument;
    }
    let source = match read_str(source_text, "source_text") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let target = match read_str(target_text, "target_text") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let pair = ParallelExample {
        source: Example {
            id: String::new(),
            text: source.to_string(),
            label: 0,
        },
        target_text: target.to_string(),
        label: 0,
    };
    match (*handle).model.predict_parallel(&[pair]) {
        Ok(preds) => {
            let (label, probs) = preds[0];
            *out_label = label;
            if !out_probs.is_null() {
                *out_probs = probs[0];
                *out_probs.add(1) = probs[1];
            }
            CcnlStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            CcnlStatus::PredictFailed
        }
    }
}

/// Macro-averaged F1 over two parallel label arrays of `length` entries
/// (labels must be 0 or 1). Writes the score to `out`.
#[no_mangle]
pub unsafe extern "C" fn ccnl_macro_f1(
    gold: *const u8,
    predicted: *const u8,
    length: usize,
    out: *mut f64,
) -> CcnlStatus {
    if gold.is_null() || predicted.is_null() || out.is_null() {
        set_error("gold, predicted, or out is NULL");
        return CcnlStatus::NullArgument;
    }
    let gold = std::slice::from_raw_parts(gold, length);
    let predicted = std::slice::from_raw_parts(predicted, length);
    if let Some(bad) = gold.iter().chain(predicted).find(|&&l| l > 1) {
        set_error(format!("labels must be 0 or 1, found {bad}"));
        return CcnlStatus::MetricFailed;
    }
    match macro_f1(gold, predicted) {
        Ok(score) => {
            *out = score;
            CcnlStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            CcnlStatus::MetricFailed
        }
    }
}
