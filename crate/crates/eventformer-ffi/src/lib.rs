//! C ABI for embedding the event prediction model in other languages.
//!
//! Conventions: opaque handles (`EfModel`), status codes (`EfStatus`),
//! strings returned as UTF-8 C strings owned by this library and released
//! with [`ef_string_free`]. The most recent error message per thread is
//! available through [`ef_last_error`]. No function panics across the
//! boundary.
//!
//! The generated header lives at `include/eventformer.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use eventformer::event_model::{chain_from_json, validate_chain};
use eventformer::model::EventFormer;
use eventformer::numeric::Binder;
use eventformer::Error;

/// Opaque model handle.
pub struct EfModel {
    inner: EventFormer,
}

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfStatus {
    /// Success.
    EfOk = 0,
    /// A pointer argument was null or a string was not valid UTF-8.
    EfInvalidArgument = 1,
    /// Input data was rejected (bad JSON, invalid chain, bad checkpoint).
    EfDataError = 2,
    /// Unexpected internal failure; see `ef_last_error`.
    EfInternalError = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &Error) -> EfStatus {
    match err {
        Error::Internal(_) => EfStatus::EfInternalError,
        _ => EfStatus::EfDataError,
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, EfStatus> {
    if ptr.is_null() {
        set_error(&format!("{name} is null"));
        return Err(EfStatus::EfInvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{name} is not valid UTF-8"));
        EfStatus::EfInvalidArgument
    })
}

fn return_string(s: String, out: *mut *mut c_char) -> EfStatus {
    let sanitized: String = s.chars().filter(|&c| c != '\0').collect();
    match CString::new(sanitized) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            EfStatus::EfOk
        }
        Err(_) => {
            set_error("result contained an interior NUL");
            EfStatus::EfInternalError
        }
    }
}

fn guarded<F: FnOnce() -> EfStatus>(f: F) -> EfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            EfStatus::EfInternalError
        }
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn ef_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent error on this thread; valid until the next
/// failing call on the same thread. Do not free.
#[no_mangle]
pub extern "C" fn ef_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned through an `out` parameter, or
/// null.
#[no_mangle]
pub unsafe extern "C" fn ef_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a model checkpoint (JSON produced by `eventformer train`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer. On success `*out` owns the model and must be released with
/// [`ef_model_free`].
#[no_mangle]
pub unsafe extern "C" fn ef_model_load(path: *const c_char, out: *mut *mut EfModel) -> EfStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return EfStatus::EfInvalidArgument;
        }
        let path = match cstr_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match EventFormer::load(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(EfModel { inner: model }));
                EfStatus::EfOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Release a model handle.
///
/// # Safety
/// `model` must come from [`ef_model_load`] or be null; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn ef_model_free(model: *mut EfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Total trainable parameter count of the model.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ef_model_param_count(model: *const EfModel, out: *mut u64) -> EfStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            set_error("model or out is null");
            return EfStatus::EfInvalidArgument;
        }
        *out = (*model).inner.param_count() as u64;
        EfStatus::EfOk
    })
}

/// Validate a chain in the JSON-lines corpus format. `out` receives a JSON
/// array of violation strings (empty when the chain is well-formed).
///
/// # Safety
/// `chain_json` must be a valid NUL-terminated string; `out` a valid pointer.
/// The returned string is released with [`ef_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ef_validate_chain_json(
    chain_json: *const c_char,
    out: *mut *mut c_char,
) -> EfStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return EfStatus::EfInvalidArgument;
        }
        let json = match cstr_arg(chain_json, "chain_json") {
            Ok(j) => j,
            Err(s) => return s,
        };
        match chain_from_json(json) {
            Ok(chain) => {
                let violations = validate_chain(&chain);
                return_string(serde_json::to_string(&violations).unwrap_or_default(), out)
            }
            Err(e) => {
                set_error(&e.to_string());
                EfStatus::EfDataError
            }
        }
    })
}

/// Predict the next event for a chain (JSON-lines corpus format). `tau` is
/// the similarity threshold; pass a NaN to use the model's configured value.
/// `top_k` limits the verbs in the result (0 means all). `out` receives JSON:
/// `{"verbs": [ids], "verb_names": [...], "nouns": [ids], "noun_names": [...]}`.
///
/// # Safety
/// `model`, `chain_json`, and `out` must be valid pointers; the returned
/// string is released with [`ef_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ef_predict_json(
    model: *const EfModel,
    chain_json: *const c_char,
    tau: f64,
    top_k: u32,
    out: *mut *mut c_char,
) -> EfStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            set_error("model or out is null");
            return EfStatus::EfInvalidArgument;
        }
        let json = match cstr_arg(chain_json, "chain_json") {
            Ok(j) => j,
            Err(s) => return s,
        };
        let model = &(*model).inner;
        let chain = match chain_from_json(json) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return EfStatus::EfDataError;
            }
        };
        let tau = if tau.is_nan() { model.config.tau } else { tau };
        match model.predict(&chain, tau) {
            Ok(pred) => {
                let k = if top_k == 0 {
                    pred.verb_ranking.len()
                } else {
                    top_k as usize
                };
                let verbs: Vec<usize> = pred.verb_ranking.iter().take(k).copied().collect();
                let verb_names: Vec<&str> = verbs
                    .iter()
                    .map(|&v| model.vocab.verbs.get(v).map(String::as_str).unwrap_or(""))
                    .collect();
                let noun_names: Vec<&str> = pred
                    .nouns
                    .iter()
                    .map(|&n| model.vocab.nouns.get(n).map(String::as_str).unwrap_or(""))
                    .collect();
                let result = serde_json::json!({
                    "verbs": verbs,
                    "verb_names": verb_names,
                    "nouns": pred.nouns,
                    "noun_names": noun_names,
                });
                return_string(result.to_string(), out)
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Attention dump for a chain: per-layer graph and node attention matrices
/// averaged over heads, plus node labels.
///
/// # Safety
/// Same contracts as [`ef_predict_json`].
#[no_mangle]
pub unsafe extern "C" fn ef_inspect_json(
    model: *const EfModel,
    chain_json: *const c_char,
    out: *mut *mut c_char,
) -> EfStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            set_error("model or out is null");
            return EfStatus::EfInvalidArgument;
        }
        let json = match cstr_arg(chain_json, "chain_json") {
            Ok(j) => j,
            Err(s) => return s,
        };
        let model = &(*model).inner;
        let chain = match chain_from_json(json) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return EfStatus::EfDataError;
            }
        };
        let binder = Binder::new(&model.store, false);
        let fwd = match model.forward(&chain, None, &binder, None, true) {
            Ok(f) => f,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        };
        let traces = fwd.traces.as_ref().expect("traces requested");
        type Trace = eventformer::attention::AttentionTrace;
        fn mean(heads: &[Trace], pick: fn(&Trace) -> &Vec<Vec<f64>>) -> Vec<Vec<f64>> {
            let h = heads.len() as f64;
            let rows = pick(&heads[0]).len();
            let cols = pick(&heads[0])[0].len();
            let mut acc = vec![vec![0.0; cols]; rows];
            for t in heads {
                let m = pick(t);
                for i in 0..rows {
                    for j in 0..cols {
                        acc[i][j] += m[i][j] / h;
                    }
                }
            }
            acc
        }
        let layers: Vec<serde_json::Value> = traces
            .iter()
            .enumerate()
            .map(|(li, heads)| {
                serde_json::json!({
                    "layer": li,
                    "graph_attention": mean(heads, |t| &t.s_g),
                    "node_attention": mean(heads, |t| &t.s_n),
                })
            })
            .collect();
        let dump = serde_json::json!({
            "chain_id": chain.chain_id,
            "node_labels": fwd.layout.labels,
            "graph_of": fwd.layout.graph_of,
            "target_index": fwd.target_index,
            "layers": layers,
        });
        return_string(dump.to_string(), out)
    })
}
