//! C ABI over the stimulation-model identification library.
//!
//! Conventions:
//! - Handles (`VsnSmModel`, `VsnSmDataset`) are opaque; create them with the
//!   constructors here and release them with the matching `_free` function.
//! - Every fallible function returns a [`VsnSmStatus`]; on failure the
//!   thread-local message from [`vsn_sm_last_error_message`] describes it.
//! - Strings returned through `char **` out-parameters are NUL-terminated,
//!   owned by the caller, and must be released with [`vsn_sm_string_free`].
//! - Structured values (configs, reports, metrics) cross the boundary as
//!   JSON documents in the library's native schemas.

use std::cell::RefCell;
use std::ffi::{CStr, CString};

use libc::c_char;

use vsn_sm::config::ExperimentConfig;
use vsn_sm::error::Error;
use vsn_sm::metrics::{kl_divergence, reconstruction_error};
use vsn_sm::model::{SensingParams, StimulationModel};
use vsn_sm::observe::{generate_dataset, ObservationDataset};
use vsn_sm::pipeline::{identify, IdentificationReport, Method};

/// Status codes of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsnSmStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The stimulation model violates a structural invariant.
    InvalidModel = 3,
    /// A configuration value is out of range or inconsistent.
    InvalidConfig = 4,
    /// Array shapes or dimensions do not line up.
    ShapeMismatch = 5,
    /// Non-finite values or numerical breakdown.
    Numeric = 6,
    /// An input collection was empty where data is required.
    EmptyInput = 7,
    /// Malformed serialized input.
    Parse = 8,
    Io = 9,
    /// The request is structurally impossible (for example enumerating the
    /// vertices of a hypercube that is too large).
    Unsupported = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> VsnSmStatus {
    match err {
        Error::EmptyRow { .. }
        | Error::DuplicateRows { .. }
        | Error::TooManyEvents { .. }
        | Error::BadPriors { .. }
        | Error::BadProbability { .. } => VsnSmStatus::InvalidModel,
        Error::InvalidConfig(_) => VsnSmStatus::InvalidConfig,
        Error::ShapeMismatch { .. }
        | Error::DimensionMismatch { .. }
        | Error::IndexOutOfRange { .. } => VsnSmStatus::ShapeMismatch,
        Error::NonFiniteData { .. } | Error::NonFiniteLoss { .. } => VsnSmStatus::Numeric,
        Error::EmptySamples { .. } | Error::EmptyTestSplit { .. } => VsnSmStatus::EmptyInput,
        Error::Parse { .. } | Error::Json(_) => VsnSmStatus::Parse,
        Error::Io(_) => VsnSmStatus::Io,
        Error::DimensionTooLarge { .. } | Error::NoStimulatedCamera { .. } => {
            VsnSmStatus::Unsupported
        }
    }
}

fn fail(err: &Error) -> VsnSmStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Opaque handle around a validated stimulation model.
pub struct VsnSmModel {
    inner: StimulationModel,
}

/// Opaque handle around an observation dataset.
pub struct VsnSmDataset {
    inner: ObservationDataset,
}

unsafe fn str_arg<'a>(ptr: *const c_char, status: &mut VsnSmStatus) -> Option<&'a str> {
    if ptr.is_null() {
        set_error("string argument is NULL");
        *status = VsnSmStatus::NullArgument;
        return None;
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Some(s),
        Err(_) => {
            set_error("string argument is not valid UTF-8");
            *status = VsnSmStatus::InvalidUtf8;
            None
        }
    }
}

fn return_string(text: String, out: *mut *mut c_char) -> VsnSmStatus {
    match CString::new(text) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            VsnSmStatus::Ok
        }
        Err(_) => {
            set_error("output contains an interior NUL byte");
            VsnSmStatus::Parse
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call from the same thread.
#[no_mangle]
pub extern "C" fn vsn_sm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must have been produced by a `vsn_sm_*` function and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Draw a random stimulation model: `n_active` distinct nonzero stimulation
/// vectors over `n_cameras` cameras, uniform priors, default sensing
/// parameters.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_model_random(
    n_cameras: usize,
    n_active: usize,
    n_potential: usize,
    seed: u64,
    out: *mut *mut VsnSmModel,
) -> VsnSmStatus {
    if out.is_null() {
        set_error("out pointer is NULL");
        return VsnSmStatus::NullArgument;
    }
    match StimulationModel::random(n_cameras, n_active, n_potential, SensingParams::default(), seed)
    {
        Ok(model) => {
            *out = Box::into_raw(Box::new(VsnSmModel { inner: model }));
            VsnSmStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// Parse a model from its JSON form and validate it.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_model_from_json(
    json: *const c_char,
    out: *mut *mut VsnSmModel,
) -> VsnSmStatus {
    if out.is_null() {
        set_error("out pointer is NULL");
        return VsnSmStatus::NullArgument;
    }
    let mut status = VsnSmStatus::Ok;
    let Some(text) = str_arg(json, &mut status) else {
        return status;
    };
    let model: StimulationModel = match serde_json::from_str(text) {
        Ok(model) => model,
        Err(err) => return fail(&Error::Json(err)),
    };
    if let Err(err) = model.validate() {
        return fail(&err);
    }
    *out = Box::into_raw(Box::new(VsnSmModel { inner: model }));
    VsnSmStatus::Ok
}

/// Serialize a model to JSON.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_model_to_json(
    model: *const VsnSmModel,
    out: *mut *mut c_char,
) -> VsnSmStatus {
    if model.is_null() || out.is_null() {
        set_error("model or out pointer is NULL");
        return VsnSmStatus::NullArgument;
    }
    match serde_json::to_string(&(*model).inner) {
        Ok(text) => return_string(text, out),
        Err(err) => fail(&Error::Json(err)),
    }
}

/// Stable content fingerprint of a model; 0 for a NULL handle.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_model_fingerprint(model: *const VsnSmModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    (*model).inner.fingerprint()
}

/// # Safety
/// `model` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_model_free(model: *mut VsnSmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Generate `count` observations from a model with the given seed.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_dataset_generate(
    model: *const VsnSmModel,
    count: usize,
    seed: u64,
    out: *mut *mut VsnSmDataset,
) -> VsnSmStatus {
    if model.is_null() || out.is_null() {
        set_error("model or out pointer is NULL");
        return VsnSmStatus::NullArgument;
    }
    match generate_dataset(&(*model).inner, count, seed) {
        Ok(dataset) => {
            *out = Box::into_raw(Box::new(VsnSmDataset { inner: dataset }));
            VsnSmStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// Number of observations; 0 for a NULL handle.
///
/// # Safety
/// `dataset` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_dataset_len(dataset: *const VsnSmDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.len()
}

/// Observation dimension (camera count); 0 for a NULL handle.
///
/// # Safety
/// `dataset` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_dataset_dim(dataset: *const VsnSmDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.n_cameras
}

/// Render the dataset in its plain-text form (header line plus one
/// comma-separated row per observation).
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_dataset_to_csv(
    dataset: *const VsnSmDataset,
    out: *mut *mut c_char,
) -> VsnSmStatus {
    if dataset.is_null() || out.is_null() {
        set_error("dataset or out pointer is NULL");
        return VsnSmStatus::NullArgument;
    }
    return_string((*dataset).inner.to_csv(), out)
}

/// Parse a dataset from its plain-text form.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_dataset_from_csv(
    text: *const c_char,
    out: *mut *mut VsnSmDataset,
) -> VsnSmStatus {
    if out.is_null() {
        set_error("out pointer is NULL");
        return VsnSmStatus::NullArgument;
    }
    let mut status = VsnSmStatus::Ok;
    let Some(text) = str_arg(text, &mut status) else {
        return status;
    };
    match ObservationDataset::read_csv(text.as_bytes()) {
        Ok(dataset) => {
            *out = Box::into_raw(Box::new(VsnSmDataset { inner: dataset }));
            VsnSmStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// # Safety
/// `dataset` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_dataset_free(dataset: *mut VsnSmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Run one identification method on a dataset and return the report as
/// JSON. `method` is one of gmm, vgmm, gmm-ae, vgmm-ae, gmm-dnn, vgmm-dnn.
/// `config_json` holds an experiment configuration document or NULL for
/// defaults; `seed` overrides the configured master seed.
///
/// # Safety
/// `dataset` must be a live handle; `method` must be NUL-terminated;
/// `config_json` must be NUL-terminated or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_identify(
    dataset: *const VsnSmDataset,
    method: *const c_char,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> VsnSmStatus {
    if dataset.is_null() || out.is_null() {
        set_error("dataset or out pointer is NULL");
        return VsnSmStatus::NullArgument;
    }
    let mut status = VsnSmStatus::Ok;
    let Some(method_name) = str_arg(method, &mut status) else {
        return status;
    };
    let method = match Method::parse(method_name) {
        Ok(method) => method,
        Err(err) => return fail(&err),
    };
    let mut config = if config_json.is_null() {
        ExperimentConfig::default()
    } else {
        let Some(text) = str_arg(config_json, &mut status) else {
            return status;
        };
        match serde_json::from_str::<ExperimentConfig>(text) {
            Ok(config) => config,
            Err(err) => return fail(&Error::Json(err)),
        }
    };
    config.n_cameras = (*dataset).inner.n_cameras;
    let method_config = config.method_config(method, seed);
    match identify(&(*dataset).inner, &method_config) {
        Ok(report) => match serde_json::to_string(&report) {
            Ok(text) => return_string(text, out),
            Err(err) => fail(&Error::Json(err)),
        },
        Err(err) => fail(&err),
    }
}

/// Score a stored identification report (JSON) against a ground-truth model;
/// returns the metrics as JSON.
///
/// # Safety
/// `model` must be a live handle; `report_json` must be NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vsn_sm_metrics(
    model: *const VsnSmModel,
    report_json: *const c_char,
    out: *mut *mut c_char,
) -> VsnSmStatus {
    if model.is_null() || out.is_null() {
        set_error("model or out pointer is NULL");
        return VsnSmStatus::NullArgument;
    }
    let mut status = VsnSmStatus::Ok;
    let Some(text) = str_arg(report_json, &mut status) else {
        return status;
    };
    let report: IdentificationReport = match serde_json::from_str(text) {
        Ok(report) => report,
        Err(err) => return fail(&Error::Json(err)),
    };
    let truth = &(*model).inner;
    match reconstruction_error(truth, &report) {
        Ok(mut metrics) => {
            metrics.d_kl = kl_divergence(truth, &report, Default::default());
            match serde_json::to_string(&metrics) {
                Ok(text) => return_string(text, out),
                Err(err) => fail(&Error::Json(err)),
            }
        }
        Err(err) => fail(&err),
    }
}
