//! C ABI over the mesh-sequence pipeline: loading, normalization,
//! saving, and sequence-pair evaluation.
//!
//! Conventions: opaque handles with explicit `_free` functions, status
//! codes for every fallible call, out-parameters for results, and a
//! thread-local last-error message retrievable via
//! [`t4d_last_error_message`]. Strings returned by the library must be
//! released with [`t4d_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use tempo4d::error::Error;
use tempo4d::meshio::{
    denormalize_sequence, load_sequence, normalize_sequence, save_sequence, Centering,
    MeshSequence, NormalizationRecord,
};
use tempo4d::metrics::{evaluate_sequences, MetricParams, MetricReport};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum T4dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    DegenerateMesh = 6,
    Numeric = 7,
    Contract = 8,
    Internal = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").expect("static"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> T4dStatus {
    match e {
        Error::Io(_) => T4dStatus::Io,
        Error::Parse { .. } => T4dStatus::Parse,
        Error::InvalidInput(_) | Error::InvalidShape(_) | Error::ShapeMismatch(_) => {
            T4dStatus::InvalidInput
        }
        Error::DegenerateMesh(_) | Error::EmptyMask(_) => T4dStatus::DegenerateMesh,
        Error::Numeric(_) => T4dStatus::Numeric,
        Error::Contract(_) => T4dStatus::Contract,
        _ => T4dStatus::Internal,
    }
}

fn fail(e: Error) -> T4dStatus {
    let status = status_of(&e);
    set_error(e.to_string());
    status
}

/// Last error message for this thread, or NULL when no error has been
/// recorded. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn t4d_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by a `tempo4d` function and
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn t4d_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opaque mesh sequence with its optional normalization record.
pub struct T4dSequence {
    seq: MeshSequence,
    record: Option<NormalizationRecord>,
}

/// Opaque evaluation report.
pub struct T4dReport {
    report: MetricReport,
}

unsafe fn path_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a Path, T4dStatus> {
    if ptr.is_null() {
        set_error(format!("{what} is NULL"));
        return Err(T4dStatus::NullPointer);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error(format!("{what} is not valid UTF-8"));
            Err(T4dStatus::InvalidUtf8)
        }
    }
}

/// Load every OBJ in `dir` matching `pattern` (NULL for `*.obj`),
/// lexicographically ordered.
///
/// # Safety
/// `dir` and `pattern` must be NULL or valid C strings; `out` must point
/// to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn t4d_sequence_load(
    dir: *const c_char,
    pattern: *const c_char,
    out: *mut *mut T4dSequence,
) -> T4dStatus {
    if out.is_null() {
        set_error("out is NULL".into());
        return T4dStatus::NullPointer;
    }
    let dir = match path_arg(dir, "dir") {
        Ok(p) => p,
        Err(s) => return s,
    };
    let pattern = if pattern.is_null() {
        "*.obj".to_string()
    } else {
        match CStr::from_ptr(pattern).to_str() {
            Ok(s) => s.to_string(),
            Err(_) => {
                set_error("pattern is not valid UTF-8".into());
                return T4dStatus::InvalidUtf8;
            }
        }
    };
    match load_sequence(dir, &pattern) {
        Ok(seq) => {
            *out = Box::into_raw(Box::new(T4dSequence { seq, record: None }));
            T4dStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of frames in a sequence; zero for NULL.
///
/// # Safety
/// `seq` must be NULL or a live sequence handle.
#[no_mangle]
pub unsafe extern "C" fn t4d_sequence_frame_count(seq: *const T4dSequence) -> usize {
    seq.as_ref().map(|s| s.seq.len()).unwrap_or(0)
}

/// Vertex count of one frame; zero when out of range.
///
/// # Safety
/// `seq` must be NULL or a live sequence handle.
#[no_mangle]
pub unsafe extern "C" fn t4d_sequence_vertex_count(
    seq: *const T4dSequence,
    frame: usize,
) -> usize {
    match seq.as_ref() {
        Some(s) if frame < s.seq.len() => s.seq.frame(frame).vertices().len(),
        _ => 0,
    }
}

/// Normalize the sequence in place around `rest_frame` and return the
/// normalization record as JSON (caller frees via [`t4d_string_free`]).
/// `record_json` may be NULL if the record is not wanted.
///
/// # Safety
/// `seq` must be a live sequence handle.
#[no_mangle]
pub unsafe extern "C" fn t4d_sequence_normalize(
    seq: *mut T4dSequence,
    rest_frame: usize,
    record_json: *mut *mut c_char,
) -> T4dStatus {
    let Some(handle) = seq.as_mut() else {
        set_error("seq is NULL".into());
        return T4dStatus::NullPointer;
    };
    match normalize_sequence(&handle.seq, rest_frame, Centering::BoundingBox) {
        Ok((normalized, record)) => {
            handle.seq = normalized;
            if !record_json.is_null() {
                match serde_json::to_string(&record) {
                    Ok(json) => {
                        *record_json = CString::new(json)
                            .expect("JSON has no NUL")
                            .into_raw();
                    }
                    Err(e) => return fail(Error::Serialization(e.to_string())),
                }
            }
            handle.record = Some(record);
            T4dStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Undo a previous normalization using the stored record.
///
/// # Safety
/// `seq` must be a live sequence handle.
#[no_mangle]
pub unsafe extern "C" fn t4d_sequence_denormalize(seq: *mut T4dSequence) -> T4dStatus {
    let Some(handle) = seq.as_mut() else {
        set_error("seq is NULL".into());
        return T4dStatus::NullPointer;
    };
    let Some(record) = handle.record.take() else {
        set_error("sequence carries no normalization record".into());
        return T4dStatus::Contract;
    };
    match denormalize_sequence(&handle.seq, &record) {
        Ok(seq) => {
            handle.seq = seq;
            T4dStatus::Ok
        }
        Err(e) => {
            handle.record = Some(record);
            fail(e)
        }
    }
}

/// Write the sequence as zero-padded OBJ frames; reports frames written.
///
/// # Safety
/// `seq` must be a live handle, `dir` a valid C string; `frames_written`
/// may be NULL.
#[no_mangle]
pub unsafe extern "C" fn t4d_sequence_save(
    seq: *const T4dSequence,
    dir: *const c_char,
    frames_written: *mut usize,
) -> T4dStatus {
    let Some(handle) = seq.as_ref() else {
        set_error("seq is NULL".into());
        return T4dStatus::NullPointer;
    };
    let dir = match path_arg(dir, "dir") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match save_sequence(&handle.seq, dir) {
        Ok(n) => {
            if !frames_written.is_null() {
                *frames_written = n;
            }
            T4dStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `seq` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn t4d_sequence_free(seq: *mut T4dSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Evaluation parameters, plain-old-data for C callers.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct T4dMetricParams {
    pub points_per_frame: usize,
    pub tau: f64,
    pub grid_resolution: usize,
    pub epsilon: f64,
    pub seed: u64,
}

/// Library defaults: 4096 points, tau 0.02, grid 32, epsilon 1e-8.
#[no_mangle]
pub extern "C" fn t4d_metric_params_default() -> T4dMetricParams {
    let d = MetricParams::default();
    T4dMetricParams {
        points_per_frame: d.points_per_frame,
        tau: d.tau,
        grid_resolution: d.grid_resolution,
        epsilon: d.epsilon,
        seed: d.seed,
    }
}

/// Metric selector for [`t4d_report_get`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum T4dMetric {
    Cd = 0,
    FScore = 1,
    Precision = 2,
    Recall = 3,
    DeltaCd = 4,
    FeatureCosine = 5,
    FeatureDtw = 6,
    OccupancyKl = 7,
}

/// Evaluate predicted vs ground-truth sequences.
///
/// # Safety
/// `pred` and `gt` must be live handles, `params` NULL (defaults) or
/// valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn t4d_evaluate(
    pred: *const T4dSequence,
    gt: *const T4dSequence,
    params: *const T4dMetricParams,
    out: *mut *mut T4dReport,
) -> T4dStatus {
    if out.is_null() {
        set_error("out is NULL".into());
        return T4dStatus::NullPointer;
    }
    let (Some(pred), Some(gt)) = (pred.as_ref(), gt.as_ref()) else {
        set_error("pred/gt is NULL".into());
        return T4dStatus::NullPointer;
    };
    let p = if params.is_null() {
        MetricParams::default()
    } else {
        let p = *params;
        MetricParams {
            points_per_frame: p.points_per_frame,
            tau: p.tau,
            grid_resolution: p.grid_resolution,
            epsilon: p.epsilon,
            seed: p.seed,
        }
    };
    match evaluate_sequences(&pred.seq, &gt.seq, &p) {
        Ok(report) => {
            *out = Box::into_raw(Box::new(T4dReport { report }));
            T4dStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// One metric value; NaN for a NULL report.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn t4d_report_get(report: *const T4dReport, metric: T4dMetric) -> f64 {
    let Some(r) = report.as_ref() else {
        return f64::NAN;
    };
    match metric {
        T4dMetric::Cd => r.report.cd,
        T4dMetric::FScore => r.report.f_score,
        T4dMetric::Precision => r.report.precision,
        T4dMetric::Recall => r.report.recall,
        T4dMetric::DeltaCd => r.report.delta_cd,
        T4dMetric::FeatureCosine => r.report.feature_cosine,
        T4dMetric::FeatureDtw => r.report.feature_dtw,
        T4dMetric::OccupancyKl => r.report.occupancy_kl,
    }
}

/// Full report as JSON (caller frees via [`t4d_string_free`]).
///
/// # Safety
/// `report` must be a live handle, `json` writable.
#[no_mangle]
pub unsafe extern "C" fn t4d_report_to_json(
    report: *const T4dReport,
    json: *mut *mut c_char,
) -> T4dStatus {
    if json.is_null() {
        set_error("json is NULL".into());
        return T4dStatus::NullPointer;
    }
    let Some(r) = report.as_ref() else {
        set_error("report is NULL".into());
        return T4dStatus::NullPointer;
    };
    match serde_json::to_string_pretty(&r.report) {
        Ok(text) => {
            *json = CString::new(text).expect("JSON has no NUL").into_raw();
            T4dStatus::Ok
        }
        Err(e) => fail(Error::Serialization(e.to_string())),
    }
}

/// # Safety
/// `report` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn t4d_report_free(report: *mut T4dReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
