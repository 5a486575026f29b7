//! C interface to the hallucounter library.
//!
//! Every function returns an [`HcStatus`]; on failure a message is available
//! from [`hc_last_error_message`] on the same thread. Models are opaque
//! handles created by `hc_model_load*` and released with [`hc_model_free`].
//! Strings returned by the library are released with [`hc_string_free`].
//! Panics never cross the boundary; they surface as `HC_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hallucounter::aggregation::{
    confidence_score, optimal_response, overall_prediction, run_pipeline, AggregationConfig,
};
use hallucounter::classifier::{load_model, model_from_json, ClassifierModel};
use hallucounter::features::{rr_average, PairwiseMatrix};
use hallucounter::model::{parse_query_record, serialize_record, NliScores, PredictionRecord, ResponseFeatures};
use hallucounter::nli::{normalize, FileBackend, LogitsRecord, PrecomputedScores};
use hallucounter::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Checksum = 5,
    UnsupportedVersion = 6,
    DimensionMismatch = 7,
    Backend = 8,
    MissingPair = 9,
    Panic = 10,
}

/// An (entailment, neutral, contradiction) triple, either logits or
/// probabilities depending on the call.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HcTriple {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

/// Probability triples for one response: query-response and the averaged
/// response-response scores.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HcResponseFeatures {
    pub qr: HcTriple,
    pub rr_avg: HcTriple,
}

/// Opaque model handle.
pub struct HcModel {
    inner: ClassifierModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HcStatus {
    match e {
        Error::Io { .. } => HcStatus::Io,
        Error::Json(_) => HcStatus::Parse,
        Error::Checksum { .. } => HcStatus::Checksum,
        Error::UnsupportedModelVersion(_) => HcStatus::UnsupportedVersion,
        Error::DimensionMismatch { .. } => HcStatus::DimensionMismatch,
        Error::Backend(_) | Error::BackendUnavailable(_) => HcStatus::Backend,
        Error::MissingPair(_) => HcStatus::MissingPair,
        Error::AtLine { source, .. }
        | Error::InRecord { source, .. }
        | Error::Scoring { source, .. }
        | Error::AtResponse { source, .. } => status_of(source),
        _ => HcStatus::InvalidArgument,
    }
}

enum Fail {
    Status(HcStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(HcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail::Status(HcStatus::InvalidArgument, msg.into())
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HcStatus::Ok,
        Ok(Err(Fail::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("panic inside hallucounter".into());
            HcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn model_arg<'a>(model: *const HcModel) -> Result<&'a ClassifierModel, Fail> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

fn probabilities(t: HcTriple) -> Result<NliScores, Fail> {
    Ok(NliScores::probabilities(t.entailment, t.neutral, t.contradiction)?)
}

fn to_triple(s: &NliScores) -> HcTriple {
    HcTriple {
        entailment: s.entailment,
        neutral: s.neutral,
        contradiction: s.contradiction,
    }
}

/// Message for the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file, verifying its version and checksum.
#[no_mangle]
pub unsafe extern "C" fn hc_model_load(path: *const c_char, out: *mut *mut HcModel) -> HcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let inner = load_model(Path::new(path))?;
        out.write(Box::into_raw(Box::new(HcModel { inner })));
        Ok(())
    })
}

/// Same as [`hc_model_load`] from the file's JSON text.
#[no_mangle]
pub unsafe extern "C" fn hc_model_load_json(json: *const c_char, out: *mut *mut HcModel) -> HcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = model_from_json(str_arg(json, "json")?)?;
        out.write(Box::into_raw(Box::new(HcModel { inner })));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hc_model_free(model: *mut HcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features the model expects.
#[no_mangle]
pub unsafe extern "C" fn hc_model_dimension(model: *const HcModel, out: *mut usize) -> HcStatus {
    guard(|| {
        let m = model_arg(model)?;
        write_out(out, m.dimension(), "out")
    })
}

/// Probability that the response described by `x` is hallucinated.
#[no_mangle]
pub unsafe extern "C" fn hc_model_predict_proba(
    model: *const HcModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> HcStatus {
    guard(|| {
        let m = model_arg(model)?;
        let x = slice_arg(x, len, "x")?;
        write_out(out, m.predict_proba(x)?, "out")
    })
}

/// 0/1 label at the model's stored threshold.
#[no_mangle]
pub unsafe extern "C" fn hc_model_predict_label(
    model: *const HcModel,
    x: *const f64,
    len: usize,
    out: *mut u8,
) -> HcStatus {
    guard(|| {
        let m = model_arg(model)?;
        let x = slice_arg(x, len, "x")?;
        write_out(out, m.predict_label(x)?, "out")
    })
}

/// Majority vote over `k` 0/1 labels, ties counting as hallucinated.
#[no_mangle]
pub unsafe extern "C" fn hc_overall_prediction(p: *const u8, k: usize, out: *mut u8) -> HcStatus {
    guard(|| {
        let p = slice_arg(p, k, "p")?;
        write_out(out, overall_prediction(p)?, "out")
    })
}

/// Fraction of the `k` labels agreeing with their majority vote.
#[no_mangle]
pub unsafe extern "C" fn hc_confidence_score(p: *const u8, k: usize, out: *mut f64) -> HcStatus {
    guard(|| {
        let p = slice_arg(p, k, "p")?;
        let y = overall_prediction(p)?;
        write_out(out, confidence_score(p, y)?, "out")
    })
}

/// Index of the optimal response among `k`. With `restrict_candidates`
/// set only responses labelled `y_hat` are considered, falling back to
/// all of them when none are.
#[no_mangle]
pub unsafe extern "C" fn hc_optimal_response(
    features: *const HcResponseFeatures,
    p: *const u8,
    k: usize,
    y_hat: u8,
    epsilon1: f64,
    epsilon2: f64,
    restrict_candidates: bool,
    out_index: *mut usize,
) -> HcStatus {
    guard(|| {
        let rows = slice_arg(features, k, "features")?;
        let p = slice_arg(p, k, "p")?;
        let config = AggregationConfig::new(epsilon1, epsilon2, restrict_candidates)?;
        let features = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(ResponseFeatures {
                    response_index: i,
                    qr: probabilities(r.qr)?,
                    rr_avg: probabilities(r.rr_avg)?,
                })
            })
            .collect::<Result<Vec<_>, Fail>>()?;
        let names: Vec<String> = (0..k).map(|i| i.to_string()).collect();
        let (index, _) = optimal_response(&features, p, y_hat, &names, &config)?;
        write_out(out_index, index, "out_index")
    })
}

/// Softmax of a logit triple.
#[no_mangle]
pub unsafe extern "C" fn hc_normalize_logits(logits: HcTriple, out: *mut HcTriple) -> HcStatus {
    guard(|| {
        let s = normalize(&NliScores::logits(
            logits.entailment,
            logits.neutral,
            logits.contradiction,
        ))?;
        write_out(out, to_triple(&s), "out")
    })
}

/// Average of row `i` of a `k`×`k` row-major matrix of probability triples,
/// skipping the diagonal (whose contents are ignored).
#[no_mangle]
pub unsafe extern "C" fn hc_rr_average(matrix: *const HcTriple, k: usize, i: usize, out: *mut HcTriple) -> HcStatus {
    guard(|| {
        let cells = slice_arg(
            matrix,
            k.checked_mul(k).ok_or_else(|| invalid("k too large"))?,
            "matrix",
        )?;
        if i >= k {
            return Err(invalid(format!("row {i} out of range for k = {k}")));
        }
        let mut entries = BTreeMap::new();
        for a in 0..k {
            for b in (0..k).filter(|&b| b != a) {
                entries.insert((a, b), probabilities(cells[a * k + b])?);
            }
        }
        let avg = rr_average(&PairwiseMatrix::new(k, entries)?, i)?;
        write_out(out, to_triple(&avg), "out")
    })
}

/// Runs the whole pipeline on one query record (a `queries.jsonl` line) with
/// its precomputed logits (a `logits.jsonl` line). On success `*out_json`
/// holds a `predictions.jsonl` line to be freed with [`hc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn hc_run_pipeline_json(
    model: *const HcModel,
    record_json: *const c_char,
    logits_json: *const c_char,
    epsilon1: f64,
    epsilon2: f64,
    out_json: *mut *mut c_char,
) -> HcStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let m = model_arg(model)?;
        let record = parse_query_record(str_arg(record_json, "record_json")?)?;
        let logits: LogitsRecord = serde_json::from_str(str_arg(logits_json, "logits_json")?).map_err(Error::from)?;
        if logits.id != record.id {
            return Err(invalid(format!(
                "logits are for {:?}, record is {:?}",
                logits.id, record.id
            )));
        }
        let backend = FileBackend::new(PrecomputedScores::from_records([&logits])?);
        let config = AggregationConfig::new(epsilon1, epsilon2, true)?;
        let output = run_pipeline(&record, &backend, m, &config)?;
        let line = serialize_record(&PredictionRecord { id: record.id, output });
        let c = CString::new(line).map_err(|_| invalid("output contains NUL"))?;
        out_json.write(c.into_raw());
        Ok(())
    })
}

/// Releases a string returned by the library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
