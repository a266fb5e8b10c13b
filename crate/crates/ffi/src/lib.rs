//! C ABI over the `easyhard` crate.
//!
//! Handles are opaque and owned by the caller: every `*_new`/`*_parse`
//! function has a matching `*_free`. Functions return an [`EhStatus`]; on
//! failure [`eh_last_error`] describes what went wrong on the calling thread.
//! Strings are NUL-terminated UTF-8.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use easyhard::detectors::{
    load_precomputed, BackendConfig, DetectorBackend, SyntheticBackend, SyntheticDetectorConfig,
};
use easyhard::difficulty::{calibrate_threshold, load_score_table, CriterionKind, CriterionScore, ScoreTable, ScoreTables};
use easyhard::eval::{evaluate, EvalOptions, FpAxis};
use easyhard::model::{parse_dataset, Dataset, DatasetFormat};
use easyhard::router::{compute_cost, cost_at, route_batch, run_standalone, CostFamily, SplitSpec, TimingModel};
use easyhard::Error;

/// Result of every fallible call. Values 2 and 3 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EhStatus {
    Ok = 0,
    /// Null pointer or invalid UTF-8 argument.
    InvalidArgument = 1,
    /// Malformed or inconsistent input data.
    Input = 2,
    /// Bad configuration: unknown criterion, parameter out of range.
    Config = 3,
    /// A Rust panic was caught at the boundary.
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EhFormat {
    Jsonl = 0,
    FddbEllipse = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EhCostFamily {
    /// Random split: no criterion overhead.
    Free = 0,
    ScoreTable = 1,
    Detector = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhTiming {
    pub t_fast: f64,
    pub t_slow: f64,
    pub t_pred: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhSynthConfig {
    pub quality: f64,
    pub size_midpoint: f64,
    pub size_slope: f64,
    pub false_positive_rate: f64,
    pub localization_noise: f64,
    pub tp_confidence_floor: f64,
    pub fp_confidence_ceiling: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EhEvalReport {
    pub ap: f64,
    pub disc_roc: f64,
    pub cont_roc: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub ground_truth_faces: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EhRouteSummary {
    pub report: EhEvalReport,
    pub easy_count: usize,
    pub threshold: f64,
    pub seconds_per_image: f64,
}

pub struct EhDataset(Dataset);
pub struct EhBackend(Box<dyn DetectorBackend>);
pub struct EhScoreTable(ScoreTable);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Fail(EhStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = if e.exit_code() == 3 { EhStatus::Config } else { EhStatus::Input };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(EhStatus::InvalidArgument, msg.to_string())
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EhStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            EhStatus::Internal
        }
    }
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

/// Null out a handle slot so callers never see a stale pointer after a failure.
unsafe fn clear<T>(out: *mut *mut T) {
    if !out.is_null() {
        out.write(std::ptr::null_mut());
    }
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn fp_axis(max: usize) -> FpAxis {
    if max == 0 {
        FpAxis::Auto
    } else {
        FpAxis::Fixed(max)
    }
}

fn timing(t: &EhTiming) -> Result<TimingModel, Fail> {
    Ok(TimingModel::new(t.t_fast, t.t_slow, t.t_pred)?)
}

/// Message for the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn eh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn eh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn eh_dataset_parse(text: *const c_char, format: EhFormat, out: *mut *mut EhDataset) -> EhStatus {
    clear(out);
    guard(|| {
        let fmt = match format {
            EhFormat::Jsonl => DatasetFormat::Jsonl,
            EhFormat::FddbEllipse => DatasetFormat::FddbEllipse,
        };
        let ds = parse_dataset(utf8(text, "text")?, fmt)?;
        put(out, Box::into_raw(Box::new(EhDataset(ds))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn eh_dataset_len(dataset: *const EhDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn eh_dataset_num_faces(dataset: *const EhDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.num_faces())
}

#[no_mangle]
pub unsafe extern "C" fn eh_dataset_free(dataset: *mut EhDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Backend over precomputed detections (JSONL, one image per line).
#[no_mangle]
pub unsafe extern "C" fn eh_backend_precomputed(
    jsonl: *const c_char,
    confidence_threshold: f64,
    latency_s: f64,
    out: *mut *mut EhBackend,
) -> EhStatus {
    clear(out);
    guard(|| {
        let config = BackendConfig::new("precomputed", latency_s).with_threshold(confidence_threshold);
        let backend = load_precomputed(utf8(jsonl, "jsonl")?, config)?;
        put(out, Box::into_raw(Box::new(EhBackend(Box::new(backend)))))
    })
}

/// Defaults for the synthetic detector, for callers that only tweak a few fields.
#[no_mangle]
pub extern "C" fn eh_synth_config_default() -> EhSynthConfig {
    let d = SyntheticDetectorConfig::default();
    EhSynthConfig {
        quality: d.quality,
        size_midpoint: d.size_midpoint,
        size_slope: d.size_slope,
        false_positive_rate: d.false_positive_rate,
        localization_noise: d.localization_noise,
        tp_confidence_floor: d.tp_confidence_floor,
        fp_confidence_ceiling: d.fp_confidence_ceiling,
        seed: d.seed,
    }
}

#[no_mangle]
pub unsafe extern "C" fn eh_backend_synthetic(
    config: *const EhSynthConfig,
    confidence_threshold: f64,
    latency_s: f64,
    out: *mut *mut EhBackend,
) -> EhStatus {
    clear(out);
    guard(|| {
        let c = borrow(config, "config")?;
        let synth = SyntheticDetectorConfig {
            quality: c.quality,
            size_midpoint: c.size_midpoint,
            size_slope: c.size_slope,
            false_positive_rate: c.false_positive_rate,
            localization_noise: c.localization_noise,
            tp_confidence_floor: c.tp_confidence_floor,
            fp_confidence_ceiling: c.fp_confidence_ceiling,
            seed: c.seed,
        };
        let backend =
            SyntheticBackend::new(BackendConfig::new("synthetic", latency_s).with_threshold(confidence_threshold), synth)?;
        put(out, Box::into_raw(Box::new(EhBackend(Box::new(backend)))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn eh_backend_free(backend: *mut EhBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

/// Score table from `id,score` CSV (header optional).
#[no_mangle]
pub unsafe extern "C" fn eh_score_table_parse(csv: *const c_char, out: *mut *mut EhScoreTable) -> EhStatus {
    clear(out);
    guard(|| {
        let table = load_score_table(utf8(csv, "csv")?)?;
        put(out, Box::into_raw(Box::new(EhScoreTable(table))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn eh_score_table_free(table: *mut EhScoreTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Run `backend` on every image and score it. `fp_axis_max` 0 means auto.
#[no_mangle]
pub unsafe extern "C" fn eh_evaluate(
    dataset: *const EhDataset,
    backend: *const EhBackend,
    iou_threshold: f64,
    fp_axis_max: usize,
    out: *mut EhEvalReport,
) -> EhStatus {
    guard(|| {
        let ds = &borrow(dataset, "dataset")?.0;
        let be = &borrow(backend, "backend")?.0;
        let outputs = run_standalone(ds, be.as_ref())?;
        let opts = EvalOptions { iou_threshold, fp_axis: fp_axis(fp_axis_max) };
        let (r, m) = evaluate(&outputs, ds, &opts)?;
        put(
            out,
            EhEvalReport {
                ap: r.ap,
                disc_roc: r.disc_roc,
                cont_roc: r.cont_roc,
                true_positives: m.tp_count(),
                false_positives: m.fp_count(),
                ground_truth_faces: m.num_gt_faces,
            },
        )
    })
}

/// Route `dataset` between `fast` and `slow` with `easy_fraction` of the images
/// (ranked by `criterion`) going to `fast`, then score the result. `table` may
/// be null unless the criterion is an external difficulty score.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn eh_route_evaluate(
    dataset: *const EhDataset,
    fast: *const EhBackend,
    slow: *const EhBackend,
    criterion: *const c_char,
    table: *const EhScoreTable,
    easy_fraction: f64,
    timing_model: *const EhTiming,
    out: *mut EhRouteSummary,
) -> EhStatus {
    guard(|| {
        let ds = &borrow(dataset, "dataset")?.0;
        let fast = &borrow(fast, "fast")?.0;
        let slow = &borrow(slow, "slow")?.0;
        let kind: CriterionKind = utf8(criterion, "criterion")?.parse()?;
        let t = timing(borrow(timing_model, "timing")?)?;
        let mut tables = ScoreTables::new();
        if let (CriterionKind::ExternalDifficulty(name), Some(tab)) = (&kind, table.as_ref()) {
            tables.insert(name.clone(), tab.0.clone());
        }
        if !(0.0..=1.0).contains(&easy_fraction) {
            return Err(Error::Config(format!("easy fraction {easy_fraction} outside [0, 1]")).into());
        }
        let (outputs, plan) =
            route_batch(ds, &kind, SplitSpec::EasyFraction(easy_fraction), fast.as_ref(), slow.as_ref(), &tables)?;
        let (r, m) = evaluate(&outputs, ds, &EvalOptions::default())?;
        put(
            out,
            EhRouteSummary {
                report: EhEvalReport {
                    ap: r.ap,
                    disc_roc: r.disc_roc,
                    cont_roc: r.cont_roc,
                    true_positives: m.tp_count(),
                    false_positives: m.fp_count(),
                    ground_truth_faces: m.num_gt_faces,
                },
                easy_count: plan.easy_count(),
                threshold: plan.threshold,
                seconds_per_image: compute_cost(&plan, &t).avg_seconds_per_image,
            },
        )
    })
}

/// Average seconds per image at easy fraction `p`.
#[no_mangle]
pub unsafe extern "C" fn eh_cost_at(family: EhCostFamily, p: f64, timing_model: *const EhTiming, out: *mut f64) -> EhStatus {
    guard(|| {
        let t = timing(borrow(timing_model, "timing")?)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("easy fraction {p} outside [0, 1]")).into());
        }
        let fam = match family {
            EhCostFamily::Free => CostFamily::Free,
            EhCostFamily::ScoreTable => CostFamily::ScoreTable,
            EhCostFamily::Detector => CostFamily::Detector,
        };
        put(out, cost_at(fam, p, &t).avg_seconds_per_image)
    })
}

/// Threshold that marks the `easy_fraction` smallest of `values` as easy.
#[no_mangle]
pub unsafe extern "C" fn eh_calibrate_threshold(values: *const f64, len: usize, easy_fraction: f64, out: *mut f64) -> EhStatus {
    guard(|| {
        if values.is_null() && len > 0 {
            return Err(invalid("values is null"));
        }
        let slice = if len == 0 { &[][..] } else { std::slice::from_raw_parts(values, len) };
        let scores: Vec<CriterionScore> =
            slice.iter().enumerate().map(|(i, &v)| CriterionScore::new(format!("{i:020}"), v)).collect();
        put(out, calibrate_threshold(&scores, easy_fraction)?)
    })
}
