//! C ABI for lpaudit.
//!
//! Conventions:
//! - Every fallible call returns an [`LpaStatus`]; results go through out
//!   pointers that are written only on success.
//! - Handles are opaque and released with their matching `*_free` call.
//! - Strings returned to the caller are NUL-terminated UTF-8 owned by the
//!   caller and released with [`lpa_string_free`].
//! - On failure, [`lpa_last_error_message`] describes the error for the
//!   calling thread.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lpaudit::audit::{run_audit, AuditError};
use lpaudit::config::{AuditConfig, ConfigError};
use lpaudit::geo::{haversine_distance, GeoPoint};
use lpaudit::report::{AuditReport, LocationVerdict};
use lpaudit::score::{read_ground_truth, read_predictions, score, Confusion};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Dataset = 5,
    Io = 6,
    NotFound = 7,
    Score = 8,
    Panic = 99,
}

/// Validated audit configuration.
pub struct LpaConfig {
    inner: AuditConfig,
}

/// Result of an audit run.
pub struct LpaReport {
    inner: AuditReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(LpaStatus, String);

impl Fail {
    fn null(what: &str) -> Self {
        Fail(LpaStatus::NullArgument, format!("{what} is null"))
    }
}

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        Fail(LpaStatus::Config, e.to_string())
    }
}

impl From<AuditError> for Fail {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::Config(c) => c.into(),
            other => Fail(LpaStatus::Dataset, other.to_string()),
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LpaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LpaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(LpaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::null(what))
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NUL removed").into_raw()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lpa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next lpaudit call on the same thread.
#[no_mangle]
pub extern "C" fn lpa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lpa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_config_from_json(json: *const c_char, out: *mut *mut LpaConfig) -> LpaStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        let inner = AuditConfig::from_json(text)?;
        inner.validate()?;
        *out = Box::into_raw(Box::new(LpaConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`lpa_config_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lpa_config_free(cfg: *mut LpaConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the audit described by `cfg`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_audit_run(cfg: *const LpaConfig, out: *mut *mut LpaReport) -> LpaStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let out = out_arg(out, "out")?;
        let inner = run_audit(&cfg.inner)?;
        *out = Box::into_raw(Box::new(LpaReport { inner }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`lpa_audit_run`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lpa_report_free(report: *mut LpaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of users in the report.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_report_user_count(report: *const LpaReport, out: *mut usize) -> LpaStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        *out_arg(out, "out")? = r.inner.users.len();
        Ok(())
    })
}

/// Id of the user at `index` (users are sorted by id).
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_report_user_id(report: *const LpaReport, index: usize, out: *mut *mut c_char) -> LpaStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let out = out_arg(out, "out")?;
        let u = r.inner.users.get(index).ok_or_else(|| Fail(LpaStatus::NotFound, format!("no user at index {index}")))?;
        *out = to_c(u.user_id.clone());
        Ok(())
    })
}

/// Which inferred location to read.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpaLocationKind {
    Home = 0,
    Work = 1,
}

/// A chosen location. `address` is NULL when the cluster has no address;
/// release it with [`lpa_string_free`].
#[repr(C)]
pub struct LpaLocation {
    pub cluster_id: u32,
    pub lat: f64,
    pub lon: f64,
    pub score: f64,
    pub address: *mut c_char,
}

/// Reads the home or work verdict of `user_id`. Returns `NotFound` when the
/// user is absent or no location was inferred.
///
/// # Safety
/// `report` must be a live handle, `user_id` NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_report_location(
    report: *const LpaReport,
    user_id: *const c_char,
    kind: LpaLocationKind,
    out: *mut LpaLocation,
) -> LpaStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let id = str_arg(user_id, "user_id")?;
        let out = out_arg(out, "out")?;
        let u = r.inner.user(id).ok_or_else(|| Fail(LpaStatus::NotFound, format!("unknown user {id:?}")))?;
        let v: &LocationVerdict = match kind {
            LpaLocationKind::Home => u.home.as_ref(),
            LpaLocationKind::Work => u.work.as_ref(),
        }
        .ok_or_else(|| Fail(LpaStatus::NotFound, format!("no {kind:?} inferred for {id:?}")))?;
        *out = LpaLocation {
            cluster_id: v.cluster_id,
            lat: v.lat,
            lon: v.lon,
            score: v.score,
            address: v.address.clone().map_or(ptr::null_mut(), to_c),
        };
        Ok(())
    })
}

/// Serializes the whole report as JSON lines.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_report_to_jsonl(report: *const LpaReport, out: *mut *mut c_char) -> LpaStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let out = out_arg(out, "out")?;
        *out = to_c(r.inner.to_jsonl());
        Ok(())
    })
}

/// Writes the report as JSON lines to `path`.
///
/// # Safety
/// `report` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lpa_report_write(report: *const LpaReport, path: *const c_char) -> LpaStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let path = str_arg(path, "path")?;
        let f = File::create(path).map_err(|e| Fail(LpaStatus::Io, format!("{path}: {e}")))?;
        r.inner.write_jsonl(BufWriter::new(f)).map_err(|e| Fail(LpaStatus::Io, format!("{path}: {e}")))
    })
}

/// Great-circle distance in meters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out: *mut f64) -> LpaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let bad = |e: lpaudit::geo::GeoError| Fail(LpaStatus::InvalidArgument, e.to_string());
        let a = GeoPoint::new(lat1, lon1).map_err(bad)?;
        let b = GeoPoint::new(lat2, lon2).map_err(bad)?;
        *out = haversine_distance(a, b);
        Ok(())
    })
}

/// Precision and recall of a confusion count; zero when undefined.
///
/// # Safety
/// `precision` and `recall` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_confusion_rates(
    tp: usize,
    fp: usize,
    fn_: usize,
    precision: *mut f64,
    recall: *mut f64,
) -> LpaStatus {
    guard(|| {
        let p = out_arg(precision, "precision")?;
        let r = out_arg(recall, "recall")?;
        let c = Confusion::new(tp, fp, fn_);
        *p = c.precision();
        *r = c.recall();
        Ok(())
    })
}

/// Scores a report file against a ground-truth CSV; the result is the score
/// table as JSON.
///
/// # Safety
/// Paths must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpa_score_files(
    report_path: *const c_char,
    truth_path: *const c_char,
    out: *mut *mut c_char,
) -> LpaStatus {
    guard(|| {
        let rp = str_arg(report_path, "report_path")?;
        let tp = str_arg(truth_path, "truth_path")?;
        let out = out_arg(out, "out")?;
        let open = |p: &str| File::open(p).map(BufReader::new).map_err(|e| Fail(LpaStatus::Io, format!("{p}: {e}")));
        let preds = read_predictions(open(rp)?).map_err(|e| Fail(LpaStatus::Score, e.to_string()))?;
        let truth: BTreeMap<_, _> = read_ground_truth(open(tp)?).map_err(|e| Fail(LpaStatus::Score, e.to_string()))?;
        let table = score(&preds, &truth).map_err(|e| Fail(LpaStatus::Score, e.to_string()))?;
        *out = to_c(serde_json::to_string(&table).expect("score table serializes"));
        Ok(())
    })
}
