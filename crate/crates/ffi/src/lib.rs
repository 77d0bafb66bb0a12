//! C interface to `riskratio`.
//!
//! Objects cross the boundary as opaque handles created by `rr_*_new` or
//! `rr_fit` and released with the matching `rr_*_free`. Every fallible
//! function returns an [`RrStatus`]; on failure a description is available
//! from [`rr_last_error`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use riskratio::design::{build_design_matrix, parse_terms, DesignMatrix};
use riskratio::inference::{coefficient_rr, marginal_rr, LogLinearFit, RrEstimate};
use riskratio::{fit_logbin_barrier, fit_logbin_ml, fit_robust_poisson, Dataset, Error, FitResult, LogBinFit};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidData = 3,
    InvalidFormula = 4,
    NonConvergence = 5,
    Singular = 6,
    Numerical = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// Estimator used by [`rr_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrMethod {
    RobustPoisson = 0,
    LogbinMl = 1,
    LogbinBarrier = 2,
}

/// A risk ratio with its interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RrEstimateC {
    pub rr: f64,
    pub log_rr: f64,
    pub se_log_rr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Opaque builder for a dataset: outcome plus named numeric columns.
pub struct RrDataset {
    y: Vec<f64>,
    columns: Vec<(String, Vec<f64>)>,
}

enum AnyFit {
    Robust(FitResult),
    LogBin(LogBinFit),
}

impl AnyFit {
    fn estimate(&self) -> &dyn LogLinearFit {
        match self {
            AnyFit::Robust(f) => f,
            AnyFit::LogBin(f) => f,
        }
    }
}

/// Opaque fitted model.
pub struct RrFit {
    data: Dataset,
    dm: DesignMatrix,
    fit: AnyFit,
    labels: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_for(e: &Error) -> RrStatus {
    match e {
        Error::InvalidData(_)
        | Error::UnknownColumn(_)
        | Error::DegenerateColumn(_)
        | Error::DuplicateColumn(_)
        | Error::NonIncreasingKnots(_)
        | Error::TooFewKnots { .. }
        | Error::TooManyParameters { .. }
        | Error::Dimension(_) => RrStatus::InvalidData,
        Error::InvalidTerm(_) | Error::Parse { .. } => RrStatus::InvalidFormula,
        Error::NonConvergence { .. } | Error::OnBoundary | Error::NoFeasibleStart => RrStatus::NonConvergence,
        Error::SingularJacobian(_) | Error::SingularBread => RrStatus::Singular,
        _ => RrStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (RrStatus, String)>) -> RrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RrStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RrStatus, String) {
    (status_for(&e), e.to_string())
}

fn null(what: &str) -> (RrStatus, String) {
    (RrStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (RrStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RrStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (RrStatus, String)> {
    if p.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(null(what)) };
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn to_c(e: &RrEstimate) -> RrEstimateC {
    RrEstimateC {
        rr: e.rr(),
        log_rr: e.log_rr,
        se_log_rr: e.se_log_rr,
        ci_low: e.ci_low,
        ci_high: e.ci_high,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or null. The
/// pointer is valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn rr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a dataset from `n` outcomes (each 0 or 1).
///
/// # Safety
/// `y` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_new(y: *const f64, n: usize, out: *mut *mut RrDataset) -> RrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let y = slice_arg(y, n, "y")?.to_vec();
        Dataset::new(y.clone(), Vec::new()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RrDataset { y, columns: Vec::new() }));
        Ok(())
    })
}

/// Adds a named covariate column of length `n`.
///
/// # Safety
/// `ds` must come from [`rr_dataset_new`]; `name` must be NUL-terminated;
/// `values` must point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_add_column(
    ds: *mut RrDataset,
    name: *const c_char,
    values: *const f64,
    n: usize,
) -> RrStatus {
    guard(|| {
        let ds = ds.as_mut().ok_or_else(|| null("dataset"))?;
        let name = str_arg(name, "name")?.to_string();
        let values = slice_arg(values, n, "values")?.to_vec();
        let mut columns = ds.columns.clone();
        columns.push((name, values));
        Dataset::new(ds.y.clone(), columns.clone()).map_err(lib_err)?;
        ds.columns = columns;
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must come from [`rr_dataset_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rr_dataset_free(ds: *mut RrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits `formula` (e.g. `"1 + A + rcs(L,4)"`) with `exposure` marked for
/// marginal contrasts. The dataset is copied; it may be freed afterwards.
///
/// # Safety
/// `ds` must be a live dataset, `formula` and `exposure` NUL-terminated
/// strings, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rr_fit(
    ds: *const RrDataset,
    formula: *const c_char,
    exposure: *const c_char,
    method: RrMethod,
    out: *mut *mut RrFit,
) -> RrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let terms = parse_terms(str_arg(formula, "formula")?).map_err(lib_err)?;
        let exposure = str_arg(exposure, "exposure")?;
        let data = Dataset::new(ds.y.clone(), ds.columns.clone()).map_err(lib_err)?;
        let dm = build_design_matrix(&data, &terms, Some(exposure)).map_err(lib_err)?;
        let fit = match method {
            RrMethod::RobustPoisson => AnyFit::Robust(fit_robust_poisson(&dm.x, data.y()).map_err(lib_err)?),
            RrMethod::LogbinMl => AnyFit::LogBin(fit_logbin_ml(&dm.x, data.y()).map_err(lib_err)?),
            RrMethod::LogbinBarrier => AnyFit::LogBin(fit_logbin_barrier(&dm.x, data.y()).map_err(lib_err)?),
        };
        let labels = dm
            .labels
            .iter()
            .map(|l| CString::new(l.as_str()).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(RrFit { data, dm, fit, labels }));
        Ok(())
    })
}

/// Number of model coefficients; 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit.
#[no_mangle]
pub unsafe extern "C" fn rr_fit_num_coefficients(fit: *const RrFit) -> usize {
    fit.as_ref().map_or(0, |f| f.labels.len())
}

/// Label of coefficient `j`, valid for the lifetime of the fit.
///
/// # Safety
/// `fit` must be null or a live fit.
#[no_mangle]
pub unsafe extern "C" fn rr_fit_label(fit: *const RrFit, j: usize) -> *const c_char {
    fit.as_ref()
        .and_then(|f| f.labels.get(j))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Copies coefficients and their standard errors into arrays of length
/// `len`, which must equal [`rr_fit_num_coefficients`]. Either array may be
/// null.
///
/// # Safety
/// Non-null arrays must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rr_fit_coefficients(fit: *const RrFit, beta: *mut f64, se: *mut f64, len: usize) -> RrStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let est = f.fit.estimate();
        let p = est.beta().len();
        if len != p {
            return Err((RrStatus::OutOfRange, format!("expected length {p}, got {len}")));
        }
        for j in 0..p {
            if !beta.is_null() {
                *beta.add(j) = est.beta()[j];
            }
            if !se.is_null() {
                *se.add(j) = est.covariance()[(j, j)].max(0.0).sqrt();
            }
        }
        Ok(())
    })
}

/// Risk ratio `exp(b_j)` for the coefficient labelled `label`.
///
/// # Safety
/// `fit` must be a live fit, `label` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rr_fit_coefficient_rr(
    fit: *const RrFit,
    label: *const c_char,
    level: f64,
    out: *mut RrEstimateC,
) -> RrStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let label = str_arg(label, "label")?;
        if !(level > 0.0 && level < 1.0) {
            return Err((RrStatus::OutOfRange, "level must be in (0, 1)".into()));
        }
        let j =
            f.dm.column_index(label)
                .ok_or_else(|| (RrStatus::OutOfRange, format!("no coefficient `{label}`")))?;
        *out = to_c(&coefficient_rr(f.fit.estimate(), j, label, level));
        Ok(())
    })
}

/// Standardized risk ratio setting the exposure to `a1` versus `a0` over
/// the fitted sample, with a delta-method interval.
///
/// # Safety
/// `fit` must be a live fit, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rr_fit_marginal_rr(
    fit: *const RrFit,
    a1: f64,
    a0: f64,
    level: f64,
    out: *mut RrEstimateC,
) -> RrStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if !(level > 0.0 && level < 1.0) {
            return Err((RrStatus::OutOfRange, "level must be in (0, 1)".into()));
        }
        let e = marginal_rr(f.fit.estimate(), &f.dm.design, &f.data, a1, a0, level).map_err(lib_err)?;
        *out = to_c(&e);
        Ok(())
    })
}

/// Releases a fit. Null is ignored.
///
/// # Safety
/// `fit` must come from [`rr_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rr_fit_free(fit: *mut RrFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
