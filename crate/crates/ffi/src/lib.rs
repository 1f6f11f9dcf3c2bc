//! C ABI over `dtrlab`.
//!
//! Conventions:
//! - Every fallible function returns a [`DtrStatus`]; results go through out
//!   pointers, which are written only on success.
//! - On failure, [`dtr_last_error`] describes the error. The message is
//!   thread-local and stays valid until the next failing call on that thread.
//! - Strings returned through `char **` are owned by the caller and must be
//!   released with [`dtr_string_free`].
//! - Handles are released with their `_free` function. Passing NULL to a
//!   `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dtrlab::io::{load_dataset, read_long, read_wide, write_wide};
use dtrlab::pipeline::{fit_method, FitConfig, MethodOutput};
use dtrlab::simlab::dgp::Simulator;
use dtrlab::simlab::{generate_case1, generate_case2, mc_value, Case1, Case2};
use dtrlab::{Dataset, DtrError, MethodTag, RegimeSpec, Schema};

/// Status codes. Values 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtrStatus {
    DtrOk = 0,
    /// A required pointer argument was NULL.
    DtrNullPointer = 1,
    /// Invalid configuration, formula, method name or generator spec.
    DtrConfigError = 2,
    /// Invalid data, shapes, I/O or parse errors.
    DtrDataError = 3,
    /// Singular systems, non-convergence and other numerical failures.
    DtrNumericalError = 4,
    /// A string argument was not valid UTF-8.
    DtrInvalidUtf8 = 5,
    /// An index argument was out of range.
    DtrOutOfRange = 6,
    /// The library panicked; this is a bug.
    DtrPanic = 7,
}

/// Opaque dataset handle.
pub struct DtrDataset {
    data: Dataset,
}

/// Opaque fitted-method handle.
pub struct DtrFit {
    out: MethodOutput,
    schema: Schema,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(DtrStatus, String);

impl From<DtrError> for Failure {
    fn from(e: DtrError) -> Self {
        let status = match e.exit_code() {
            2 => DtrStatus::DtrConfigError,
            3 => DtrStatus::DtrDataError,
            _ => DtrStatus::DtrNumericalError,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: DtrStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, recording failures and containing panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DtrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DtrStatus::DtrOk,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DtrStatus::DtrPanic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(DtrStatus::DtrNullPointer, format!("{what} is NULL")));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(DtrStatus::DtrInvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| fail(DtrStatus::DtrNullPointer, format!("{what} is NULL")))
}

fn check_out<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(DtrStatus::DtrNullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(DtrStatus::DtrDataError, "string contains a NUL byte"))
}

fn simulator(name: &str) -> Result<Box<dyn Simulator>, Failure> {
    match name {
        "case1" => Ok(Box::new(Case1::default())),
        "case2" => Ok(Box::new(Case2::default())),
        _ => Err(fail(DtrStatus::DtrConfigError, format!("unknown case `{name}`; expected case1 or case2"))),
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dtr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer is owned by the library.
#[no_mangle]
pub extern "C" fn dtr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dtr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Parses CSV text: wide format, or long format when `long_format` is nonzero.
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_dataset_from_csv(
    csv: *const c_char,
    long_format: i32,
    out: *mut *mut DtrDataset,
) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let csv = unsafe { text(csv, "csv") }?;
        let data = if long_format != 0 { read_long(csv)? } else { read_wide(csv)? };
        unsafe { *out = Box::into_raw(Box::new(DtrDataset { data })) };
        Ok(())
    })
}

/// Loads a CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_dataset_load(
    path: *const c_char,
    long_format: i32,
    out: *mut *mut DtrDataset,
) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let path = unsafe { text(path, "path") }?;
        let data = load_dataset(path, long_format != 0)?;
        unsafe { *out = Box::into_raw(Box::new(DtrDataset { data })) };
        Ok(())
    })
}

/// Simulates `n` trajectories from the built-in `case1` or `case2` generator.
///
/// # Safety
/// `case_name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_dataset_simulate(
    case_name: *const c_char,
    n: usize,
    seed: u64,
    out: *mut *mut DtrDataset,
) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let data = match unsafe { text(case_name, "case_name") }? {
            "case1" => generate_case1(n, seed)?,
            "case2" => generate_case2(n, seed)?,
            other => return Err(simulator(other).err().expect("unknown case")),
        };
        unsafe { *out = Box::into_raw(Box::new(DtrDataset { data })) };
        Ok(())
    })
}

/// Number of trajectories.
///
/// # Safety
/// `data` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_dataset_len(data: *const DtrDataset, out: *mut usize) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let d = unsafe { handle(data, "data") }?;
        unsafe { *out = d.data.len() };
        Ok(())
    })
}

/// Number of decision stages.
///
/// # Safety
/// `data` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_dataset_stage_count(data: *const DtrDataset, out: *mut usize) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let d = unsafe { handle(data, "data") }?;
        unsafe { *out = d.data.stage_count() };
        Ok(())
    })
}

/// Wide-format CSV of the dataset. Free the result with `dtr_string_free`.
///
/// # Safety
/// `data` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_dataset_to_csv(data: *const DtrDataset, out: *mut *mut c_char) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let d = unsafe { handle(data, "data") }?;
        let s = owned_string(write_wide(&d.data)?)?;
        unsafe { *out = s };
        Ok(())
    })
}

/// # Safety
/// `data` must be NULL or a handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn dtr_dataset_free(data: *mut DtrDataset) {
    if !data.is_null() {
        drop(unsafe { Box::from_raw(data) });
    }
}

/// Fits `method` (q, a1, a2, a3, a4, dwols, ctree, ipwe, aipwe, bowl).
/// `config` is either a preset name (`case1`, `case2`) or TOML model
/// specification text. `seed` drives trees and cross-validation.
///
/// # Safety
/// String arguments must be NUL-terminated; `data` must be a live handle;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_fit(
    data: *const DtrDataset,
    method: *const c_char,
    config: *const c_char,
    seed: u64,
    out: *mut *mut DtrFit,
) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let d = unsafe { handle(data, "data") }?;
        let name = unsafe { text(method, "method") }?;
        let tag = MethodTag::parse(name).ok_or_else(|| {
            let names: Vec<&str> = MethodTag::ALL.iter().map(|m| m.name()).collect();
            fail(
                DtrStatus::DtrConfigError,
                format!("unknown method `{name}`; expected one of: {}", names.join(", ")),
            )
        })?;
        let mut cfg = match unsafe { text(config, "config") }? {
            "case1" => FitConfig::case1(),
            "case2" => FitConfig::case2(),
            toml => FitConfig::from_toml(toml)?,
        };
        cfg.seed = seed;
        let fitted = fit_method(tag, &d.data, &cfg)?;
        let handle = DtrFit {
            out: fitted,
            schema: d.data.schema().clone(),
        };
        unsafe { *out = Box::into_raw(Box::new(handle)) };
        Ok(())
    })
}

/// Number of estimated parameters.
///
/// # Safety
/// `fit` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_fit_parameter_count(fit: *const DtrFit, out: *mut usize) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = unsafe { handle(fit, "fit") }?;
        unsafe { *out = f.out.parameters.len() };
        Ok(())
    })
}

/// Copies up to `len` parameters into `buf` and stores the total count in
/// `count` (which may be NULL).
///
/// # Safety
/// `fit` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dtr_fit_parameters(
    fit: *const DtrFit,
    buf: *mut f64,
    len: usize,
    count: *mut usize,
) -> DtrStatus {
    guard(|| {
        let f = unsafe { handle(fit, "fit") }?;
        let p = &f.out.parameters;
        if len > 0 {
            check_out(buf, "buf")?;
            let k = len.min(p.len());
            unsafe { ptr::copy_nonoverlapping(p.as_ptr(), buf, k) };
        }
        if !count.is_null() {
            unsafe { *count = p.len() };
        }
        Ok(())
    })
}

/// Label of parameter `index`, such as `psi2[L2]`. Free with `dtr_string_free`.
///
/// # Safety
/// `fit` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_fit_parameter_label(fit: *const DtrFit, index: usize, out: *mut *mut c_char) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = unsafe { handle(fit, "fit") }?;
        let label = f.out.parameter_labels.get(index).ok_or_else(|| {
            fail(
                DtrStatus::DtrOutOfRange,
                format!("parameter index {index} out of range ({} parameters)", f.out.parameters.len()),
            )
        })?;
        let s = owned_string(label.clone())?;
        unsafe { *out = s };
        Ok(())
    })
}

/// Human-readable rule of stage `stage` (1-based), e.g. `treat if L2 < 353.20`.
///
/// # Safety
/// `fit` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_fit_rule(fit: *const DtrFit, stage: usize, out: *mut *mut c_char) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = unsafe { handle(fit, "fit") }?;
        let k = f.out.regime.stage_count();
        if stage == 0 || stage > k {
            return Err(fail(DtrStatus::DtrOutOfRange, format!("stage {stage} out of range 1..={k}")));
        }
        let s = owned_string(f.out.regime.rule(stage).describe())?;
        unsafe { *out = s };
        Ok(())
    })
}

/// The fitted regime as JSON, loadable by `dtrlab evaluate`. Free with
/// `dtr_string_free`.
///
/// # Safety
/// `fit` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_fit_regime_json(fit: *const DtrFit, out: *mut *mut c_char) -> DtrStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = unsafe { handle(fit, "fit") }?;
        let s = owned_string(f.out.regime.to_spec(&f.schema).to_json()?)?;
        unsafe { *out = s };
        Ok(())
    })
}

/// Recommended action (0 or 1) of the fitted regime for trajectory `row`
/// (0-based) of `data` at stage `stage` (1-based).
///
/// # Safety
/// Handles must be live; `action` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_fit_decide(
    fit: *const DtrFit,
    data: *const DtrDataset,
    row: usize,
    stage: usize,
    action: *mut u8,
) -> DtrStatus {
    guard(|| {
        check_out(action, "action")?;
        let f = unsafe { handle(fit, "fit") }?;
        let d = unsafe { handle(data, "data") }?;
        if d.data.schema() != &f.schema {
            return Err(fail(DtrStatus::DtrDataError, "dataset columns differ from the fitted data"));
        }
        if row >= d.data.len() {
            return Err(fail(DtrStatus::DtrOutOfRange, format!("row {row} out of range ({} rows)", d.data.len())));
        }
        let h = d.data.get(row).history(stage)?;
        let a = dtrlab::apply_regime(&f.out.regime, &h)?;
        unsafe { *action = a };
        Ok(())
    })
}

/// # Safety
/// `fit` must be NULL or a handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn dtr_fit_free(fit: *mut DtrFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// Monte Carlo value of a regime (JSON, as from `dtr_fit_regime_json`)
/// under the built-in `case1` or `case2` generator, from `draws` simulated
/// trajectories.
///
/// # Safety
/// String arguments must be NUL-terminated; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtr_mc_value(
    case_name: *const c_char,
    regime_json: *const c_char,
    draws: usize,
    seed: u64,
    value: *mut f64,
) -> DtrStatus {
    guard(|| {
        check_out(value, "value")?;
        let sim = simulator(unsafe { text(case_name, "case_name") }?)?;
        let spec = RegimeSpec::from_json(unsafe { text(regime_json, "regime_json") }?)?;
        let regime = spec.resolve(sim.schema())?;
        let report = mc_value(sim.as_ref(), &regime, draws, seed)?;
        unsafe { *value = report.value };
        Ok(())
    })
}
