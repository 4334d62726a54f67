//! C ABI over the circuitry library.
//!
//! Matrices and results are opaque handles owned by the caller and released
//! with the matching `_free` function. Every call returns a
//! [`CircuitryStatus`]; on failure a message is available from
//! [`circuitry_last_error_message`] on the same thread. Column indices are
//! zero-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use circuitry::circuit::Circuit;
use circuitry::io::load_matrix;
use circuitry::matrix::lq_factor;
use circuitry::near::{near_search, NearConfig};
use circuitry::random_search::{
    detection_probability, required_trials, search, SearchConfig, SearchStatus,
};
use circuitry::systematic::circuitfind;
use circuitry::{DenseMatrix, Error, Tolerances};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CircuitryStatus {
    /// Success; for searches, a circuit was found.
    Ok = 0,
    /// The search finished without a circuit. The result handle is still set.
    NotFound = 1,
    NullPointer = 2,
    InvalidInput = 3,
    Infeasible = 4,
    Numerical = 5,
    NoSpectralSplit = 6,
    Parse = 7,
    Io = 8,
    Panic = 9,
}

/// Dense real matrix.
pub struct CircuitryMatrix {
    inner: DenseMatrix,
}

/// Outcome of a search.
pub struct CircuitryResult {
    found: bool,
    indices: Vec<usize>,
    witness: Vec<f64>,
    residual_p: f64,
    trials: u64,
    nullspace_evals: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> CircuitryStatus {
    match err {
        Error::InvalidInput(_) | Error::UnsupportedFormat(_) => CircuitryStatus::InvalidInput,
        Error::Infeasible(_) => CircuitryStatus::Infeasible,
        Error::Numerical(_) => CircuitryStatus::Numerical,
        Error::NoSpectralSplit { .. } => CircuitryStatus::NoSpectralSplit,
        Error::Parse { .. } => CircuitryStatus::Parse,
        Error::Io(_) => CircuitryStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<CircuitryStatus, Fail>) -> CircuitryStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Fail::Lib(err))) => {
            set_error(err.to_string());
            status_of(&err)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is NULL"));
            CircuitryStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic");
            CircuitryStatus::Panic
        }
    }
}

fn null_error(what: &'static str) -> Fail {
    Fail::Null(what)
}

unsafe fn matrix_ref<'a>(m: *const CircuitryMatrix) -> Result<&'a DenseMatrix, Fail> {
    // SAFETY: caller passes NULL or a live handle from this library.
    unsafe { m.as_ref() }
        .map(|m| &m.inner)
        .ok_or_else(|| null_error("matrix"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    // SAFETY: caller checked `out` is non-null and writable.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

fn circuit_result(c: Option<&Circuit>, residual_p: f64, trials: u64, evals: u64) -> CircuitryResult {
    CircuitryResult {
        found: c.is_some(),
        indices: c.map(|c| c.indices().as_slice().to_vec()).unwrap_or_default(),
        witness: c.map(|c| c.witness().to_vec()).unwrap_or_default(),
        residual_p,
        trials,
        nullspace_evals: evals,
    }
}

fn found_status(found: bool) -> CircuitryStatus {
    if found {
        CircuitryStatus::Ok
    } else {
        CircuitryStatus::NotFound
    }
}

/// Builds a `rows x cols` matrix from `rows * cols` row-major values.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn circuitry_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut CircuitryMatrix,
) -> CircuitryStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_error("out"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidInput("rows * cols overflows".into()))?;
        if data.is_null() && len > 0 {
            return Err(null_error("data"));
        }
        let values: &[f64] = if len == 0 {
            &[]
        } else {
            // SAFETY: caller guarantees `len` readable doubles.
            unsafe { std::slice::from_raw_parts(data, len) }
        };
        let inner = DenseMatrix::from_row_slice(rows, cols, values)?;
        unsafe { put(out, CircuitryMatrix { inner }) };
        Ok(CircuitryStatus::Ok)
    })
}

/// Loads a Matrix Market (`.mtx`) or headerless CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circuitry_matrix_load(
    path: *const c_char,
    out: *mut *mut CircuitryMatrix,
) -> CircuitryStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null_error("path or out"));
        }
        // SAFETY: caller guarantees a NUL-terminated string.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Error::InvalidInput("path is not UTF-8".into()))?;
        let inner = load_matrix(Path::new(path), None)?;
        unsafe { put(out, CircuitryMatrix { inner }) };
        Ok(CircuitryStatus::Ok)
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn circuitry_matrix_free(m: *mut CircuitryMatrix) {
    if !m.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(m) });
    }
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn circuitry_matrix_rows(m: *const CircuitryMatrix) -> usize {
    unsafe { matrix_ref(m) }.map_or(0, DenseMatrix::rows)
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn circuitry_matrix_cols(m: *const CircuitryMatrix) -> usize {
    unsafe { matrix_ref(m) }.map_or(0, DenseMatrix::cols)
}

/// Randomized search for a circuit of size at most `max_size`, stopping
/// once the miss probability is at most `epsilon`. Returns `Ok` or
/// `NotFound` with `*out` set.
///
/// # Safety
/// `m` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circuitry_find(
    m: *const CircuitryMatrix,
    max_size: usize,
    epsilon: f64,
    seed: u64,
    out: *mut *mut CircuitryResult,
) -> CircuitryStatus {
    guard(|| {
        let a = unsafe { matrix_ref(m) }?;
        if out.is_null() {
            return Err(null_error("out"));
        }
        let tol = Tolerances::default();
        let f = lq_factor(a, &tol)?;
        let res = search(&f, &SearchConfig::new(max_size, epsilon, seed))?;
        let found = res.status == SearchStatus::Found;
        let r = circuit_result(
            res.circuit.as_ref(),
            res.state.p(),
            res.state.trials,
            res.state.nullspace_evals,
        );
        unsafe { put(out, r) };
        Ok(found_status(found))
    })
}

/// Exhaustive search: `Ok` with a circuit of size at most `max_size`, or
/// `NotFound` when none exists.
///
/// # Safety
/// `m` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circuitry_exclude(
    m: *const CircuitryMatrix,
    max_size: usize,
    seed: u64,
    out: *mut *mut CircuitryResult,
) -> CircuitryStatus {
    guard(|| {
        let a = unsafe { matrix_ref(m) }?;
        if out.is_null() {
            return Err(null_error("out"));
        }
        let res = circuitfind(a, max_size, &Tolerances::default(), seed, None)?;
        let r = circuit_result(
            res.circuit.as_ref(),
            0.0,
            res.stats.subsets,
            res.stats.nullspace_evals,
        );
        unsafe { put(out, r) };
        Ok(found_status(res.found))
    })
}

/// Randomized search for an `epsilon`-near circuit of size at most
/// `max_size`, stopping once the miss probability is at most `delta`.
///
/// # Safety
/// `m` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circuitry_near_search(
    m: *const CircuitryMatrix,
    max_size: usize,
    epsilon: f64,
    delta: f64,
    seed: u64,
    out: *mut *mut CircuitryResult,
) -> CircuitryStatus {
    guard(|| {
        let a = unsafe { matrix_ref(m) }?;
        if out.is_null() {
            return Err(null_error("out"));
        }
        let res = near_search(a, &NearConfig::new(max_size, epsilon, delta, seed))?;
        let r = CircuitryResult {
            found: res.near.is_some(),
            indices: res
                .near
                .as_ref()
                .map(|n| n.indices.as_slice().to_vec())
                .unwrap_or_default(),
            witness: res.near.as_ref().map(|n| n.witness.clone()).unwrap_or_default(),
            residual_p: res.state.p(),
            trials: res.state.trials,
            nullspace_evals: res.state.nullspace_evals,
        };
        let found = r.found;
        unsafe { put(out, r) };
        Ok(found_status(found))
    })
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn circuitry_result_found(r: *const CircuitryResult) -> bool {
    unsafe { r.as_ref() }.is_some_and(|r| r.found)
}

/// Number of columns in the circuit (0 when none was found).
///
/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn circuitry_result_size(r: *const CircuitryResult) -> usize {
    unsafe { r.as_ref() }.map_or(0, |r| r.indices.len())
}

/// Copies up to `cap` zero-based indices into `buf`; returns the full count.
///
/// # Safety
/// `r` must be a live result handle; `buf` must hold `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn circuitry_result_indices(
    r: *const CircuitryResult,
    buf: *mut usize,
    cap: usize,
) -> usize {
    let Some(r) = (unsafe { r.as_ref() }) else { return 0 };
    if !buf.is_null() {
        let n = cap.min(r.indices.len());
        // SAFETY: caller guarantees `cap` writable slots.
        unsafe { ptr::copy_nonoverlapping(r.indices.as_ptr(), buf, n) };
    }
    r.indices.len()
}

/// Copies up to `cap` witness entries (one per matrix column) into `buf`;
/// returns the full length.
///
/// # Safety
/// `r` must be a live result handle; `buf` must hold `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn circuitry_result_witness(
    r: *const CircuitryResult,
    buf: *mut f64,
    cap: usize,
) -> usize {
    let Some(r) = (unsafe { r.as_ref() }) else { return 0 };
    if !buf.is_null() {
        let n = cap.min(r.witness.len());
        // SAFETY: caller guarantees `cap` writable slots.
        unsafe { ptr::copy_nonoverlapping(r.witness.as_ptr(), buf, n) };
    }
    r.witness.len()
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn circuitry_result_residual_p(r: *const CircuitryResult) -> f64 {
    unsafe { r.as_ref() }.map_or(f64::NAN, |r| r.residual_p)
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn circuitry_result_trials(r: *const CircuitryResult) -> u64 {
    unsafe { r.as_ref() }.map_or(0, |r| r.trials)
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn circuitry_result_nullspace_evals(r: *const CircuitryResult) -> u64 {
    unsafe { r.as_ref() }.map_or(0, |r| r.nullspace_evals)
}

/// # Safety
/// `r` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn circuitry_result_free(r: *mut CircuitryResult) {
    if !r.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(r) });
    }
}

/// Single-trial chance of drawing a fixed size-`n` circuit among `cols`
/// columns of rank `rank`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circuitry_detection_probability(
    cols: usize,
    rank: usize,
    n: usize,
    out: *mut f64,
) -> CircuitryStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_error("out"));
        }
        let p = detection_probability(cols, rank, n)?;
        unsafe { *out = p };
        Ok(CircuitryStatus::Ok)
    })
}

/// Trials after which a size-`n` circuit escapes with probability at most
/// `epsilon` at rank ratio `rho`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn circuitry_required_trials(
    epsilon: f64,
    rho: f64,
    n: usize,
    out: *mut u64,
) -> CircuitryStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_error("out"));
        }
        let k = required_trials(epsilon, rho, n)?;
        unsafe { *out = k };
        Ok(CircuitryStatus::Ok)
    })
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn circuitry_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
