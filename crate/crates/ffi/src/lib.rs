//! C interface to `gradcode`.
//!
//! Matrices are opaque `GcMatrix` handles created by the `gc_matrix_*`
//! constructors and released with `gc_matrix_free`. Every fallible call
//! returns a `GcStatus`; on failure `gc_last_error_message` describes the
//! most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gradcode::bounds;
use gradcode::codes::{build_catalog_bibd, build_frc, kronecker, BibdParams};
use gradcode::decoding::optimal_squared_error;
use gradcode::worstcase::exhaustive_worst_case_with_cap;
use gradcode::{CodeDescriptor, EncodingMatrix, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Infeasible = 4,
    CapExceeded = 5,
    Numerical = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    Internal = 9,
    Panic = 10,
}

/// Opaque encoding matrix.
pub struct GcMatrix(EncodingMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> GcStatus {
    match err {
        Error::Config(_) | Error::Json(_) => GcStatus::Config,
        Error::CapExceeded { .. } | Error::SizeOverflow { .. } => GcStatus::CapExceeded,
        Error::NumericalFailure { .. } => GcStatus::Numerical,
        Error::InternalInconsistency(_) | Error::Io(_) | Error::Csv(_) => GcStatus::Internal,
        _ => GcStatus::Infeasible,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (GcStatus, String)>) -> GcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside gradcode");
            GcStatus::Panic
        }
    }
}

fn lib<T>(r: gradcode::Result<T>) -> Result<T, (GcStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (GcStatus, String) {
    (GcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn matrix<'a>(m: *const GcMatrix) -> Result<&'a EncodingMatrix, (GcStatus, String)> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("matrix"))
}

unsafe fn store(out: *mut *mut GcMatrix, g: EncodingMatrix) -> Result<(), (GcStatus, String)> {
    *out = Box::into_raw(Box::new(GcMatrix(g)));
    Ok(())
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), (GcStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = v;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a matrix from descriptor JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_matrix_from_descriptor(json: *const c_char, out: *mut *mut GcMatrix) -> GcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let desc = lib(CodeDescriptor::from_json(text(json, "json")?))?;
        store(out, lib(desc.build(&gradcode::Caps::default()))?)
    })
}

/// Builds the fractional repetition code `FRC(n, k, l, r)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_matrix_frc(n: usize, k: usize, l: usize, r: usize, out: *mut *mut GcMatrix) -> GcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        store(out, lib(build_frc(n, k, l, r))?)
    })
}

/// Builds a catalog BIBD code by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_matrix_catalog(name: *const c_char, out: *mut *mut GcMatrix) -> GcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (g, _) = lib(build_catalog_bibd(text(name, "name")?))?;
        store(out, g)
    })
}

/// Kronecker product `a ⊗ b`.
///
/// # Safety
/// `a` and `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_matrix_kronecker(
    a: *const GcMatrix,
    b: *const GcMatrix,
    out: *mut *mut GcMatrix,
) -> GcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        store(out, lib(kronecker(matrix(a)?, matrix(b)?))?)
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_matrix_free(m: *mut GcMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Writes the number of rows `k` and columns `n`.
///
/// # Safety
/// `m` must be a live handle; `k` and `n` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gc_matrix_dims(m: *const GcMatrix, k: *mut usize, n: *mut usize) -> GcStatus {
    guard(|| {
        let g = matrix(m)?;
        put(k, g.k())?;
        put(n, g.n())
    })
}

/// Writes entry `(i, j)` as 0 or 1.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_matrix_get(m: *const GcMatrix, i: usize, j: usize, out: *mut u8) -> GcStatus {
    guard(|| {
        let g = matrix(m)?;
        if i >= g.k() || j >= g.n() {
            return Err((
                GcStatus::OutOfRange,
                format!("({i}, {j}) outside {}x{}", g.k(), g.n()),
            ));
        }
        put(out, g.get(i, j) as u8)
    })
}

/// Normalized error of the best decoding from the given surviving workers.
///
/// # Safety
/// `m` must be a live handle, `survivors` must point to `len` indices (or
/// be NULL with `len == 0`) and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_optimal_error(
    m: *const GcMatrix,
    survivors: *const usize,
    len: usize,
    out: *mut f64,
) -> GcStatus {
    guard(|| {
        let g = matrix(m)?;
        let u: &[usize] = if len == 0 {
            &[]
        } else if survivors.is_null() {
            return Err(null("survivors"));
        } else {
            std::slice::from_raw_parts(survivors, len)
        };
        if let Some(&j) = u.iter().find(|&&j| j >= g.n()) {
            return Err((GcStatus::OutOfRange, format!("worker {j} outside n = {}", g.n())));
        }
        let e = lib(optimal_squared_error(g, u))?;
        put(out, e / g.k() as f64)
    })
}

/// Exhaustive worst case over all `s`-straggler sets, visiting at most `cap`
/// sets. Writes the normalized error and the `s` straggler indices of the
/// lexicographically smallest worst set into `witness` (capacity
/// `witness_cap`, may be NULL when `s == 0`).
///
/// # Safety
/// `m` must be a live handle, `error` a valid pointer and `witness` valid
/// for `witness_cap` writes.
#[no_mangle]
pub unsafe extern "C" fn gc_worst_case_exhaustive(
    m: *const GcMatrix,
    s: usize,
    cap: u64,
    error: *mut f64,
    witness: *mut usize,
    witness_cap: usize,
) -> GcStatus {
    guard(|| {
        let g = matrix(m)?;
        if error.is_null() {
            return Err(null("error"));
        }
        if s > 0 && witness.is_null() {
            return Err(null("witness"));
        }
        if witness_cap < s {
            return Err((
                GcStatus::BufferTooSmall,
                format!("witness buffer holds {witness_cap}, need {s}"),
            ));
        }
        let res = lib(exhaustive_worst_case_with_cap(g, s, cap as u128))?;
        for (t, &j) in res.witness.stragglers.iter().enumerate() {
            *witness.add(t) = j;
        }
        put(error, res.error)
    })
}

/// FRC error `(l/k) floor(s/r)` for real `s`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_frc_error(l: usize, k: usize, r: usize, s: f64, out: *mut f64) -> GcStatus {
    guard(|| put(out, lib(bounds::frc_error(l, k, r, s))?))
}

/// Worst-case error of a lambda-uniform code.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_bibd_error(
    n: usize,
    k: usize,
    l: usize,
    lambda: usize,
    s: usize,
    out: *mut f64,
) -> GcStatus {
    guard(|| put(out, lib(bounds::bibd_error(n, k, l, lambda, s))?))
}

/// Upper bound for the product of two lambda-uniform codes, each given as
/// `(n, k, l, lambda)` with `r = l n / k`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gc_kron_bibd_bound(
    n1: usize,
    k1: usize,
    l1: usize,
    lambda1: usize,
    n2: usize,
    k2: usize,
    l2: usize,
    lambda2: usize,
    s: usize,
    out: *mut f64,
) -> GcStatus {
    guard(|| {
        let mk = |n: usize, k: usize, l: usize, lambda: usize| BibdParams {
            n,
            k,
            l,
            r: (l * n).checked_div(k).unwrap_or(0),
            lambda,
        };
        let rec = lib(bounds::thm5_bound(&mk(n1, k1, l1, lambda1), &mk(n2, k2, l2, lambda2), s))?;
        put(out, rec.value)
    })
}
