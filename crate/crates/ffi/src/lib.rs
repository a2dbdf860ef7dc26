//! C interface to the refcons engine.
//!
//! Every fallible call returns an [`RcStatus`]; the message of the most
//! recent failure on the calling thread is available through
//! [`rc_last_error`]. Matrices are written row-major into caller buffers of
//! at least `n * n` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use refcons::aggregates;
use refcons::bounds::{bound_matrix, BoundStyle};
use refcons::dataset::{load_direct, parse_direct, PooledDataset};
use refcons::gss::{gss_full, GssOptions, GssResult};
use refcons::indices::{self, IndexMatrix};
use refcons::rpgraph::{check_cewec, check_harp, RpGraph};
use refcons::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Config = 6,
    Domain = 7,
    Numerical = 8,
    Inconsistent = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcMethod {
    Fisher = 0,
    Geks = 1,
    Tornqvist = 2,
    Ccd = 3,
    GearyKhamis = 4,
    MarketRate = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcBoundStyle {
    Laspeyres = 0,
    Paasche = 1,
}

/// Opaque pooled dataset.
pub struct RcDataset {
    inner: PooledDataset,
}

/// Opaque generalised star system result.
pub struct RcGss {
    inner: GssResult,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> RcStatus {
    match err {
        Error::Io { .. } => RcStatus::Io,
        Error::Parse { .. } | Error::Serde(_) => RcStatus::Parse,
        Error::Structural(_) | Error::Validation(_) | Error::EmptyDataset(_) => RcStatus::Validation,
        Error::Config(_) => RcStatus::Config,
        Error::Domain(_) => RcStatus::Domain,
        Error::Numerical(_) => RcStatus::Numerical,
        Error::Inconsistent(_) => RcStatus::Inconsistent,
    }
}

struct Fail(RcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RcStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(RcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(RcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn fill(out: *mut f64, cap: usize, values: impl ExactSizeIterator<Item = f64>) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(RcStatus::NullPointer, "output buffer is null".into()));
    }
    if values.len() > cap {
        return Err(Fail(
            RcStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", values.len()),
        ));
    }
    for (k, v) in values.enumerate() {
        *out.add(k) = v;
    }
    Ok(())
}

unsafe fn fill_matrix(out: *mut f64, cap: usize, m: &[Vec<f64>]) -> Result<(), Fail> {
    let n = m.len();
    fill(out, cap, (0..n * n).map(|k| m[k / n][k % n]))
}

unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    if let Some(n) = needed.as_mut() {
        *n = s.len() + 1;
    }
    if buf.is_null() || cap < s.len() + 1 {
        return Err(Fail(
            RcStatus::BufferTooSmall,
            format!("string needs {} bytes", s.len() + 1),
        ));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to fit). Returns the untruncated length including the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rc_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len() + 1
    })
}

/// Parses a direct-format CSV held in memory.
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_dataset_parse(csv: *const c_char, out: *mut *mut RcDataset) -> RcStatus {
    guard(|| {
        let csv = text(csv, "csv")?;
        if out.is_null() {
            return Err(Fail(RcStatus::NullPointer, "out is null".into()));
        }
        let inner = parse_direct(csv, "<memory>")?;
        *out = Box::into_raw(Box::new(RcDataset { inner }));
        Ok(())
    })
}

/// Loads a direct-format CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_dataset_load(path: *const c_char, out: *mut *mut RcDataset) -> RcStatus {
    guard(|| {
        let path = text(path, "path")?;
        if out.is_null() {
            return Err(Fail(RcStatus::NullPointer, "out is null".into()));
        }
        let inner = load_direct(Path::new(path))?;
        *out = Box::into_raw(Box::new(RcDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rc_dataset_free(ds: *mut RcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of countries, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_dataset_len(ds: *const RcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Number of goods, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_dataset_goods(ds: *const RcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.goods())
}

/// Copies the id of country `i`. `needed` (optional) receives the buffer
/// size required.
///
/// # Safety
/// `ds` must be a live handle; `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rc_dataset_id(
    ds: *const RcDataset,
    i: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> RcStatus {
    guard(|| {
        let d = &borrow(ds, "dataset")?.inner;
        if i >= d.len() {
            return Err(Fail(RcStatus::Domain, format!("country {i} out of range")));
        }
        write_str(&d.obs(i).id, buf, cap, needed)
    })
}

/// Revealed-preference test. On a violation `cycle` receives the vertex
/// positions of a witness and `cycle_len` its length; pass `cycle_cap = 0`
/// to skip the witness.
///
/// # Safety
/// `ds` must be a live handle, `satisfied` writable, `cycle` null or
/// `cycle_cap` long, `cycle_len` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rc_check(
    ds: *const RcDataset,
    homothetic: bool,
    satisfied: *mut bool,
    cycle: *mut usize,
    cycle_cap: usize,
    cycle_len: *mut usize,
) -> RcStatus {
    guard(|| {
        let d = &borrow(ds, "dataset")?.inner;
        let g = RpGraph::build(d)?;
        let verdict = if homothetic { check_harp(&g) } else { check_cewec(&g) };
        let ok = satisfied
            .as_mut()
            .ok_or_else(|| Fail(RcStatus::NullPointer, "satisfied is null".into()))?;
        *ok = verdict.is_satisfied();
        let vertices = verdict.cycle().map(|c| c.vertices.as_slice()).unwrap_or_default();
        if let Some(len) = cycle_len.as_mut() {
            *len = vertices.len();
        }
        if cycle_cap > 0 && !vertices.is_empty() {
            if cycle.is_null() {
                return Err(Fail(RcStatus::NullPointer, "cycle is null".into()));
            }
            if vertices.len() > cycle_cap {
                return Err(Fail(RcStatus::BufferTooSmall, format!("cycle has {} vertices", vertices.len())));
            }
            ptr::copy_nonoverlapping(vertices.as_ptr(), cycle, vertices.len());
        }
        Ok(())
    })
}

fn index(d: &PooledDataset, method: RcMethod) -> refcons::Result<IndexMatrix> {
    match method {
        RcMethod::Fisher => indices::fisher(d),
        RcMethod::Geks => indices::geks(d),
        RcMethod::Tornqvist => indices::tornqvist(d),
        RcMethod::Ccd => indices::ccd(d),
        RcMethod::GearyKhamis => indices::geary_khamis(d),
        RcMethod::MarketRate => indices::market_rates(d),
    }
}

/// Index matrix, `out[i * n + j]` = price level of `i` relative to `j`.
///
/// # Safety
/// `ds` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rc_index_matrix(
    ds: *const RcDataset,
    method: RcMethod,
    out: *mut f64,
    cap: usize,
) -> RcStatus {
    guard(|| {
        let d = &borrow(ds, "dataset")?.inner;
        fill_matrix(out, cap, &index(d, method)?.values)
    })
}

/// Multilateral bounds over a consistent dataset; fails with
/// `Inconsistent` otherwise.
///
/// # Safety
/// `ds` must be a live handle; `lower` and `upper` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rc_bounds(
    ds: *const RcDataset,
    style: RcBoundStyle,
    lower: *mut f64,
    upper: *mut f64,
    cap: usize,
) -> RcStatus {
    guard(|| {
        let d = &borrow(ds, "dataset")?.inner;
        let kind = match style {
            RcBoundStyle::Laspeyres => BoundStyle::Laspeyres,
            RcBoundStyle::Paasche => BoundStyle::Paasche,
        };
        let bm = bound_matrix(d, kind)?;
        fill_matrix(lower, cap, &bm.lower)?;
        fill_matrix(upper, cap, &bm.upper)
    })
}

/// Runs the generalised star system with a greedy hub.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_gss_run(ds: *const RcDataset, out: *mut *mut RcGss) -> RcStatus {
    guard(|| {
        let d = &borrow(ds, "dataset")?.inner;
        if out.is_null() {
            return Err(Fail(RcStatus::NullPointer, "out is null".into()));
        }
        let inner = gss_full(d, GssOptions::default())?;
        *out = Box::into_raw(Box::new(RcGss { inner }));
        Ok(())
    })
}

/// # Safety
/// `gss` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rc_gss_free(gss: *mut RcGss) {
    if !gss.is_null() {
        drop(Box::from_raw(gss));
    }
}

/// Countries covered by the result; outsiders without an extension are
/// left out.
///
/// # Safety
/// `gss` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_gss_len(gss: *const RcGss) -> usize {
    gss.as_ref().map_or(0, |g| g.inner.ids.len())
}

/// # Safety
/// `gss` must be a live handle; `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rc_gss_id(
    gss: *const RcGss,
    i: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> RcStatus {
    guard(|| {
        let g = &borrow(gss, "gss")?.inner;
        let id = g
            .ids
            .get(i)
            .ok_or_else(|| Fail(RcStatus::Domain, format!("country {i} out of range")))?;
        write_str(id, buf, cap, needed)
    })
}

/// Whether country `i` of the result belongs to the hub.
///
/// # Safety
/// `gss` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_gss_in_hub(gss: *const RcGss, i: usize) -> bool {
    gss.as_ref()
        .and_then(|g| g.inner.in_hub.get(i).copied())
        .unwrap_or(false)
}

/// Bilateral parities or bounds of a star system result: `what` is 0 for
/// values, 1 for lower bounds, 2 for upper bounds.
///
/// # Safety
/// `gss` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rc_gss_matrix(gss: *const RcGss, what: u32, out: *mut f64, cap: usize) -> RcStatus {
    guard(|| {
        let g = &borrow(gss, "gss")?.inner;
        let m = match what {
            0 => &g.values,
            1 => &g.lower,
            2 => &g.upper,
            other => return Err(Fail(RcStatus::Domain, format!("unknown matrix selector {other}"))),
        };
        fill_matrix(out, cap, m)
    })
}

/// Each country's parity against the base country.
///
/// # Safety
/// `gss` must be a live handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rc_gss_ppp_vs_base(gss: *const RcGss, out: *mut f64, cap: usize) -> RcStatus {
    guard(|| {
        let g = &borrow(gss, "gss")?.inner;
        fill(out, cap, g.ppp_vs_base.iter().copied())
    })
}

/// Population-weighted Gini coefficient.
///
/// # Safety
/// `per_capita` and `populations` must each hold `n` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rc_gini(
    per_capita: *const f64,
    populations: *const f64,
    n: usize,
    out: *mut f64,
) -> RcStatus {
    guard(|| {
        if per_capita.is_null() || populations.is_null() || out.is_null() {
            return Err(Fail(RcStatus::NullPointer, "null argument".into()));
        }
        let x = std::slice::from_raw_parts(per_capita, n);
        let w = std::slice::from_raw_parts(populations, n);
        *out = aggregates::gini(x, w)?;
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
