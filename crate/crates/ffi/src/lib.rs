//! C interface to numprobe.
//!
//! Every function returns an [`NpStatus`]. On failure the message is kept
//! per thread and can be read with [`np_last_error_message`]. Strings handed
//! out by the library must be released with [`np_string_free`]; handles with
//! their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use numprobe::embed::{load_table, EmbeddingTable};
use numprobe::numeral::{self, NumberFormat};
use numprobe::probe::{gradcheck_family, ModelFamily};
use numprobe::runner::{run_suite, Manifest, Provenance, RunError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Numeral = 4,
    VectorFile = 5,
    Config = 6,
    Experiment = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpFormat {
    Digits = 0,
    Words = 1,
    Float1 = 2,
    NegativeDigits = 3,
}

impl From<NpFormat> for NumberFormat {
    fn from(f: NpFormat) -> Self {
        match f {
            NpFormat::Digits => NumberFormat::Digits,
            NpFormat::Words => NumberFormat::Words,
            NpFormat::Float1 => NumberFormat::Float1,
            NpFormat::NegativeDigits => NumberFormat::NegativeDigits,
        }
    }
}

/// A loaded text vector file.
pub struct NpTable(EmbeddingTable);

/// A parsed experiment manifest.
pub struct NpManifest(Manifest);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(NpStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NpStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(NpStatus::NullArgument, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NpStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

fn run_status(e: &RunError) -> NpStatus {
    match e {
        RunError::Config(_) => NpStatus::Config,
        RunError::Io(_) => NpStatus::Io,
        RunError::Embed(_) => NpStatus::VectorFile,
        _ => NpStatus::Experiment,
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn np_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn np_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn np_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Renders `scaled` (tenths for `Float1`) and stores a new string in `*out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn np_render(scaled: i64, format: NpFormat, out: *mut *mut c_char) -> NpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = numeral::render(scaled, format.into()).map_err(|e| Failure(NpStatus::Numeral, e.to_string()))?;
        *out = CString::new(s).expect("surfaces have no nul").into_raw();
        Ok(())
    })
}

/// Parses a canonical surface into its scaled value.
///
/// # Safety
/// `surface` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn np_parse(surface: *const c_char, format: NpFormat, out: *mut i64) -> NpStatus {
    guard(|| {
        let s = str_arg(surface, "surface")?;
        let out = out_arg(out, "out")?;
        *out = numeral::parse(s, format.into()).map_err(|e| Failure(NpStatus::Numeral, e.to_string()))?;
        Ok(())
    })
}

/// Loads a text vector file. `expected_dim` of 0 accepts any dimension.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn np_table_load(path: *const c_char, expected_dim: usize, out: *mut *mut NpTable) -> NpStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let dim = (expected_dim > 0).then_some(expected_dim);
        let t = load_table(Path::new(path), dim).map_err(|e| Failure(NpStatus::VectorFile, e.to_string()))?;
        *out = Box::into_raw(Box::new(NpTable(t)));
        Ok(())
    })
}

/// # Safety
/// `table` must come from [`np_table_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn np_table_free(table: *mut NpTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Vector dimension, or 0 for a null handle.
///
/// # Safety
/// `table` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn np_table_dim(table: *const NpTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.dim())
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `table` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn np_table_len(table: *const NpTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// Copies the vector for `surface` into `out`, which holds `len` doubles.
///
/// # Safety
/// `table` must be live, `surface` NUL-terminated, `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn np_table_get(
    table: *const NpTable,
    surface: *const c_char,
    out: *mut f64,
    len: usize,
) -> NpStatus {
    guard(|| {
        let t = &table.as_ref().ok_or_else(|| null("table"))?.0;
        let s = str_arg(surface, "surface")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = t
            .get(s)
            .ok_or_else(|| Failure(NpStatus::InvalidArgument, format!("no vector for '{s}'")))?;
        if len < v.len() {
            return Err(Failure(
                NpStatus::BufferTooSmall,
                format!("need {} values, buffer holds {len}", v.len()),
            ));
        }
        for (i, x) in v.iter().enumerate() {
            *out.add(i) = *x;
        }
        Ok(())
    })
}

/// Parses and validates a manifest file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn np_manifest_load(path: *const c_char, out: *mut *mut NpManifest) -> NpStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let m = Manifest::load(Path::new(path)).map_err(|e| Failure(run_status(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(NpManifest(m)));
        Ok(())
    })
}

/// # Safety
/// `manifest` must come from [`np_manifest_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn np_manifest_free(manifest: *mut NpManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

/// Number of experiments, or 0 for a null handle.
///
/// # Safety
/// `manifest` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn np_manifest_len(manifest: *const NpManifest) -> usize {
    manifest.as_ref().map_or(0, |m| m.0.experiments.len())
}

/// Runs every experiment and writes reports into `out_dir`. Returns
/// `Experiment` if any experiment failed; reports are written regardless.
///
/// # Safety
/// `manifest` must be live; `out_dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn np_manifest_run(manifest: *const NpManifest, out_dir: *const c_char) -> NpStatus {
    guard(|| {
        let m = &manifest.as_ref().ok_or_else(|| null("manifest"))?.0;
        let dir = str_arg(out_dir, "out_dir")?;
        let outcome = run_suite(&m.experiments, Path::new(dir), &Provenance::default(), &mut |_| {})
            .map_err(|e| Failure(run_status(&e), e.to_string()))?;
        match outcome.failures.first() {
            None => Ok(()),
            Some((name, e)) => Err(Failure(
                NpStatus::Experiment,
                format!("{} experiment(s) failed, first {name}: {e}", outcome.failures.len()),
            )),
        }
    })
}

/// Number of model families [`np_gradcheck`] accepts.
#[no_mangle]
pub extern "C" fn np_gradcheck_family_count() -> usize {
    ModelFamily::ALL.len()
}

/// Largest relative error between analytic and finite-difference gradients
/// for model family `family` (`0..np_gradcheck_family_count()`).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn np_gradcheck(family: usize, seed: u64, out: *mut f64) -> NpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = *ModelFamily::ALL
            .get(family)
            .ok_or_else(|| Failure(NpStatus::InvalidArgument, format!("no model family {family}")))?;
        *out = gradcheck_family(f, seed).max_rel_error;
        Ok(())
    })
}
