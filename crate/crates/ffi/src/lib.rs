//! C interface to msalab.
//!
//! Objects cross the boundary as opaque pointers owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! [`MsalabStatus`]; the message for the last failure on the calling thread
//! is available from [`msalab_last_error`].

use msalab::classify::BlockTable;
use msalab::cli::{self, Experiment};
use msalab::disorder::{sample_disorder, SiteBox};
use msalab::msa::BoxSpec;
use msalab::operator::{assemble, FiniteVolumeOperator, ModelParams};
use msalab::spectral::spectrum;
use msalab::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsalabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Precondition = 4,
    Budget = 5,
    Numerical = 6,
    Io = 7,
    InvariantFailed = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsalabVerdictKind {
    Suitable = 0,
    Ses = 1,
    Regular = 2,
}

/// A sampled finite-volume operator.
pub struct MsalabOperator {
    inner: FiniteVolumeOperator,
}

/// Eigenvalues of an operator, ascending.
pub struct MsalabSpectrum {
    values: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> MsalabStatus {
    match e {
        Error::Config(_) => MsalabStatus::Config,
        Error::Precondition(_) | Error::NotPartiallyInteractive | Error::NotSeparated | Error::InconsistentRange(_) => {
            MsalabStatus::Precondition
        }
        Error::Budget(_) => MsalabStatus::Budget,
        Error::Resonant { .. } | Error::NoConvergence(_) => MsalabStatus::Numerical,
        Error::Io(_) => MsalabStatus::Io,
        _ => MsalabStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MsalabStatus, String)>) -> MsalabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsalabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MsalabStatus::Panic
        }
    }
}

fn lift(e: Error) -> (MsalabStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MsalabStatus, String) {
    (MsalabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MsalabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (MsalabStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, or 0 if none.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Samples disorder with `seed` and assembles the operator on the cube of
/// side `side` centred at `center[0..center_len]`. `params_json` holds the
/// model parameters; fields left out take their defaults.
///
/// # Safety
/// `params_json` must be a NUL-terminated string, `center` valid for
/// `center_len` doubles, and `out` a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_operator_new(
    params_json: *const c_char,
    center: *const f64,
    center_len: usize,
    side: f64,
    seed: u64,
    out: *mut *mut MsalabOperator,
) -> MsalabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if center.is_null() {
            return Err(null("center"));
        }
        let text = unsafe { read_str(params_json, "params_json") }?;
        let params: ModelParams =
            serde_json::from_str(text).map_err(|e| (MsalabStatus::Config, format!("params: {e}")))?;
        params.validate().map_err(lift)?;
        let center = unsafe { std::slice::from_raw_parts(center, center_len) }.to_vec();
        if params.d == 0 || center_len % params.d != 0 {
            return Err((MsalabStatus::InvalidArgument, format!("center length {center_len} is not a multiple of d")));
        }
        let params = params.with_particles(center_len / params.d);
        let rect = BoxSpec { center, side }.rect(params.d).map_err(lift)?;
        let field = sample_disorder(&SiteBox::covering(&[&rect]).map_err(lift)?, &params.distribution, seed)
            .map_err(lift)?;
        let inner = assemble(&rect, &field, &params).map_err(lift)?;
        unsafe { *out = Box::into_raw(Box::new(MsalabOperator { inner })) };
        Ok(())
    })
}

/// # Safety
/// `op` must come from [`msalab_operator_new`] and not be used afterwards.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_operator_free(op: *mut MsalabOperator) {
    if !op.is_null() {
        drop(unsafe { Box::from_raw(op) });
    }
}

/// Matrix dimension, or 0 for a null handle.
///
/// # Safety
/// `op` must be a live handle or null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_operator_dim(op: *const MsalabOperator) -> usize {
    unsafe { op.as_ref() }.map_or(0, |o| o.inner.dim())
}

/// Computes the full spectrum.
///
/// # Safety
/// `op` must be a live handle and `out` a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_operator_spectrum(
    op: *const MsalabOperator,
    out: *mut *mut MsalabSpectrum,
) -> MsalabStatus {
    guard(|| {
        let op = unsafe { op.as_ref() }.ok_or_else(|| null("op"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = spectrum(&op.inner, None).map_err(lift)?;
        unsafe { *out = Box::into_raw(Box::new(MsalabSpectrum { values: s.eigenvalues })) };
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle or null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_spectrum_len(s: *const MsalabSpectrum) -> usize {
    unsafe { s.as_ref() }.map_or(0, |s| s.values.len())
}

/// Borrowed pointer to the eigenvalues, valid until the handle is freed.
///
/// # Safety
/// `s` must be a live handle or null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_spectrum_values(s: *const MsalabSpectrum) -> *const f64 {
    unsafe { s.as_ref() }.map_or(std::ptr::null(), |s| s.values.as_ptr())
}

/// # Safety
/// `s` must come from [`msalab_operator_spectrum`] and not be used afterwards.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_spectrum_free(s: *mut MsalabSpectrum) {
    if !s.is_null() {
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Classifies the box at `energy`. `param` is θ, ζ or m depending on `kind`.
/// Writes 1 or 0 to `outcome` and the log-space margin to `margin`.
///
/// # Safety
/// `op` must be a live handle; `outcome` and `margin` valid pointers.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_classify(
    op: *const MsalabOperator,
    kind: MsalabVerdictKind,
    energy: f64,
    param: f64,
    outcome: *mut i32,
    margin: *mut f64,
) -> MsalabStatus {
    guard(|| {
        let op = unsafe { op.as_ref() }.ok_or_else(|| null("op"))?;
        if outcome.is_null() || margin.is_null() {
            return Err(null("outcome or margin"));
        }
        let table = BlockTable::new(&op.inner, energy).map_err(lift)?;
        let v = match kind {
            MsalabVerdictKind::Suitable => table.suitable(param),
            MsalabVerdictKind::Ses => table.ses(param),
            MsalabVerdictKind::Regular => table.regular(param),
        };
        unsafe {
            *outcome = v.outcome as i32;
            *margin = v.margin;
        }
        Ok(())
    })
}

/// Runs the named experiment from a TOML configuration file, writing its
/// artifacts to the configured output directory. Returns
/// `InvariantFailed` when the run completes but one of its checks fails.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn msalab_run_experiment(config_path: *const c_char, experiment: *const c_char) -> MsalabStatus {
    guard(|| {
        let path = unsafe { read_str(config_path, "config_path") }?;
        let name = unsafe { read_str(experiment, "experiment") }?;
        let exp = experiment_named(name)
            .ok_or_else(|| (MsalabStatus::InvalidArgument, format!("unknown experiment {name:?}")))?;
        let mut cfg = cli::parse_config(Path::new(path)).map_err(lift)?;
        cfg.apply(&cli::Overrides::default());
        let outcome = cli::run(&cfg, exp, false).map_err(lift)?;
        if outcome.passed {
            Ok(())
        } else {
            Err((MsalabStatus::InvariantFailed, outcome.failures.join("; ")))
        }
    })
}

fn experiment_named(name: &str) -> Option<Experiment> {
    [
        Experiment::Cover,
        Experiment::Classify,
        Experiment::Wegner,
        Experiment::TwoVolume,
        Experiment::InitialStep,
        Experiment::LemmaCheck,
        Experiment::Msa,
        Experiment::DumpMatrix,
    ]
    .into_iter()
    .find(|e| e.name() == name)
}
