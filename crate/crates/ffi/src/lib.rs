//! C ABI over the spoofbench library.
//!
//! Every fallible function returns an [`SbStatus`]; on failure the message
//! is available from [`sb_last_error`] on the same thread. Objects are opaque
//! handles released by their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spoofbench::dsp::AudioSignal;
use spoofbench::enhance::{enhance, EnhanceConfig, EnhanceMethod};
use spoofbench::eval::eer_rocch;
use spoofbench::features::{extract, FeatureConfig, FeatureKind};
use spoofbench::gmm::{avg_loglik, llr_score, GmmModel};
use spoofbench::matrix::Matrix;
use spoofbench::noise::{mix_at_snr, MixSpec, NoiseKind};
use spoofbench::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    EmptyFeatures = 4,
    NoSpeech = 5,
    DegenerateInput = 6,
    Conditioning = 7,
    Format = 8,
    Io = 9,
    Panic = 10,
    Other = 11,
}

impl From<&Error> for SbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Config(_) => SbStatus::InvalidArgument,
            Error::DimensionMismatch { .. } | Error::Alignment(_) => SbStatus::DimensionMismatch,
            Error::EmptyFeatures(_) => SbStatus::EmptyFeatures,
            Error::NoActiveSpeech | Error::NoSpeech => SbStatus::NoSpeech,
            Error::DegenerateVector | Error::DegenerateTraining(_) => SbStatus::DegenerateInput,
            Error::Conditioning(_) => SbStatus::Conditioning,
            Error::Format { .. } | Error::Wav(_) => SbStatus::Format,
            Error::Io(_) | Error::MissingModel { .. } => SbStatus::Io,
            Error::Hygiene(_) => SbStatus::Other,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(SbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(SbStatus::from(&e), format!("{}: {e}", e.code()))
    }
}

fn null(what: &str) -> Fail {
    Fail(SbStatus::NullPointer, format!("null pointer: {what}"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SbStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            SbStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SbStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn signal(samples: *const f64, n: usize, sample_rate: u32) -> Result<AudioSignal, Fail> {
    Ok(AudioSignal::new(slice(samples, n, "samples")?.to_vec(), sample_rate)?)
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn sb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Row-major feature matrix (frames × coefficients).
pub struct SbMatrix {
    inner: Matrix,
}

pub struct SbGmm {
    inner: GmmModel,
}

/// Extracts features of `kind` ("mfcc", "imfcc", "scmc", "cqcc", "mhec",
/// "rps", "mgd" or "cosphase") with the default configuration.
///
/// # Safety
/// `samples` must point to `n` doubles; `kind` must be a NUL-terminated
/// string; `out_matrix` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_extract_features(
    samples: *const f64,
    n: usize,
    sample_rate: u32,
    kind: *const c_char,
    out_matrix: *mut *mut SbMatrix,
) -> SbStatus {
    guard(|| {
        let dst = out(out_matrix, "out_matrix")?;
        let kind: FeatureKind = string(kind, "kind")?.parse()?;
        let f = extract(&signal(samples, n, sample_rate)?, &FeatureConfig::new(kind))?;
        *dst = Box::into_raw(Box::new(SbMatrix { inner: f.values }));
        Ok(())
    })
}

/// Copies `rows × cols` row-major doubles into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out_matrix` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_matrix_from_data(
    data: *const f64,
    rows: usize,
    cols: usize,
    out_matrix: *mut *mut SbMatrix,
) -> SbStatus {
    guard(|| {
        let dst = out(out_matrix, "out_matrix")?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Fail(SbStatus::InvalidArgument, "matrix size overflows".into()))?;
        let m = Matrix::from_vec(rows, cols, slice(data, len, "data")?.to_vec())?;
        *dst = Box::into_raw(Box::new(SbMatrix { inner: m }));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn sb_matrix_rows(m: *const SbMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.rows())
}

/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn sb_matrix_cols(m: *const SbMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.cols())
}

/// Row-major data, valid while the handle lives; NULL for a NULL handle.
///
/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn sb_matrix_data(m: *const SbMatrix) -> *const f64 {
    m.as_ref().map_or(ptr::null(), |m| m.inner.as_slice().as_ptr())
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_matrix_free(m: *mut SbMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Loads an SPGM1 model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_gmm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_gmm_load(path: *const c_char, out_gmm: *mut *mut SbGmm) -> SbStatus {
    guard(|| {
        let dst = out(out_gmm, "out_gmm")?;
        let m = GmmModel::read(Path::new(string(path, "path")?))?;
        *dst = Box::into_raw(Box::new(SbGmm { inner: m }));
        Ok(())
    })
}

/// # Safety
/// `g` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_gmm_free(g: *mut SbGmm) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn sb_gmm_components(g: *const SbGmm) -> usize {
    g.as_ref().map_or(0, |g| g.inner.n_components())
}

/// # Safety
/// `g` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn sb_gmm_dim(g: *const SbGmm) -> usize {
    g.as_ref().map_or(0, |g| g.inner.dim())
}

/// Frame-averaged log-likelihood of `features` under `g`.
///
/// # Safety
/// Handles must be live; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_gmm_avg_loglik(
    g: *const SbGmm,
    features: *const SbMatrix,
    out_value: *mut f64,
) -> SbStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("gmm"))?;
        let f = features.as_ref().ok_or_else(|| null("features"))?;
        *out(out_value, "out_value")? = avg_loglik(&f.inner, &g.inner)?;
        Ok(())
    })
}

/// Natural-minus-synthetic average log-likelihood; higher means more human.
///
/// # Safety
/// Handles must be live; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_gmm_llr(
    natural: *const SbGmm,
    synthetic: *const SbGmm,
    features: *const SbMatrix,
    out_score: *mut f64,
) -> SbStatus {
    guard(|| {
        let n = natural.as_ref().ok_or_else(|| null("natural"))?;
        let s = synthetic.as_ref().ok_or_else(|| null("synthetic"))?;
        let f = features.as_ref().ok_or_else(|| null("features"))?;
        *out(out_score, "out_score")? = llr_score(&f.inner, &n.inner, &s.inner)?;
        Ok(())
    })
}

/// ROCCH equal error rate as a fraction in [0, 0.5]; target scores are the
/// human trials.
///
/// # Safety
/// `target` and `nontarget` must point to `n_target` and `n_nontarget`
/// doubles; `out_eer` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_eer_rocch(
    target: *const f64,
    n_target: usize,
    nontarget: *const f64,
    n_nontarget: usize,
    out_eer: *mut f64,
) -> SbStatus {
    guard(|| {
        let dst = out(out_eer, "out_eer")?;
        *dst = eer_rocch(slice(target, n_target, "target")?, slice(nontarget, n_nontarget, "nontarget")?)?;
        Ok(())
    })
}

/// Adds `noise` ("white", "car", "babble" or "file:<wav>") at `snr_db`
/// relative to the active speech level, writing `n` samples to `out_samples`.
/// `out_measured_snr` may be NULL.
///
/// # Safety
/// `samples` and `out_samples` must point to `n` doubles; `noise` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sb_mix_at_snr(
    samples: *const f64,
    n: usize,
    sample_rate: u32,
    noise: *const c_char,
    snr_db: f64,
    seed: u64,
    out_samples: *mut f64,
    out_measured_snr: *mut f64,
) -> SbStatus {
    guard(|| {
        let kind: NoiseKind = string(noise, "noise")?.parse()?;
        let sig = signal(samples, n, sample_rate)?;
        if n > 0 && out_samples.is_null() {
            return Err(null("out_samples"));
        }
        let mix = mix_at_snr(&sig, &kind.source()?, &MixSpec::new(snr_db), seed)?;
        if n > 0 {
            std::slice::from_raw_parts_mut(out_samples, n).copy_from_slice(mix.signal.samples());
        }
        if let Some(m) = out_measured_snr.as_mut() {
            *m = mix.measured_snr_db;
        }
        Ok(())
    })
}

/// Enhances a signal with "specsub-mag", "specsub-pow" or "wiener" using the
/// default settings, writing `n` samples to `out_samples`.
///
/// # Safety
/// `samples` and `out_samples` must point to `n` doubles; `method` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sb_enhance(
    samples: *const f64,
    n: usize,
    sample_rate: u32,
    method: *const c_char,
    out_samples: *mut f64,
) -> SbStatus {
    guard(|| {
        let method: EnhanceMethod = string(method, "method")?.parse()?;
        let sig = signal(samples, n, sample_rate)?;
        if n > 0 && out_samples.is_null() {
            return Err(null("out_samples"));
        }
        let y = enhance(&sig, method, &EnhanceConfig::default())?;
        if y.len() != n {
            return Err(Fail(SbStatus::Other, "enhanced length differs from input".into()));
        }
        if n > 0 {
            std::slice::from_raw_parts_mut(out_samples, n).copy_from_slice(y.samples());
        }
        Ok(())
    })
}
