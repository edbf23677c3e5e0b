//! C ABI over the `cognitraj` library.
//!
//! Every function returns a [`CgtStatus`]; on failure the message is kept per
//! thread and can be read with [`cgt_last_error`]. Models are opaque handles
//! created by [`cgt_model_load`] and released with [`cgt_model_free`].

use cognitraj::model::{Model, ModelError};
use cognitraj::nn::NnError;
use cognitraj::safety::{self, PairKinematics, SafetyConfig, Ttc};
use cognitraj::scene::SceneWindow;
use cognitraj::Vec2;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Io = 4,
    Model = 5,
    Undefined = 6,
    Panic = 7,
}

/// Relative kinematics of agent i with respect to agent j.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgtPair {
    pub dp_x: f64,
    pub dp_y: f64,
    pub dv_x: f64,
    pub dv_y: f64,
    pub da_x: f64,
    pub da_y: f64,
}

impl From<&CgtPair> for PairKinematics {
    fn from(p: &CgtPair) -> Self {
        PairKinematics::new(Vec2::new(p.dp_x, p.dp_y), Vec2::new(p.dv_x, p.dv_y), Vec2::new(p.da_x, p.da_y))
    }
}

/// Opaque trained model.
pub struct CgtModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), (CgtStatus, String)>) -> CgtStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgtStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CgtStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, (CgtStatus, String)> {
    // SAFETY: the caller guarantees a non-null pointer refers to a live, aligned value.
    unsafe { p.as_ref() }.ok_or((CgtStatus::NullPointer, format!("{name} is null")))
}

fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (CgtStatus, String)> {
    // SAFETY: as above, for a writable value.
    unsafe { p.as_mut() }.ok_or((CgtStatus::NullPointer, format!("{name} is null")))
}

fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (CgtStatus, String)> {
    if p.is_null() {
        return Err((CgtStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: non-null and NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (CgtStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (CgtStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err((CgtStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: the caller provides `len` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], (CgtStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err((CgtStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: the caller provides `len` writable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn safety_err(e: safety::SafetyError) -> (CgtStatus, String) {
    let status = match e {
        safety::SafetyError::CollisionStateUndefined => CgtStatus::Undefined,
        _ => CgtStatus::InvalidArgument,
    };
    (status, e.to_string())
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn cgt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cgt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Time-to-collision. `*out_approaching` is 0 for a separating pair, in which
/// case `*out_seconds` is set to +infinity.
///
/// # Safety
/// `pair`, `out_seconds` and `out_approaching` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cgt_ttc(pair: *const CgtPair, out_seconds: *mut f64, out_approaching: *mut i32) -> CgtStatus {
    guard(|| {
        let pair = PairKinematics::from(non_null(pair, "pair")?);
        let secs = out_ref(out_seconds, "out_seconds")?;
        let flag = out_ref(out_approaching, "out_approaching")?;
        match safety::ttc(&pair).map_err(safety_err)? {
            Ttc::Seconds(s) => {
                *secs = s;
                *flag = 1;
            }
            Ttc::NoApproach => {
                *secs = f64::INFINITY;
                *flag = 0;
            }
        }
        Ok(())
    })
}

fn ttc_series(values: &[f64]) -> Result<Vec<Ttc>, (CgtStatus, String)> {
    values
        .iter()
        .map(|&v| match v {
            v if v == f64::INFINITY => Ok(Ttc::NoApproach),
            v if v.is_finite() && v >= 0.0 => Ok(Ttc::Seconds(v)),
            v => Err((CgtStatus::InvalidArgument, format!("invalid TTC value {v}"))),
        })
        .collect()
}

/// Time exposed TTC over `len` TTC values; +infinity marks a separating frame.
///
/// # Safety
/// `ttc` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgt_tet(ttc: *const f64, len: usize, ttc_star: f64, tau_sc: f64, out: *mut f64) -> CgtStatus {
    guard(|| {
        let series = ttc_series(slice(ttc, len, "ttc")?)?;
        let cfg = SafetyConfig { ttc_star, tau_sc };
        *out_ref(out, "out")? = safety::tet(&series, &cfg).map_err(safety_err)?;
        Ok(())
    })
}

/// Time integrated TTC; same conventions as [`cgt_tet`].
///
/// # Safety
/// `ttc` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgt_tit(ttc: *const f64, len: usize, ttc_star: f64, tau_sc: f64, out: *mut f64) -> CgtStatus {
    guard(|| {
        let series = ttc_series(slice(ttc, len, "ttc")?)?;
        let cfg = SafetyConfig { ttc_star, tau_sc };
        *out_ref(out, "out")? = safety::tit(&series, &cfg).map_err(safety_err)?;
        Ok(())
    })
}

/// Subjective risk perception of a pair.
///
/// # Safety
/// `pair` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cgt_spr(pair: *const CgtPair, out: *mut f64) -> CgtStatus {
    guard(|| {
        let pair = PairKinematics::from(non_null(pair, "pair")?);
        *out_ref(out, "out")? = safety::spr(&pair);
        Ok(())
    })
}

/// Dynamic risk volatility of a pair.
///
/// # Safety
/// `pair` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cgt_drv(pair: *const CgtPair, out: *mut f64) -> CgtStatus {
    guard(|| {
        let pair = PairKinematics::from(non_null(pair, "pair")?);
        *out_ref(out, "out")? = safety::drv(&pair);
        Ok(())
    })
}

/// Loads a checkpoint written by the library or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cgt_model_load(path: *const c_char, out: *mut *mut CgtModel) -> CgtStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let slot = out_ref(out, "out")?;
        *slot = ptr::null_mut();
        let inner = Model::load(Path::new(path)).map_err(|e| {
            let status = match e {
                ModelError::Io(_) | ModelError::Nn(NnError::Io(_)) => CgtStatus::Io,
                _ => CgtStatus::Model,
            };
            (status, e.to_string())
        })?;
        *slot = Box::into_raw(Box::new(CgtModel { inner }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`cgt_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgt_model_free(model: *mut CgtModel) {
    if !model.is_null() {
        // SAFETY: ownership returns from the pointer created in cgt_model_load.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of predicted modes and future frames.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cgt_model_shape(model: *const CgtModel, out_modes: *mut usize, out_frames: *mut usize) -> CgtStatus {
    guard(|| {
        let m = &non_null(model, "model")?.inner;
        *out_ref(out_modes, "out_modes")? = m.config.effective_modes();
        *out_ref(out_frames, "out_frames")? = m.config.future_frames();
        Ok(())
    })
}

/// Predicts one window given as JSON (the format of the CLI's window files).
///
/// `positions` receives `modes × frames × 2` absolute coordinates, mode-major;
/// `confidences` receives `modes` values summing to one.
///
/// # Safety
/// `model` must be a live handle, `window_json` NUL-terminated, and the output
/// buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn cgt_model_predict(
    model: *const CgtModel,
    window_json: *const c_char,
    positions: *mut f64,
    positions_len: usize,
    confidences: *mut f64,
    confidences_len: usize,
) -> CgtStatus {
    guard(|| {
        let m = &non_null(model, "model")?.inner;
        let json = c_str(window_json, "window_json")?;
        let window: SceneWindow =
            serde_json::from_str(json).map_err(|e| (CgtStatus::InvalidArgument, format!("window_json: {e}")))?;
        let features = m.featurize(&window).map_err(|e| (CgtStatus::InvalidArgument, e.to_string()))?;
        let pred = m.predict(&features).map_err(|e| (CgtStatus::Model, e.to_string()))?;
        let modes = pred.modes.len();
        let frames = pred.modes.first().map_or(0, |md| md.positions.len());
        if positions_len < modes * frames * 2 || confidences_len < modes {
            return Err((
                CgtStatus::BufferTooSmall,
                format!("need {} positions and {} confidences", modes * frames * 2, modes),
            ));
        }
        let pos = slice_mut(positions, positions_len, "positions")?;
        let conf = slice_mut(confidences, confidences_len, "confidences")?;
        for (k, mode) in pred.modes.iter().enumerate() {
            conf[k] = mode.confidence;
            for (t, p) in mode.positions.iter().enumerate() {
                let base = (k * frames + t) * 2;
                pos[base] = p.x;
                pos[base + 1] = p.y;
            }
        }
        Ok(())
    })
}
