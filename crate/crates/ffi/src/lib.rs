//! C ABI over the modispi pipeline.
//!
//! Every fallible call returns a [`ModispiStatus`]; on failure the message is
//! available from [`modispi_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use modispi::periphery::{classify_severity, Audiogram, Ear, HearingLossLevel};
use modispi::pipeline::{extract_features, Features, PipelineSettings};
use modispi::predictor::vit::{load_checkpoint, predict, VitParams};
use modispi::predictor::{evaluate, fit_logistic, logistic_map, LogisticParams};
use modispi::temporal::tau_for_level;
use modispi::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModispiStatus {
    Ok = 0,
    InvalidInput = 1,
    DegenerateFit = 2,
    Numeric = 3,
    Format = 4,
    Io = 5,
    NullPointer = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Pipeline settings bound to one configuration.
pub struct ModispiPipeline {
    settings: PipelineSettings,
}

/// Features of one clean/degraded pair.
pub struct ModispiFeatures {
    features: Features,
}

/// Loaded transformer checkpoint.
pub struct ModispiModel {
    params: VitParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(ModispiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) => ModispiStatus::InvalidInput,
            Error::DegenerateFit(_) => ModispiStatus::DegenerateFit,
            Error::Numeric { .. } => ModispiStatus::Numeric,
            Error::Format(_) | Error::Json(_) | Error::Wav(_) => ModispiStatus::Format,
            Error::Io(_) => ModispiStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

fn fail<T>(status: ModispiStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ModispiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ModispiStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ModispiStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(ModispiStatus::NullPointer, format!("{what} is null")))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(ModispiStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(ModispiStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    let s = as_ref(p, what)?;
    CStr::from_ptr(s)
        .to_str()
        .or_else(|_| fail(ModispiStatus::InvalidInput, format!("{what} is not UTF-8")))
}

fn level_from(code: i32) -> Result<HearingLossLevel, Fail> {
    usize::try_from(code)
        .ok()
        .and_then(HearingLossLevel::from_index)
        .ok_or_else(|| Fail(ModispiStatus::InvalidInput, format!("unknown level code {code}")))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, capacity: usize) -> Result<(), Fail> {
    if capacity < src.len() {
        return fail(
            ModispiStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        );
    }
    if !src.is_empty() {
        if dst.is_null() {
            return fail(ModispiStatus::NullPointer, "output buffer is null");
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn modispi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn modispi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Time constant (ms) and 3 dB cutoff (Hz) of the temporal filter for a
/// level code (0 normal, 1 mild, 2 moderate, 3 severe).
///
/// # Safety
/// Output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_tau_for_level(level: i32, tau_ms: *mut f64, f_cutoff_hz: *mut f64) -> ModispiStatus {
    guard(|| {
        let p = tau_for_level(level_from(level)?);
        *as_mut(tau_ms, "tau_ms")? = p.tau_ms;
        *as_mut(f_cutoff_hz, "f_cutoff_hz")? = p.f_cutoff_hz;
        Ok(())
    })
}

/// Severity level code from a left-ear audiogram.
///
/// # Safety
/// `frequencies_hz` and `thresholds_db_hl` must each hold `len` values;
/// `level` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_classify_severity(
    frequencies_hz: *const f64,
    thresholds_db_hl: *const f64,
    len: usize,
    level: *mut i32,
) -> ModispiStatus {
    guard(|| {
        let f = slice(frequencies_hz, len, "frequencies_hz")?;
        let t = slice(thresholds_db_hl, len, "thresholds_db_hl")?;
        let out = as_mut(level, "level")?;
        let a = Audiogram::new(Ear::Left, f.to_vec(), t.to_vec())?;
        *out = classify_severity(&a)?.index() as i32;
        Ok(())
    })
}

/// `1 / (1 + exp(-a (x - b)))`.
#[no_mangle]
pub extern "C" fn modispi_logistic_map(x: f64, a: f64, b: f64) -> f64 {
    logistic_map(x, &LogisticParams { a, b })
}

/// Least-squares logistic fit of `(x, y)` pairs.
///
/// # Safety
/// `x` and `y` must each hold `len` values; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_fit_logistic(
    x: *const f64,
    y: *const f64,
    len: usize,
    a: *mut f64,
    b: *mut f64,
) -> ModispiStatus {
    guard(|| {
        let (x, y) = (slice(x, len, "x")?, slice(y, len, "y")?);
        let (a, b) = (as_mut(a, "a")?, as_mut(b, "b")?);
        let pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        let fit = fit_logistic(&pairs)?;
        *a = fit.params.a;
        *b = fit.params.b;
        Ok(())
    })
}

/// RMSE and Pearson correlation of `[0, 1]` predictions against `[0, 100]`
/// targets. `rho_defined` is 0 when either side has zero variance, and
/// `rho` is then NaN.
///
/// # Safety
/// `predictions` and `targets` must each hold `len` values; outputs must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_evaluate(
    predictions: *const f64,
    targets: *const f64,
    len: usize,
    rmse: *mut f64,
    rho: *mut f64,
    rho_defined: *mut i32,
) -> ModispiStatus {
    guard(|| {
        let p = slice(predictions, len, "predictions")?;
        let t = slice(targets, len, "targets")?;
        let (rmse, rho, defined) = (as_mut(rmse, "rmse")?, as_mut(rho, "rho")?, as_mut(rho_defined, "rho_defined")?);
        let e = evaluate(p, t)?;
        *rmse = e.rmse;
        *rho = e.rho.value().unwrap_or(f64::NAN);
        *defined = e.rho.value().is_some() as i32;
        Ok(())
    })
}

/// Creates a pipeline from settings JSON, or defaults when `settings_json`
/// is null.
///
/// # Safety
/// `settings_json` must be null or a NUL-terminated string; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_pipeline_new(settings_json: *const c_char, out: *mut *mut ModispiPipeline) -> ModispiStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let settings: PipelineSettings = if settings_json.is_null() {
            PipelineSettings::default()
        } else {
            serde_json::from_str(str_arg(settings_json, "settings_json")?).map_err(Error::from)?
        };
        settings.validate()?;
        *out = Box::into_raw(Box::new(ModispiPipeline { settings }));
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be null or a handle from [`modispi_pipeline_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn modispi_pipeline_free(pipeline: *mut ModispiPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Runs the full feature path on a clean/degraded pair for a level code.
///
/// # Safety
/// `pipeline` must be a live handle; `clean` and `spin` must hold the given
/// number of samples; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_pipeline_features(
    pipeline: *const ModispiPipeline,
    clean: *const f64,
    clean_len: usize,
    spin: *const f64,
    spin_len: usize,
    sample_rate_hz: f64,
    level: i32,
    out: *mut *mut ModispiFeatures,
) -> ModispiStatus {
    guard(|| {
        let p = as_ref(pipeline, "pipeline")?;
        let clean = slice(clean, clean_len, "clean")?;
        let spin = slice(spin, spin_len, "spin")?;
        let out = as_mut(out, "out")?;
        let features = extract_features(clean, spin, sample_rate_hz, level_from(level)?, &p.settings)?;
        *out = Box::into_raw(Box::new(ModispiFeatures { features }));
        Ok(())
    })
}

/// # Safety
/// `features` must be null or a handle from [`modispi_pipeline_features`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn modispi_features_free(features: *mut ModispiFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Spectral (rows) and temporal (cols) modulation channel counts.
///
/// # Safety
/// `features` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_features_ncc_dims(
    features: *const ModispiFeatures,
    rows: *mut usize,
    cols: *mut usize,
) -> ModispiStatus {
    guard(|| {
        let f = &as_ref(features, "features")?.features;
        *as_mut(rows, "rows")? = f.ncc.n_s;
        *as_mut(cols, "cols")? = f.ncc.n_t;
        Ok(())
    })
}

/// Copies the NCC matrix row-major; missing entries are NaN.
///
/// # Safety
/// `features` must be a live handle; `buffer` must hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn modispi_features_ncc_values(
    features: *const ModispiFeatures,
    buffer: *mut f64,
    capacity: usize,
) -> ModispiStatus {
    guard(|| {
        let f = &as_ref(features, "features")?.features;
        copy_out(&f.ncc.to_dense(f64::NAN), buffer, capacity)
    })
}

/// Mean of the defined NCC entries.
///
/// # Safety
/// `features` must be a live handle; `summary` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_features_ncc_summary(features: *const ModispiFeatures, summary: *mut f64) -> ModispiStatus {
    guard(|| {
        let f = &as_ref(features, "features")?.features;
        let out = as_mut(summary, "summary")?;
        match f.ncc.summary() {
            Some(s) => {
                *out = s;
                Ok(())
            }
            None => fail(ModispiStatus::DegenerateFit, "no defined NCC entries"),
        }
    })
}

/// Model input image shape: channels x height x width.
///
/// # Safety
/// `features` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_features_image_dims(
    features: *const ModispiFeatures,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> ModispiStatus {
    guard(|| {
        let img = &as_ref(features, "features")?.features.image;
        *as_mut(channels, "channels")? = modispi::preprocess::StmImage::CHANNELS;
        *as_mut(height, "height")? = img.height;
        *as_mut(width, "width")? = img.width;
        Ok(())
    })
}

/// Copies the image, channel-major then row-major.
///
/// # Safety
/// `features` must be a live handle; `buffer` must hold `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn modispi_features_image_copy(
    features: *const ModispiFeatures,
    buffer: *mut f64,
    capacity: usize,
) -> ModispiStatus {
    guard(|| {
        let f = &as_ref(features, "features")?.features;
        copy_out(&f.image.data, buffer, capacity)
    })
}

/// Loads a transformer checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_model_load(path: *const c_char, out: *mut *mut ModispiModel) -> ModispiStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = as_mut(out, "out")?;
        let params = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(ModispiModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`modispi_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn modispi_model_free(model: *mut ModispiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Value counts the model expects for the image and the NCC vector.
///
/// # Safety
/// `model` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_model_input_sizes(
    model: *const ModispiModel,
    image_len: *mut usize,
    ncc_len: *mut usize,
) -> ModispiStatus {
    guard(|| {
        let c = &as_ref(model, "model")?.params.config;
        *as_mut(image_len, "image_len")? = c.channels * c.image_size * c.image_size;
        *as_mut(ncc_len, "ncc_len")? = c.ncc_len();
        Ok(())
    })
}

/// Scores a features handle. The image size of the features must match the
/// model's.
///
/// # Safety
/// `model` and `features` must be live handles; `score` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_model_predict(
    model: *const ModispiModel,
    features: *const ModispiFeatures,
    score: *mut f64,
) -> ModispiStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.params;
        let f = &as_ref(features, "features")?.features;
        let out = as_mut(score, "score")?;
        let ncc = f.ncc.to_fixed_grid(m.config.ncc_rows, m.config.ncc_cols)?;
        *out = predict(m, &f.image.data, &ncc)?;
        Ok(())
    })
}

/// Scores raw inputs laid out as in [`modispi_features_image_copy`] and a
/// row-major NCC grid.
///
/// # Safety
/// `model` must be a live handle; `image` and `ncc` must hold the given
/// number of values; `score` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn modispi_model_predict_raw(
    model: *const ModispiModel,
    image: *const f64,
    image_len: usize,
    ncc: *const f64,
    ncc_len: usize,
    score: *mut f64,
) -> ModispiStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.params;
        let image = slice(image, image_len, "image")?;
        let ncc = slice(ncc, ncc_len, "ncc")?;
        *as_mut(score, "score")? = predict(m, image, ncc)?;
        Ok(())
    })
}
