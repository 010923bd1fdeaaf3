//! C ABI for scoring model artifacts.
//!
//! Handles are opaque; every fallible call returns a [`ZilnUpliftStatus`]
//! and stores a thread-local message retrievable with
//! [`ziln_uplift_last_error_message`]. The header `include/ziln_uplift.h`
//! is generated by cbindgen at build time.
//!
//! ```c
//! ZilnUpliftModel *model = NULL;
//! if (ziln_uplift_model_load("forest.json", &model) != ZILN_UPLIFT_STATUS_OK) { ... }
//! double score;
//! ziln_uplift_predict(model, features, n_features, &score);
//! ziln_uplift_model_free(model);
//! ```

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ziln_uplift::cli::load_model;
use ziln_uplift::distributions::ZilnParams;
use ziln_uplift::{Error, UpliftScorer};

/// Result of every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZilnUpliftStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Numeric = 6,
    ShapeMismatch = 7,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let sanitized = message.replace('\0', "?");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).ok();
    });
}

fn status_of(err: &Error) -> ZilnUpliftStatus {
    match err {
        Error::Io(_) => ZilnUpliftStatus::Io,
        Error::Parse { .. } | Error::Json(_) => ZilnUpliftStatus::Parse,
        Error::Config(_) => ZilnUpliftStatus::Config,
        Error::Shape { .. } => ZilnUpliftStatus::ShapeMismatch,
        _ => ZilnUpliftStatus::Numeric,
    }
}

fn guarded(f: impl FnOnce() -> ZilnUpliftStatus) -> ZilnUpliftStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            ZilnUpliftStatus::Panic
        }
    }
}

/// Opaque scoring handle wrapping a loaded forest or gated-net artifact.
pub struct ZilnUpliftModel {
    scorer: Box<dyn UpliftScorer>,
    n_features: usize,
}

/// Load a model artifact (forest or net JSON; the kind is detected) and
/// store the handle in `out`. The handle must be released with
/// [`ziln_uplift_model_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ziln_uplift_model_load(
    path: *const c_char,
    out: *mut *mut ZilnUpliftModel,
) -> ZilnUpliftStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_error("null pointer argument".into());
            return ZilnUpliftStatus::NullPointer;
        }
        let raw = unsafe { CStr::from_ptr(path) };
        let Ok(path_str) = raw.to_str() else {
            set_error("path is not valid UTF-8".into());
            return ZilnUpliftStatus::InvalidUtf8;
        };
        match load_model_with_width(Path::new(path_str)) {
            Ok((scorer, n_features)) => {
                let handle = Box::new(ZilnUpliftModel { scorer, n_features });
                unsafe { *out = Box::into_raw(handle) };
                ZilnUpliftStatus::Ok
            }
            Err(err) => {
                set_error(err.to_string());
                status_of(&err)
            }
        }
    })
}

fn load_model_with_width(path: &Path) -> Result<(Box<dyn UpliftScorer>, usize), Error> {
    // Peek at the artifact for its feature width, then reuse the shared loader.
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let n_features = value
        .get("n_features")
        .and_then(|v| v.as_u64())
        .or_else(|| value.pointer("/dims/d_features").and_then(|v| v.as_u64()))
        .ok_or_else(|| Error::Config("artifact carries no feature width".into()))?
        as usize;
    Ok((load_model(path)?, n_features))
}

/// Release a handle returned by [`ziln_uplift_model_load`]. NULL is a no-op.
///
/// # Safety
/// `model` must be NULL or a pointer obtained from `ziln_uplift_model_load`
/// that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn ziln_uplift_model_free(model: *mut ZilnUpliftModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Feature-vector width the model expects; 0 on NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ziln_uplift_model_n_features(model: *const ZilnUpliftModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.n_features
}

/// Predicted uplift for one feature row of length `len`.
///
/// # Safety
/// `model` must be a live handle, `features` must point to `len` readable
/// doubles, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ziln_uplift_predict(
    model: *const ZilnUpliftModel,
    features: *const f64,
    len: usize,
    out: *mut f64,
) -> ZilnUpliftStatus {
    unsafe { ziln_uplift_predict_batch(model, features, 1, len, out) }
}

/// Predicted uplift for `n_rows` rows stored row-major with `n_features`
/// columns; writes `n_rows` doubles to `out`.
///
/// # Safety
/// `model` must be a live handle, `features` must point to
/// `n_rows * n_features` readable doubles, and `out` to `n_rows` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn ziln_uplift_predict_batch(
    model: *const ZilnUpliftModel,
    features: *const f64,
    n_rows: usize,
    n_features: usize,
    out: *mut f64,
) -> ZilnUpliftStatus {
    guarded(|| {
        if model.is_null() || features.is_null() || out.is_null() {
            set_error("null pointer argument".into());
            return ZilnUpliftStatus::NullPointer;
        }
        let handle = unsafe { &*model };
        if n_features != handle.n_features {
            set_error(format!(
                "model expects {} features, got {n_features}",
                handle.n_features
            ));
            return ZilnUpliftStatus::ShapeMismatch;
        }
        let rows = unsafe { std::slice::from_raw_parts(features, n_rows * n_features) };
        let sink = unsafe { std::slice::from_raw_parts_mut(out, n_rows) };
        for (slot, chunk) in sink.iter_mut().zip(rows.chunks_exact(n_features)) {
            *slot = handle.scorer.predict_uplift_row(chunk);
        }
        ZilnUpliftStatus::Ok
    })
}

/// Expected outcome `pi * exp(mu + sigma^2 / 2)` of one ZILN branch.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ziln_uplift_expected_value(
    pi: f64,
    mu: f64,
    sigma: f64,
    out: *mut f64,
) -> ZilnUpliftStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null pointer argument".into());
            return ZilnUpliftStatus::NullPointer;
        }
        let value = ZilnParams::new(pi, mu, sigma).and_then(|p| p.expected_value());
        match value {
            Ok(v) => {
                unsafe { *out = v };
                ZilnUpliftStatus::Ok
            }
            Err(err) => {
                set_error(err.to_string());
                status_of(&err)
            }
        }
    })
}

/// Copy the last error message of this thread into `buffer` (NUL
/// terminated, truncated to `capacity`). Returns the full message length in
/// bytes excluding the terminator, or 0 when no error is recorded.
///
/// # Safety
/// `buffer` must be NULL (to query the length) or point to `capacity`
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ziln_uplift_last_error_message(
    buffer: *mut c_char,
    capacity: usize,
) -> usize {
    LAST_ERROR.with(|slot| {
        let borrow = slot.borrow();
        let Some(message) = borrow.as_ref() else {
            return 0;
        };
        let bytes = message.as_bytes();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buffer.cast::<u8>(), n);
                *buffer.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Static library version string; do not free.
#[no_mangle]
pub extern "C" fn ziln_uplift_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use ziln_uplift::datagen::{generate, GenConfig};
    use ziln_uplift::forest::{fit_forest, ForestConfig};
    use ziln_uplift::gated_net::{train, NetArtifact, TrainConfig};
    use ziln_uplift::losses::{FocalConfig, HybridWeights};

    fn tiny_data() -> ziln_uplift::datagen::Dataset {
        generate(&GenConfig {
            n_accounts: 600,
            n_binary: 3,
            n_continuous: 5,
            seed: 5,
            ..GenConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn load_predict_free_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_data();
        let forest = fit_forest(
            &data,
            &ForestConfig {
                n_trees: 4,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let path = dir.path().join("forest.json");
        forest.save(&path).unwrap();

        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut ZilnUpliftModel = std::ptr::null_mut();
        let status = unsafe { ziln_uplift_model_load(c_path.as_ptr(), &mut handle) };
        assert_eq!(status, ZilnUpliftStatus::Ok);
        assert_eq!(unsafe { ziln_uplift_model_n_features(handle) }, 8);

        let mut out = vec![0.0; data.n_rows()];
        let status = unsafe {
            ziln_uplift_predict_batch(
                handle,
                data.features.as_ptr(),
                data.n_rows(),
                data.n_features(),
                out.as_mut_ptr(),
            )
        };
        assert_eq!(status, ZilnUpliftStatus::Ok);
        for (i, score) in out.iter().enumerate() {
            assert_eq!(score.to_bits(), forest.predict_row(data.row(i)).to_bits());
        }
        unsafe { ziln_uplift_model_free(handle) };
    }

    #[test]
    fn net_artifact_loads_through_the_same_entry() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_data();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 64,
            d_embed: 3,
            d_hidden: 8,
            d_head: 4,
            ..TrainConfig::default()
        };
        let focal = FocalConfig::default();
        let weights = HybridWeights::default();
        let outcome = train(&data, &cfg, &focal, &weights).unwrap();
        let artifact = NetArtifact::from_params(&outcome.params, &cfg, &focal, &weights, vec![]);
        let path = dir.path().join("net.json");
        artifact.save(&path).unwrap();

        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut ZilnUpliftModel = std::ptr::null_mut();
        assert_eq!(
            unsafe { ziln_uplift_model_load(c_path.as_ptr(), &mut handle) },
            ZilnUpliftStatus::Ok
        );
        let mut score = f64::NAN;
        let status =
            unsafe { ziln_uplift_predict(handle, data.features.as_ptr(), 8, &mut score) };
        assert_eq!(status, ZilnUpliftStatus::Ok);
        assert_eq!(
            score.to_bits(),
            outcome.params.predict_uplift(data.row(0)).unwrap().to_bits()
        );
        unsafe { ziln_uplift_model_free(handle) };
    }

    #[test]
    fn errors_carry_status_and_message() {
        let c_path = CString::new("/nonexistent/model.json").unwrap();
        let mut handle: *mut ZilnUpliftModel = std::ptr::null_mut();
        let status = unsafe { ziln_uplift_model_load(c_path.as_ptr(), &mut handle) };
        assert_eq!(status, ZilnUpliftStatus::Io);
        let needed = unsafe { ziln_uplift_last_error_message(std::ptr::null_mut(), 0) };
        assert!(needed > 0);
        let mut buf = vec![0 as c_char; needed + 1];
        let written = unsafe { ziln_uplift_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(written, needed);

        assert_eq!(
            unsafe { ziln_uplift_model_load(std::ptr::null(), &mut handle) },
            ZilnUpliftStatus::NullPointer
        );

        let mut out = 0.0;
        assert_eq!(
            unsafe { ziln_uplift_expected_value(0.5, 0.0, -1.0, &mut out) },
            ZilnUpliftStatus::Numeric
        );
        assert_eq!(
            unsafe { ziln_uplift_expected_value(0.5, 2.0f64.ln(), 0.1, &mut out) },
            ZilnUpliftStatus::Ok
        );
        assert!((out - 1.005_012_520_859_401).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_data();
        let forest = fit_forest(
            &data,
            &ForestConfig {
                n_trees: 2,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let path = dir.path().join("forest.json");
        forest.save(&path).unwrap();
        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut ZilnUpliftModel = std::ptr::null_mut();
        assert_eq!(
            unsafe { ziln_uplift_model_load(c_path.as_ptr(), &mut handle) },
            ZilnUpliftStatus::Ok
        );
        let mut out = 0.0;
        let row = [0.0; 3];
        assert_eq!(
            unsafe { ziln_uplift_predict(handle, row.as_ptr(), 3, &mut out) },
            ZilnUpliftStatus::ShapeMismatch
        );
        unsafe { ziln_uplift_model_free(handle) };
    }

    #[test]
    fn version_is_a_static_c_string() {
        let v = unsafe { CStr::from_ptr(ziln_uplift_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
