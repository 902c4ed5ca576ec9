//! C ABI over `histostyle`.
//!
//! Conventions:
//! - Every fallible call returns an [`HsStatus`]; results come back through
//!   out-pointers that are written only on success.
//! - On failure, [`hs_last_error_message`] describes the error. The message
//!   is per thread and stays valid until the next failing call on that thread.
//! - Objects are opaque handles released with their `*_free` function.
//!   Strings returned by the library are released with [`hs_string_free`].
//! - Panics never cross the boundary; they surface as `HS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use histostyle::evaluation::{
    aggregate_report, chi_square_gof, chi_square_sf, paired_t_test, parse_scores, t_sf,
    ReportOptions, TestResult,
};
use histostyle::image::{center_crop, colorize, load_image, save_image, ColorMode, RgbImage};
use histostyle::style::{run_style_transfer, InitMode, StyleTransferConfig};
use histostyle::tensor::PoolMode;
use histostyle::vgg::{vgg19_layers_scaled, NetworkWeights};
use histostyle::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    IncompatibleWeights = 4,
    Numeric = 5,
    DegenerateSignal = 6,
    Validation = 7,
    Duplicate = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsColorMode {
    Gray = 0,
    Green = 1,
    Red = 2,
    Intact = 3,
}

impl From<HsColorMode> for ColorMode {
    fn from(m: HsColorMode) -> Self {
        match m {
            HsColorMode::Gray => ColorMode::Gray,
            HsColorMode::Green => ColorMode::Green,
            HsColorMode::Red => ColorMode::Red,
            HsColorMode::Intact => ColorMode::Intact,
        }
    }
}

/// Stylization parameters. Start from [`hs_style_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsStyleParams {
    pub alpha: f64,
    pub iterations: u32,
    /// Start from seeded noise instead of the content image.
    pub init_noise: bool,
    /// Average instead of max pooling.
    pub average_pooling: bool,
    pub style_normalization: bool,
    pub seed: u64,
}

/// Two-sided test result.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HsTestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

impl From<TestResult> for HsTestResult {
    fn from(r: TestResult) -> Self {
        Self {
            statistic: r.statistic,
            df: r.df,
            p_value: r.p_value,
        }
    }
}

/// Opaque network weights.
pub struct HsWeights(NetworkWeights);

/// Opaque 8-bit RGB image.
pub struct HsImage(RgbImage);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HsStatus {
    match e {
        Error::InvalidInput(_) => HsStatus::InvalidArgument,
        Error::Format(_) => HsStatus::Format,
        Error::IncompatibleWeights { .. } => HsStatus::IncompatibleWeights,
        Error::Numeric(_) => HsStatus::Numeric,
        Error::DegenerateSignal(_) => HsStatus::DegenerateSignal,
        Error::Validation { .. } => HsStatus::Validation,
        Error::Duplicate { .. } => HsStatus::Duplicate,
        Error::File { .. } | Error::Io(_) => HsStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `body`, translating errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(Fail::Null(name))) => {
            set_last_error(&format!("{name} is null"));
            HsStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            HsStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

unsafe fn path_arg(p: *const c_char, name: &'static str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail::Lib(Error::InvalidInput(format!("{name} is not valid UTF-8"))))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s)
        .expect("JSON output contains no nul bytes")
        .into_raw()
}

/// Message for the last failing call on this thread; empty if none.
#[no_mangle]
pub extern "C" fn hs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a weight file built for the network with channel widths divided by
/// `width_divisor` (1 for the full network).
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_weights_load(
    path: *const c_char,
    width_divisor: u32,
    out: *mut *mut HsWeights,
) -> HsStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = out_ptr(out, "out")?;
        let spec = vgg19_layers_scaled(width_divisor as usize)?;
        *out = Box::into_raw(Box::new(HsWeights(NetworkWeights::load(path, &spec)?)));
        Ok(())
    })
}

/// Seeded random weights.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_weights_random(
    width_divisor: u32,
    seed: u64,
    out: *mut *mut HsWeights,
) -> HsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let spec = vgg19_layers_scaled(width_divisor as usize)?;
        *out = Box::into_raw(Box::new(HsWeights(NetworkWeights::random(&spec, seed))));
        Ok(())
    })
}

/// # Safety
/// `weights` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_weights_save(
    weights: *const HsWeights,
    path: *const c_char,
) -> HsStatus {
    guard(|| {
        let w = non_null(weights, "weights")?;
        w.0.save(path_arg(path, "path")?)?;
        Ok(())
    })
}

/// CRC32 of the serialized weights; 0 for a null handle.
///
/// # Safety
/// `weights` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_weights_checksum(weights: *const HsWeights) -> u32 {
    weights.as_ref().map_or(0, |w| w.0.checksum())
}

/// # Safety
/// `weights` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_weights_free(weights: *mut HsWeights) {
    if !weights.is_null() {
        drop(Box::from_raw(weights));
    }
}

/// Decodes a PNG or JPEG file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_image_load(path: *const c_char, out: *mut *mut HsImage) -> HsStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(HsImage(load_image(path)?)));
        Ok(())
    })
}

/// Copies `len = width·height·3` interleaved RGB bytes into a new image.
///
/// # Safety
/// `rgb` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_image_from_rgb(
    width: u32,
    height: u32,
    rgb: *const u8,
    len: usize,
    out: *mut *mut HsImage,
) -> HsStatus {
    guard(|| {
        if rgb.is_null() {
            return Err(Fail::Null("rgb"));
        }
        let out = out_ptr(out, "out")?;
        let bytes = std::slice::from_raw_parts(rgb, len).to_vec();
        *out = Box::into_raw(Box::new(HsImage(RgbImage::new(
            width as usize,
            height as usize,
            bytes,
        )?)));
        Ok(())
    })
}

/// Writes the image as PNG.
///
/// # Safety
/// `image` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_image_save(image: *const HsImage, path: *const c_char) -> HsStatus {
    guard(|| {
        let img = non_null(image, "image")?;
        save_image(&img.0, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_image_width(image: *const HsImage) -> u32 {
    image.as_ref().map_or(0, |i| i.0.width() as u32)
}

/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_image_height(image: *const HsImage) -> u32 {
    image.as_ref().map_or(0, |i| i.0.height() as u32)
}

/// Borrowed view of the RGB bytes, valid while the handle lives. Writes
/// the byte count to `len`. Null for a null handle.
///
/// # Safety
/// `image` must be null or a live handle; `len` null or writable.
#[no_mangle]
pub unsafe extern "C" fn hs_image_pixels(image: *const HsImage, len: *mut usize) -> *const u8 {
    match image.as_ref() {
        Some(img) => {
            if let Some(len) = len.as_mut() {
                *len = img.0.pixels().len();
            }
            img.0.pixels().as_ptr()
        }
        None => ptr::null(),
    }
}

/// # Safety
/// `image` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_image_free(image: *mut HsImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Centered `size × size` crop.
///
/// # Safety
/// `image` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_image_center_crop(
    image: *const HsImage,
    size: u32,
    out: *mut *mut HsImage,
) -> HsStatus {
    guard(|| {
        let img = non_null(image, "image")?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(HsImage(center_crop(&img.0, size as usize)?)));
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_image_colorize(
    image: *const HsImage,
    mode: HsColorMode,
    out: *mut *mut HsImage,
) -> HsStatus {
    guard(|| {
        let img = non_null(image, "image")?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(HsImage(colorize(&img.0, mode.into()))));
        Ok(())
    })
}

/// alpha 100, 1600 iterations, content init, max pooling, normalized style
/// terms, seed 0.
#[no_mangle]
pub extern "C" fn hs_style_params_default() -> HsStyleParams {
    let d = StyleTransferConfig::default();
    HsStyleParams {
        alpha: d.alpha,
        iterations: d.iterations as u32,
        init_noise: d.init_mode == InitMode::Noise,
        average_pooling: d.pooling == PoolMode::Average,
        style_normalization: d.style_normalization,
        seed: d.seed,
    }
}

/// Stylizes `content` toward `style`. The run metadata (configuration,
/// loss trace, stop reason) is returned as JSON in `out_metadata_json`
/// when that pointer is non-null; free it with [`hs_string_free`].
///
/// # Safety
/// Handles must be live; `params` readable; `out_image` writable;
/// `out_metadata_json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn hs_stylize(
    weights: *const HsWeights,
    content: *const HsImage,
    style: *const HsImage,
    params: *const HsStyleParams,
    out_image: *mut *mut HsImage,
    out_metadata_json: *mut *mut c_char,
) -> HsStatus {
    guard(|| {
        let w = non_null(weights, "weights")?;
        let c = non_null(content, "content")?;
        let s = non_null(style, "style")?;
        let p = non_null(params, "params")?;
        let out_image = out_ptr(out_image, "out_image")?;
        let config = StyleTransferConfig {
            alpha: p.alpha,
            iterations: p.iterations as usize,
            init_mode: if p.init_noise {
                InitMode::Noise
            } else {
                InitMode::Content
            },
            pooling: if p.average_pooling {
                PoolMode::Average
            } else {
                PoolMode::Max
            },
            style_normalization: p.style_normalization,
            seed: p.seed,
            ..StyleTransferConfig::default()
        };
        let result = run_style_transfer(&w.0, &c.0, &s.0, &config)?;
        if let Some(meta) = out_metadata_json.as_mut() {
            *meta = into_c_string(
                serde_json::to_string(&result.metadata).expect("metadata serializes"),
            );
        }
        *out_image = Box::into_raw(Box::new(HsImage(result.image)));
        Ok(())
    })
}

/// One-way chi-square of two counts against an even split.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_chi_square_gof(
    observed_a: u64,
    observed_b: u64,
    out: *mut HsTestResult,
) -> HsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = chi_square_gof([observed_a, observed_b])?.into();
        Ok(())
    })
}

/// Two-sided paired t-test of `a[i] − b[i]` over `n` scores.
///
/// # Safety
/// `a` and `b` must each point to `n` readable bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_paired_t_test(
    a: *const u8,
    b: *const u8,
    n: usize,
    out: *mut HsTestResult,
) -> HsStatus {
    guard(|| {
        if a.is_null() {
            return Err(Fail::Null("a"));
        }
        if b.is_null() {
            return Err(Fail::Null("b"));
        }
        let out = out_ptr(out, "out")?;
        let (a, b) = (
            std::slice::from_raw_parts(a, n),
            std::slice::from_raw_parts(b, n),
        );
        *out = paired_t_test(a, b)?.into();
        Ok(())
    })
}

/// `P(X > x)` for a chi-square variable with `df` degrees of freedom.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_chi_square_sf(x: f64, df: f64, out: *mut f64) -> HsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = chi_square_sf(x, df)?;
        Ok(())
    })
}

/// One-tailed `P(T > t)` for Student's t with `df` degrees of freedom.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_t_sf(t: f64, df: f64, out: *mut f64) -> HsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = t_sf(t, df)?;
        Ok(())
    })
}

/// Aggregates a scores CSV (`len` bytes) into the JSON report. Free the
/// result with [`hs_string_free`].
///
/// # Safety
/// `csv` must point to `len` readable bytes (may be null when `len` is 0);
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_report_json(
    csv: *const u8,
    len: usize,
    welch: bool,
    out_json: *mut *mut c_char,
) -> HsStatus {
    guard(|| {
        if csv.is_null() && len > 0 {
            return Err(Fail::Null("csv"));
        }
        let out = out_ptr(out_json, "out_json")?;
        let bytes = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(csv, len)
        };
        let report = aggregate_report(&parse_scores(bytes)?, ReportOptions { welch });
        *out = into_c_string(serde_json::to_string(&report).expect("report serializes"));
        Ok(())
    })
}
