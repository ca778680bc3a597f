//! C ABI over the `adact` training engine.
//!
//! The surface is deliberately small: load a checkpoint into an opaque
//! handle, ask it for its geometry, run batched inference, and evaluate the
//! adaptive activation family directly. Everything else (training, experiment
//! configs) stays behind the Rust CLI.
//!
//! Conventions, mirrored in the generated `include/adact.h`:
//! - every fallible function returns [`AdactStatus`]; on any value other than
//!   `Ok` the out-parameters are left untouched;
//! - the failure message is stored per thread and retrieved with
//!   [`adact_last_error`];
//! - panics never cross the boundary — they are caught and reported as
//!   [`AdactStatus::Panic`].

use std::cell::RefCell;
use std::ffi::CStr;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use adact::activation::{adaptive_backward, adaptive_forward, ActivationKind, AdaptiveParams};
use adact::model::Model;
use adact::tensor::Tensor;
use adact::Error;

/// Result code for every fallible call in this ABI.
///
/// Values other than `Ok` leave out-parameters untouched; call
/// `adact_last_error` on the same thread for the human-readable message.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdactStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Buffer lengths disagree with the model or batch geometry.
    DimensionMismatch = 3,
    /// A value was NaN or infinite where a finite number is required.
    NonFinite = 4,
    /// An argument is outside its documented domain.
    InvalidArgument = 5,
    /// An API was used out of order.
    ContractViolation = 6,
    /// A model description is internally inconsistent.
    InvalidSpec = 7,
    /// A dataset file is malformed.
    DataError = 8,
    /// An experiment config failed validation.
    ConfigError = 9,
    /// A learning-rate schedule doesn't cover a requested epoch.
    ScheduleError = 10,
    /// Run directories being compared are incompatible.
    CompareError = 11,
    /// A checkpoint file is corrupt or from an unknown version.
    CheckpointError = 12,
    /// The operating system reported an I/O failure.
    IoError = 13,
    /// A panic was caught at the boundary; state may be stale but memory is intact.
    Panic = 14,
}

fn status_of(err: &Error) -> AdactStatus {
    match err {
        Error::Dim(_) => AdactStatus::DimensionMismatch,
        Error::Numeric(_) => AdactStatus::NonFinite,
        Error::InvalidArg(_) => AdactStatus::InvalidArgument,
        Error::Contract(_) => AdactStatus::ContractViolation,
        Error::Spec(_) => AdactStatus::InvalidSpec,
        Error::Data(_) => AdactStatus::DataError,
        Error::Config(_) => AdactStatus::ConfigError,
        Error::Schedule(_) => AdactStatus::ScheduleError,
        Error::Compare(_) => AdactStatus::CompareError,
        Error::Checkpoint(_) => AdactStatus::CheckpointError,
        Error::Io(_) => AdactStatus::IoError,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: impl ToString) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
}

fn fail(err: Error) -> AdactStatus {
    let status = status_of(&err);
    set_last_error(err);
    status
}

fn null_arg(name: &str) -> AdactStatus {
    set_last_error(format!("argument `{name}` is null"));
    AdactStatus::NullArgument
}

/// Runs `f`, converting a panic into `AdactStatus::Panic` instead of
/// unwinding into the C caller.
fn guarded(f: impl FnOnce() -> AdactStatus) -> AdactStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic caught at the FFI boundary");
            AdactStatus::Panic
        }
    }
}

/// A loaded model plus the seed recorded in its checkpoint. Opaque to C.
pub struct AdactModel {
    model: Model,
    seed: u64,
}

/// Copies the calling thread's last error message into `buf`.
///
/// Returns the full message length in bytes (excluding the NUL terminator).
/// At most `cap - 1` bytes are copied and the result is always
/// NUL-terminated; pass a null `buf` or zero `cap` to query the length alone.
///
/// # Safety
/// `buf` must be null or valid for writing `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn adact_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn adact_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, AdactStatus> {
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("string argument is not valid UTF-8");
        AdactStatus::InvalidUtf8
    })
}

/// Loads a model checkpoint from `path` into a fresh handle.
///
/// On success `*out` owns the model; release it with `adact_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writing one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn adact_model_load(
    path: *const c_char,
    out: *mut *mut AdactModel,
) -> AdactStatus {
    guarded(|| {
        if path.is_null() {
            return null_arg("path");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let path = match cstr(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match Model::load(Path::new(path)) {
            Ok((model, seed)) => {
                *out = Box::into_raw(Box::new(AdactModel { model, seed }));
                AdactStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Releases a handle returned by `adact_model_load`. Null is a no-op.
///
/// # Safety
/// `model` must be null or a pointer obtained from `adact_model_load` that
/// has not already been freed.
#[no_mangle]
pub unsafe extern "C" fn adact_model_free(model: *mut AdactModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the seed recorded in the model's checkpoint to `*out`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing one `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn adact_model_seed(model: *const AdactModel, out: *mut u64) -> AdactStatus {
    guarded(|| {
        let Some(handle) = model.as_ref() else {
            return null_arg("model");
        };
        if out.is_null() {
            return null_arg("out");
        }
        *out = handle.seed;
        AdactStatus::Ok
    })
}

/// Writes the per-sample input length (product of the input shape) to `*out`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn adact_model_input_len(
    model: *const AdactModel,
    out: *mut usize,
) -> AdactStatus {
    guarded(|| {
        let Some(handle) = model.as_ref() else {
            return null_arg("model");
        };
        if out.is_null() {
            return null_arg("out");
        }
        *out = handle.model.spec().input_shape.iter().product();
        AdactStatus::Ok
    })
}

/// Writes the number of output classes to `*out`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn adact_model_classes(
    model: *const AdactModel,
    out: *mut usize,
) -> AdactStatus {
    guarded(|| {
        let Some(handle) = model.as_ref() else {
            return null_arg("model");
        };
        if out.is_null() {
            return null_arg("out");
        }
        *out = handle.model.spec().classes;
        AdactStatus::Ok
    })
}

/// Runs inference on a batch packed row-major into `input`.
///
/// `input_len` must be a positive multiple of the per-sample input length;
/// the quotient is the batch size `n`, and `out_len` must equal
/// `n * classes`. Logits are written to `out` in batch order, one row of
/// `classes` values per sample.
///
/// # Safety
/// `model` must be a live handle, `input` valid for reading `input_len`
/// doubles, and `out` valid for writing `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adact_model_infer(
    model: *const AdactModel,
    input: *const f64,
    input_len: usize,
    out: *mut f64,
    out_len: usize,
) -> AdactStatus {
    guarded(|| {
        let Some(handle) = model.as_ref() else {
            return null_arg("model");
        };
        if input.is_null() {
            return null_arg("input");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let sample: usize = handle.model.spec().input_shape.iter().product();
        if input_len == 0 || !input_len.is_multiple_of(sample) {
            return fail(Error::Dim(format!(
                "input length {input_len} is not a positive multiple of the \
                 per-sample input length {sample}"
            )));
        }
        let batch = input_len / sample;
        let classes = handle.model.spec().classes;
        if out_len != batch * classes {
            return fail(Error::Dim(format!(
                "output length {out_len} should be batch {batch} x classes {classes}"
            )));
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&handle.model.spec().input_shape);
        let x = match Tensor::new(shape, std::slice::from_raw_parts(input, input_len).to_vec()) {
            Ok(x) => x,
            Err(err) => return fail(err),
        };
        match handle.model.infer(&x) {
            Ok(logits) => {
                std::ptr::copy_nonoverlapping(logits.data().as_ptr(), out, out_len);
                AdactStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

fn parse_adaptive(
    kind: &str,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
) -> Result<(ActivationKind, AdaptiveParams), Error> {
    let kind = ActivationKind::parse(kind)?;
    let params = AdaptiveParams::new(a, b, c, d)?;
    Ok((kind, params))
}

/// Evaluates an adaptive activation elementwise: `out[i] = g(z[i])`.
///
/// `kind` is one of `"asigmoid"`, `"atanh"`, `"arelu"` and `(a, b, c, d)` are
/// its four scalars. Passing `n == 0` is a no-op.
///
/// # Safety
/// `kind` must be a NUL-terminated string; `z` must be valid for reading and
/// `out` for writing `n` doubles when `n > 0`.
#[no_mangle]
pub unsafe extern "C" fn adact_activation_forward(
    kind: *const c_char,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    z: *const f64,
    n: usize,
    out: *mut f64,
) -> AdactStatus {
    guarded(|| {
        if kind.is_null() {
            return null_arg("kind");
        }
        if n == 0 {
            return AdactStatus::Ok;
        }
        if z.is_null() {
            return null_arg("z");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let kind = match cstr(kind) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let (kind, params) = match parse_adaptive(kind, a, b, c, d) {
            Ok(pair) => pair,
            Err(err) => return fail(err),
        };
        let zs = match Tensor::new(vec![n], std::slice::from_raw_parts(z, n).to_vec()) {
            Ok(t) => t,
            Err(err) => return fail(err),
        };
        match adaptive_forward(&kind, &params, &zs) {
            Ok(y) => {
                std::ptr::copy_nonoverlapping(y.data().as_ptr(), out, n);
                AdactStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Backpropagates through an adaptive activation.
///
/// Given inputs `z` and the loss gradient `upstream` at the activation's
/// output, writes the gradient with respect to `z` into `out_dz` (length `n`)
/// and the gradients with respect to `(a, b, c, d)` into `out_dparams`
/// (length 4). Either output pointer may be null to skip that gradient.
///
/// # Safety
/// `kind` must be a NUL-terminated string; `z` and `upstream` must be valid
/// for reading `n` doubles; `out_dz` must be null or valid for writing `n`
/// doubles; `out_dparams` must be null or valid for writing 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn adact_activation_backward(
    kind: *const c_char,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    z: *const f64,
    upstream: *const f64,
    n: usize,
    out_dz: *mut f64,
    out_dparams: *mut f64,
) -> AdactStatus {
    guarded(|| {
        if kind.is_null() {
            return null_arg("kind");
        }
        if n == 0 {
            return AdactStatus::Ok;
        }
        if z.is_null() {
            return null_arg("z");
        }
        if upstream.is_null() {
            return null_arg("upstream");
        }
        let kind = match cstr(kind) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let (kind, params) = match parse_adaptive(kind, a, b, c, d) {
            Ok(pair) => pair,
            Err(err) => return fail(err),
        };
        let zs = match Tensor::new(vec![n], std::slice::from_raw_parts(z, n).to_vec()) {
            Ok(t) => t,
            Err(err) => return fail(err),
        };
        let up = match Tensor::new(vec![n], std::slice::from_raw_parts(upstream, n).to_vec()) {
            Ok(t) => t,
            Err(err) => return fail(err),
        };
        match adaptive_backward(&kind, &params, &zs, &up) {
            Ok((dz, dparams)) => {
                if !out_dz.is_null() {
                    std::ptr::copy_nonoverlapping(dz.data().as_ptr(), out_dz, n);
                }
                if !out_dparams.is_null() {
                    let grads = dparams.to_array();
                    std::ptr::copy_nonoverlapping(grads.as_ptr(), out_dparams, 4);
                }
                AdactStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    #[test]
    fn forward_matches_relu_on_default_quadruple() {
        let kind = CString::new("arelu").unwrap();
        let z = [-2.0, -0.5, 0.5, 3.0];
        let mut out = [0.0; 4];
        let status = unsafe {
            adact_activation_forward(
                kind.as_ptr(),
                1.0,
                0.0,
                0.0,
                0.0,
                z.as_ptr(),
                z.len(),
                out.as_mut_ptr(),
            )
        };
        assert_eq!(status, AdactStatus::Ok);
        assert_eq!(out, [0.0, 0.0, 0.5, 3.0]);
    }

    #[test]
    fn errors_set_thread_message_and_leave_outputs_alone() {
        let kind = CString::new("relu").unwrap(); // fixed kind: no adaptive scalars
        let z = [1.0];
        let mut out = [42.0];
        let status = unsafe {
            adact_activation_forward(
                kind.as_ptr(),
                1.0,
                0.0,
                0.0,
                0.0,
                z.as_ptr(),
                1,
                out.as_mut_ptr(),
            )
        };
        assert_ne!(status, AdactStatus::Ok);
        assert_eq!(out, [42.0]);
        let needed = unsafe { adact_last_error(std::ptr::null_mut(), 0) };
        assert!(needed > 0);
        let mut buf = vec![0i8; needed + 1];
        let written = unsafe { adact_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(written, needed);
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert!(msg.contains("relu"), "{msg}");
    }

    #[test]
    fn null_handles_are_rejected_not_dereferenced() {
        let mut seed = 0u64;
        assert_eq!(
            unsafe { adact_model_seed(std::ptr::null(), &mut seed) },
            AdactStatus::NullArgument
        );
        unsafe { adact_model_free(std::ptr::null_mut()) };
    }
}
