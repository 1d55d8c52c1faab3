//! C ABI over the embedded platform, the device simulator, code extraction,
//! failure classification and metrics.
//!
//! Conventions:
//!
//! - every fallible function returns a [`ForgeStatus`]; on anything but
//!   `FORGE_STATUS_OK`, [`forge_last_error`] describes the failure
//! - structured values cross the boundary as UTF-8 JSON strings
//! - strings returned through `out` pointers are owned by the caller and
//!   released with [`forge_string_free`]
//! - handles are released with their `*_free` function; passing NULL to a
//!   free function is a no-op

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;
use std::sync::Arc;

use faasforge::bridge::{classify_failure, extract_function, FailureStage};
use faasforge::metrics::analyze;
use faasforge::platform::{FunctionDescriptor, Invocation, Platform, PlatformConfig, PlatformError};
use faasforge::runtime::GuestLanguage;
use faasforge::sim::{DeviceState, HomeSimulator, Scalar, SimError, Stimulus};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidArgument = 4,
    NotFound = 5,
    Duplicate = 6,
    UnknownRuntime = 7,
    DeployFailed = 8,
    GuestError = 9,
    Timeout = 10,
    Busy = 11,
    Internal = 12,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: ForgeStatus, message: impl Into<String>) -> ForgeStatus {
    set_error(message);
    status
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn forge_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn forge_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned through an `out` pointer.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn forge_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, ForgeStatus> {
    if p.is_null() {
        return Err(fail(ForgeStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| fail(ForgeStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn opt_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, ForgeStatus> {
    if p.is_null() {
        Ok(None)
    } else {
        arg(p, name).map(Some)
    }
}

fn json_arg<T: serde::de::DeserializeOwned>(text: &str, name: &str) -> Result<T, ForgeStatus> {
    serde_json::from_str(text).map_err(|e| fail(ForgeStatus::InvalidJson, format!("{name}: {e}")))
}

unsafe fn write_out(out: *mut *mut c_char, value: impl serde::Serialize) -> ForgeStatus {
    if out.is_null() {
        return fail(ForgeStatus::NullArgument, "out is NULL");
    }
    let text = match serde_json::to_string(&value) {
        Ok(t) => t,
        Err(e) => return fail(ForgeStatus::Internal, e.to_string()),
    };
    match CString::new(text) {
        Ok(c) => {
            *out = c.into_raw();
            ForgeStatus::Ok
        }
        Err(e) => fail(ForgeStatus::Internal, e.to_string()),
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

fn language(runtime: &str) -> Result<GuestLanguage, ForgeStatus> {
    GuestLanguage::from_runtime(runtime).ok_or_else(|| fail(ForgeStatus::UnknownRuntime, format!("unknown runtime {runtime:?}")))
}

fn platform_status(e: &PlatformError) -> ForgeStatus {
    match e {
        PlatformError::DuplicateName(_) => ForgeStatus::Duplicate,
        PlatformError::UnknownRuntime(_) => ForgeStatus::UnknownRuntime,
        PlatformError::PrepareFailed { .. } | PlatformError::StartFailed { .. } => ForgeStatus::DeployFailed,
        PlatformError::NotFound(_) => ForgeStatus::NotFound,
        PlatformError::GuestError(_) => ForgeStatus::GuestError,
        PlatformError::Timeout(_) => ForgeStatus::Timeout,
        PlatformError::Busy => ForgeStatus::Busy,
    }
}

fn sim_status(e: &SimError) -> ForgeStatus {
    match e {
        SimError::UnknownDevice(_) | SimError::UnknownAttribute { .. } => ForgeStatus::NotFound,
        SimError::OutOfRange { .. } | SimError::InvalidState(_) => ForgeStatus::InvalidArgument,
    }
}

// ---------------------------------------------------------------------------
// Platform
// ---------------------------------------------------------------------------

/// An embedded platform with its own async runtime.
pub struct ForgePlatform {
    rt: tokio::runtime::Runtime,
    platform: Platform,
}

/// Creates a platform. `config_json` is a platform config object, or NULL
/// for defaults.
///
/// # Safety
/// `config_json` must be NULL or a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_platform_new(config_json: *const c_char, out: *mut *mut ForgePlatform) -> ForgeStatus {
    if out.is_null() {
        return fail(ForgeStatus::NullArgument, "out is NULL");
    }
    let config: PlatformConfig = match tri!(opt_arg(config_json, "config_json")) {
        Some(text) => tri!(json_arg(text, "config_json")),
        None => PlatformConfig::default(),
    };
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => return fail(ForgeStatus::Internal, e.to_string()),
    };
    let platform = {
        let _guard = rt.enter();
        match Platform::new(config) {
            Ok(p) => p,
            Err(e) => return fail(ForgeStatus::Internal, e.to_string()),
        }
    };
    *out = Box::into_raw(Box::new(ForgePlatform { rt, platform }));
    ForgeStatus::Ok
}

/// Stops every guest and frees the handle.
///
/// # Safety
/// `p` must be NULL or a live handle from [`forge_platform_new`].
#[no_mangle]
pub unsafe extern "C" fn forge_platform_free(p: *mut ForgePlatform) {
    if p.is_null() {
        return;
    }
    let handle = Box::from_raw(p);
    handle.rt.block_on(handle.platform.shutdown());
}

unsafe fn platform<'a>(p: *const ForgePlatform) -> Result<&'a ForgePlatform, ForgeStatus> {
    p.as_ref().ok_or_else(|| fail(ForgeStatus::NullArgument, "platform handle is NULL"))
}

/// Deploys a function descriptor (JSON, source files base64) and writes the
/// deployment record as JSON to `out`.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_platform_deploy(p: *const ForgePlatform, descriptor_json: *const c_char, out: *mut *mut c_char) -> ForgeStatus {
    let h = tri!(platform(p));
    let descriptor: FunctionDescriptor = tri!(json_arg(tri!(arg(descriptor_json, "descriptor_json")), "descriptor_json"));
    match h.rt.block_on(h.platform.deploy(descriptor)) {
        Ok(record) => write_out(out, record),
        Err(e) => fail(platform_status(&e), e.to_string()),
    }
}

/// Invokes a running function with `len` bytes of payload. Writes the HTTP
/// status and the response body (lossy UTF-8, not JSON-encoded).
///
/// # Safety
/// `payload` must point to `len` readable bytes (or be NULL with `len` 0);
/// `out_status` and `out_body` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_platform_invoke(
    p: *const ForgePlatform,
    name: *const c_char,
    payload: *const u8,
    len: usize,
    out_status: *mut u16,
    out_body: *mut *mut c_char,
) -> ForgeStatus {
    let h = tri!(platform(p));
    let name = tri!(arg(name, "name"));
    if out_status.is_null() || out_body.is_null() || (payload.is_null() && len > 0) {
        return fail(ForgeStatus::NullArgument, "payload, out_status or out_body is NULL");
    }
    let bytes = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(payload, len).to_vec() };
    match h.rt.block_on(h.platform.invoke(name, Invocation { body: bytes.into(), content_type: None })) {
        Ok(resp) => match CString::new(resp.text().replace('\0', "")) {
            Ok(c) => {
                *out_status = resp.status;
                *out_body = c.into_raw();
                ForgeStatus::Ok
            }
            Err(e) => fail(ForgeStatus::Internal, e.to_string()),
        },
        Err(e) => fail(platform_status(&e), e.to_string()),
    }
}

/// Stops a function and frees its name.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn forge_platform_remove(p: *const ForgePlatform, name: *const c_char) -> ForgeStatus {
    let h = tri!(platform(p));
    let name = tri!(arg(name, "name"));
    match h.rt.block_on(h.platform.remove(name)) {
        Ok(_) => ForgeStatus::Ok,
        Err(e) => fail(platform_status(&e), e.to_string()),
    }
}

/// Writes every deployment record as a JSON array.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_platform_list(p: *const ForgePlatform, out: *mut *mut c_char) -> ForgeStatus {
    let h = tri!(platform(p));
    write_out(out, h.platform.list())
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

pub struct ForgeSimulator {
    sim: Arc<HomeSimulator>,
}

/// Creates a simulator from a device state JSON, or the built-in home when
/// `state_json` is NULL.
///
/// # Safety
/// `state_json` must be NULL or a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_sim_new(state_json: *const c_char, out: *mut *mut ForgeSimulator) -> ForgeStatus {
    if out.is_null() {
        return fail(ForgeStatus::NullArgument, "out is NULL");
    }
    let state: DeviceState = match tri!(opt_arg(state_json, "state_json")) {
        Some(text) => tri!(json_arg(text, "state_json")),
        None => DeviceState::default_home(),
    };
    match HomeSimulator::new(state) {
        Ok(sim) => {
            *out = Box::into_raw(Box::new(ForgeSimulator { sim: Arc::new(sim) }));
            ForgeStatus::Ok
        }
        Err(e) => fail(sim_status(&e), e.to_string()),
    }
}

/// # Safety
/// `s` must be NULL or a live handle from [`forge_sim_new`].
#[no_mangle]
pub unsafe extern "C" fn forge_sim_free(s: *mut ForgeSimulator) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

unsafe fn simulator<'a>(s: *const ForgeSimulator) -> Result<&'a ForgeSimulator, ForgeStatus> {
    s.as_ref().ok_or_else(|| fail(ForgeStatus::NullArgument, "simulator handle is NULL"))
}

/// Writes the full device state, event log and clock as JSON.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_sim_state(s: *const ForgeSimulator, out: *mut *mut c_char) -> ForgeStatus {
    let h = tri!(simulator(s));
    write_out(out, h.sim.get_state())
}

/// Sets one attribute; `value_json` is a JSON scalar such as `"on"`, `40`
/// or `true`.
///
/// # Safety
/// Pointers must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn forge_sim_set(
    s: *const ForgeSimulator,
    device: *const c_char,
    attribute: *const c_char,
    value_json: *const c_char,
) -> ForgeStatus {
    let h = tri!(simulator(s));
    let device = tri!(arg(device, "device"));
    let attribute = tri!(arg(attribute, "attribute"));
    let value: Scalar = tri!(json_arg(tri!(arg(value_json, "value_json")), "value_json"));
    match h.sim.set(device, attribute, value) {
        Ok(_) => ForgeStatus::Ok,
        Err(e) => fail(sim_status(&e), e.to_string()),
    }
}

/// Applies one stimulus (JSON, e.g. `{"at": 5, "kind": "fire_sensor",
/// "device": "hallway_motion"}`).
///
/// # Safety
/// Pointers must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn forge_sim_apply(s: *const ForgeSimulator, stimulus_json: *const c_char) -> ForgeStatus {
    let h = tri!(simulator(s));
    let stimulus: Stimulus = tri!(json_arg(tri!(arg(stimulus_json, "stimulus_json")), "stimulus_json"));
    match h.sim.apply(&stimulus) {
        Ok(_) => ForgeStatus::Ok,
        Err(e) => fail(sim_status(&e), e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Stateless helpers
// ---------------------------------------------------------------------------

/// Extracts the handler from a model response and writes the artifact JSON.
///
/// # Safety
/// Pointers must be valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_extract_function(raw_text: *const c_char, runtime: *const c_char, out: *mut *mut c_char) -> ForgeStatus {
    let raw = tri!(arg(raw_text, "raw_text"));
    let lang = tri!(language(tri!(arg(runtime, "runtime"))));
    write_out(out, extract_function(raw, lang))
}

/// Classifies a failure. `stage` is one of `generation`, `extraction`,
/// `deployment`, `invocation`; `code` may be NULL when no code was produced.
///
/// # Safety
/// Pointers must be valid C strings (or NULL for `code`); `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn forge_classify_failure(
    stage: *const c_char,
    evidence: *const c_char,
    code: *const c_char,
    runtime: *const c_char,
    out: *mut *mut c_char,
) -> ForgeStatus {
    let stage_text = tri!(arg(stage, "stage"));
    let stage: FailureStage = tri!(json_arg(&format!("{stage_text:?}"), "stage"));
    let evidence = tri!(arg(evidence, "evidence"));
    let code = tri!(opt_arg(code, "code"));
    let lang = tri!(language(tri!(arg(runtime, "runtime"))));
    write_out(out, classify_failure(stage, evidence, code, lang))
}

/// Computes the metric report for guest source.
///
/// # Safety
/// Pointers must be valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_metrics_analyze(code: *const c_char, runtime: *const c_char, out: *mut *mut c_char) -> ForgeStatus {
    let code = tri!(arg(code, "code"));
    let runtime = tri!(arg(runtime, "runtime"));
    match analyze(code, runtime) {
        Ok(report) => write_out(out, report),
        Err(faasforge::metrics::MetricsError::UnknownRuntime(r)) => fail(ForgeStatus::UnknownRuntime, format!("unknown runtime {r:?}")),
        Err(e) => fail(ForgeStatus::InvalidArgument, e.to_string()),
    }
}
