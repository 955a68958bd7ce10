//! C interface to `acl-core`.
//!
//! Scenarios and trajectories are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns an
//! [`AclStatus`]; the message for the most recent failure on the calling thread
//! is available from [`acl_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use acl_core::cli::{cmd_verify, trajectory_csv, ScenarioFile};
use acl_core::fixtures;
use acl_core::quantize::quantize_scalar;
use acl_core::sim::{simulate, SimError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AclStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    PreconditionFailed = 4,
    /// The run diverged; the handle still holds the samples logged before the abort.
    Diverged = 5,
    SimulationFailed = 6,
    OutOfRange = 7,
    InvalidArgument = 8,
    Panic = 9,
}

/// Opaque resolved scenario.
pub struct AclScenario(acl_core::Scenario);

/// Opaque trajectory log.
pub struct AclTrajectory(acl_core::TrajectoryLog);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AclCertificate {
    pub lambda2: f64,
    pub gamma: f64,
    pub q: f64,
    pub decay_unquantized: f64,
    pub decay_quantized: f64,
    pub d: f64,
    pub j: f64,
    pub sigma: f64,
    pub offset: f64,
    /// Nonzero when every agent's history stack met the rank tolerance.
    pub certified: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AclSample {
    pub t: f64,
    pub v: f64,
    pub consensus_error: f64,
    pub bound: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn guard(f: impl FnOnce() -> AclStatus) -> AclStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            AclStatus::Panic
        }
    }
}

fn fail(status: AclStatus, msg: impl ToString) -> AclStatus {
    set_error(msg);
    status
}

fn into_handle<T>(out: *mut *mut T, value: T) {
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message for the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn acl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and resolves a JSON scenario.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn acl_scenario_from_json(json: *const c_char, out: *mut *mut AclScenario) -> AclStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(AclStatus::NullPointer, "null argument");
        }
        let Ok(text) = unsafe { CStr::from_ptr(json) }.to_str() else {
            return fail(AclStatus::InvalidUtf8, "scenario is not valid UTF-8");
        };
        match ScenarioFile::from_json(text).and_then(|f| f.resolve()) {
            Ok(s) => {
                into_handle(out, AclScenario(s));
                AclStatus::Ok
            }
            Err(e) => fail(AclStatus::InvalidScenario, e),
        }
    })
}

/// The built-in five-agent scenario.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn acl_scenario_builtin(out: *mut *mut AclScenario) -> AclStatus {
    guard(|| {
        if out.is_null() {
            return fail(AclStatus::NullPointer, "null argument");
        }
        match fixtures::five_agent().resolve() {
            Ok(s) => {
                into_handle(out, AclScenario(s));
                AclStatus::Ok
            }
            Err(e) => fail(AclStatus::InvalidScenario, e),
        }
    })
}

/// Sets the quantizer level; zero disables quantization.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn acl_scenario_set_sigma(scenario: *mut AclScenario, sigma: f64) -> AclStatus {
    guard(|| {
        let Some(s) = (unsafe { scenario.as_mut() }) else {
            return fail(AclStatus::NullPointer, "null scenario");
        };
        match acl_core::QuantizerConfig::with_sigma(sigma) {
            Ok(q) => {
                s.0.controller.quantizer = q;
                AclStatus::Ok
            }
            Err(e) => fail(AclStatus::InvalidArgument, e),
        }
    })
}

/// Number of agents and per-agent state and parameter dimensions.
///
/// # Safety
/// `scenario` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn acl_scenario_dims(
    scenario: *const AclScenario,
    agents: *mut usize,
    state_dim: *mut usize,
    param_dim: *mut usize,
) -> AclStatus {
    guard(|| {
        let Some(s) = (unsafe { scenario.as_ref() }) else {
            return fail(AclStatus::NullPointer, "null scenario");
        };
        let d = s.0.model.dims();
        unsafe {
            if let Some(o) = agents.as_mut() {
                *o = d.n;
            }
            if let Some(o) = state_dim.as_mut() {
                *o = d.p;
            }
            if let Some(o) = param_dim.as_mut() {
                *o = d.m;
            }
        }
        AclStatus::Ok
    })
}

/// Runs the precondition checks. Returns `PreconditionFailed` if a gating
/// check fails; the report text is in the error message.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn acl_scenario_verify(scenario: *const AclScenario) -> AclStatus {
    guard(|| {
        let Some(s) = (unsafe { scenario.as_ref() }) else {
            return fail(AclStatus::NullPointer, "null scenario");
        };
        match cmd_verify(&s.0) {
            Ok(report) if report.passed() => AclStatus::Ok,
            Ok(report) => fail(AclStatus::PreconditionFailed, report),
            Err(e) => fail(AclStatus::PreconditionFailed, e),
        }
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acl_scenario_free(scenario: *mut AclScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Integrates the scenario. On `Ok` or `Diverged`, `*out` receives a
/// trajectory handle; otherwise it is set to null.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn acl_simulate(scenario: *const AclScenario, out: *mut *mut AclTrajectory) -> AclStatus {
    guard(|| {
        if out.is_null() {
            return fail(AclStatus::NullPointer, "null argument");
        }
        unsafe { *out = ptr::null_mut() };
        let Some(s) = (unsafe { scenario.as_ref() }) else {
            return fail(AclStatus::NullPointer, "null scenario");
        };
        match simulate(&s.0) {
            Ok(log) => {
                into_handle(out, AclTrajectory(log));
                AclStatus::Ok
            }
            Err(SimError::BlowUp { t, norm, log }) => {
                set_error(format!("state blew up at t = {t:.4} (norm {norm:.3e})"));
                into_handle(out, AclTrajectory(*log));
                AclStatus::Diverged
            }
            Err(e) => fail(AclStatus::SimulationFailed, e),
        }
    })
}

/// # Safety
/// `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn acl_trajectory_len(traj: *const AclTrajectory) -> usize {
    unsafe { traj.as_ref() }.map_or(0, |t| t.0.samples.len())
}

/// # Safety
/// `traj` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn acl_trajectory_sample(
    traj: *const AclTrajectory,
    index: usize,
    out: *mut AclSample,
) -> AclStatus {
    guard(|| {
        let (Some(t), false) = (unsafe { traj.as_ref() }, out.is_null()) else {
            return fail(AclStatus::NullPointer, "null argument");
        };
        let Some(s) = t.0.samples.get(index) else {
            return fail(AclStatus::OutOfRange, format!("sample {index} of {}", t.0.samples.len()));
        };
        unsafe {
            *out = AclSample { t: s.t, v: s.v, consensus_error: s.consensus_error, bound: s.bound };
        }
        AclStatus::Ok
    })
}

fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> AclStatus {
    if buf.is_null() {
        return fail(AclStatus::NullPointer, "null buffer");
    }
    if len < src.len() {
        return fail(AclStatus::OutOfRange, format!("buffer holds {len}, need {}", src.len()));
    }
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    AclStatus::Ok
}

/// Copies the stacked state at `index` (agent-major) into `buf`.
///
/// # Safety
/// `traj` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn acl_trajectory_state(
    traj: *const AclTrajectory,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> AclStatus {
    guard(|| {
        let Some(t) = (unsafe { traj.as_ref() }) else {
            return fail(AclStatus::NullPointer, "null trajectory");
        };
        match t.0.samples.get(index) {
            Some(s) => copy_out(&s.x, buf, len),
            None => fail(AclStatus::OutOfRange, format!("sample {index} of {}", t.0.samples.len())),
        }
    })
}

/// Copies the stacked parameter estimates at `index` into `buf`.
///
/// # Safety
/// `traj` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn acl_trajectory_theta_hat(
    traj: *const AclTrajectory,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> AclStatus {
    guard(|| {
        let Some(t) = (unsafe { traj.as_ref() }) else {
            return fail(AclStatus::NullPointer, "null trajectory");
        };
        match t.0.samples.get(index) {
            Some(s) => copy_out(&s.theta_hat, buf, len),
            None => fail(AclStatus::OutOfRange, format!("sample {index} of {}", t.0.samples.len())),
        }
    })
}

/// # Safety
/// `traj` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn acl_trajectory_certificate(traj: *const AclTrajectory, out: *mut AclCertificate) -> AclStatus {
    guard(|| {
        let (Some(t), false) = (unsafe { traj.as_ref() }, out.is_null()) else {
            return fail(AclStatus::NullPointer, "null argument");
        };
        let c = &t.0.certificate;
        unsafe {
            *out = AclCertificate {
                lambda2: c.lambda2,
                gamma: c.gamma,
                q: c.q,
                decay_unquantized: c.decay_unquantized,
                decay_quantized: c.decay_quantized,
                d: c.d,
                j: c.j,
                sigma: c.sigma,
                offset: c.offset,
                certified: i32::from(c.certified),
            };
        }
        AclStatus::Ok
    })
}

/// The trajectory as CSV. Release the result with [`acl_string_free`].
///
/// # Safety
/// `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn acl_trajectory_to_csv(traj: *const AclTrajectory) -> *mut c_char {
    match unsafe { traj.as_ref() } {
        Some(t) => CString::new(trajectory_csv(&t.0)).map_or(ptr::null_mut(), CString::into_raw),
        None => {
            set_error("null trajectory");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `traj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acl_trajectory_free(traj: *mut AclTrajectory) {
    if !traj.is_null() {
        drop(unsafe { Box::from_raw(traj) });
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Rounds `x` to the nearest multiple of `sigma` (ties upward).
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn acl_quantize_scalar(x: f64, sigma: f64, out: *mut f64) -> AclStatus {
    guard(|| {
        if out.is_null() {
            return fail(AclStatus::NullPointer, "null argument");
        }
        match quantize_scalar(x, sigma) {
            Ok(q) => {
                unsafe { *out = q };
                AclStatus::Ok
            }
            Err(e) => fail(AclStatus::InvalidArgument, e),
        }
    })
}
