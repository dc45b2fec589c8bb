//! C ABI over the `contpop` library.
//!
//! Every fallible call returns a [`ContpopStatus`]; on failure the message is
//! kept per thread and can be fetched with [`contpop_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use contpop::config::Config;
use contpop::model::ModelParams;
use contpop::rng::replica_rng;
use contpop::simulator::{sample_initial, InitialCondition, SimulationState};
use contpop::surgailis::phi_value;
use contpop::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContpopStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Model norms entering the bounds.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContpopNorms {
    pub a_mass: f64,
    pub a_sup: f64,
    pub a_origin: f64,
    pub b_sup: f64,
    pub m_sup: f64,
}

/// A validated model together with its initial condition.
pub struct ContpopParams {
    params: Arc<ModelParams>,
    initial: InitialCondition,
}

/// One running replica.
pub struct ContpopSimulation {
    state: SimulationState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> ContpopStatus {
    match e {
        Error::Config(_) | Error::UnknownKeys(_) | Error::Json(_) => ContpopStatus::Config,
        Error::Io(_) => ContpopStatus::Io,
        e if e.is_numerical() => ContpopStatus::Numerical,
        _ => ContpopStatus::Domain,
    }
}

fn fail(status: ContpopStatus, msg: impl Into<String>) -> ContpopStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, recording errors and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), ContpopStatus>) -> ContpopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ContpopStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(ContpopStatus::Panic, "panic inside contpop"),
    }
}

fn lift<T>(r: contpop::Result<T>) -> Result<T, ContpopStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

/// Static version string; do not free.
#[no_mangle]
pub extern "C" fn contpop_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The caller owns
/// the string and must release it with [`contpop_string_free`].
#[no_mangle]
pub extern "C" fn contpop_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn contpop_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a JSON configuration document into a parameter handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn contpop_params_from_json(json: *const c_char, out: *mut *mut ContpopParams) -> ContpopStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return Err(fail(ContpopStatus::NullPointer, "null argument"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| fail(ContpopStatus::InvalidUtf8, "config is not UTF-8"))?;
        let config = lift(Config::parse(text))?;
        let handle = ContpopParams {
            params: Arc::new(lift(config.params())?),
            initial: lift(config.initial())?,
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`contpop_params_from_json`], freed once.
#[no_mangle]
pub unsafe extern "C" fn contpop_params_free(p: *mut ContpopParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Spatial dimension, or 0 for a NULL handle.
///
/// # Safety
/// `p` must be NULL or a live parameter handle.
#[no_mangle]
pub unsafe extern "C" fn contpop_params_dimension(p: *const ContpopParams) -> usize {
    p.as_ref().map_or(0, |p| p.params.window.dim())
}

/// # Safety
/// `p` must be a live parameter handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn contpop_params_norms(p: *const ContpopParams, out: *mut ContpopNorms) -> ContpopStatus {
    guard(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return Err(fail(ContpopStatus::NullPointer, "null argument"));
        };
        let n = p.params.norms();
        *out = ContpopNorms {
            a_mass: n.a_mass,
            a_sup: n.a_sup,
            a_origin: n.a_origin,
            b_sup: n.b_sup,
            m_sup: n.m_sup,
        };
        Ok(())
    })
}

/// Starts replica `replica` of the seeded ensemble, drawing the configured
/// initial state from the replica's own stream.
///
/// # Safety
/// `p` must be a live parameter handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn contpop_simulation_new(
    p: *const ContpopParams,
    seed: u64,
    replica: u64,
    out: *mut *mut ContpopSimulation,
) -> ContpopStatus {
    guard(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return Err(fail(ContpopStatus::NullPointer, "null argument"));
        };
        *out = ptr::null_mut();
        let mut rng = replica_rng(seed, replica);
        let init = lift(sample_initial(&p.initial, &p.params.window, &mut rng))?;
        let state = lift(SimulationState::new(p.params.clone(), &init, rng))?;
        *out = Box::into_raw(Box::new(ContpopSimulation { state }));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle from [`contpop_simulation_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn contpop_simulation_free(s: *mut ContpopSimulation) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs the replica up to time `t`. Fails with `Numerical` once the total
/// number of events reaches `max_events`.
///
/// # Safety
/// `s` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn contpop_simulation_advance(s: *mut ContpopSimulation, t: f64, max_events: u64) -> ContpopStatus {
    guard(|| {
        let Some(s) = s.as_mut() else {
            return Err(fail(ContpopStatus::NullPointer, "null simulation"));
        };
        lift(s.state.advance_to(t, max_events))
    })
}

/// Current time, NaN for a NULL handle.
///
/// # Safety
/// `s` must be NULL or a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn contpop_simulation_time(s: *const ContpopSimulation) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.state.time())
}

/// Number of particles, 0 for a NULL handle.
///
/// # Safety
/// `s` must be NULL or a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn contpop_simulation_len(s: *const ContpopSimulation) -> usize {
    s.as_ref().map_or(0, |s| s.state.len())
}

/// Copies particle coordinates, `dim` values per particle, into `buf`.
/// `written` receives the number of values needed; when `capacity` is too
/// small nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `s` must be a live simulation handle, `written` a valid pointer and `buf`
/// valid for `capacity` writes (it may be NULL when `capacity` is 0).
#[no_mangle]
pub unsafe extern "C" fn contpop_simulation_positions(
    s: *const ContpopSimulation,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> ContpopStatus {
    guard(|| {
        let (Some(s), false) = (s.as_ref(), written.is_null()) else {
            return Err(fail(ContpopStatus::NullPointer, "null argument"));
        };
        let dim = s.state.params().window.dim();
        let config = s.state.configuration();
        let needed = config.len() * dim;
        *written = needed;
        if needed > capacity {
            return Err(fail(ContpopStatus::BufferTooSmall, format!("{needed} values needed, capacity {capacity}")));
        }
        if needed > 0 && buf.is_null() {
            return Err(fail(ContpopStatus::NullPointer, "null buffer"));
        }
        let out = std::slice::from_raw_parts_mut(buf, needed);
        for (chunk, p) in out.chunks_exact_mut(dim).zip(config.iter()) {
            chunk.copy_from_slice(&p[..dim]);
        }
        Ok(())
    })
}

/// Density of the competition-free model at time `t` with constant rates and
/// a constant Poisson initial density.
#[no_mangle]
pub extern "C" fn contpop_surgailis_density(b: f64, m: f64, rho0: f64, t: f64) -> f64 {
    (-m * t).exp() * rho0 + phi_value(b, m, t)
}
