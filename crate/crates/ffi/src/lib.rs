//! C ABI over the traffic-adp core.
//!
//! A simulation is an opaque [`TaSimulation`] handle created by
//! `ta_simulation_new_default` or `ta_simulation_from_config` and released
//! with `ta_simulation_free`. Every fallible call returns a [`TaStatus`];
//! on failure `ta_last_error_message` describes the error for the calling
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use traffic_adp::config::{load_config, validate};
use traffic_adp::fk::mass;
use traffic_adp::{
    AdpSystem, ConfigError, CoupledState, GridSpec, ModelParams, RunConfig, SimError,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The configuration file could not be read or parsed.
    Config = 3,
    /// The configuration parsed but failed validation.
    Validation = 4,
    /// The state became non-finite; the handle keeps its last valid state.
    NonFinite = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque simulation handle.
pub struct TaSimulation {
    system: AdpSystem,
    state: CoupledState,
    dt: f64,
    steps_taken: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn guard(f: impl FnOnce() -> TaStatus) -> TaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            TaStatus::Panic
        }
    }
}

fn sim_status(e: &SimError) -> TaStatus {
    set_error(e.to_string());
    match e {
        SimError::NonFinite { .. }
        | SimError::NonFiniteWeight { .. }
        | SimError::ReflectionDiverged { .. } => TaStatus::NonFinite,
        _ => TaStatus::InvalidArgument,
    }
}

fn build(params: ModelParams, run: RunConfig, out: *mut *mut TaSimulation) -> TaStatus {
    let report = validate(&params, &run);
    if !report.is_admissible() {
        set_error(report.to_string());
        return TaStatus::Validation;
    }
    let grid = GridSpec::from_config(&params, &run);
    let system = AdpSystem::new(&grid, &params);
    let state = match system.initial_state(run.weight_init) {
        Ok(s) => s,
        Err(e) => return sim_status(&e),
    };
    let sim = Box::new(TaSimulation {
        system,
        state,
        dt: run.dt,
        steps_taken: 0,
    });
    // SAFETY: caller checked `out` is non-null.
    unsafe { *out = Box::into_raw(sim) };
    TaStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ta_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread. Valid until the next
/// call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ta_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a simulation with the built-in default parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_new_default(out: *mut *mut TaSimulation) -> TaStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return TaStatus::NullPointer;
        }
        build(ModelParams::default(), RunConfig::default(), out)
    })
}

/// Creates a simulation from a `key = value` configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer to
/// writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_from_config(
    path: *const c_char,
    out: *mut *mut TaSimulation,
) -> TaStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            set_error("path or out is null");
            return TaStatus::NullPointer;
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            set_error("path is not valid UTF-8");
            return TaStatus::InvalidArgument;
        };
        match load_config(Path::new(path)) {
            Ok((params, run)) => build(params, run, out),
            Err(e) => {
                set_error(e.to_string());
                match e {
                    ConfigError::Io { .. } => TaStatus::Io,
                    _ => TaStatus::Config,
                }
            }
        }
    })
}

/// Releases a handle. Passing null is a no-op.
///
/// # Safety
/// `sim` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_free(sim: *mut TaSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances the coupled system by `n_steps` steps of the configured size.
/// Stops at the first non-finite state, which is not committed.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_step(sim: *mut TaSimulation, n_steps: usize) -> TaStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            set_error("sim is null");
            return TaStatus::NullPointer;
        };
        for _ in 0..n_steps {
            let next = match sim.system.ssp_rk2_step(&sim.state, sim.dt) {
                Ok(n) => n,
                Err(e) => return sim_status(&e),
            };
            let checked = next
                .rho
                .check_finite("density")
                .and_then(|_| next.weights.check_finite());
            if let Err(e) = checked {
                return sim_status(&e);
            }
            sim.steps_taken += 1;
            sim.state = next;
            sim.state.t = sim.steps_taken as f64 * sim.dt;
        }
        TaStatus::Ok
    })
}

unsafe fn read<T>(
    sim: *const TaSimulation,
    out: *mut T,
    f: impl FnOnce(&TaSimulation) -> Result<T, SimError>,
) -> TaStatus {
    guard(|| {
        let Some(s) = sim.as_ref() else {
            set_error("sim is null");
            return TaStatus::NullPointer;
        };
        if out.is_null() {
            set_error("out is null");
            return TaStatus::NullPointer;
        }
        match f(s) {
            Ok(v) => {
                *out = v;
                TaStatus::Ok
            }
            Err(e) => sim_status(&e),
        }
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_time(sim: *const TaSimulation, out: *mut f64) -> TaStatus {
    read(sim, out, |s| Ok(s.state.t))
}

/// Current HJB-Isaacs residual energy.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_hjb_error(
    sim: *const TaSimulation,
    out: *mut f64,
) -> TaStatus {
    read(sim, out, |s| s.system.hjb_error(&s.state))
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_mass(sim: *const TaSimulation, out: *mut f64) -> TaStatus {
    read(sim, out, |s| Ok(mass(&s.state.rho, s.system.grid())))
}

/// Writes the number of position cells and speed cells.
///
/// # Safety
/// `sim` must be a live handle; `nx` and `nv` writable.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_grid_shape(
    sim: *const TaSimulation,
    nx: *mut usize,
    nv: *mut usize,
) -> TaStatus {
    if nv.is_null() {
        set_error("nv is null");
        return TaStatus::NullPointer;
    }
    let status = read(sim, nx, |s| Ok(s.system.grid().nx));
    if status == TaStatus::Ok {
        *nv = (*sim).system.grid().nv;
    }
    status
}

/// Writes the basis order K; each weight matrix has K * K entries.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_basis_order(
    sim: *const TaSimulation,
    out: *mut usize,
) -> TaStatus {
    read(sim, out, |s| Ok(s.state.weights.k()))
}

/// Copies the density, row-major with the speed index fastest, into a
/// buffer of exactly `nx * nv` doubles.
///
/// # Safety
/// `sim` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_copy_density(
    sim: *const TaSimulation,
    buf: *mut f64,
    len: usize,
) -> TaStatus {
    guard(|| {
        let Some(s) = sim.as_ref() else {
            set_error("sim is null");
            return TaStatus::NullPointer;
        };
        if buf.is_null() {
            set_error("buf is null");
            return TaStatus::NullPointer;
        }
        let values = &s.state.rho.values;
        if len != values.len() {
            set_error(format!(
                "buffer holds {len} values, density has {}",
                values.len()
            ));
            return TaStatus::InvalidArgument;
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(values);
        TaStatus::Ok
    })
}

/// Copies the sine and cosine weight matrices, row-major, into two buffers
/// of exactly `K * K` doubles each.
///
/// # Safety
/// `sim` must be a live handle; `a` and `b` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ta_simulation_copy_weights(
    sim: *const TaSimulation,
    a: *mut f64,
    b: *mut f64,
    len: usize,
) -> TaStatus {
    guard(|| {
        let Some(s) = sim.as_ref() else {
            set_error("sim is null");
            return TaStatus::NullPointer;
        };
        if a.is_null() || b.is_null() {
            set_error("a or b is null");
            return TaStatus::NullPointer;
        }
        let w = &s.state.weights;
        if len != w.a_slice().len() {
            set_error(format!(
                "buffers hold {len} values, K * K is {}",
                w.a_slice().len()
            ));
            return TaStatus::InvalidArgument;
        }
        std::slice::from_raw_parts_mut(a, len).copy_from_slice(w.a_slice());
        std::slice::from_raw_parts_mut(b, len).copy_from_slice(w.b_slice());
        TaStatus::Ok
    })
}
