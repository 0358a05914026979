//! C ABI over `anode-core`.
//!
//! Conventions shared by every function:
//!
//! * The return value is an [`AnodeStatus`]; `ANODE_STATUS_OK` is zero.
//! * On failure a message is kept per thread and can be read with
//!   [`anode_last_error_message`] until the next failing call on that thread.
//! * Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//!   style functions and released with the matching `*_free`. Freeing NULL is a no-op.
//! * Matrices are dense, row-major `double` buffers; the caller passes the
//!   buffer length in elements and the call fails if it does not match.
//! * Panics never unwind into the caller; they surface as `ANODE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use anode_core::anode::{encode_initial_state, load_model, rollout};
use anode_core::data::Normalizer;
use anode_core::dynamics::{SystemDocument, SystemModel};
use anode_core::sim::{generate_step_schedule, simulate, warm_start, SimOptions, Trajectory};
use anode_core::{cases, Error};
use ndarray::{Array2, ArrayView2};

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnodeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Numerical = 5,
    MissingArtifact = 6,
    Panic = 7,
}

/// Matrix selector for [`anode_trajectory_copy`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnodeChannel {
    Times = 0,
    Inputs = 1,
    Outputs = 2,
    NoisyOutputs = 3,
}

/// Settings for [`anode_simulate`]. A non-finite `snr_db` disables noise.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct AnodeSimulationParams {
    pub duration: f64,
    pub dt: f64,
    pub warmup: f64,
    pub step_amplitude: f64,
    pub step_period: f64,
    pub seed: u64,
    pub snr_db: f64,
    pub noise_seed: u64,
}

/// Ground-truth network model.
pub struct AnodeSystem(SystemModel);

/// Simulated trajectory.
pub struct AnodeTrajectory(Trajectory);

/// Trained model together with the normalization it was trained under.
pub struct AnodeModel {
    model: anode_core::anode::AnodeModel,
    normalizer: Normalizer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AnodeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) | Error::DuplicateEdge(..) | Error::Parse { .. } | Error::Json(_) => AnodeStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => AnodeStatus::DimensionMismatch,
            Error::NonFinite(_) | Error::Divergence { .. } | Error::RolloutFailed { .. } => AnodeStatus::Numerical,
            Error::MissingArtifact(_) => AnodeStatus::MissingArtifact,
            Error::Io(_) | Error::Csv(_) => AnodeStatus::Io,
            _ => AnodeStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> AnodeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AnodeStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {message}"));
            AnodeStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AnodeStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn borrow<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn string_arg(ptr: *const c_char, what: &str) -> Result<String, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(AnodeStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_in<'a>(ptr: *const f64, len: usize, expected: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len != expected {
        return Err(Error::DimensionMismatch { context: what, expected, actual: len }.into());
    }
    if expected == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_out<'a>(ptr: *mut f64, len: usize, expected: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len != expected {
        return Err(Error::DimensionMismatch { context: what, expected, actual: len }.into());
    }
    if expected == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    if !out.is_null() {
        *out = value;
    }
}

unsafe fn emit<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn matrix(data: &[f64], cols: usize) -> ArrayView2<'_, f64> {
    let rows = data.len().checked_div(cols).unwrap_or(0);
    ArrayView2::from_shape((rows, cols), data).expect("length checked by caller")
}

/// Message of the last failure on the calling thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn anode_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn anode_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates one of the bundled test systems (`"three-node"` or `"two-node"`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn anode_system_builtin(name: *const c_char, out: *mut *mut AnodeSystem) -> AnodeStatus {
    guard(|| {
        let name = string_arg(name, "name")?;
        let model = cases::by_name(&name).ok_or_else(|| Failure(AnodeStatus::InvalidArgument, format!("unknown system '{name}'")))?;
        emit(out, AnodeSystem(model), "out")
    })
}

/// Creates a system from its JSON description (graph, units, reference node).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn anode_system_from_json(json: *const c_char, out: *mut *mut AnodeSystem) -> AnodeStatus {
    guard(|| {
        let text = string_arg(json, "json")?;
        let doc: SystemDocument = serde_json::from_str(&text).map_err(Error::from)?;
        emit(out, AnodeSystem(SystemModel::from_document(doc)?), "out")
    })
}

/// # Safety
/// `system` must be NULL or a handle from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn anode_system_free(system: *mut AnodeSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Writes node, state, input and output counts. NULL outputs are skipped.
///
/// # Safety
/// `system` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn anode_system_dimensions(
    system: *const AnodeSystem,
    n_nodes: *mut usize,
    n_x: *mut usize,
    n_u: *mut usize,
    n_y: *mut usize,
) -> AnodeStatus {
    guard(|| {
        let s = &borrow(system, "system")?.0;
        write_out(n_nodes, s.n_nodes());
        write_out(n_x, s.n_x());
        write_out(n_u, s.n_u());
        write_out(n_y, s.n_y());
        Ok(())
    })
}

/// Nominal active-power setpoints, one per node.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn anode_system_nominal_input(system: *const AnodeSystem, out: *mut f64, len: usize) -> AnodeStatus {
    guard(|| {
        let s = &borrow(system, "system")?.0;
        slice_out(out, len, s.n_u(), "nominal input")?.copy_from_slice(&s.nominal_input());
        Ok(())
    })
}

/// Evaluates the state derivative at `(x, u)`.
///
/// # Safety
/// `x` and `dx` must hold `n_x` doubles, `u` must hold `n_u` doubles.
#[no_mangle]
pub unsafe extern "C" fn anode_system_rhs(
    system: *const AnodeSystem,
    x: *const f64,
    n_x: usize,
    u: *const f64,
    n_u: usize,
    dx: *mut f64,
) -> AnodeStatus {
    guard(|| {
        let s = &borrow(system, "system")?.0;
        let x = slice_in(x, n_x, s.n_x(), "state")?;
        let u = slice_in(u, n_u, s.n_u(), "input")?;
        let out = slice_out(dx, n_x, s.n_x(), "derivative")?;
        out.copy_from_slice(&s.system_rhs(x, u)?);
        Ok(())
    })
}

/// Settled state under nominal inputs after `warmup` seconds from a flat start.
///
/// # Safety
/// `x` must hold `n_x` doubles.
#[no_mangle]
pub unsafe extern "C" fn anode_system_warm_start(system: *const AnodeSystem, warmup: f64, dt: f64, x: *mut f64, n_x: usize) -> AnodeStatus {
    guard(|| {
        let s = &borrow(system, "system")?.0;
        let out = slice_out(x, n_x, s.n_x(), "state")?;
        out.copy_from_slice(&warm_start(s, warmup, dt)?);
        Ok(())
    })
}

/// Simulates a random step response from the warm-started equilibrium.
///
/// # Safety
/// `system` and `params` must be valid; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn anode_simulate(
    system: *const AnodeSystem,
    params: *const AnodeSimulationParams,
    out: *mut *mut AnodeTrajectory,
) -> AnodeStatus {
    guard(|| {
        let s = &borrow(system, "system")?.0;
        let p = *borrow(params, "params")?;
        let x0 = warm_start(s, p.warmup, p.dt)?;
        let schedule = generate_step_schedule(&s.nominal_input(), p.step_amplitude, p.step_period, p.seed)?;
        let mut traj = simulate(s, &x0, &schedule, p.duration, p.dt, SimOptions::default())?;
        if p.snr_db.is_finite() {
            traj = traj.with_noise(p.snr_db, p.noise_seed);
        }
        emit(out, AnodeTrajectory(traj), "out")
    })
}

/// # Safety
/// `trajectory` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anode_trajectory_free(trajectory: *mut AnodeTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of sampling instants and the input/output channel counts.
///
/// # Safety
/// `trajectory` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn anode_trajectory_shape(
    trajectory: *const AnodeTrajectory,
    instants: *mut usize,
    n_u: *mut usize,
    n_y: *mut usize,
) -> AnodeStatus {
    guard(|| {
        let t = &borrow(trajectory, "trajectory")?.0;
        write_out(instants, t.len());
        write_out(n_u, t.inputs.ncols());
        write_out(n_y, t.outputs.ncols());
        Ok(())
    })
}

/// Copies one matrix of the trajectory (row-major, one row per instant).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn anode_trajectory_copy(
    trajectory: *const AnodeTrajectory,
    channel: AnodeChannel,
    out: *mut f64,
    len: usize,
) -> AnodeStatus {
    guard(|| {
        let t = &borrow(trajectory, "trajectory")?.0;
        let src: Vec<f64> = match channel {
            AnodeChannel::Times => t.times.clone(),
            AnodeChannel::Inputs => t.inputs.iter().copied().collect(),
            AnodeChannel::Outputs => t.outputs.iter().copied().collect(),
            AnodeChannel::NoisyOutputs => t.noisy_outputs.iter().copied().collect(),
        };
        slice_out(out, len, src.len(), "trajectory buffer")?.copy_from_slice(&src);
        Ok(())
    })
}

/// Loads a trained checkpoint from its JSON manifest.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn anode_model_load(path: *const c_char, out: *mut *mut AnodeModel) -> AnodeStatus {
    guard(|| {
        let path = string_arg(path, "path")?;
        let (model, manifest) = load_model(Path::new(&path))?;
        emit(out, AnodeModel { model, normalizer: manifest.normalizer }, "out")
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn anode_model_free(model: *mut AnodeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input and output channel counts and the history length the encoder expects.
///
/// # Safety
/// `model` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn anode_model_shape(model: *const AnodeModel, n_u: *mut usize, n_y: *mut usize, history: *mut usize) -> AnodeStatus {
    guard(|| {
        let m = &borrow(model, "model")?.model;
        write_out(n_u, m.n_u());
        write_out(n_y, m.n_y());
        write_out(history, m.config.history);
        Ok(())
    })
}

/// Predicts `horizon` output rows in physical units.
///
/// With `s` the last measured instant and `H` the model history:
/// `u_history` holds `u(t_{s-H}) .. u(t_{s-1})`, `y_history` holds
/// `y(t_{s-H+1}) .. y(t_s)` and `u_future` holds `u(t_s) .. u(t_{s+horizon-1})`.
/// On return `y_out` holds `y(t_{s+1}) .. y(t_{s+horizon})`.
///
/// # Safety
/// Buffers must hold the documented number of doubles.
#[no_mangle]
pub unsafe extern "C" fn anode_model_predict(
    model: *const AnodeModel,
    u_history: *const f64,
    u_history_len: usize,
    y_history: *const f64,
    y_history_len: usize,
    u_future: *const f64,
    u_future_len: usize,
    horizon: usize,
    y_out: *mut f64,
    y_out_len: usize,
) -> AnodeStatus {
    guard(|| {
        let handle = borrow(model, "model")?;
        let m = &handle.model;
        let (h, n_u, n_y) = (m.config.history, m.n_u(), m.n_y());
        let norm = &handle.normalizer;
        let uh = norm.apply_inputs(&matrix(slice_in(u_history, u_history_len, h * n_u, "input history")?, n_u).to_owned());
        let yh = norm.apply_outputs(&matrix(slice_in(y_history, y_history_len, h * n_y, "output history")?, n_y).to_owned());
        let uf = norm.apply_inputs(&matrix(slice_in(u_future, u_future_len, horizon * n_u, "future inputs")?, n_u).to_owned());
        let out = slice_out(y_out, y_out_len, horizon * n_y, "prediction buffer")?;
        let x0 = encode_initial_state(m, uh.view(), yh.view())?;
        let predicted: Array2<f64> = norm.invert_outputs(&rollout(m, &x0, uf.view())?);
        out.iter_mut().zip(predicted.iter()).for_each(|(d, v)| *d = *v);
        Ok(())
    })
}
