//! C interface to the soundboard library.
//!
//! Every fallible function returns an [`SbStatus`]; on failure the message
//! is available from [`sb_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use soundboard::analysis;
use soundboard::experiment::{
    prepare_board, run_aging_experiment, run_statics_experiment, sim_config, Board,
    ExperimentSpec,
};
use soundboard::fdtd::{calibrate_decrement, simulate, ImpulseResponse};
use soundboard::geometry::{Bridge, StationId};
use soundboard::statics;
use soundboard::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Geometry = 5,
    Unstable = 6,
    Diverged = 7,
    Analysis = 8,
    Calibration = 9,
    NoConvergence = 10,
    /// Run finished but some stations did not.
    Partial = 11,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> SbStatus {
    match e.root() {
        Error::InvalidParameter(_) | Error::NonPhysicalMaterial(_) | Error::DisjointStations => {
            SbStatus::InvalidArgument
        }
        Error::Io { .. } => SbStatus::Io,
        Error::Csv(_) | Error::Toml { .. } | Error::Wav(_) | Error::Schema(_) => SbStatus::Format,
        Error::TooFewSamples { .. }
        | Error::SampleOutsideBoundary { .. }
        | Error::DegenerateBoundary(_)
        | Error::PathOutsideMask { .. }
        | Error::StationOffBridge { .. }
        | Error::AbsentStiffener(_)
        | Error::EmptyRegion => SbStatus::Geometry,
        Error::Unstable { .. } => SbStatus::Unstable,
        Error::Diverged { .. } => SbStatus::Diverged,
        Error::InsufficientDecay { .. } | Error::UndefinedCentroid => SbStatus::Analysis,
        Error::NonBracketing { .. } => SbStatus::Calibration,
        Error::NoConvergence { .. } => SbStatus::NoConvergence,
        Error::Context { .. } => SbStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and panics.
fn guard(f: impl FnOnce() -> Result<SbStatus, (SbStatus, String)>) -> SbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {message}"));
            SbStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SbStatus, String) {
    (SbStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> (SbStatus, String) {
    (SbStatus::InvalidArgument, message.into())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (SbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn samples_arg<'a>(samples: *const f64, len: usize) -> Result<&'a [f64], (SbStatus, String)> {
    if samples.is_null() {
        return Err(null("samples"));
    }
    Ok(unsafe { std::slice::from_raw_parts(samples, len) })
}

fn station(bridge_feet: u32, key: u32) -> Result<StationId, (SbStatus, String)> {
    let bridge = match bridge_feet {
        8 => Bridge::EightFoot,
        4 => Bridge::FourFoot,
        other => return Err(invalid(format!("bridge must be 8 or 4, got {other}"))),
    };
    Ok(StationId::new(bridge, key))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// An experiment spec with its prepared board.
pub struct SbExperiment {
    spec: ExperimentSpec,
    board: Board,
}

/// A simulated impulse response.
pub struct SbSignal {
    ir: ImpulseResponse,
}

/// Loads an experiment spec and prepares its board.
///
/// # Safety
/// `config_path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_experiment_open(
    config_path: *const c_char,
    desk_scale: bool,
    out: *mut *mut SbExperiment,
) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { path_arg(config_path, "config_path") }?;
        let mut spec = ExperimentSpec::from_path(path).map_err(lib)?;
        spec.desk_scale |= desk_scale;
        spec.validate().map_err(lib)?;
        let board = prepare_board(&spec).map_err(lib)?;
        unsafe { *out = Box::into_raw(Box::new(SbExperiment { spec, board })) };
        Ok(SbStatus::Ok)
    })
}

/// # Safety
/// `experiment` must come from [`sb_experiment_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sb_experiment_free(experiment: *mut SbExperiment) {
    if !experiment.is_null() {
        drop(unsafe { Box::from_raw(experiment) });
    }
}

/// Number of grid nodes inside the board.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_experiment_node_count(experiment: *const SbExperiment) -> usize {
    unsafe { experiment.as_ref() }.map_or(0, |e| e.board.layout.in_mask_count())
}

/// Number of string stations on both bridges.
///
/// # Safety
/// `experiment` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_experiment_station_count(experiment: *const SbExperiment) -> usize {
    unsafe { experiment.as_ref() }.map_or(0, |e| e.board.layout.stations.len())
}

/// Simulates the station `key` on bridge `bridge_feet` (8 or 4) with
/// decrement `gamma`.
///
/// # Safety
/// `experiment` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_simulate(
    experiment: *const SbExperiment,
    bridge_feet: u32,
    key: u32,
    gamma: f64,
    out: *mut *mut SbSignal,
) -> SbStatus {
    guard(|| {
        let e = unsafe { experiment.as_ref() }.ok_or_else(|| null("experiment"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let id = station(bridge_feet, key)?;
        let config = sim_config(&e.spec, &e.board, id).with_decrement(gamma);
        let ir = simulate(&config)
            .map_err(lib)?
            .into_iter()
            .next()
            .ok_or_else(|| invalid("no probe output"))?;
        unsafe { *out = Box::into_raw(Box::new(SbSignal { ir })) };
        Ok(SbStatus::Ok)
    })
}

/// Finds the decrement giving decay time `target_t60` (seconds) at a
/// station, within `tolerance` seconds.
///
/// # Safety
/// `experiment` must be a live handle; `gamma_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_calibrate(
    experiment: *const SbExperiment,
    bridge_feet: u32,
    key: u32,
    target_t60: f64,
    tolerance: f64,
    gamma_out: *mut f64,
) -> SbStatus {
    guard(|| {
        let e = unsafe { experiment.as_ref() }.ok_or_else(|| null("experiment"))?;
        if gamma_out.is_null() {
            return Err(null("gamma_out"));
        }
        let id = station(bridge_feet, key)?;
        let config = sim_config(&e.spec, &e.board, id);
        let c = calibrate_decrement(&config, target_t60, tolerance).map_err(lib)?;
        unsafe { *gamma_out = c.gamma };
        Ok(SbStatus::Ok)
    })
}

/// # Safety
/// `signal` must come from [`sb_simulate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sb_signal_free(signal: *mut SbSignal) {
    if !signal.is_null() {
        drop(unsafe { Box::from_raw(signal) });
    }
}

/// # Safety
/// `signal` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_signal_len(signal: *const SbSignal) -> usize {
    unsafe { signal.as_ref() }.map_or(0, |s| s.ir.samples.len())
}

/// Sample rate in Hz.
///
/// # Safety
/// `signal` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_signal_rate(signal: *const SbSignal) -> f64 {
    unsafe { signal.as_ref() }.map_or(0.0, |s| s.ir.rate)
}

/// Samples, valid while the handle lives.
///
/// # Safety
/// `signal` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_signal_samples(signal: *const SbSignal) -> *const f64 {
    unsafe { signal.as_ref() }.map_or(ptr::null(), |s| s.ir.samples.as_ptr())
}

/// Decay time (s) of a signal from its backward-integrated energy curve.
///
/// # Safety
/// `samples` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_t60(samples: *const f64, len: usize, rate: f64, out: *mut f64) -> SbStatus {
    guard(|| {
        let x = unsafe { samples_arg(samples, len) }?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = analysis::decay_time(x, rate).map_err(lib)? };
        Ok(SbStatus::Ok)
    })
}

/// Spectral centroid (Hz) over 0..`f_max`.
///
/// # Safety
/// `samples` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_spectral_centroid(
    samples: *const f64,
    len: usize,
    rate: f64,
    f_max: f64,
    out: *mut f64,
) -> SbStatus {
    guard(|| {
        let x = unsafe { samples_arg(samples, len) }?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = analysis::centroid(x, rate, f_max).map_err(lib)? };
        Ok(SbStatus::Ok)
    })
}

/// Tension (N) of one string: pitch Hz, length m, diameter m, density kg/m^3.
#[no_mangle]
pub extern "C" fn sb_string_tension(pitch: f64, scale_length: f64, diameter: f64, density: f64) -> f64 {
    statics::string_tension(pitch, scale_length, diameter, density)
}

/// Normal force (N) of a string of `tension` broken by `break_angle` radians.
#[no_mangle]
pub extern "C" fn sb_bearing_force(tension: f64, break_angle: f64) -> f64 {
    statics::bearing_force(tension, break_angle)
}

unsafe fn load_spec(
    config_path: *const c_char,
    out_dir: *const c_char,
    desk_scale: bool,
    jobs: usize,
) -> Result<ExperimentSpec, (SbStatus, String)> {
    let path = unsafe { path_arg(config_path, "config_path") }?;
    let mut spec = ExperimentSpec::from_path(path).map_err(lib)?;
    if !out_dir.is_null() {
        spec.out = unsafe { path_arg(out_dir, "out_dir") }?;
    }
    spec.desk_scale |= desk_scale;
    if jobs > 0 {
        spec.jobs = jobs;
    }
    Ok(spec)
}

/// Runs the damping sweep. `out_dir` may be null to keep the spec's
/// directory, `jobs` 0 keeps the spec's thread count. Returns
/// [`SbStatus::Partial`] when some station failed.
///
/// # Safety
/// String arguments must be nul-terminated or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn sb_run_aging(
    config_path: *const c_char,
    out_dir: *const c_char,
    desk_scale: bool,
    jobs: usize,
) -> SbStatus {
    guard(|| {
        let spec = unsafe { load_spec(config_path, out_dir, desk_scale, jobs) }?;
        let report = run_aging_experiment(&spec).map_err(lib)?;
        if report.is_partial() {
            set_error(format!("{} station runs failed", report.failures()));
            Ok(SbStatus::Partial)
        } else {
            Ok(SbStatus::Ok)
        }
    })
}

/// Runs the string-load cases; arguments as for [`sb_run_aging`].
///
/// # Safety
/// String arguments must be nul-terminated or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn sb_run_statics(
    config_path: *const c_char,
    out_dir: *const c_char,
    desk_scale: bool,
    jobs: usize,
) -> SbStatus {
    guard(|| {
        let spec = unsafe { load_spec(config_path, out_dir, desk_scale, jobs) }?;
        run_statics_experiment(&spec).map_err(lib)?;
        Ok(SbStatus::Ok)
    })
}
