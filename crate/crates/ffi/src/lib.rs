//! C ABI for the simulator.
//!
//! The surface follows the usual handle pattern: `fedstack_config_*`
//! builds and edits an opaque configuration, `fedstack_run` executes a
//! full simulation and returns an opaque run handle, and accessor
//! functions copy results out. Every fallible call either returns a
//! [`FedstackStatus`] or a null pointer, and leaves a human-readable
//! message in a thread-local slot readable via [`fedstack_last_error`].
//!
//! Strings returned as `char*` are allocated here and must be released
//! with [`fedstack_string_free`]; handles must be released with their
//! matching `_free` function. All functions are safe to call from any
//! thread as long as each handle is used from one thread at a time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fedstack_core::allocator::{solve_allocation, Allocation, AllocationPoint, AllocationResult, GammaMatrix};
use fedstack_core::config::{Scheme, SimConfig};
use fedstack_core::matching::{self, Matching};
use fedstack_core::orchestrator::{run_simulation, SimRun};
use fedstack_core::output::write_outputs;
use fedstack_core::system::{self, Device};

/// Result code of a fallible call. Anything but `Ok` leaves a message
/// readable through `fedstack_last_error` on the calling thread.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FedstackStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration is malformed or inconsistent.
    Config = 3,
    /// The simulation or a solver failed.
    Runtime = 4,
    /// The output buffer cannot hold the requested data; the required
    /// length was written to the `written` argument.
    BufferTooSmall = 5,
    /// The requested quantity does not exist for this run (for example
    /// the bound series when bound tracking is off).
    Unavailable = 6,
}

/// Selects which per-round series `fedstack_run_series` copies out.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FedstackSeries {
    /// Global training loss after each round's aggregation.
    Loss = 0,
    /// Round latency in seconds (0 for rounds with no participants).
    Latency = 1,
    /// Number of devices whose upload completed, as a double.
    Participants = 2,
    /// Tracked loss-gap bound per round, when enabled.
    Bound = 3,
}

/// Opaque simulation configuration handle.
pub struct FedstackConfig(SimConfig);

/// Opaque finished-run handle.
pub struct FedstackRun {
    run: SimRun,
    num_devices: usize,
}

/// One solved transmission opportunity: the time-optimal CPU share and
/// power share for a single device on a single sub-channel, or a flag
/// that no split fits the energy budget.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FedstackAllocation {
    /// 1 when a feasible split exists, 0 otherwise (remaining fields 0).
    pub feasible: i32,
    /// CPU-frequency share in (0, 1].
    pub tau: f64,
    /// Transmit-power share in (0, 1].
    pub p: f64,
    /// Resulting computation-plus-upload time, seconds.
    pub time_s: f64,
    /// Resulting energy drawn from the per-round budget, joules.
    pub energy_j: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let cleaned: String = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

fn fail(status: FedstackStatus, msg: impl std::fmt::Display) -> FedstackStatus {
    set_error(msg);
    status
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn fedstack_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message from the most recent failure on this thread, empty if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn fedstack_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, FedstackStatus> {
    if ptr.is_null() {
        return Err(fail(FedstackStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(FedstackStatus::InvalidUtf8, format!("string argument: {e}")))
}

/// Creates a configuration with the benchmark defaults.
/// Release with `fedstack_config_free`.
#[no_mangle]
pub extern "C" fn fedstack_config_new() -> *mut FedstackConfig {
    Box::into_raw(Box::new(FedstackConfig(SimConfig::default())))
}

/// Parses a TOML configuration document. Returns null on error with the
/// parse or validation message in `fedstack_last_error`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn fedstack_config_from_toml(text: *const c_char) -> *mut FedstackConfig {
    let Ok(text) = read_str(text) else { return std::ptr::null_mut() };
    match SimConfig::from_toml_str(text) {
        Ok(cfg) => Box::into_raw(Box::new(FedstackConfig(cfg))),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// Releases a configuration handle. Null is a no-op.
///
/// # Safety
/// `cfg` must be a pointer returned by a `fedstack_config_*` constructor
/// that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn fedstack_config_free(cfg: *mut FedstackConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn config_mut<'a>(cfg: *mut FedstackConfig) -> Result<&'a mut SimConfig, FedstackStatus> {
    cfg.as_mut()
        .map(|c| &mut c.0)
        .ok_or_else(|| fail(FedstackStatus::NullPointer, "config handle is null"))
}

/// Sets the master RNG seed.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn fedstack_config_set_seed(
    cfg: *mut FedstackConfig,
    seed: u64,
) -> FedstackStatus {
    match config_mut(cfg) {
        Ok(c) => {
            c.system.rng_seed = seed;
            FedstackStatus::Ok
        }
        Err(s) => s,
    }
}

/// Sets the number of communication rounds.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn fedstack_config_set_rounds(
    cfg: *mut FedstackConfig,
    rounds: usize,
) -> FedstackStatus {
    match config_mut(cfg) {
        Ok(c) => {
            c.rounds = rounds;
            FedstackStatus::Ok
        }
        Err(s) => s,
    }
}

/// Sets the device-selection scheme by token: `"aou"`, `"random"`,
/// `"cluster"`, or `"fixed"`.
///
/// # Safety
/// `cfg` must be a live configuration handle; `scheme` a valid string.
#[no_mangle]
pub unsafe extern "C" fn fedstack_config_set_scheme(
    cfg: *mut FedstackConfig,
    scheme: *const c_char,
) -> FedstackStatus {
    let c = match config_mut(cfg) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let token = match read_str(scheme) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match Scheme::parse(token) {
        Ok(s) => {
            c.scheme.scheme = s;
            if s != Scheme::Fixed {
                c.scheme.fixed_set = None;
            }
            c.normalize();
            FedstackStatus::Ok
        }
        Err(e) => fail(FedstackStatus::Config, e),
    }
}

/// The resolved configuration echoed as TOML. Release the string with
/// `fedstack_string_free`; returns null on error.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn fedstack_config_echo(cfg: *const FedstackConfig) -> *mut c_char {
    let Some(c) = cfg.as_ref() else {
        set_error("config handle is null");
        return std::ptr::null_mut();
    };
    match CString::new(c.0.echo_toml()) {
        Ok(s) => s.into_raw(),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// Runs a full simulation. Returns a run handle to release with
/// `fedstack_run_free`, or null with `fedstack_last_error` set.
///
/// # Safety
/// `cfg` must be a live configuration handle. The configuration is
/// copied; the handle stays owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn fedstack_run(cfg: *const FedstackConfig) -> *mut FedstackRun {
    let Some(c) = cfg.as_ref() else {
        set_error("config handle is null");
        return std::ptr::null_mut();
    };
    let sim_cfg = c.0.clone();
    let outcome = catch_unwind(AssertUnwindSafe(|| run_simulation(&sim_cfg)));
    match outcome {
        Ok(Ok(run)) => Box::into_raw(Box::new(FedstackRun {
            run,
            num_devices: sim_cfg.system.num_devices,
        })),
        Ok(Err(e)) => {
            set_error(e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic during simulation");
            std::ptr::null_mut()
        }
    }
}

/// Releases a run handle. Null is a no-op.
///
/// # Safety
/// `run` must be a pointer returned by `fedstack_run` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fedstack_run_free(run: *mut FedstackRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of simulated rounds (0 for a null handle).
///
/// # Safety
/// `run` must be a live run handle or null.
#[no_mangle]
pub unsafe extern "C" fn fedstack_run_round_count(run: *const FedstackRun) -> usize {
    run.as_ref().map_or(0, |r| r.run.records.len())
}

/// Global loss after the final round (NaN for a null handle).
///
/// # Safety
/// `run` must be a live run handle or null.
#[no_mangle]
pub unsafe extern "C" fn fedstack_run_final_loss(run: *const FedstackRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.run.summary.final_loss)
}

/// Sum of per-round latencies in seconds (NaN for a null handle).
///
/// # Safety
/// `run` must be a live run handle or null.
#[no_mangle]
pub unsafe extern "C" fn fedstack_run_cumulative_time(run: *const FedstackRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.run.summary.cumulative_time)
}

/// Copies one per-round series into `buf` as doubles.
///
/// `written` always receives the series length. Passing a null `buf`
/// with `len = 0` queries the required length. A too-small buffer
/// returns `BufferTooSmall` and copies nothing.
///
/// # Safety
/// `run` must be a live run handle; `buf` must point to at least `len`
/// doubles (or be null when `len` is 0); `written` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn fedstack_run_series(
    run: *const FedstackRun,
    kind: FedstackSeries,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> FedstackStatus {
    let Some(r) = run.as_ref() else {
        return fail(FedstackStatus::NullPointer, "run handle is null");
    };
    let Some(written) = written.as_mut() else {
        return fail(FedstackStatus::NullPointer, "written pointer is null");
    };
    let summary = &r.run.summary;
    let series: Vec<f64> = match kind {
        FedstackSeries::Loss => summary.loss_series.clone(),
        FedstackSeries::Latency => summary.latency_series.clone(),
        FedstackSeries::Participants => {
            summary.participant_series.iter().map(|&n| n as f64).collect()
        }
        FedstackSeries::Bound => match &summary.bound_series {
            Some(b) => b.clone(),
            None => {
                *written = 0;
                return fail(
                    FedstackStatus::Unavailable,
                    "bound tracking was off for this run",
                );
            }
        },
    };
    *written = series.len();
    if buf.is_null() {
        if len == 0 {
            return FedstackStatus::Ok;
        }
        return fail(FedstackStatus::NullPointer, "series buffer is null");
    }
    if len < series.len() {
        return fail(
            FedstackStatus::BufferTooSmall,
            format!("series needs {} slots, buffer holds {len}", series.len()),
        );
    }
    std::ptr::copy_nonoverlapping(series.as_ptr(), buf, series.len());
    FedstackStatus::Ok
}

/// Serializes the run summary as JSON. Release with
/// `fedstack_string_free`; returns null on error.
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn fedstack_run_summary_json(run: *const FedstackRun) -> *mut c_char {
    let Some(r) = run.as_ref() else {
        set_error("run handle is null");
        return std::ptr::null_mut();
    };
    let json = match serde_json::to_string_pretty(&r.run.summary) {
        Ok(j) => j,
        Err(e) => {
            set_error(e);
            return std::ptr::null_mut();
        }
    };
    match CString::new(json) {
        Ok(s) => s.into_raw(),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// Writes `rounds.csv`, `summary.json`, and `config_echo.toml` into
/// `dir`, creating it if needed.
///
/// # Safety
/// `run` must be a live run handle; `dir` a valid string.
#[no_mangle]
pub unsafe extern "C" fn fedstack_run_write_outputs(
    run: *const FedstackRun,
    dir: *const c_char,
) -> FedstackStatus {
    let Some(r) = run.as_ref() else {
        return fail(FedstackStatus::NullPointer, "run handle is null");
    };
    let dir = match read_str(dir) {
        Ok(d) => d,
        Err(s) => return s,
    };
    match write_outputs(&r.run, r.num_devices, Path::new(dir)) {
        Ok(()) => FedstackStatus::Ok,
        Err(e) => fail(FedstackStatus::Runtime, e),
    }
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fedstack_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Solves the time-optimal CPU/power split for one device-channel pair
/// under the configuration's system model and energy budget.
///
/// The channel gain is derived from `distance_m` (meters from the
/// server) and `fading` (a unit-mean small-scale fading draw).
///
/// # Safety
/// `cfg` must be a live configuration handle; `out` non-null.
#[no_mangle]
pub unsafe extern "C" fn fedstack_solve_allocation(
    cfg: *const FedstackConfig,
    samples: usize,
    distance_m: f64,
    fading: f64,
    out: *mut FedstackAllocation,
) -> FedstackStatus {
    let Some(c) = cfg.as_ref() else {
        return fail(FedstackStatus::NullPointer, "config handle is null");
    };
    let Some(out) = out.as_mut() else {
        return fail(FedstackStatus::NullPointer, "output pointer is null");
    };
    if samples == 0 {
        return fail(FedstackStatus::Config, "samples must be at least 1");
    }
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return fail(FedstackStatus::Config, "distance must be finite and positive");
    }
    if !(fading.is_finite() && fading > 0.0) {
        return fail(FedstackStatus::Config, "fading must be finite and positive");
    }
    let sys = &c.0.system;
    let dev = Device {
        id: 0,
        samples,
        cpu_freq: sys.cpu_freq,
        distance: distance_m,
        energy_budget: sys.energy_budget,
    };
    let gain = system::channel_gain(sys, distance_m, fading);
    let solved = catch_unwind(AssertUnwindSafe(|| {
        solve_allocation(sys, &dev, gain, sys.error_tolerance)
    }));
    match solved {
        Ok(Ok(AllocationResult::Feasible(a))) => {
            *out = FedstackAllocation {
                feasible: 1,
                tau: a.point.tau,
                p: a.point.p,
                time_s: a.time,
                energy_j: a.energy,
            };
            FedstackStatus::Ok
        }
        Ok(Ok(AllocationResult::Infeasible)) => {
            *out = FedstackAllocation { feasible: 0, tau: 0.0, p: 0.0, time_s: 0.0, energy_j: 0.0 };
            FedstackStatus::Ok
        }
        Ok(Err(e)) => fail(FedstackStatus::Runtime, e),
        Err(_) => fail(FedstackStatus::Runtime, "internal panic in the allocation solver"),
    }
}

/// Computes an exchange-stable assignment of `k` scheduled devices to
/// `k` sub-channels from a `k`×`k` row-major table of minimal times:
/// `times[channel * k + device]`, with `INFINITY` marking pairs that
/// cannot meet the energy budget. Entries must otherwise be positive.
///
/// `assignment` receives, per device slot, the assigned channel index.
/// `swap_count`, when non-null, receives the number of improving swaps
/// the search performed.
///
/// # Safety
/// `times` must point to `k * k` doubles; `assignment` to `k` values;
/// `swap_count` may be null.
#[no_mangle]
pub unsafe extern "C" fn fedstack_stable_match(
    k: usize,
    times: *const f64,
    assignment: *mut usize,
    swap_count: *mut usize,
) -> FedstackStatus {
    if k == 0 {
        return fail(FedstackStatus::Config, "k must be at least 1");
    }
    if times.is_null() || assignment.is_null() {
        return fail(FedstackStatus::NullPointer, "times and assignment must be non-null");
    }
    let table = std::slice::from_raw_parts(times, k * k);
    let mut columns: Vec<Vec<AllocationResult>> = vec![Vec::with_capacity(k); k];
    for channel in 0..k {
        for slot in 0..k {
            let v = table[channel * k + slot];
            let entry = if v.is_finite() {
                if v <= 0.0 {
                    return fail(FedstackStatus::Config, "finite times must be positive");
                }
                AllocationResult::Feasible(Allocation {
                    point: AllocationPoint::new(0.5, 0.5).expect("interior point"),
                    time: v,
                    energy: 0.0,
                })
            } else {
                AllocationResult::Infeasible
            };
            columns[slot].push(entry);
        }
    }
    let gamma = GammaMatrix::from_columns(k, (0..k).collect(), columns);
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        matching::stable_match(&gamma, Matching::identity(k))
    }));
    let outcome = match outcome {
        Ok(o) => o,
        Err(_) => return fail(FedstackStatus::Runtime, "internal panic in the matcher"),
    };
    std::ptr::copy_nonoverlapping(outcome.matching.as_slice().as_ptr(), assignment, k);
    if let Some(sc) = swap_count.as_mut() {
        *sc = outcome.swaps.len();
    }
    FedstackStatus::Ok
}
