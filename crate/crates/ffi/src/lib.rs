//! C ABI over `scbf-core`.
//!
//! Every fallible function returns a `ScbfStatus`; on failure the message is
//! available from `scbf_last_error_message` on the same thread. Configs and
//! trajectories are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use scbf_core::cli::{export_trajectory, Overrides, ResolvedConfig, RunConfig};
use scbf_core::filter::{nlp_filter, qp_filter, AffineConstraint, FilterOutcome, QuadraticConstraint};
use scbf_core::montecarlo::{run_batch, run_trial};
use scbf_core::{Error, FilterStatus, Trajectory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScbfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Boundary = 4,
    Contract = 5,
    NoConvergence = 6,
    Config = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScbfFilterStatus {
    Ok = 0,
    ClampedToBounds = 1,
    InfeasibleBestEffort = 2,
    BoundaryError = 3,
}

/// Result of one filter evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ScbfFilterOutcome {
    pub u_des: f64,
    pub u_act: f64,
    pub margin_at_u_act: f64,
    pub solve_ms: f64,
    pub intervened: bool,
    pub status: ScbfFilterStatus,
}

/// Per-step trajectory columns.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScbfColumn {
    /// One value per grid point.
    X = 0,
    /// One value per grid point.
    H = 1,
    UDes = 2,
    UAct = 3,
    Margin = 4,
    SolveMs = 5,
}

/// Aggregate statistics of a batch.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ScbfSummary {
    pub n_trials: u64,
    pub completed_trials: u64,
    pub failed_trials: u64,
    pub total_steps: u64,
    pub violating_steps: u64,
    pub trials_with_violation: u64,
    pub safe_timestep_fraction: f64,
    pub mean_terminal_state: f64,
    pub std_terminal_state: f64,
    pub mean_settled_state: f64,
    pub mean_objective: f64,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
}

/// Opaque resolved run configuration.
pub struct ScbfConfig(ResolvedConfig);

/// Opaque simulated path.
pub struct ScbfTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> ScbfStatus {
    match e {
        Error::Domain(_) => ScbfStatus::Domain,
        Error::Boundary { .. } => ScbfStatus::Boundary,
        Error::Contract(_) => ScbfStatus::Contract,
        Error::NoConvergence { .. } => ScbfStatus::NoConvergence,
        Error::Config(_) => ScbfStatus::Config,
        Error::Io { .. } => ScbfStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (ScbfStatus, String)>) -> ScbfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScbfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ScbfStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (ScbfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ScbfStatus, String) {
    (ScbfStatus::NullPointer, format!("{what} is null"))
}

fn convert(o: FilterOutcome) -> ScbfFilterOutcome {
    ScbfFilterOutcome {
        u_des: o.u_des,
        u_act: o.u_act,
        margin_at_u_act: o.margin_at_u_act,
        solve_ms: o.solve_ms,
        intervened: o.intervened,
        status: match o.status {
            FilterStatus::Ok => ScbfFilterStatus::Ok,
            FilterStatus::ClampedToBounds => ScbfFilterStatus::ClampedToBounds,
            FilterStatus::InfeasibleBestEffort => ScbfFilterStatus::InfeasibleBestEffort,
            FilterStatus::BoundaryError => ScbfFilterStatus::BoundaryError,
        },
    }
}

fn check_bounds(lo: f64, hi: f64) -> Result<(), (ScbfStatus, String)> {
    if lo <= hi {
        Ok(())
    } else {
        Err((ScbfStatus::InvalidArgument, format!("control bounds [{lo}, {hi}] are empty")))
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scbf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn scbf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Minimal-norm projection of `u_des` onto `{u : slope u + intercept >= 0}`
/// intersected with `[lo, hi]`.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one `ScbfFilterOutcome`.
#[no_mangle]
pub unsafe extern "C" fn scbf_qp_filter(
    u_des: f64,
    slope: f64,
    intercept: f64,
    lo: f64,
    hi: f64,
    out: *mut ScbfFilterOutcome,
) -> ScbfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        check_bounds(lo, hi)?;
        let o = qp_filter(u_des, &AffineConstraint { slope, intercept }, (lo, hi));
        // SAFETY: checked non-null; caller guarantees it is writable
        unsafe { out.write(convert(o)) };
        Ok(())
    })
}

/// Minimal-norm projection onto `{u : a2 u^2 + a1 u + a0 >= 0}` within `[lo, hi]`.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one `ScbfFilterOutcome`.
#[no_mangle]
pub unsafe extern "C" fn scbf_nlp_filter(
    u_des: f64,
    a2: f64,
    a1: f64,
    a0: f64,
    lo: f64,
    hi: f64,
    out: *mut ScbfFilterOutcome,
) -> ScbfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        check_bounds(lo, hi)?;
        let o = nlp_filter(u_des, &QuadraticConstraint { a2, a1, a0 }, (lo, hi));
        // SAFETY: checked non-null; caller guarantees it is writable
        unsafe { out.write(convert(o)) };
        Ok(())
    })
}

/// Parse and resolve a run configuration given as JSON text.
///
/// # Safety
/// `json` must be NULL or a valid NUL-terminated string; `out` must be NULL or
/// writable. On success `*out` owns a handle to release with `scbf_config_free`.
#[no_mangle]
pub unsafe extern "C" fn scbf_config_from_json(json: *const c_char, out: *mut *mut ScbfConfig) -> ScbfStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller guarantees a NUL-terminated string
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| (ScbfStatus::InvalidArgument, format!("json is not UTF-8: {e}")))?;
        let resolved =
            RunConfig::from_json(text).and_then(|c| c.resolve(&Overrides::default())).map_err(lib_err)?;
        // SAFETY: checked non-null
        unsafe { out.write(Box::into_raw(Box::new(ScbfConfig(resolved)))) };
        Ok(())
    })
}

/// Override the number of trials and base seed of a config.
///
/// # Safety
/// `cfg` must be NULL or a live handle from `scbf_config_from_json`.
#[no_mangle]
pub unsafe extern "C" fn scbf_config_set_batch(
    cfg: *mut ScbfConfig,
    n_trials: u64,
    base_seed: u64,
) -> ScbfStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle
        let cfg = unsafe { cfg.as_mut() }.ok_or_else(|| null("cfg"))?;
        if n_trials == 0 {
            return Err((ScbfStatus::InvalidArgument, "n_trials must be at least 1".into()));
        }
        cfg.0.n_trials = n_trials;
        cfg.0.seed = base_seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from `scbf_config_from_json` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scbf_config_free(cfg: *mut ScbfConfig) {
    if !cfg.is_null() {
        // SAFETY: handle was created by Box::into_raw
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Simulate one trial of `cfg`.
///
/// # Safety
/// `cfg` must be a live config handle and `out` writable. On success `*out`
/// owns a trajectory to release with `scbf_trajectory_free`.
#[no_mangle]
pub unsafe extern "C" fn scbf_run_trial(
    cfg: *const ScbfConfig,
    trial_index: u64,
    out: *mut *mut ScbfTrajectory,
) -> ScbfStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle
        let cfg = unsafe { cfg.as_ref() }.ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let exp = cfg.0.experiment().map_err(lib_err)?;
        let tr = run_trial(&exp, trial_index, cfg.0.seed).map_err(lib_err)?;
        // SAFETY: checked non-null
        unsafe { out.write(Box::into_raw(Box::new(ScbfTrajectory(tr)))) };
        Ok(())
    })
}

/// Run the batch described by `cfg` and write its summary.
///
/// # Safety
/// `cfg` must be a live config handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scbf_run_batch(cfg: *const ScbfConfig, out: *mut ScbfSummary) -> ScbfStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle
        let cfg = unsafe { cfg.as_ref() }.ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let exp = cfg.0.experiment().map_err(lib_err)?;
        let mc = scbf_core::McConfig { store_every: 0, ..cfg.0.mc_config() };
        let s = run_batch(&exp, &mc).map_err(lib_err)?.summary;
        let summary = ScbfSummary {
            n_trials: s.n_trials,
            completed_trials: s.completed_trials,
            failed_trials: s.failures.len() as u64,
            total_steps: s.total_steps,
            violating_steps: s.violating_steps,
            trials_with_violation: s.trials_with_violation,
            safe_timestep_fraction: s.safe_timestep_fraction,
            mean_terminal_state: s.mean_terminal_state,
            std_terminal_state: s.std_terminal_state,
            mean_settled_state: s.mean_settled_state,
            mean_objective: s.mean_objective,
            mean_solve_ms: s.mean_solve_ms,
            max_solve_ms: s.max_solve_ms,
        };
        // SAFETY: checked non-null
        unsafe { out.write(summary) };
        Ok(())
    })
}

/// Number of grid points (one more than the number of steps).
///
/// # Safety
/// `traj` must be NULL or a live trajectory handle. Returns 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn scbf_trajectory_len(traj: *const ScbfTrajectory) -> usize {
    // SAFETY: caller guarantees a live handle or NULL
    unsafe { traj.as_ref() }.map_or(0, |t| t.0.x.len())
}

/// Borrow one column. The pointer stays valid until the trajectory is freed.
///
/// # Safety
/// `traj` must be a live trajectory handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scbf_trajectory_column(
    traj: *const ScbfTrajectory,
    column: ScbfColumn,
    data: *mut *const f64,
    len: *mut usize,
) -> ScbfStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle
        let t = &unsafe { traj.as_ref() }.ok_or_else(|| null("traj"))?.0;
        if data.is_null() || len.is_null() {
            return Err(null("data/len"));
        }
        let col = match column {
            ScbfColumn::X => &t.x,
            ScbfColumn::H => &t.h,
            ScbfColumn::UDes => &t.u_des,
            ScbfColumn::UAct => &t.u_act,
            ScbfColumn::Margin => &t.margin,
            ScbfColumn::SolveMs => &t.solve_ms,
        };
        // SAFETY: checked non-null
        unsafe {
            data.write(col.as_ptr());
            len.write(col.len());
        }
        Ok(())
    })
}

/// Write the trajectory as CSV.
///
/// # Safety
/// `traj` must be a live trajectory handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn scbf_trajectory_write_csv(
    traj: *const ScbfTrajectory,
    path: *const c_char,
) -> ScbfStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle
        let t = &unsafe { traj.as_ref() }.ok_or_else(|| null("traj"))?.0;
        if path.is_null() {
            return Err(null("path"));
        }
        // SAFETY: caller guarantees a NUL-terminated string
        let p = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|e| (ScbfStatus::InvalidArgument, format!("path is not UTF-8: {e}")))?;
        export_trajectory(t, Path::new(p)).map_err(lib_err)
    })
}

/// # Safety
/// `traj` must be NULL or a trajectory handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scbf_trajectory_free(traj: *mut ScbfTrajectory) {
    if !traj.is_null() {
        // SAFETY: handle was created by Box::into_raw
        drop(unsafe { Box::from_raw(traj) });
    }
}
