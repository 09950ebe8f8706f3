//! C ABI over the wave control/stabilization laboratory: opaque handles,
//! status codes, and a thread-local last-error message. Every entry point
//! is panic-safe; pointers returned through out-parameters are owned by the
//! caller and released through the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use wavelab::damping::DampingLaw;
use wavelab::dynamics::{self, SimulationInput, State};
use wavelab::error::Error;
use wavelab::geometry::Side;
use wavelab::grid::{build_grid, sample_coefficient, unit_coefficient, CoefficientField, Grid1D};
use wavelab::hum::{CgConfig, Control, ControlKind, HUMProblem, HumSolver};
use wavelab::report::to_json;
use wavelab::stabilization::{
    run_decay_experiment, DampingPlacement, DecayExperimentConfig, FitModel,
};

/// Status of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum WavelabStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericalFailure = 2,
    InternalError = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> WavelabStatus {
    match err.exit_code() {
        2 => WavelabStatus::InvalidArgument,
        _ => WavelabStatus::NumericalFailure,
    }
}

fn guard(body: impl FnOnce() -> WavelabStatus) -> WavelabStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            WavelabStatus::InternalError
        }
    }
}

/// Grid plus coefficient field: the spatial setting of every experiment.
pub struct WavelabLab {
    grid: Grid1D,
    field: CoefficientField,
}

/// Recorded simulation run.
pub struct WavelabTrajectory {
    inner: dynamics::Trajectory,
}

/// HUM solve output: control signal plus verification numbers.
pub struct WavelabHumSolution {
    control: Vec<f64>,
    control_norm_sq: f64,
    terminal_energy_ratio: f64,
    raw_terminal_energy_ratio: f64,
    cg_iterations: usize,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wavelab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message of this thread into `buf` (truncating) and
/// returns its full length including the terminator.
///
/// # Safety
/// `buf` must point to `len` writable bytes (or be null with `len` 0).
#[no_mangle]
pub unsafe extern "C" fn wavelab_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Creates a laboratory on (x_left, x_right) with unit wave coefficient.
///
/// # Safety
/// `out` must be a valid pointer to a `WavelabLab*` slot.
#[no_mangle]
pub unsafe extern "C" fn wavelab_lab_new(
    x_left: f64,
    x_right: f64,
    n_cells: usize,
    out: *mut *mut WavelabLab,
) -> WavelabStatus {
    wavelab_lab_new_with_coefficient(x_left, x_right, n_cells, std::ptr::null(), 0, out)
}

/// Creates a laboratory with a coefficient sampled at the `n_cells` cell
/// midpoints; pass a null pointer for the unit coefficient.
///
/// # Safety
/// `midpoints` is either null or points to `midpoints_len` doubles; `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn wavelab_lab_new_with_coefficient(
    x_left: f64,
    x_right: f64,
    n_cells: usize,
    midpoints: *const f64,
    midpoints_len: usize,
    out: *mut *mut WavelabLab,
) -> WavelabStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return WavelabStatus::InvalidArgument;
    }
    guard(|| {
        let grid = match build_grid(x_left, x_right, n_cells) {
            Ok(g) => g,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        };
        let field = if midpoints.is_null() {
            unit_coefficient(&grid)
        } else {
            if midpoints_len != n_cells {
                set_error("coefficient table must hold one value per cell");
                return WavelabStatus::InvalidArgument;
            }
            let values = std::slice::from_raw_parts(midpoints, midpoints_len);
            match sample_coefficient(&grid, |x| {
                let j = (((x - grid.x_left) / grid.h) as usize).min(n_cells - 1);
                values[j]
            }) {
                Ok(f) => f,
                Err(e) => {
                    set_error(&e.to_string());
                    return status_of(&e);
                }
            }
        };
        *out = Box::into_raw(Box::new(WavelabLab { grid, field }));
        WavelabStatus::Ok
    })
}

/// # Safety
/// `lab` must come from a `wavelab_lab_new*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wavelab_lab_free(lab: *mut WavelabLab) {
    if !lab.is_null() {
        drop(Box::from_raw(lab));
    }
}

/// Number of grid nodes (state vectors carry this many entries).
///
/// # Safety
/// `lab` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wavelab_lab_n_nodes(lab: *const WavelabLab) -> usize {
    if lab.is_null() {
        return 0;
    }
    (*lab).grid.n_nodes()
}

/// Copies the node coordinates into `out`.
///
/// # Safety
/// `out` must hold `len >= n_nodes` doubles.
#[no_mangle]
pub unsafe extern "C" fn wavelab_lab_node_coords(
    lab: *const WavelabLab,
    out: *mut f64,
    len: usize,
) -> WavelabStatus {
    if lab.is_null() || out.is_null() {
        set_error("null handle");
        return WavelabStatus::InvalidArgument;
    }
    let grid = &(*lab).grid;
    if len < grid.n_nodes() {
        set_error("output buffer too small");
        return WavelabStatus::InvalidArgument;
    }
    for j in 0..grid.n_nodes() {
        *out.add(j) = grid.node(j);
    }
    WavelabStatus::Ok
}

/// Simulates the free wave from (y0, v0) over `horizon` at the given
/// Courant number (pass 0 for the default).
///
/// # Safety
/// `y0`/`v0` hold `n_nodes` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wavelab_simulate_free_wave(
    lab: *const WavelabLab,
    y0: *const f64,
    v0: *const f64,
    n_nodes: usize,
    horizon: f64,
    cfl: f64,
    out: *mut *mut WavelabTrajectory,
) -> WavelabStatus {
    if lab.is_null() || y0.is_null() || v0.is_null() || out.is_null() {
        set_error("null handle");
        return WavelabStatus::InvalidArgument;
    }
    guard(|| {
        let lab = &*lab;
        if n_nodes != lab.grid.n_nodes() {
            set_error("state length does not match the grid");
            return WavelabStatus::InvalidArgument;
        }
        let y = std::slice::from_raw_parts(y0, n_nodes).to_vec();
        let v = std::slice::from_raw_parts(v0, n_nodes).to_vec();
        let cfl = if cfl > 0.0 { cfl } else { dynamics::CFL_DEFAULT };
        let result = dynamics::suggest_dt(&lab.grid, &lab.field, horizon, cfl).and_then(|dt| {
            let mut input =
                SimulationInput::free(&lab.grid, &lab.field, State::new(y, v, 0.0), horizon, dt);
            input.store_states = false;
            dynamics::simulate(input)
        });
        match result {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(WavelabTrajectory { inner: traj }));
                WavelabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `traj` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wavelab_trajectory_free(traj: *mut WavelabTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded time levels.
///
/// # Safety
/// `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wavelab_trajectory_len(traj: *const WavelabTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    (*traj).inner.times.len()
}

unsafe fn copy_series(series: &[f64], out: *mut f64, len: usize) -> WavelabStatus {
    if out.is_null() || len < series.len() {
        set_error("output buffer too small");
        return WavelabStatus::InvalidArgument;
    }
    std::ptr::copy_nonoverlapping(series.as_ptr(), out, series.len());
    WavelabStatus::Ok
}

/// Copies the time stamps.
///
/// # Safety
/// `out` must hold `len >= wavelab_trajectory_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wavelab_trajectory_times(
    traj: *const WavelabTrajectory,
    out: *mut f64,
    len: usize,
) -> WavelabStatus {
    if traj.is_null() {
        set_error("null handle");
        return WavelabStatus::InvalidArgument;
    }
    copy_series(&(*traj).inner.times, out, len)
}

/// Copies the energy series E(t_n).
///
/// # Safety
/// As for `wavelab_trajectory_times`.
#[no_mangle]
pub unsafe extern "C" fn wavelab_trajectory_energy(
    traj: *const WavelabTrajectory,
    out: *mut f64,
    len: usize,
) -> WavelabStatus {
    if traj.is_null() {
        set_error("null handle");
        return WavelabStatus::InvalidArgument;
    }
    copy_series(&(*traj).inner.energy, out, len)
}

/// Copies the boundary-trace series of one side (0 = left, 1 = right).
///
/// # Safety
/// As for `wavelab_trajectory_times`.
#[no_mangle]
pub unsafe extern "C" fn wavelab_trajectory_flux(
    traj: *const WavelabTrajectory,
    side: c_int,
    out: *mut f64,
    len: usize,
) -> WavelabStatus {
    if traj.is_null() {
        set_error("null handle");
        return WavelabStatus::InvalidArgument;
    }
    let series = match side {
        0 => &(*traj).inner.flux_left,
        1 => &(*traj).inner.flux_right,
        _ => {
            set_error("side must be 0 (left) or 1 (right)");
            return WavelabStatus::InvalidArgument;
        }
    };
    copy_series(series, out, len)
}

/// Solves the boundary HUM control problem for data (y0, y1) and verifies
/// it by replay. `side`: 0 = left, 1 = right.
///
/// # Safety
/// `y0`/`y1` hold `n_nodes` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wavelab_hum_boundary_solve(
    lab: *const WavelabLab,
    side: c_int,
    horizon: f64,
    filter_fraction: f64,
    y0: *const f64,
    y1: *const f64,
    n_nodes: usize,
    out: *mut *mut WavelabHumSolution,
) -> WavelabStatus {
    if lab.is_null() || y0.is_null() || y1.is_null() || out.is_null() {
        set_error("null handle");
        return WavelabStatus::InvalidArgument;
    }
    guard(|| {
        let lab = &*lab;
        if n_nodes != lab.grid.n_nodes() {
            set_error("state length does not match the grid");
            return WavelabStatus::InvalidArgument;
        }
        let side = match side {
            0 => Side::Left,
            1 => Side::Right,
            _ => {
                set_error("side must be 0 (left) or 1 (right)");
                return WavelabStatus::InvalidArgument;
            }
        };
        let data_y = std::slice::from_raw_parts(y0, n_nodes);
        let data_v = std::slice::from_raw_parts(y1, n_nodes);
        let result = dynamics::suggest_dt(&lab.grid, &lab.field, horizon, dynamics::CFL_DEFAULT)
            .and_then(|dt| {
                let problem = HUMProblem {
                    grid: lab.grid.clone(),
                    field: lab.field.clone(),
                    kind: ControlKind::Boundary(side),
                    horizon,
                    dt,
                    filter_fraction,
                    cg: CgConfig::default(),
                };
                HumSolver::new(problem)?.solve(data_y, data_v, None)
            });
        match result {
            Ok(sol) => {
                let control = match sol.control {
                    Control::Boundary { signal, .. } => signal,
                    Control::Internal { .. } => unreachable!(),
                };
                *out = Box::into_raw(Box::new(WavelabHumSolution {
                    control,
                    control_norm_sq: sol.control_norm_sq,
                    terminal_energy_ratio: sol.verification.terminal_energy_ratio,
                    raw_terminal_energy_ratio: sol.verification.raw_terminal_energy_ratio,
                    cg_iterations: sol.cg_iterations,
                }));
                WavelabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `sol` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wavelab_hum_solution_free(sol: *mut WavelabHumSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Length of the control signal (one value per time level).
///
/// # Safety
/// `sol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wavelab_hum_control_len(sol: *const WavelabHumSolution) -> usize {
    if sol.is_null() {
        return 0;
    }
    (*sol).control.len()
}

/// Copies the control signal.
///
/// # Safety
/// `out` must hold `len >= wavelab_hum_control_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wavelab_hum_control_signal(
    sol: *const WavelabHumSolution,
    out: *mut f64,
    len: usize,
) -> WavelabStatus {
    if sol.is_null() {
        set_error("null handle");
        return WavelabStatus::InvalidArgument;
    }
    copy_series(&(*sol).control, out, len)
}

/// Terminal energy ratio of the verification replay, measured in the kept
/// (filtered) subspace.
///
/// # Safety
/// `sol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wavelab_hum_terminal_ratio(sol: *const WavelabHumSolution) -> f64 {
    if sol.is_null() {
        return f64::NAN;
    }
    (*sol).terminal_energy_ratio
}

/// Raw (unfiltered) terminal energy ratio of the replay.
///
/// # Safety
/// `sol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wavelab_hum_raw_terminal_ratio(sol: *const WavelabHumSolution) -> f64 {
    if sol.is_null() {
        return f64::NAN;
    }
    (*sol).raw_terminal_energy_ratio
}

/// The quadratic form <Lambda phi, phi> = ||v||^2.
///
/// # Safety
/// `sol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wavelab_hum_control_norm_sq(sol: *const WavelabHumSolution) -> f64 {
    if sol.is_null() {
        return f64::NAN;
    }
    (*sol).control_norm_sq
}

/// Conjugate-gradient iterations of the solve.
///
/// # Safety
/// `sol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wavelab_hum_cg_iterations(sol: *const WavelabHumSolution) -> usize {
    if sol.is_null() {
        return 0;
    }
    (*sol).cg_iterations
}

/// Runs a decay experiment from the given eigenmode and returns the report
/// as a JSON string (free with `wavelab_string_free`). `law`: "linear:a" |
/// "power:p" | "saturating"; `placement`: "internal" |
/// "boundary-left:alpha" | "boundary-right:alpha".
///
/// # Safety
/// `law`/`placement` are NUL-terminated strings; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wavelab_decay_experiment_json(
    lab: *const WavelabLab,
    law: *const c_char,
    placement: *const c_char,
    t_long: f64,
    mode: usize,
    out_json: *mut *mut c_char,
) -> WavelabStatus {
    if lab.is_null() || law.is_null() || placement.is_null() || out_json.is_null() {
        set_error("null handle");
        return WavelabStatus::InvalidArgument;
    }
    guard(|| {
        let lab = &*lab;
        let law = match std::ffi::CStr::from_ptr(law).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("law is not valid utf-8");
                return WavelabStatus::InvalidArgument;
            }
        };
        let placement = match std::ffi::CStr::from_ptr(placement).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("placement is not valid utf-8");
                return WavelabStatus::InvalidArgument;
            }
        };
        let law = match parse_law(law) {
            Some(l) => l,
            None => {
                set_error("unknown damping law");
                return WavelabStatus::InvalidArgument;
            }
        };
        let placement = match parse_placement(&lab.grid, placement) {
            Some(p) => p,
            None => {
                set_error("unknown damping placement");
                return WavelabStatus::InvalidArgument;
            }
        };
        if mode == 0 || mode >= lab.grid.n_cells {
            set_error("mode index out of range");
            return WavelabStatus::InvalidArgument;
        }
        let config = DecayExperimentConfig {
            grid: lab.grid.clone(),
            field: lab.field.clone(),
            placement,
            law,
            initial: State::mode(&lab.grid, mode),
            t_long,
            dt: None,
            model: FitModel::Exponential,
            fit_window: None,
            store_states: false,
        };
        match run_decay_experiment(&config).and_then(|r| to_json(&r)) {
            Ok(json) => {
                let cstring = CString::new(json).unwrap_or_default();
                *out_json = cstring.into_raw();
                WavelabStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wavelab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn parse_law(text: &str) -> Option<DampingLaw> {
    if let Some(rest) = text.strip_prefix("linear:") {
        return Some(DampingLaw::Linear { a: rest.parse().ok()? });
    }
    if let Some(rest) = text.strip_prefix("power:") {
        return Some(DampingLaw::Power { p: rest.parse().ok()? });
    }
    if text == "saturating" {
        return Some(DampingLaw::Saturating);
    }
    None
}

fn parse_placement(grid: &Grid1D, text: &str) -> Option<DampingPlacement> {
    if text == "internal" {
        return Some(DampingPlacement::Internal { a_weight: vec![1.0; grid.n_nodes()] });
    }
    let rest = text.strip_prefix("boundary-")?;
    let (side, alpha) = rest.split_once(':')?;
    let side = match side {
        "left" => Side::Left,
        "right" => Side::Right,
        _ => return None,
    };
    Some(DampingPlacement::Boundary { side, alpha: alpha.parse().ok()?, b: 0.0 })
}
