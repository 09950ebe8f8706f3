//! Batch experiment runner: every module behind a subcommand, flat
//! key-value configs with echo files for exact re-runs, deterministic
//! seeded outputs, and machine-readable errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::damping::DampingLaw;
use crate::dynamics::{self, EndCondition, SimulationInput, State};
use crate::error::{Error, Result};
use crate::geometry::{
    boundary_partition, minimal_control_time, multiplier_radius, Domain, ObserverPoint, Placement,
    Side,
};
use crate::grid::{build_grid, coefficient_from_csv, sample_coefficient, unit_coefficient, CoefficientField, Grid1D};
use crate::hum::{CgConfig, ControlKind, HUMProblem, HumSolver};
use crate::observability::{
    observability_ratio_ensemble, BoundsInput, EnsembleSpec, ObservationKind, ObservationSpec,
};
use crate::report::{config_hash, to_json, write_control_csv, write_json, write_snapshots, write_trajectory_csv};
use crate::semilinear::{fixed_point_control, FixedPointConfig, Nonlinearity};
use crate::stabilization::{
    broadband_state, run_decay_experiment, DampingPlacement, DecayExperimentConfig, FitModel,
};

#[derive(Parser)]
#[command(name = "wavelab", version, about = "Desk-scale wave control and stabilization laboratory")]
struct Cli {
    /// Directory for all outputs of this run.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Seed for every random ensemble in the run.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multiplier geometry: R(x0), the boundary partition and control times.
    Geometry(GeometryArgs),
    /// Run the leapfrog engine and export the trajectory.
    Simulate(SimulateArgs),
    /// Observability ratios over a mode or random ensemble.
    Observe(ObserveArgs),
    /// Solve a HUM control problem and verify it by replay.
    Hum(HumArgs),
    /// Semilinear fixed-point control.
    Semilinear(SemilinearArgs),
    /// Damped decay experiment with rate fitting.
    Stabilize(StabilizeArgs),
    /// Re-run a named acceptance scenario end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct GeometryArgs {
    /// square | disk | interval (unit-sized), or rect:x0,y0,x1,y1 /
    /// disk:cx,cy,r / interval:a,b.
    #[arg(long, default_value = "interval")]
    shape: String,
    /// Observer point, e.g. 0.5,0.5 (one coordinate for intervals).
    #[arg(long, default_value = "0")]
    x0: String,
    /// Certified lower coefficient bound entering the control times.
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    /// one-end | both-ends | internal:l1,l2 | geometric.
    #[arg(long, default_value = "geometric")]
    placement: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    n_cells: usize,
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    #[arg(long, default_value_t = dynamics::CFL_DEFAULT)]
    cfl: f64,
    /// mode:k[@amp] | broadband:n_modes (seeded).
    #[arg(long, default_value = "mode:1")]
    initial: String,
    /// const:v | jump:x,left,right | csv:FILE.
    #[arg(long, default_value = "const:1")]
    coefficient: String,
    /// none | linear:a | power:p | saturating.
    #[arg(long, default_value = "none")]
    damping_law: String,
    /// none | internal | boundary-left:alpha[:b] | boundary-right:alpha[:b].
    #[arg(long, default_value = "none")]
    damping: String,
    /// Write snapshot_<n>.csv every STRIDE levels (0 = none).
    #[arg(long, default_value_t = 0)]
    snapshots: usize,
}

#[derive(Args)]
struct ObserveArgs {
    #[arg(long, default_value_t = 200)]
    n_cells: usize,
    #[arg(long, default_value_t = 3.0)]
    horizon: f64,
    /// boundary-left | boundary-right | displacement:a,b | velocity:a,b.
    #[arg(long, default_value = "boundary-right")]
    kind: String,
    /// modes:count | random:count (seeded).
    #[arg(long, default_value = "modes:10")]
    ensemble: String,
    #[arg(long, default_value_t = 0.5)]
    filter_fraction: f64,
    /// Observer point for the theoretical constants.
    #[arg(long, default_value = "0")]
    x0: String,
    #[arg(long, default_value = "const:1")]
    coefficient: String,
}

#[derive(Args)]
struct HumArgs {
    #[arg(long, default_value_t = 200)]
    n_cells: usize,
    #[arg(long, default_value_t = 2.5)]
    horizon: f64,
    #[arg(long, default_value_t = dynamics::CFL_DEFAULT)]
    cfl: f64,
    /// boundary-left | boundary-right | internal:a,b.
    #[arg(long, default_value = "boundary-right")]
    kind: String,
    /// mode:k[@amp] | broadband:n_modes | rest.
    #[arg(long, default_value = "mode:1")]
    data: String,
    /// rest | mode:k[@amp] | broadband:n_modes.
    #[arg(long, default_value = "rest")]
    target: String,
    #[arg(long, default_value_t = 0.4)]
    filter_fraction: f64,
    /// Disable spectral filtering (reproduces the divergence of raw
    /// discrete HUM: expect CG to exhaust its iteration budget).
    #[arg(long, default_value_t = false)]
    no_filter: bool,
    #[arg(long, default_value_t = 1e-8)]
    cg_tol: f64,
    #[arg(long)]
    cg_max_iter: Option<usize>,
    #[arg(long, default_value = "const:1")]
    coefficient: String,
}

#[derive(Args)]
struct SemilinearArgs {
    #[arg(long, default_value_t = 100)]
    n_cells: usize,
    #[arg(long, default_value_t = 2.5)]
    horizon: f64,
    /// zero | linear:a | sine | arctan | linear-arctan:a | cubic.
    #[arg(long, default_value = "sine")]
    nonlinearity: String,
    /// Control subdomain.
    #[arg(long, default_value = "0.3,0.7")]
    omega: String,
    #[arg(long, default_value = "mode:1@0.5")]
    data: String,
    #[arg(long, default_value = "rest")]
    target: String,
    #[arg(long, default_value_t = 0.4)]
    filter_fraction: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    relaxation: f64,
}

#[derive(Args)]
struct StabilizeArgs {
    #[arg(long, default_value_t = 100)]
    n_cells: usize,
    #[arg(long, default_value_t = 20.0)]
    t_long: f64,
    /// linear:a | power:p | saturating.
    #[arg(long, default_value = "linear:1")]
    law: String,
    /// internal | boundary-left:alpha[:b] | boundary-right:alpha[:b].
    #[arg(long, default_value = "internal")]
    placement: String,
    /// mode:k[@amp] | broadband:n_modes.
    #[arg(long, default_value = "mode:1")]
    data: String,
    /// exponential | polynomial.
    #[arg(long, default_value = "exponential")]
    model: String,
    /// Fit window t_a,t_b (defaults to the late 80% of the run).
    #[arg(long)]
    window: Option<String>,
    #[arg(long, default_value = "const:1")]
    coefficient: String,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Scenario name; `list` prints the available ones.
    name: String,
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv = match expand_config_file(args) {
        Ok(v) => v,
        Err(err) => return emit_error(&err),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // clap handles --help/--version with its own exit semantics.
            if err.use_stderr() {
                eprintln!(
                    "{}",
                    json!({"error": err.to_string(), "kind": "config"})
                );
                return 2;
            }
            print!("{err}");
            return 0;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => emit_error(&err),
    }
}

fn emit_error(err: &Error) -> i32 {
    let kind = match err.exit_code() {
        2 => "config",
        _ => "numerical",
    };
    eprintln!("{}", json!({"error": err.to_string(), "kind": kind}));
    err.exit_code()
}

/// `--config FILE` expands to the argv recorded in FILE (first line
/// `subcommand=NAME`, then `key=value` lines), with any further CLI args
/// appended so they can override.
fn expand_config_file<I, T>(args: I) -> Result<Vec<std::ffi::OsString>>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let raw: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let pos = raw.iter().position(|a| a == "--config");
    let Some(pos) = pos else {
        return Ok(raw);
    };
    let path = raw
        .get(pos + 1)
        .ok_or_else(|| Error::config("--config needs a file path"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config: {e}")))?;
    let mut argv: Vec<std::ffi::OsString> = vec![raw[0].clone()];
    let mut subcommand: Option<String> = None;
    let mut kv: Vec<std::ffi::OsString> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("bad config line {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "subcommand" {
            subcommand = Some(value.to_string());
        } else {
            kv.push(format!("--{key}").into());
            kv.push(value.into());
        }
    }
    let sub = subcommand.ok_or_else(|| Error::config("config file lacks subcommand="))?;
    argv.push(sub.into());
    argv.extend(kv);
    // Remaining CLI args (minus --config FILE) append after, overriding.
    for (i, a) in raw.iter().enumerate().skip(1) {
        if i == pos || i == pos + 1 {
            continue;
        }
        argv.push(a.clone());
    }
    Ok(argv)
}

fn dispatch(cli: Cli) -> Result<i32> {
    std::fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::Geometry(args) => geometry(&cli, args),
        Command::Simulate(args) => simulate(&cli, args),
        Command::Observe(args) => observe(&cli, args),
        Command::Hum(args) => hum(&cli, args),
        Command::Semilinear(args) => semilinear(&cli, args),
        Command::Stabilize(args) => stabilize(&cli, args),
        Command::Reproduce(args) => reproduce(&cli, args),
    }
}

fn write_echo(out_dir: &Path, entries: &[(&str, String)]) -> Result<String> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(&format!("{k}={v}\n"));
    }
    std::fs::write(out_dir.join("config_echo.txt"), &text)?;
    Ok(config_hash(&text))
}

fn parse_floats(text: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config(format!("bad {what}: {text:?}")))?;
    if vals.len() != n {
        return Err(Error::config(format!("{what} needs {n} comma-separated values")));
    }
    Ok(vals)
}

fn parse_domain(shape: &str) -> Result<Domain> {
    Ok(match shape {
        "square" => Domain::unit_square(),
        "disk" => Domain::unit_disk(),
        "interval" => Domain::unit_interval(),
        other => {
            if let Some(rest) = other.strip_prefix("rect:") {
                let v = parse_floats(rest, 4, "rectangle corners")?;
                Domain::Rectangle { corner_min: [v[0], v[1]], corner_max: [v[2], v[3]] }
            } else if let Some(rest) = other.strip_prefix("disk:") {
                let v = parse_floats(rest, 3, "disk parameters")?;
                Domain::Disk { center: [v[0], v[1]], radius: v[2] }
            } else if let Some(rest) = other.strip_prefix("interval:") {
                let v = parse_floats(rest, 2, "interval ends")?;
                Domain::Interval { x_left: v[0], x_right: v[1] }
            } else {
                return Err(Error::config(format!("unknown shape {other:?}")));
            }
        }
    })
}

fn parse_observer(text: &str) -> Result<ObserverPoint> {
    let parts: Vec<&str> = text.split(',').collect();
    match parts.len() {
        1 => Ok(ObserverPoint::one_d(
            parts[0].trim().parse().map_err(|_| Error::config("bad x0"))?,
        )),
        2 => {
            let v = parse_floats(text, 2, "x0")?;
            Ok(ObserverPoint::new(v[0], v[1]))
        }
        _ => Err(Error::config("x0 takes one or two coordinates")),
    }
}

fn parse_placement(text: &str) -> Result<Placement> {
    Ok(match text {
        "one-end" => Placement::BoundaryOneEnd,
        "both-ends" => Placement::BoundaryBothEnds,
        "geometric" => Placement::MultiplierGeometric,
        other => {
            if let Some(rest) = other.strip_prefix("internal:") {
                let v = parse_floats(rest, 2, "internal interval")?;
                Placement::InternalInterval { l1: v[0], l2: v[1] }
            } else {
                return Err(Error::config(format!("unknown placement {other:?}")));
            }
        }
    })
}

fn parse_coefficient(grid: &Grid1D, text: &str) -> Result<CoefficientField> {
    if let Some(rest) = text.strip_prefix("const:") {
        let v: f64 = rest.parse().map_err(|_| Error::config("bad constant coefficient"))?;
        sample_coefficient(grid, |_| v)
    } else if let Some(rest) = text.strip_prefix("jump:") {
        let v = parse_floats(rest, 3, "jump coefficient")?;
        sample_coefficient(grid, move |x| if x < v[0] { v[1] } else { v[2] })
    } else if let Some(path) = text.strip_prefix("csv:") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read coefficient table: {e}")))?;
        coefficient_from_csv(grid, &text)
    } else {
        Err(Error::config(format!("unknown coefficient spec {text:?}")))
    }
}

fn parse_state(
    grid: &Grid1D,
    field: &CoefficientField,
    text: &str,
    seed: u64,
) -> Result<State> {
    if text == "rest" {
        return Ok(State::zero(grid));
    }
    if let Some(rest) = text.strip_prefix("mode:") {
        let (k_text, amp) = match rest.split_once('@') {
            Some((k, a)) => (k, a.parse::<f64>().map_err(|_| Error::config("bad amplitude"))?),
            None => (rest, 1.0),
        };
        let k: usize = k_text.parse().map_err(|_| Error::config("bad mode index"))?;
        if k == 0 || k >= grid.n_cells {
            return Err(Error::config(format!("mode {k} out of range")));
        }
        let mut state = State::mode(grid, k);
        for v in state.y.iter_mut() {
            *v *= amp;
        }
        return Ok(state);
    }
    if let Some(rest) = text.strip_prefix("broadband:") {
        let n_modes: usize = rest.parse().map_err(|_| Error::config("bad mode count"))?;
        return broadband_state(grid, field, n_modes, seed);
    }
    Err(Error::config(format!("unknown state spec {text:?}")))
}

fn parse_law(text: &str) -> Result<DampingLaw> {
    let law = if let Some(rest) = text.strip_prefix("linear:") {
        DampingLaw::Linear { a: rest.parse().map_err(|_| Error::config("bad linear damping"))? }
    } else if let Some(rest) = text.strip_prefix("power:") {
        DampingLaw::Power { p: rest.parse().map_err(|_| Error::config("bad power damping"))? }
    } else if text == "saturating" {
        DampingLaw::Saturating
    } else {
        return Err(Error::config(format!("unknown damping law {text:?}")));
    };
    law.validate()?;
    Ok(law)
}

fn parse_side(text: &str) -> Result<Side> {
    match text {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        other => Err(Error::config(format!("unknown side {other:?}"))),
    }
}

fn parse_nonlinearity(text: &str) -> Result<Nonlinearity> {
    Ok(match text {
        "zero" => Nonlinearity::Zero,
        "sine" => Nonlinearity::Sine,
        "arctan" => Nonlinearity::Arctan,
        "cubic" => Nonlinearity::Cubic,
        other => {
            if let Some(rest) = other.strip_prefix("linear-arctan:") {
                Nonlinearity::LinearPlusArctan {
                    alpha: rest.parse().map_err(|_| Error::config("bad alpha"))?,
                }
            } else if let Some(rest) = other.strip_prefix("linear:") {
                Nonlinearity::Linear {
                    alpha: rest.parse().map_err(|_| Error::config("bad alpha"))?,
                }
            } else {
                return Err(Error::config(format!("unknown nonlinearity {other:?}")));
            }
        }
    })
}

fn geometry(cli: &Cli, args: &GeometryArgs) -> Result<i32> {
    let domain = parse_domain(&args.shape)?;
    let x0 = parse_observer(&args.x0)?;
    let placement = parse_placement(&args.placement)?;
    let r = multiplier_radius(&domain, &x0)?;
    let partition = boundary_partition(&domain, &x0)?;
    let t_min = minimal_control_time(&domain, &x0, args.a0, placement)?;
    let hash = write_echo(
        &cli.out_dir,
        &[
            ("subcommand", "geometry".into()),
            ("shape", args.shape.clone()),
            ("x0", args.x0.clone()),
            ("a0", args.a0.to_string()),
            ("placement", args.placement.clone()),
        ],
    )?;
    let record = json!({
        "R": r,
        "2R": 2.0 * r,
        "gamma_x0": partition.gamma_x0,
        "gamma_star": partition.gamma_star,
        "T_min": t_min,
        "artifact_version": crate::VERSION,
        "config_hash": hash,
    });
    write_json(&cli.out_dir.join("geometry.json"), &record)?;
    println!("{}", to_json(&record)?);
    Ok(0)
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<i32> {
    let grid = build_grid(0.0, 1.0, args.n_cells)?;
    let field = parse_coefficient(&grid, &args.coefficient)?;
    let dt = dynamics::suggest_dt(&grid, &field, args.horizon, args.cfl)?;
    let initial = parse_state(&grid, &field, &args.initial, cli.seed)?;
    let mut input = SimulationInput::free(&grid, &field, initial, args.horizon, dt);
    input.store_states = args.snapshots > 0;
    match args.damping.as_str() {
        "none" => {}
        "internal" => {
            input.damping = dynamics::InternalDampingSpec::uniform(&grid, parse_law(&args.damping_law)?);
        }
        other => {
            let Some(rest) = other.strip_prefix("boundary-") else {
                return Err(Error::config(format!("unknown damping placement {other:?}")));
            };
            let mut parts = rest.split(':');
            let side = parse_side(parts.next().unwrap_or(""))?;
            let alpha: f64 = parts
                .next()
                .ok_or_else(|| Error::config("boundary damping needs alpha"))?
                .parse()
                .map_err(|_| Error::config("bad alpha"))?;
            let b: f64 = parts.next().map(|s| s.parse()).transpose()
                .map_err(|_| Error::config("bad b"))?.unwrap_or(0.0);
            let end = EndCondition::Dissipative { alpha, b, law: parse_law(&args.damping_law)? };
            match side {
                Side::Left => input.bc.left = end,
                Side::Right => input.bc.right = end,
            }
        }
    }
    let traj = dynamics::simulate(input)?;
    write_trajectory_csv(&cli.out_dir.join("trajectory.csv"), &traj)?;
    let snapshots = if args.snapshots > 0 {
        write_snapshots(&cli.out_dir, &traj, args.snapshots)?
    } else {
        0
    };
    let hash = write_echo(
        &cli.out_dir,
        &[
            ("subcommand", "simulate".into()),
            ("n-cells", args.n_cells.to_string()),
            ("horizon", args.horizon.to_string()),
            ("cfl", args.cfl.to_string()),
            ("initial", args.initial.clone()),
            ("coefficient", args.coefficient.clone()),
            ("damping-law", args.damping_law.clone()),
            ("damping", args.damping.clone()),
            ("snapshots", args.snapshots.to_string()),
            ("seed", cli.seed.to_string()),
        ],
    )?;
    let summary = json!({
        "steps": traj.n_steps(),
        "dt": traj.dt,
        "E0": traj.energy[0],
        "E_final": traj.energy.last(),
        "snapshots": snapshots,
        "artifact_version": crate::VERSION,
        "config_hash": hash,
    });
    println!("{}", to_json(&summary)?);
    Ok(0)
}

fn observe(cli: &Cli, args: &ObserveArgs) -> Result<i32> {
    let grid = build_grid(0.0, 1.0, args.n_cells)?;
    let field = parse_coefficient(&grid, &args.coefficient)?;
    let kind = match args.kind.as_str() {
        "boundary-left" => ObservationKind::Boundary(Side::Left),
        "boundary-right" => ObservationKind::Boundary(Side::Right),
        other => {
            let (name, range) = other
                .split_once(':')
                .ok_or_else(|| Error::config(format!("unknown observation kind {other:?}")))?;
            let v = parse_floats(range, 2, "omega")?;
            let (j0, j1) = grid.node_range(v[0], v[1])?;
            match name {
                "displacement" => ObservationKind::InternalDisplacement(j0, j1),
                "velocity" => ObservationKind::InternalVelocity(j0, j1),
                _ => return Err(Error::config(format!("unknown observation kind {other:?}"))),
            }
        }
    };
    let spec = ObservationSpec { kind, horizon: args.horizon };
    let ensemble = if let Some(rest) = args.ensemble.strip_prefix("modes:") {
        EnsembleSpec::FirstModes { count: rest.parse().map_err(|_| Error::config("bad count"))? }
    } else if let Some(rest) = args.ensemble.strip_prefix("random:") {
        EnsembleSpec::Random {
            count: rest.parse().map_err(|_| Error::config("bad count"))?,
            seed: cli.seed,
        }
    } else {
        return Err(Error::config(format!("unknown ensemble {:?}", args.ensemble)));
    };
    let x0 = parse_observer(&args.x0)?;
    let bounds = BoundsInput {
        domain: Domain::Interval { x_left: grid.x_left, x_right: grid.x_right },
        x0,
        a0: field.a0,
        total_variation: field.total_variation,
        a_end: match kind {
            ObservationKind::Boundary(Side::Left) => field.at_left_end(),
            _ => field.at_right_end(),
        },
        horizon: args.horizon,
    };
    let report =
        observability_ratio_ensemble(&grid, &field, &spec, ensemble, args.filter_fraction, Some(&bounds))?;
    write_json(&cli.out_dir.join("observability.json"), &report)?;
    let hash = write_echo(
        &cli.out_dir,
        &[
            ("subcommand", "observe".into()),
            ("n-cells", args.n_cells.to_string()),
            ("horizon", args.horizon.to_string()),
            ("kind", args.kind.clone()),
            ("ensemble", args.ensemble.clone()),
            ("filter-fraction", args.filter_fraction.to_string()),
            ("x0", args.x0.clone()),
            ("coefficient", args.coefficient.clone()),
            ("seed", cli.seed.to_string()),
        ],
    )?;
    let summary = json!({
        "C_emp": report.c_emp,
        "C_theo": report.c_theo,
        "samples": report.samples.len(),
        "non_observable": report.verdicts.non_observable_samples,
        "artifact_version": crate::VERSION,
        "config_hash": hash,
    });
    println!("{}", to_json(&summary)?);
    Ok(0)
}

fn parse_control_kind(grid: &Grid1D, text: &str) -> Result<ControlKind> {
    Ok(match text {
        "boundary-left" => ControlKind::Boundary(Side::Left),
        "boundary-right" => ControlKind::Boundary(Side::Right),
        other => {
            let rest = other
                .strip_prefix("internal:")
                .ok_or_else(|| Error::config(format!("unknown control kind {other:?}")))?;
            let v = parse_floats(rest, 2, "omega")?;
            ControlKind::Internal { omega: grid.node_range(v[0], v[1])? }
        }
    })
}

fn hum(cli: &Cli, args: &HumArgs) -> Result<i32> {
    let grid = build_grid(0.0, 1.0, args.n_cells)?;
    let field = parse_coefficient(&grid, &args.coefficient)?;
    let dt = dynamics::suggest_dt(&grid, &field, args.horizon, args.cfl)?;
    let filter = if args.no_filter { 1.0 } else { args.filter_fraction };
    let problem = HUMProblem {
        grid: grid.clone(),
        field: field.clone(),
        kind: parse_control_kind(&grid, &args.kind)?,
        horizon: args.horizon,
        dt,
        filter_fraction: filter,
        cg: CgConfig { tol: args.cg_tol, max_iter: args.cg_max_iter },
    };
    let solver = HumSolver::new(problem)?;
    let data = parse_state(&grid, &field, &args.data, cli.seed)?;
    let target = if args.target == "rest" {
        None
    } else {
        Some(parse_state(&grid, &field, &args.target, cli.seed.wrapping_add(1))?)
    };
    let sol = solver.solve(
        &data.y,
        &data.v,
        target.as_ref().map(|t| (t.y.as_slice(), t.v.as_slice())),
    )?;
    write_control_csv(&cli.out_dir.join("control.csv"), &sol.control, &grid, dt)?;
    let hash = write_echo(
        &cli.out_dir,
        &[
            ("subcommand", "hum".into()),
            ("n-cells", args.n_cells.to_string()),
            ("horizon", args.horizon.to_string()),
            ("cfl", args.cfl.to_string()),
            ("kind", args.kind.clone()),
            ("data", args.data.clone()),
            ("target", args.target.clone()),
            ("filter-fraction", filter.to_string()),
            ("cg-tol", args.cg_tol.to_string()),
            ("coefficient", args.coefficient.clone()),
            ("seed", cli.seed.to_string()),
        ],
    )?;
    let diagnostics = json!({
        "cg_history": sol.cg_history,
        "control_norm_sq": sol.control_norm_sq,
        "terminal_energy_ratio": sol.verification.terminal_energy_ratio,
        "raw_terminal_energy_ratio": sol.verification.raw_terminal_energy_ratio,
        "cg_iterations": sol.cg_iterations,
        "artifact_version": crate::VERSION,
        "config_hash": hash,
    });
    write_json(&cli.out_dir.join("diagnostics.json"), &diagnostics)?;
    let summary = json!({
        "terminal_energy_ratio": sol.verification.terminal_energy_ratio,
        "control_norm_sq": sol.control_norm_sq,
        "cg_iterations": sol.cg_iterations,
        "config_hash": hash,
    });
    println!("{}", to_json(&summary)?);
    Ok(0)
}

fn semilinear(cli: &Cli, args: &SemilinearArgs) -> Result<i32> {
    let grid = build_grid(0.0, 1.0, args.n_cells)?;
    let field = unit_coefficient(&grid);
    let dt = dynamics::suggest_dt(&grid, &field, args.horizon, dynamics::CFL_DEFAULT)?;
    let v = parse_floats(&args.omega, 2, "omega")?;
    let problem = HUMProblem {
        grid: grid.clone(),
        field: field.clone(),
        kind: ControlKind::Internal { omega: grid.node_range(v[0], v[1])? },
        horizon: args.horizon,
        dt,
        filter_fraction: args.filter_fraction,
        cg: CgConfig::default(),
    };
    let f = parse_nonlinearity(&args.nonlinearity)?;
    let data = parse_state(&grid, &field, &args.data, cli.seed)?;
    let target = if args.target == "rest" {
        None
    } else {
        Some(parse_state(&grid, &field, &args.target, cli.seed.wrapping_add(1))?)
    };
    let report = fixed_point_control(
        &problem,
        &f,
        &data.y,
        &data.v,
        target.as_ref().map(|t| (t.y.as_slice(), t.v.as_slice())),
        FixedPointConfig { tol: args.tol, max_iter: args.max_iter, relaxation: args.relaxation },
    )?;
    write_json(&cli.out_dir.join("fixed_point.json"), &report)?;
    if let Some(control) = &report.control {
        write_control_csv(&cli.out_dir.join("control.csv"), control, &grid, dt)?;
    }
    let hash = write_echo(
        &cli.out_dir,
        &[
            ("subcommand", "semilinear".into()),
            ("n-cells", args.n_cells.to_string()),
            ("horizon", args.horizon.to_string()),
            ("nonlinearity", args.nonlinearity.clone()),
            ("omega", args.omega.clone()),
            ("data", args.data.clone()),
            ("target", args.target.clone()),
            ("filter-fraction", args.filter_fraction.to_string()),
            ("tol", args.tol.to_string()),
            ("max-iter", args.max_iter.to_string()),
            ("relaxation", args.relaxation.to_string()),
            ("seed", cli.seed.to_string()),
        ],
    )?;
    let summary = json!({
        "converged": report.converged,
        "iterations": report.iterations,
        "terminal_ratio": report.terminal_ratio,
        "failure": report.failure,
        "config_hash": hash,
    });
    println!("{}", to_json(&summary)?);
    Ok(if report.converged { 0 } else { 3 })
}

fn stabilize(cli: &Cli, args: &StabilizeArgs) -> Result<i32> {
    let grid = build_grid(0.0, 1.0, args.n_cells)?;
    let field = parse_coefficient(&grid, &args.coefficient)?;
    let placement = match args.placement.as_str() {
        "internal" => DampingPlacement::Internal { a_weight: vec![1.0; grid.n_nodes()] },
        other => {
            let rest = other
                .strip_prefix("boundary-")
                .ok_or_else(|| Error::config(format!("unknown placement {other:?}")))?;
            let mut parts = rest.split(':');
            let side = parse_side(parts.next().unwrap_or(""))?;
            let alpha: f64 = parts
                .next()
                .ok_or_else(|| Error::config("boundary placement needs alpha"))?
                .parse()
                .map_err(|_| Error::config("bad alpha"))?;
            let b: f64 = parts.next().map(|s| s.parse()).transpose()
                .map_err(|_| Error::config("bad b"))?.unwrap_or(0.0);
            DampingPlacement::Boundary { side, alpha, b }
        }
    };
    let model = match args.model.as_str() {
        "exponential" | "exp" => FitModel::Exponential,
        "polynomial" | "poly" => FitModel::Polynomial,
        other => return Err(Error::config(format!("unknown fit model {other:?}"))),
    };
    let window = args
        .window
        .as_ref()
        .map(|w| parse_floats(w, 2, "fit window").map(|v| (v[0], v[1])))
        .transpose()?;
    let config = DecayExperimentConfig {
        grid: grid.clone(),
        field: field.clone(),
        placement,
        law: parse_law(&args.law)?,
        initial: parse_state(&grid, &field, &args.data, cli.seed)?,
        t_long: args.t_long,
        dt: None,
        model,
        fit_window: window,
        store_states: false,
    };
    let report = run_decay_experiment(&config)?;
    write_trajectory_csv(&cli.out_dir.join("energy.csv"), &report.trajectory)?;
    write_json(&cli.out_dir.join("decay_report.json"), &report)?;
    let hash = write_echo(
        &cli.out_dir,
        &[
            ("subcommand", "stabilize".into()),
            ("n-cells", args.n_cells.to_string()),
            ("t-long", args.t_long.to_string()),
            ("law", args.law.clone()),
            ("placement", args.placement.clone()),
            ("data", args.data.clone()),
            ("model", args.model.clone()),
            ("window", args.window.clone().unwrap_or_default()),
            ("coefficient", args.coefficient.clone()),
            ("seed", cli.seed.to_string()),
        ],
    )?;
    let summary = json!({
        "fitted_rate": report.fitted.rate,
        "r_squared": report.fitted.r_squared,
        "energy_ratio": report.energy_final / report.energy_initial,
        "energy_nonincreasing": report.verdicts.energy_nonincreasing,
        "config_hash": hash,
    });
    println!("{}", to_json(&summary)?);
    Ok(0)
}

fn reproduce(cli: &Cli, args: &ReproduceArgs) -> Result<i32> {
    if args.name == "list" {
        println!("{}", to_json(&json!({"scenarios": crate::scenarios::SCENARIOS}))?);
        return Ok(0);
    }
    let report = crate::scenarios::run_scenario(&args.name, &cli.out_dir, cli.seed)?;
    println!("{}", to_json(&report)?);
    Ok(if report.passed { 0 } else { 3 })
}
