//! Deterministic output plumbing: JSON with 17-significant-digit floats,
//! CSV writers for trajectories and controls, and the config fingerprint
//! carried by every report.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// 17 significant digits: lossless for f64, byte-stable across runs.
pub fn fmt_g17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

struct G17Formatter;

impl serde_json::ser::Formatter for G17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_g17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes with the 17-digit float convention.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, G17Formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::config(format!("serialization failed: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::config(format!("non-utf8 json: {e}")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// FNV-1a fingerprint of a canonical config echo.
pub fn config_hash(echo: &str) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in echo.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

/// t, E, flux_left, flux_right series of a recorded run.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    writeln!(w, "t,E,flux_left,flux_right")?;
    for (i, t) in traj.times.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_g17(*t),
            fmt_g17(traj.energy[i]),
            fmt_g17(traj.flux_left[i]),
            fmt_g17(traj.flux_right[i]),
        )?;
    }
    Ok(())
}

/// Full-field snapshots `snapshot_<n>.csv` (columns x, y, v) every `stride`
/// levels.
pub fn write_snapshots(dir: &Path, traj: &Trajectory, stride: usize) -> Result<usize> {
    let states = traj
        .states
        .as_ref()
        .ok_or_else(|| Error::config("trajectory was recorded without field snapshots"))?;
    let stride = stride.max(1);
    let mut count = 0;
    for (n, state) in states.iter().enumerate() {
        if n % stride != 0 && n != states.len() - 1 {
            continue;
        }
        let file = std::fs::File::create(dir.join(format!("snapshot_{n}.csv")))?;
        let mut w = io::BufWriter::new(file);
        writeln!(w, "x,y,v")?;
        for j in 0..traj.grid.n_nodes() {
            writeln!(
                w,
                "{},{},{}",
                fmt_g17(traj.grid.node(j)),
                fmt_g17(state.y[j]),
                fmt_g17(state.v[j]),
            )?;
        }
        count += 1;
    }
    Ok(count)
}

/// Boundary control as (t, value) rows; internal control as (t, x, value).
pub fn write_control_csv(
    path: &Path,
    control: &crate::hum::Control,
    grid: &crate::grid::Grid1D,
    dt: f64,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    match control {
        crate::hum::Control::Boundary { signal, .. } => {
            writeln!(w, "t,value")?;
            for (n, v) in signal.iter().enumerate() {
                writeln!(w, "{},{}", fmt_g17(n as f64 * dt), fmt_g17(*v))?;
            }
        }
        crate::hum::Control::Internal { omega, field } => {
            writeln!(w, "t,x,value")?;
            for (n, row) in field.iter().enumerate() {
                for (i, v) in row.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{}",
                        fmt_g17(n as f64 * dt),
                        fmt_g17(grid.node(omega.0 + i)),
                        fmt_g17(*v),
                    )?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_roundtrips() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, -2.5e-300, 0.0] {
            let s = fmt_g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s} does not round-trip");
        }
        assert_eq!(fmt_g17(f64::INFINITY), "null");
    }

    #[test]
    fn json_uses_full_digits() {
        #[derive(Serialize)]
        struct S {
            v: f64,
        }
        let s = to_json(&S { v: std::f64::consts::PI }).unwrap();
        assert!(s.contains("3.1415926535897931e0"), "{s}");
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash("a=1"), config_hash("a=1"));
        assert_ne!(config_hash("a=1"), config_hash("a=2"));
    }
}
