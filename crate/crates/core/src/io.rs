//! Artifact output: CSV tables, JSON with full-precision floats, and the
//! trajectory reader used to resume a stored run for particle comparison.
//!
//! Every float is written as `{:.16e}` (17 significant digits), which
//! round-trips IEEE-754 doubles exactly: re-reading a written trajectory
//! reproduces the fields bitwise, and independent implementations can be
//! diffed digit by digit.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mckean_vlasov::ParticleEnsemble;
use crate::model::DensityField;
use crate::operators::OperatorBundle;
use crate::semigroup::Trajectory;
use crate::Real;

/// Full-precision scientific formatting; the single source of numeric text.
pub fn fmt_full(x: Real) -> String {
    format!("{x:.16e}")
}

/// serde_json formatter writing every f64 as `{:.16e}`.
pub struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize any JSON value with full-precision floats (compact layout).
pub fn to_json_sci(value: &serde_json::Value) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Config(format!("json serialization failed: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::Config(format!("json produced invalid utf8: {e}")))
}

/// Write one JSON value per line (diagnostics streams).
pub fn write_jsonl(path: &Path, rows: &[serde_json::Value]) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&to_json_sci(row)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Write a JSON value to a file (full-precision floats).
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = to_json_sci(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// monitors.csv: one row per time step.
pub fn write_monitors_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut s = String::from("t,mass,linf,min,newton_iters,residual\n");
    for m in &traj.monitors {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_full(m.t),
            fmt_full(m.mass),
            fmt_full(m.sup),
            fmt_full(m.min),
            m.newton_iters,
            fmt_full(m.residual)
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

/// particles.csv: final particle positions.
pub fn write_particles_csv(path: &Path, ens: &ParticleEnsemble) -> Result<()> {
    let mut s = String::from("j,x\n");
    for (j, x) in ens.positions.iter().enumerate() {
        s.push_str(&format!("{j},{}\n", fmt_full(*x)));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Store a trajectory in `dir`: `times.csv` (index -> time),
/// `trajectory_NNNN.csv` per stored field (coordinates, weight, u, v = u rho),
/// and `trajectory_meta.json` (horizon, steps, h, grid shape) so a later
/// process can rebuild the run exactly.
pub fn write_trajectory_csvs(dir: &Path, bundle: &OperatorBundle, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    let grid = &bundle.grid;

    let mut times = String::from("index,t\n");
    for (i, t) in traj.times.iter().enumerate() {
        times.push_str(&format!("{i},{}\n", fmt_full(*t)));
    }
    fs::write(dir.join("times.csv"), times)?;

    let meta = serde_json::json!({
        "horizon": traj.horizon,
        "steps": traj.steps,
        "h": traj.h,
        "dim": grid.dim(),
        "cells": grid.n(),
        "radius": grid.radius(),
        "stored": traj.times.len(),
    });
    write_json(&dir.join("trajectory_meta.json"), &meta)?;

    for (i, field) in traj.fields.iter().enumerate() {
        let mut s = String::new();
        if grid.dim() == 1 {
            s.push_str("x,rho,u,v\n");
        } else {
            s.push_str("x0,x1,rho,u,v\n");
        }
        for k in 0..grid.cell_count() {
            let x = grid.coords(k);
            let rho = bundle.weight.cell[k];
            let u = field.values[k];
            if grid.dim() == 1 {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_full(x[0]),
                    fmt_full(rho),
                    fmt_full(u),
                    fmt_full(u * rho)
                ));
            } else {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_full(x[0]),
                    fmt_full(x[1]),
                    fmt_full(rho),
                    fmt_full(u),
                    fmt_full(u * rho)
                ));
            }
        }
        fs::write(dir.join(format!("trajectory_{i:04}.csv")), s)?;
    }
    Ok(())
}

fn meta_num(meta: &serde_json::Value, key: &str) -> Result<Real> {
    meta.get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::Config(format!("trajectory_meta.json lacks numeric '{key}'")))
}

/// Rebuild a stored trajectory against a compatible bundle. The grid shape
/// is cross-checked with the metadata and the stored weight column with the
/// bundle's weight, so comparing against the wrong problem fails loudly.
/// Monitors are not reconstructed (the stored monitors.csv remains the
/// authoritative per-step record).
pub fn read_trajectory_dir(dir: &Path, bundle: &OperatorBundle) -> Result<Trajectory> {
    let meta_text = fs::read_to_string(dir.join("trajectory_meta.json"))?;
    let meta: serde_json::Value = serde_json::from_str(&meta_text)
        .map_err(|e| Error::Config(format!("trajectory_meta.json is not valid JSON: {e}")))?;
    let horizon = meta_num(&meta, "horizon")?;
    let steps = meta_num(&meta, "steps")? as usize;
    let h = meta_num(&meta, "h")?;
    let dim = meta_num(&meta, "dim")? as usize;
    let cells = meta_num(&meta, "cells")? as usize;
    let radius = meta_num(&meta, "radius")?;
    let grid = &bundle.grid;
    if dim != grid.dim() || cells != grid.n() || (radius - grid.radius()).abs() > 1e-12 * radius {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "grid {}^{} with radius {}",
                grid.n(),
                grid.dim(),
                grid.radius()
            ),
            got: format!("stored trajectory on {cells}^{dim} with radius {radius}"),
        });
    }

    let times_text = fs::read_to_string(dir.join("times.csv"))?;
    let mut times = Vec::new();
    for line in times_text.lines().skip(1) {
        let mut parts = line.split(',');
        let _idx = parts.next();
        let t: Real = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("times.csv: malformed line '{line}'")))?;
        times.push(t);
    }
    if times.is_empty() {
        return Err(Error::Config("times.csv lists no stored samples".into()));
    }

    let u_column = if dim == 1 { 2 } else { 3 };
    let mut fields = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let path = dir.join(format!("trajectory_{i:04}.csv"));
        let text = fs::read_to_string(&path)?;
        let mut values = Vec::with_capacity(grid.cell_count());
        for (k, line) in text.lines().skip(1).enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < u_column + 1 {
                return Err(Error::Config(format!(
                    "{}: malformed row '{line}'",
                    path.display()
                )));
            }
            let rho: Real = cols[u_column - 1]
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad weight entry", path.display())))?;
            let u: Real = cols[u_column]
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad field entry", path.display())))?;
            if k >= grid.cell_count() {
                return Err(Error::Config(format!(
                    "{}: more rows than grid cells",
                    path.display()
                )));
            }
            let expect = bundle.weight.cell[k];
            if (rho - expect).abs() > 1e-9 * expect {
                return Err(Error::ShapeMismatch {
                    expected: format!("weight {expect:e} at cell {k} (same problem setup)"),
                    got: format!("stored weight {rho:e}"),
                });
            }
            values.push(u);
        }
        fields.push(DensityField::from_values(grid, values)?);
    }

    Ok(Trajectory {
        horizon,
        steps,
        h,
        times,
        fields,
        monitors: Vec::new(),
        breaches: Vec::new(),
    })
}
