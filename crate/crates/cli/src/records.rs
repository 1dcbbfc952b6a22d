//! NDJSON record stream and CSV aggregation. One JSON object per line,
//! discriminated by a `type` field. Field snapshots carry their values
//! as decimal literals with 17 significant digits, so re-reading them is
//! lossless.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use std::io::Write;
use svcl_core::dynamics::{SimConfig, TrajectoryCheckpoints};
use svcl_core::ergolab::ExperimentRecord;
use svcl_core::field::SpectralField;
use svcl_core::lattice::ConditionReport;
use svcl_core::malliavin::MalliavinGram;

/// Serialize with an injected `type` tag.
pub fn write_tagged<T: Serialize>(w: &mut dyn Write, tag: &str, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    match &mut v {
        Value::Object(map) => {
            map.insert("type".into(), Value::String(tag.into()));
        }
        _ => anyhow::bail!("record must serialize to an object"),
    }
    serde_json::to_writer(&mut *w, &v)?;
    writeln!(w)?;
    Ok(())
}

/// Hand-formatted field snapshot: nonzero coefficients as
/// `[k-vector, value]` pairs with 17 significant digits.
pub fn write_field_snapshot(
    w: &mut dyn Write,
    field: &SpectralField,
    t: Option<f64>,
) -> Result<()> {
    write!(
        w,
        "{{\"type\":\"field_snapshot\",\"dim\":{},\"cutoff\":{}",
        field.dim(),
        field.cutoff()
    )?;
    if let Some(t) = t {
        write!(w, ",\"t\":{t}")?;
    }
    write!(w, ",\"coeffs\":[")?;
    let mut first = true;
    for (k, v) in field.modes() {
        if v == 0.0 {
            continue;
        }
        if !first {
            write!(w, ",")?;
        }
        first = false;
        write!(w, "[[")?;
        for (i, c) in k.0.iter().enumerate() {
            if i > 0 {
                write!(w, ",")?;
            }
            write!(w, "{c}")?;
        }
        write!(w, "],{:.16e}]", v)?;
    }
    writeln!(w, "]}}")?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryHeader {
    config_hash: String,
    seed: u64,
    stream_id: u64,
    dt: f64,
    t_end: f64,
    scheme: String,
    cutoff: usize,
    grid_size: usize,
    nu: f64,
    steps: usize,
}

pub fn write_trajectory(
    w: &mut dyn Write,
    cfg: &SimConfig,
    traj: &TrajectoryCheckpoints,
    every: usize,
) -> Result<()> {
    let header = TrajectoryHeader {
        config_hash: format!("{:016x}", cfg.fingerprint()),
        seed: cfg.seed,
        stream_id: cfg.stream_id,
        dt: cfg.dt,
        t_end: cfg.t_end,
        scheme: format!("{:?}", cfg.scheme),
        cutoff: cfg.cutoff,
        grid_size: cfg.grid_size,
        nu: cfg.nu,
        steps: traj.states.len() - 1,
    };
    write_tagged(w, "trajectory_header", &header)?;
    for (i, state) in traj.states.iter().enumerate() {
        if i % every == 0 || i + 1 == traj.states.len() {
            write_field_snapshot(w, state, Some(traj.t0 + i as f64 * cfg.dt))?;
        }
    }
    Ok(())
}

pub fn write_condition_report(w: &mut dyn Write, report: &ConditionReport) -> Result<()> {
    write_tagged(w, "condition_report", report)
}

#[derive(Serialize)]
struct GramRecord {
    window: (f64, f64),
    basis: Vec<Vec<i32>>,
    matrix_row_major: Vec<f64>,
    eigenvalues: Vec<f64>,
    quad_nodes: usize,
    trajectory_hash: String,
}

pub fn write_gram(w: &mut dyn Write, gram: &MalliavinGram) -> Result<()> {
    let d = gram.dim();
    let rec = GramRecord {
        window: gram.window,
        basis: gram.basis.iter().map(|b| b.k.0.clone()).collect(),
        matrix_row_major: (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| gram.matrix[(r, c)])
            .collect(),
        eigenvalues: gram.eigenvalues(),
        quad_nodes: gram.quad_nodes,
        trajectory_hash: format!("{:016x}", gram.trajectory_hash),
    };
    write_tagged(w, "gram", &rec)
}

pub fn write_experiment(w: &mut dyn Write, rec: &ExperimentRecord) -> Result<()> {
    write_tagged(w, "experiment", rec)
}

/// Aggregate experiment records from an NDJSON stream into a CSV summary.
pub fn report_csv(input: &str) -> Result<String> {
    let mut out = String::from("name,verdict,detail_key,detail_value\n");
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line)
            .with_context(|| format!("malformed NDJSON on line {}", i + 1))?;
        if v.get("type").and_then(Value::as_str) != Some("experiment") {
            continue;
        }
        let name = v.get("name").and_then(Value::as_str).unwrap_or("?");
        let verdict = v
            .get("verdict")
            .and_then(Value::as_str)
            .unwrap_or("?")
            .to_string();
        if let Some(details) = v.get("details").and_then(Value::as_object) {
            for (k, val) in details {
                out.push_str(&format!("{name},{verdict},{k},{val}\n"));
            }
        } else {
            out.push_str(&format!("{name},{verdict},,\n"));
        }
    }
    Ok(out)
}

/// CSV series export: one file body per recorded series.
pub fn series_csv(rec: &ExperimentRecord) -> Vec<(String, String)> {
    rec.series
        .iter()
        .map(|s| {
            let mut body = String::from("t,value\n");
            for (t, v) in &s.points {
                body.push_str(&format!("{t},{v}\n"));
            }
            (s.name.clone(), body)
        })
        .collect()
}
