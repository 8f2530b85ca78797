//! Trace and plot-data files.
//!
//! The trace CSV uses the fixed header below; floats are printed with Rust's
//! shortest round-trip formatting, so re-parsing a file reproduces the exact
//! values that were written. The energy window file carries the slice of the
//! energy series in slots `[101, 400]` for plotting against the full series.

use crate::harness::{Metrics, RunKey, SimRun, TraceRecord};
use std::path::{Path, PathBuf};
use storage_dr_core::{ControlAction, DisutilitySpec, ExogenousSample, StateId};
use thiserror::Error;

pub const TRACE_HEADER: &str = "t,p,q,r,s,l_tilde,d_l,d_c,d_s,h_s,r_c,e_before,e_after,cost";

/// Plot window of the energy series (inclusive slot range).
pub const ENERGY_WINDOW: (usize, usize) = (101, 400);

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace {path}:{line}: {detail}")]
    Malformed {
        path: String,
        line: usize,
        detail: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn state_name<'a>(
    disutility: &'a DisutilitySpec,
    s: StateId,
    path: &Path,
) -> Result<&'a str, EmitError> {
    disutility
        .states
        .get(s.0)
        .map(|st| st.name.as_str())
        .ok_or_else(|| EmitError::Malformed {
            path: path.display().to_string(),
            line: 0,
            detail: format!("state index {} not in disutility spec", s.0),
        })
}

pub fn write_trace_csv(
    path: &Path,
    trace: &[TraceRecord],
    disutility: &DisutilitySpec,
) -> Result<(), EmitError> {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let s = state_name(disutility, r.x.s, path)?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.x.p,
            r.x.q,
            r.x.r,
            s,
            r.action.l_tilde,
            r.action.d_l,
            r.action.d_c,
            r.action.d_s,
            r.action.h_s,
            r.action.r_c,
            r.e_before,
            r.e_after,
            r.cost
        ));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn read_trace_csv(
    path: &Path,
    disutility: &DisutilitySpec,
) -> Result<Vec<TraceRecord>, EmitError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRACE_HEADER => {}
        other => {
            return Err(EmitError::Malformed {
                path: path.display().to_string(),
                line: 1,
                detail: format!("bad header: {:?}", other.map(|(_, h)| h)),
            })
        }
    }
    let mut trace = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(EmitError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                detail: format!("expected 14 fields, got {}", fields.len()),
            });
        }
        let malformed = |detail: String| EmitError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            detail,
        };
        let parse = |f: &str| -> Result<f64, EmitError> {
            f.parse::<f64>()
                .map_err(|e| malformed(format!("bad float {f:?}: {e}")))
        };
        let t: usize = fields[0]
            .parse()
            .map_err(|e| malformed(format!("bad slot index {:?}: {e}", fields[0])))?;
        let s = disutility
            .states
            .iter()
            .position(|st| st.name == fields[4])
            .map(StateId)
            .ok_or_else(|| malformed(format!("unknown state {:?}", fields[4])))?;
        trace.push(TraceRecord {
            t,
            x: ExogenousSample {
                p: parse(fields[1])?,
                q: parse(fields[2])?,
                r: parse(fields[3])?,
                s,
                exo_load: None,
            },
            action: ControlAction {
                l_tilde: parse(fields[5])?,
                d_l: parse(fields[6])?,
                d_c: parse(fields[7])?,
                d_s: parse(fields[8])?,
                h_s: parse(fields[9])?,
                r_c: parse(fields[10])?,
            },
            e_before: parse(fields[11])?,
            e_after: parse(fields[12])?,
            cost: parse(fields[13])?,
        });
    }
    Ok(trace)
}

/// Full energy series `(t, e_before)` as two-column CSV.
pub fn write_energy_series_csv(path: &Path, trace: &[TraceRecord]) -> Result<(), EmitError> {
    let mut out = String::from("t,e\n");
    for r in trace {
        out.push_str(&format!("{},{}\n", r.t, r.e_before));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Energy series restricted to slots `[lo, hi]` (inclusive).
pub fn write_energy_window_csv(
    path: &Path,
    trace: &[TraceRecord],
    lo: usize,
    hi: usize,
) -> Result<(), EmitError> {
    let mut out = String::from("t,e\n");
    for r in trace.iter().filter(|r| r.t >= lo && r.t <= hi) {
        out.push_str(&format!("{},{}\n", r.t, r.e_before));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Average-cost-versus-V series as two-column CSV.
pub fn write_cost_vs_v_csv(path: &Path, rows: &[(f64, f64)]) -> Result<(), EmitError> {
    let mut out = String::from("v,avg_cost\n");
    for (v, cost) in rows {
        out.push_str(&format!("{v},{cost}\n"));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

#[derive(serde::Serialize)]
struct MetricsFile<'a> {
    key: &'a RunKey,
    metrics: &'a Metrics,
}

pub fn write_metrics_json(path: &Path, key: &RunKey, metrics: &Metrics) -> Result<(), EmitError> {
    let text = serde_json::to_string_pretty(&MetricsFile { key, metrics })
        .expect("metrics are always serializable");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub trace: PathBuf,
    pub metrics: PathBuf,
    pub energy_series: PathBuf,
    pub energy_window: PathBuf,
}

/// Writes the standard output set of one run into `dir`.
pub fn emit_outputs(
    dir: &Path,
    run: &SimRun,
    disutility: &DisutilitySpec,
) -> Result<EmittedFiles, EmitError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = EmittedFiles {
        trace: dir.join("trace.csv"),
        metrics: dir.join("metrics.json"),
        energy_series: dir.join("energy_series.csv"),
        energy_window: dir.join("energy_window.csv"),
    };
    write_trace_csv(&files.trace, &run.trace, disutility)?;
    write_metrics_json(&files.metrics, &run.key, &run.metrics)?;
    write_energy_series_csv(&files.energy_series, &run.trace)?;
    write_energy_window_csv(
        &files.energy_window,
        &run.trace,
        ENERGY_WINDOW.0,
        ENERGY_WINDOW.1,
    )?;
    Ok(files)
}

/// Convenience used by `verify` and tests: recompute the average cost of a
/// parsed trace.
pub fn average_cost(trace: &[TraceRecord]) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    trace.iter().map(|r| r.cost).sum::<f64>() / trace.len() as f64
}
