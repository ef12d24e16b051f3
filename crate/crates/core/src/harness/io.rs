//! On-disk formats: the per-run trace CSV, run metadata JSON, the sweep
//! comparison CSV and the final-trial output CSV.
//!
//! Trace columns, one row per trial `k` (ascending):
//!
//! | column | meaning |
//! |---|---|
//! | `k` | trial index, from 1 |
//! | `alpha` | step size `α_k` |
//! | `phi` | contraction factor `φ_k` |
//! | `cost` | `f_k(x_k)` |
//! | `optimal_cost` | `f_k(x*_k)` |
//! | `dynamic_regret` | `J_d(k)` |
//! | `static_regret` | `J_s(k)` |
//! | `term_i`, `term_ii`, `term_iii` | dynamic bound components at horizon `k` |
//! | `sigma` | gradient-error size `σ_k` |
//! | `e` | optimum drift `e_k` (empty on the last row) |
//! | `tracking_rms` | RMS of `y_k - r` |
//! | `bound_total` | `term_i + term_ii + term_iii` |
//! | `static_bound` | static bound at horizon `k` (empty where not evaluated) |
//! | `gamma_k` | uncertainty size in force at trial `k` |
//! | `distance_w` | `‖x_k - x*_k‖_W` |

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::run::RunOutput;

pub const TRACE_COLUMNS: [&str; 17] = [
    "k",
    "alpha",
    "phi",
    "cost",
    "optimal_cost",
    "dynamic_regret",
    "static_regret",
    "term_i",
    "term_ii",
    "term_iii",
    "sigma",
    "e",
    "tracking_rms",
    "bound_total",
    "static_bound",
    "gamma_k",
    "distance_w",
];

pub const COMPARISON_COLUMNS: [&str; 5] = ["c", "k", "dynamic_regret", "term_iii", "static_regret"];
pub const FINAL_OUTPUT_COLUMNS: [&str; 4] = ["t", "reference", "adaptive", "non_adaptive"];
pub const METADATA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub alpha: f64,
    pub phi: f64,
    pub cost: f64,
    pub optimal_cost: f64,
    pub dynamic_regret: f64,
    pub static_regret: f64,
    pub term_i: f64,
    pub term_ii: f64,
    pub term_iii: f64,
    pub sigma: f64,
    pub e: Option<f64>,
    pub tracking_rms: f64,
    pub bound_total: f64,
    pub static_bound: Option<f64>,
    pub gamma_k: f64,
    pub distance_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub c: f64,
    pub k: usize,
    pub dynamic_regret: f64,
    pub term_iii: f64,
    pub static_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalOutputRow {
    pub t: usize,
    pub reference: f64,
    pub adaptive: f64,
    pub non_adaptive: f64,
}

/// Run summary written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub metadata_version: u32,
    pub trace_file: String,
    pub columns: Vec<String>,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub rho: f64,
    pub w: f64,
    pub gamma0: f64,
    pub w_gamma: f64,
    pub max_step: f64,
    pub alpha0: f64,
    pub decay: f64,
    pub lipschitz: f64,
    pub lipschitz_check: Option<f64>,
    pub delta_x1: f64,
    pub sigma_bar: f64,
    pub static_stride: usize,
    pub dynamic_regret: f64,
    pub static_regret: f64,
    pub bound_total: f64,
    pub final_tracking_rms: f64,
    pub indefinite_regularizer_iterations: Vec<usize>,
}

pub fn trace_rows(out: &RunOutput) -> Vec<TraceRow> {
    let t = &out.trace;
    let jd = t.dynamic_regret_series();
    let js = t.static_regret_series();
    let bounds = t.dynamic_bound_series();
    let static_bounds = t.static_bound_series();
    (0..t.len())
        .map(|i| TraceRow {
            k: i + 1,
            alpha: t.alpha[i],
            phi: t.phi[i],
            cost: t.cost[i],
            optimal_cost: t.optimal_cost[i],
            dynamic_regret: jd[i],
            static_regret: js[i],
            term_i: bounds[i].term_i,
            term_ii: bounds[i].term_ii,
            term_iii: bounds[i].term_iii,
            sigma: t.sigma[i],
            e: t.drift.get(i).copied(),
            tracking_rms: t.tracking_rms[i],
            bound_total: bounds[i].total(),
            static_bound: static_bounds[i],
            gamma_k: out.gamma[i],
            distance_w: t.distance[i],
        })
        .collect()
}

pub fn metadata(out: &RunOutput, config: &ExperimentConfig, trace_file: &str) -> RunMetadata {
    let t = &out.trace;
    let last = t.len();
    let bound = t.dynamic_bound_series().last().map_or(0.0, |b| b.total());
    RunMetadata {
        metadata_version: METADATA_VERSION,
        trace_file: trace_file.to_string(),
        columns: TRACE_COLUMNS.iter().map(|c| c.to_string()).collect(),
        config: config.clone(),
        rows: last,
        rho: out.setup.rho,
        w: out.setup.w_factor,
        gamma0: config.gamma0,
        w_gamma: out.setup.w_factor * config.gamma0,
        max_step: out.setup.max_step,
        alpha0: out.setup.schedule.alpha0,
        decay: out.setup.schedule.decay,
        lipschitz: t.lipschitz,
        lipschitz_check: out.lipschitz_check,
        delta_x1: t.delta_x1,
        sigma_bar: t.sigma.iter().copied().fold(0.0, f64::max),
        static_stride: config.effective_static_stride(),
        dynamic_regret: t.dynamic_regret_series().last().copied().unwrap_or(0.0),
        static_regret: t.static_regret_series().last().copied().unwrap_or(0.0),
        bound_total: bound,
        final_tracking_rms: t.tracking_rms.last().copied().unwrap_or(0.0),
        indefinite_regularizer_iterations: out.indefinite_regularizer.clone(),
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    read_rows(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_run(
    out: &RunOutput,
    config: &ExperimentConfig,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_name = format!("{stem}.csv");
    let csv_path = dir.join(&csv_name);
    let json_path = dir.join(format!("{stem}.json"));
    write_rows(&csv_path, &trace_rows(out))?;
    write_json(&json_path, &metadata(out, config, &csv_name))?;
    Ok((csv_path, json_path))
}

pub fn final_output_rows(
    adaptive: &RunOutput,
    non_adaptive: &RunOutput,
) -> Result<Vec<FinalOutputRow>> {
    if adaptive.reference != non_adaptive.reference {
        return Err(Error::InvalidParameter(
            "paired runs must share the reference".into(),
        ));
    }
    Ok((0..adaptive.reference.len())
        .map(|t| FinalOutputRow {
            t,
            reference: adaptive.reference[t],
            adaptive: adaptive.final_output[t],
            non_adaptive: non_adaptive.final_output[t],
        })
        .collect())
}
