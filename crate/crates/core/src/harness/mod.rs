//! Experiment driver: configuration, the trial loop, step-size sweeps,
//! adaptive/non-adaptive comparison and file output.

mod bounds;
mod config;
pub mod io;
mod run;

use std::path::{Path, PathBuf};

pub use bounds::{check_bounds, BoundsReport, HypothesisCheck};
pub use config::{
    AdaptiveEmulation, BenchmarkRegularizer, ExperimentConfig, ModelSource, ReferenceSpec,
    Regularization, StepConfig, UncertaintyMode, SCHEMA_VERSION,
};
pub use run::{run_experiment, run_experiment_with, RunOptions, RunOutput, Setup};

use crate::error::{Error, Result};
use io::ComparisonRow;

pub const DEFAULT_SWEEP: [f64; 3] = [0.0, 0.25, 0.5];

/// File stem for a sweep member, e.g. `trace_c0.25`.
pub fn sweep_stem(c: f64) -> String {
    format!("trace_c{c}")
}

/// Runs `base` once per decay exponent, in parallel, with the same seed.
pub fn sweep_step_sizes(base: &ExperimentConfig, decays: &[f64]) -> Result<Vec<RunOutput>> {
    if decays.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs at least one decay exponent".into(),
        ));
    }
    let configs: Vec<ExperimentConfig> = decays
        .iter()
        .map(|&c| {
            let mut cfg = base.clone();
            cfg.step.decay = c;
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_>>()?;
    let results: Vec<Result<RunOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || run_experiment(cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}

pub fn comparison_rows(decays: &[f64], runs: &[RunOutput]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for (&c, run) in decays.iter().zip(runs) {
        let jd = run.trace.dynamic_regret_series();
        let js = run.trace.static_regret_series();
        let bounds = run.trace.dynamic_bound_series();
        for k in 0..run.trace.len() {
            rows.push(ComparisonRow {
                c,
                k: k + 1,
                dynamic_regret: jd[k],
                term_iii: bounds[k].term_iii,
                static_regret: js[k],
            });
        }
    }
    rows
}

/// Sweep plus files: one trace/metadata pair per `c` and `comparison.csv`.
pub fn sweep_to_dir(base: &ExperimentConfig, decays: &[f64], dir: &Path) -> Result<Vec<PathBuf>> {
    let runs = sweep_step_sizes(base, decays)?;
    let mut written = Vec::new();
    for (&c, run) in decays.iter().zip(&runs) {
        let mut cfg = base.clone();
        cfg.step.decay = c;
        let (csv, json) = io::write_run(run, &cfg, dir, &sweep_stem(c))?;
        written.extend([csv, json]);
    }
    let path = dir.join("comparison.csv");
    io::write_rows(&path, &comparison_rows(decays, &runs))?;
    written.push(path);
    Ok(written)
}

/// Configurations of the paired comparison: non-adaptive (per-trial draws at
/// `γ₀`, the base decay) and adaptive (`γ_k` schedule, constant step).
pub fn adaptive_pair(base: &ExperimentConfig) -> (ExperimentConfig, ExperimentConfig) {
    let mut adaptive = base.clone();
    adaptive.uncertainty = UncertaintyMode::Adaptive;
    adaptive.step.decay = 0.0;
    let mut non_adaptive = base.clone();
    non_adaptive.uncertainty = UncertaintyMode::PerIteration;
    (adaptive, non_adaptive)
}

/// Returns `(adaptive, non_adaptive)` runs with matched seeds.
pub fn compare_adaptive(base: &ExperimentConfig) -> Result<(RunOutput, RunOutput)> {
    let (a_cfg, n_cfg) = adaptive_pair(base);
    let (a, n) = std::thread::scope(|scope| {
        let a = scope.spawn(|| run_experiment(&a_cfg));
        let n = scope.spawn(|| run_experiment(&n_cfg));
        (
            a.join().expect("adaptive worker panicked"),
            n.join().expect("non-adaptive worker panicked"),
        )
    });
    Ok((a?, n?))
}

pub fn compare_adaptive_to_dir(base: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let (a_cfg, n_cfg) = adaptive_pair(base);
    let (a, n) = compare_adaptive(base)?;
    let (a_csv, a_json) = io::write_run(&a, &a_cfg, dir, "trace_adaptive")?;
    let (n_csv, n_json) = io::write_run(&n, &n_cfg, dir, "trace_non_adaptive")?;
    let path = dir.join("final_outputs.csv");
    io::write_rows(&path, &io::final_output_rows(&a, &n)?)?;
    Ok(vec![a_csv, a_json, n_csv, n_json, path])
}
