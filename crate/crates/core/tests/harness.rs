use std::path::PathBuf;
use std::process::Command;

use pogd_ilc::harness::io::{
    self, ComparisonRow, FinalOutputRow, COMPARISON_COLUMNS, FINAL_OUTPUT_COLUMNS, TRACE_COLUMNS,
};
use pogd_ilc::harness::{
    check_bounds, compare_adaptive_to_dir, run_experiment, sweep_to_dir, ExperimentConfig,
    Regularization, UncertaintyMode,
};

fn small() -> ExperimentConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "configs", "paper_shape.json"]
        .iter()
        .collect();
    let mut cfg = ExperimentConfig::from_json_file(path).unwrap();
    cfg.horizon = 16;
    cfg.iterations = 40;
    cfg
}

fn header(path: &std::path::Path) -> Vec<String> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .headers()
        .unwrap()
        .iter()
        .map(str::to_owned)
        .collect()
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = small();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    io::write_run(&run_experiment(&cfg).unwrap(), &cfg, a.path(), "trace").unwrap();
    io::write_run(&run_experiment(&cfg).unwrap(), &cfg, b.path(), "trace").unwrap();
    for name in ["trace.csv", "trace.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn trace_and_metadata_schema() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg).unwrap();
    let (csv_path, json_path) = io::write_run(&out, &cfg, dir.path(), "trace").unwrap();
    assert_eq!(header(&csv_path), TRACE_COLUMNS);

    let rows = io::read_trace(&csv_path).unwrap();
    assert_eq!(rows.len(), cfg.iterations);
    assert!(rows.iter().enumerate().all(|(i, r)| r.k == i + 1));
    assert!(rows
        .windows(2)
        .all(|w| w[1].dynamic_regret >= w[0].dynamic_regret));
    assert!(rows[..rows.len() - 1].iter().all(|r| r.e.is_some()));
    assert!(rows.last().unwrap().e.is_none());
    assert!(rows
        .iter()
        .all(|r| r.dynamic_regret <= r.bound_total * (1.0 + 1e-6)));

    let meta = io::read_metadata(&json_path).unwrap();
    assert_eq!(meta.metadata_version, io::METADATA_VERSION);
    assert_eq!(meta.trace_file, "trace.csv");
    assert_eq!(meta.columns, TRACE_COLUMNS);
    assert_eq!(meta.rows, rows.len());
    assert_eq!(meta.config, cfg);
    assert_eq!(meta.dynamic_regret, rows.last().unwrap().dynamic_regret);
    assert!(meta.w_gamma < 1.0);
    assert!(meta.alpha0 > 0.0 && meta.alpha0 < meta.max_step);

    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    for key in [
        "rho",
        "w",
        "gamma0",
        "alpha0",
        "decay",
        "lipschitz",
        "config",
    ] {
        assert!(raw.get(key).is_some(), "metadata lacks {key}");
    }
}

#[test]
fn sweep_writes_one_trace_per_decay() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let decays = [0.0, 0.25, 0.5];
    let written = sweep_to_dir(&cfg, &decays, dir.path()).unwrap();
    assert_eq!(written.len(), 7);
    for stem in ["trace_c0", "trace_c0.25", "trace_c0.5"] {
        assert!(dir.path().join(format!("{stem}.csv")).exists());
        assert!(dir.path().join(format!("{stem}.json")).exists());
    }
    let comparison = dir.path().join("comparison.csv");
    assert_eq!(header(&comparison), COMPARISON_COLUMNS);
    let rows: Vec<ComparisonRow> = io::read_rows(&comparison).unwrap();
    assert_eq!(rows.len(), decays.len() * cfg.iterations);

    // uncertainty draws and benchmark optima do not depend on the step size
    let traces: Vec<_> = ["trace_c0", "trace_c0.25", "trace_c0.5"]
        .iter()
        .map(|s| io::read_trace(&dir.path().join(format!("{s}.csv"))).unwrap())
        .collect();
    for k in 0..cfg.iterations {
        assert_eq!(traces[0][k].optimal_cost, traces[1][k].optimal_cost);
        assert_eq!(traces[0][k].optimal_cost, traces[2][k].optimal_cost);
    }
}

#[test]
fn comparison_shares_reference() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let written = compare_adaptive_to_dir(&cfg, dir.path()).unwrap();
    assert_eq!(written.len(), 5);
    let path = dir.path().join("final_outputs.csv");
    assert_eq!(header(&path), FINAL_OUTPUT_COLUMNS);
    let rows: Vec<FinalOutputRow> = io::read_rows(&path).unwrap();
    assert_eq!(rows.len(), cfg.horizon);
    let adaptive = io::read_metadata(&dir.path().join("trace_adaptive.json")).unwrap();
    assert_eq!(adaptive.config.uncertainty, UncertaintyMode::Adaptive);
    assert_eq!(adaptive.decay, 0.0);
    let gammas: Vec<f64> = io::read_trace(&dir.path().join("trace_adaptive.csv"))
        .unwrap()
        .iter()
        .map(|r| r.gamma_k)
        .collect();
    assert!(gammas.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn check_bounds_without_uncertainty_allows_step_two() {
    let mut cfg = small();
    cfg.gamma0 = 0.0;
    let report = check_bounds(&cfg).unwrap();
    assert!(report.all_pass());
    assert!((report.max_step.unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn check_bounds_flags_large_uncertainty() {
    let mut cfg = small();
    cfg.gamma0 = 50.0;
    cfg.regularization = Regularization::Fixed { rho: 1e-9 };
    let report = check_bounds(&cfg).unwrap();
    assert!(!report.all_pass());
    let failed = report.checks.iter().find(|c| !c.pass).unwrap();
    assert_eq!(failed.name, "wγ < 1");
    assert!(report.max_step.is_none());
    assert!(report.to_string().contains("FAIL wγ < 1"));
}

#[test]
fn exact_model_full_step_converges_in_one_trial() {
    let mut cfg = small();
    cfg.gamma0 = 0.0;
    cfg.input_bounds = None;
    cfg.step.alpha0 = Some(1.0);
    cfg.uncertainty = UncertaintyMode::FixedDraw;
    let out = run_experiment(&cfg).unwrap();
    let jd = out.trace.dynamic_regret_series();
    assert!(jd[0] > 0.0);
    for j in &jd {
        assert!((j - jd[0]).abs() <= 1e-9 * jd[0], "{j} vs {}", jd[0]);
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pogd-ilc"))
}

#[test]
fn cli_run_and_check_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    let mut cfg = small();
    cfg.iterations = 10;
    std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();

    let out_dir = dir.path().join("out");
    let status = cli()
        .args([
            "run",
            config.to_str().unwrap(),
            "--seed",
            "5",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let meta = io::read_metadata(&out_dir.join("trace.json")).unwrap();
    assert_eq!(meta.config.seed, 5);
    assert_eq!(meta.rows, 10);

    let status = cli()
        .args(["check-bounds", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&status.stdout).contains("PASS wγ < 1"));

    std::fs::write(&config, r#"{"horizon": 0}"#).unwrap();
    let status = cli()
        .args(["run", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("horizon"));

    cfg.gamma0 = 50.0;
    cfg.regularization = Regularization::Fixed { rho: 1e-9 };
    std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();
    let status = cli()
        .args(["check-bounds", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}
