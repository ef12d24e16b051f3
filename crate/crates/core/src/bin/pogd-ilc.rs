use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pogd_ilc::harness::{self, io, ExperimentConfig, DEFAULT_SWEEP};

#[derive(Parser)]
#[command(
    version,
    about = "Preconditioned online gradient descent for iterative learning control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON)
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of trials
    #[arg(long)]
    iterations: Option<usize>,
    /// Directory for CSV and JSON output
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: trace.csv and trace.json
    Run(Common),
    /// Step-size decay sweep sharing one seed
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated decay exponents
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP)]
        c: Vec<f64>,
    },
    /// Adaptive vs non-adaptive run with matched seeds
    CompareAdaptive(Common),
    /// Check the step-size and contraction hypotheses without running
    CheckBounds(Common),
}

fn load(common: &Common) -> pogd_ilc::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_json_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(iterations) = common.iterations {
        cfg.iterations = iterations;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> pogd_ilc::Result<bool> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let out = harness::run_experiment(&cfg)?;
            let (csv, json) = io::write_run(&out, &cfg, &common.out_dir, "trace")?;
            let meta = io::metadata(&out, &cfg, "trace.csv");
            println!(
                "J_d({}) = {:.6e}  bound = {:.6e}  J_s = {:.6e}",
                meta.rows, meta.dynamic_regret, meta.bound_total, meta.static_regret
            );
            report(&[csv, json]);
        }
        Command::Sweep { common, c } => {
            let cfg = load(&common)?;
            report(&harness::sweep_to_dir(&cfg, &c, &common.out_dir)?);
        }
        Command::CompareAdaptive(common) => {
            let cfg = load(&common)?;
            report(&harness::compare_adaptive_to_dir(&cfg, &common.out_dir)?);
        }
        Command::CheckBounds(common) => {
            let cfg = load(&common)?;
            let rep = harness::check_bounds(&cfg)?;
            print!("{rep}");
            return Ok(rep.all_pass());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}
