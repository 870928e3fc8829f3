//! `sfcalc`: apply the quaternionic functional calculus to matrices and
//! diagonal operators described by a TOML job file.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use config::{JobSpec, Task};
use run::Overrides;

#[derive(Parser, Debug)]
#[command(name = "sfcalc", version, about)]
struct Cli {
    /// Task to run; overrides `task` in the job file.
    #[arg(value_enum)]
    task: Option<Task>,
    /// Job file (TOML).
    #[arg(short, long)]
    spec: Option<PathBuf>,
    /// Base path for the `.txt` and `.json` reports.
    #[arg(short, long)]
    output: Option<String>,
    /// Quadrature nodes per contour curve.
    #[arg(long)]
    nodes: Option<usize>,
    /// Distance kept between contour and spectrum.
    #[arg(long)]
    clearance: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Imaginary unit of the integration plane, as `a,b,c`.
    #[arg(long, value_parser = parse_unit)]
    unit: Option<[f64; 3]>,
}

fn parse_unit(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    <[f64; 3]>::try_from(parts).map_err(|_| "expected three comma-separated numbers".to_string())
}

fn execute(cli: Cli) -> Result<bool> {
    let job = match &cli.spec {
        Some(path) => config::load(path)?,
        None => JobSpec::default(),
    };
    let job = Overrides {
        task: cli.task,
        output: cli.output,
        nodes: cli.nodes,
        clearance: cli.clearance,
        tolerance: cli.tolerance,
        seed: cli.seed,
        unit: cli.unit,
    }
    .apply(job);
    let report = run::run(&job)?;
    print!("{}", report.to_text());
    if let Some(base) = &job.output {
        report.write(&PathBuf::from(base)).context("writing report")?;
        log::info!("report written to {base}.txt and {base}.json");
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
