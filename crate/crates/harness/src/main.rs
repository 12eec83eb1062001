use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use wfprop_harness::plot::plot_csv;
use wfprop_harness::report::PlotHint;
use wfprop_harness::{list_scenarios, registry, run_scenario, HarnessError, RunSummary, ScenarioConfig};

/// Thread count for the worker pool; unset means one per core.
const THREADS_VAR: &str = "WFPROP_THREADS";

#[derive(Parser)]
#[command(name = "wfprop", version, about = "Numerical experiments on propagation of singularities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print every scenario with the statement it probes.
    List,
    /// Run one scenario, or `all` of them.
    Run {
        scenario: String,
        /// JSON config; its `scenario` key must match.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw an SVG next to a CSV table.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        x: Option<String>,
        #[arg(long, num_args = 1..)]
        y: Vec<String>,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
    },
}

fn print_summary(s: &RunSummary) {
    let status = match (&s.error, s.passed) {
        (Some(_), _) => "ERROR",
        (None, true) => "PASS",
        (None, false) => "FAIL",
    };
    println!("{status} {} ({:.1} s)", s.scenario, s.wall_time_s);
    for c in &s.criteria {
        println!("  {c}");
    }
    if let Some(e) = &s.error {
        println!("  error: {e}");
    }
}

fn run(scenario: &str, config: Option<PathBuf>, out: Option<PathBuf>) -> Result<bool, HarnessError> {
    if scenario == "all" {
        if config.is_some() {
            return Err(HarnessError::Config("--config applies to a single scenario".into()));
        }
        let summaries: Vec<RunSummary> = registry()
            .par_iter()
            .map(|s| run_scenario(&ScenarioConfig::named(s.name), out.as_deref()))
            .collect::<Result<_, _>>()?;
        summaries.iter().for_each(print_summary);
        return Ok(summaries.iter().all(|s| s.passed));
    }
    let cfg = match config {
        Some(path) => {
            let cfg = ScenarioConfig::load(&path)?;
            if cfg.scenario != scenario {
                return Err(HarnessError::Config(format!(
                    "config is for \"{}\", not \"{scenario}\"",
                    cfg.scenario
                )));
            }
            cfg
        }
        None => ScenarioConfig::named(scenario),
    };
    let summary = run_scenario(&cfg, out.as_deref())?;
    print_summary(&summary);
    Ok(summary.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("global pool is configured once");
            }
            _ => {
                eprintln!("{THREADS_VAR} must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let result = match cli.command {
        Command::List => {
            for (name, claim) in list_scenarios() {
                println!("{name:<24} {claim}");
            }
            Ok(true)
        }
        Command::Run { scenario, config, out } => run(&scenario, config, out),
        Command::Plot {
            csv,
            x,
            y,
            log_x,
            log_y,
        } => {
            let hint = x.map(|x| PlotHint { x, y, log_x, log_y });
            plot_csv(&csv, hint.as_ref()).map(|p| {
                println!("{}", p.display());
                true
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ HarnessError::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
