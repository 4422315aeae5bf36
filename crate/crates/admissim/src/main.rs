//! Command-line front end: run scenarios and sweeps, write report trees.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use admissim::runner;
use admissim::scenario::{Scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "admissim", version, about = "Admission control simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Parser, Debug)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for report trees.
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's seed list with this single base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs per point: truncates or extends the seed list
    /// (extension continues from the base seed).
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: every sweep point, every seed, averaged reports.
    Simulate(RunArgs),
    /// Run a scenario's declared sweep axis. Errors if it has none.
    Sweep(RunArgs),
}

fn effective_seeds(scenario: &Scenario, args: &RunArgs) -> Vec<u64> {
    let mut seeds = match args.seed {
        Some(s) => vec![s],
        None => scenario.seeds.clone(),
    };
    if let Some(runs) = args.runs {
        seeds.truncate(runs);
        let mut next = seeds.iter().copied().max().unwrap_or(0) + 1;
        while seeds.len() < runs {
            seeds.push(next);
            next += 1;
        }
    }
    seeds
}

fn run(args: &RunArgs, require_sweep: bool) -> Result<(), ScenarioError> {
    let scenario = Scenario::from_path(&args.scenario)?;
    if require_sweep && scenario.sweep.is_none() {
        return Err(ScenarioError::Validation(format!(
            "scenario '{}' declares no sweep axis",
            scenario.name
        )));
    }
    let seeds = effective_seeds(&scenario, args);
    eprintln!(
        "running '{}': {} point(s) x {} seed(s) on {} thread(s)",
        scenario.name,
        scenario.run_points()?.len(),
        seeds.len(),
        runner::worker_threads()
    );
    let results = runner::execute(&scenario, &seeds)?;
    runner::write_outputs(&args.out, &results).map_err(|source| ScenarioError::Io {
        path: args.out.display().to_string(),
        source,
    })?;
    for point in &results.points {
        let over = &point.averaged.overall;
        eprintln!(
            "  {:<22} rejections {:>6}%  utilization {:.4}  (overhead mean {:.2}us)",
            point.label,
            over.rejection_pct
                .map(|p| format!("{p:.2}"))
                .unwrap_or_default(),
            point.averaged.utilization,
            point.runs.iter().map(|r| r.overhead.mean_us).sum::<f64>()
                / point.runs.len().max(1) as f64,
        );
    }
    eprintln!(
        "wrote {}",
        args.out.join(&results.scenario_name).display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, require_sweep) = match &cli.command {
        Command::Simulate(args) => (args, false),
        Command::Sweep(args) => (args, true),
    };
    match run(args, require_sweep) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (ScenarioError::Parse(_) | ScenarioError::Validation(_))) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
