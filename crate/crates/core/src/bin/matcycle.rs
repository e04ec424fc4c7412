use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use matcycle::dataset::load_dataset;
use matcycle::pathway::interpolate_caps;
use matcycle::scenario::{compare, load_cap_schedule, load_scenario, load_sweep, run_scenario, sweep, ScenarioSummary};
use matcycle::system::validate_system;
use matcycle::{Error, Result};

#[derive(Parser)]
#[command(
    name = "matcycle",
    version,
    about = "Energy/material system optimizer with endogenous recycling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset directory and report structural problems.
    Validate { dataset: PathBuf },
    /// Run one or more scenario files; scenarios run concurrently.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Parent directory for per-scenario result directories.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run a parameter sweep.
    Sweep {
        sweep: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Compare result directories against a reference scenario.
    Compare {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        reference: String,
        /// Also write comparison.csv and comparison.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the emission cap of a schedule file in a given year.
    Caps {
        schedule: PathBuf,
        #[arg(long)]
        year: u32,
    },
}

fn validate(dataset: &Path) -> Result<bool> {
    let d = load_dataset(dataset)?;
    let diags = validate_system(&d.graph);
    for diag in &diags {
        println!("{diag}");
    }
    if diags.is_empty() {
        println!(
            "{}: {} commodities, {} technologies, {} materials, {} profiles",
            dataset.display(),
            d.graph.commodities.len(),
            d.graph.technologies.len(),
            d.graph.materials.len(),
            d.graph.profiles.len()
        );
    }
    Ok(diags.is_empty())
}

fn run(scenarios: &[PathBuf], out: &Path) -> Result<()> {
    let specs = scenarios.iter().map(load_scenario).collect::<Result<Vec<_>>>()?;
    let mut names = std::collections::BTreeSet::new();
    for s in &specs {
        if !names.insert(s.name.clone()) {
            return Err(Error::Config(format!("scenario name '{}' given twice", s.name)));
        }
    }
    let results: Vec<_> = specs.par_iter().map(run_scenario).collect();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                let dir = out.join(&r.name);
                r.write(&dir)?;
                print!("{}", r.summary().report());
                println!("written to {}\n", dir.display());
            }
            Err(e) => {
                eprintln!("error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn run_sweep(path: &Path, out: &Path) -> Result<bool> {
    let spec = load_sweep(path)?;
    let res = sweep(&spec)?;
    let dir = out.join(&res.name);
    res.write(&dir)?;
    println!(
        "{:>12} {:>8} {:>14} {:>12}",
        res.parameter, "status", "objective", "emissions"
    );
    for p in &res.points {
        match &p.outcome {
            Ok(o) => println!(
                "{:>12} {:>8} {:>14.6e} {:>12.4e}",
                p.value, "ok", o.objective, o.emissions
            ),
            Err(e) => println!("{:>12} {:>8} {e}", p.value, "failed"),
        }
    }
    for v in &res.violations {
        eprintln!("monotonicity violated: {v}");
    }
    println!("written to {}", dir.display());
    Ok(res.violations.is_empty())
}

fn run_compare(dirs: &[PathBuf], reference: &str, out: Option<&Path>) -> Result<()> {
    let summaries = dirs
        .iter()
        .map(|d| ScenarioSummary::load(&d.join("summary.toml")))
        .collect::<Result<Vec<_>>>()?;
    let report = compare(&summaries, reference)?;
    print!("{}", report.to_text());
    if let Some(out) = out {
        report.write(out)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { dataset } => validate(dataset).map(|ok| if ok { 0 } else { 2 }),
        Command::Run { scenarios, out } => run(scenarios, out).map(|_| 0),
        Command::Sweep { sweep, out } => run_sweep(sweep, out).map(|ok| if ok { 0 } else { 3 }),
        Command::Compare {
            results,
            reference,
            out,
        } => run_compare(results, reference, out.as_deref()).map(|_| 0),
        Command::Caps { schedule, year } => load_cap_schedule(schedule)
            .and_then(|s| interpolate_caps(&s, *year))
            .map(|cap| {
                println!("{cap}");
                0
            }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
