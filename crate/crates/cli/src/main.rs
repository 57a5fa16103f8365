//! `reefseed`: run seeded reef-seeding scenarios, compare dispersal modes,
//! recompute reports from event logs, lint scenario files and serve a
//! simulated fleet.

mod fleet;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use reefseed::metrics::{compute_report, format_table};
use reefseed::scenario::{preset, preset_names, read_event_log, Scenario, Simulation};

#[derive(Parser)]
#[command(name = "reefseed", version, about = "Reef-seeding ASV mission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run a scenario and write its event log, report, trajectory and overlay.
    Run(RunArgs),
    /// Run a scenario under both dispersal modes and report the difference.
    Compare(RunArgs),
    /// Serve fleetlink with simulated vehicles connected to it.
    Fleet(fleet::FleetArgs),
    /// Recompute the metrics report from an event log.
    Report {
        log: PathBuf,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Preset name or path to a scenario TOML file.
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulation tick rate in Hz.
    #[arg(long)]
    tick_rate: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Run this many consecutive seeds and also report their mean.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let mut scenario = if preset_names().any(|n| n == args.scenario) {
        preset(&args.scenario)?
    } else {
        let path = Path::new(&args.scenario);
        if !path.exists() {
            let names: Vec<_> = preset_names().collect();
            bail!("`{}` is neither a scenario file nor a preset ({})", args.scenario, names.join(", "));
        }
        Scenario::load(path).with_context(|| format!("loading {}", path.display()))?
    };
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    if let Some(hz) = args.tick_rate {
        scenario.tick_rate_hz = hz;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn seeds(base: u64, count: u64) -> Result<Vec<u64>> {
    if count == 0 {
        bail!("--seeds must be at least 1");
    }
    Ok((0..count).map(|i| base.wrapping_add(i)).collect())
}

fn run(args: RunArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let seeds = seeds(scenario.seed, args.seeds)?;
    let outputs = output::run_and_write(&scenario, &seeds, &args.out)?;
    if outputs.len() == 1 {
        let o = &outputs[0];
        let title = format!("{} (seed {})", scenario.name, o.run.seed);
        print!("{}", format_table(&[(title.as_str(), o.report.table_rows())]));
        println!("{} events, {:?} after {:.1} s", o.run.events.len(), o.run.termination, o.run.elapsed_s);
    } else {
        let mean = output::write_mean(&scenario, &outputs, &args.out)?;
        let title = format!("{} (mean of {} seeds)", scenario.name, mean.runs);
        print!("{}", format_table(&[(title.as_str(), mean.table_rows())]));
    }
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn compare(args: RunArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let seeds = seeds(scenario.seed, args.seeds)?;
    let (table, delta) = output::compare_and_write(&scenario, &seeds, &args.out)?;
    print!("{table}");
    println!("wasted larvae delta (constant - gated): {delta:.2} points");
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn report(log: &Path, json: bool) -> Result<()> {
    let text = std::fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let (mode, events) = read_event_log(&text)?;
    let r = compute_report(&events, mode)?;
    if json {
        println!("{}", r.to_json());
    } else {
        let title = log.display().to_string();
        print!("{}", format_table(&[(title.as_str(), r.table_rows())]));
    }
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let scenario = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    scenario.validate()?;
    let sim = Simulation::new(&scenario)?;
    println!(
        "ok: {} ({} waypoints, {:.1} m path, {} x {} map)",
        scenario.name,
        sim.mission().waypoints.len(),
        sim.mission().path_length(),
        sim.map().width_cells(),
        sim.map().height_cells()
    );
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Verb::Run(args) => run(args),
        Verb::Compare(args) => compare(args),
        Verb::Fleet(args) => fleet::run(args),
        Verb::Report { log, json } => report(&log, json),
        Verb::Validate { scenario } => validate(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
