//! Output files. Each run gets its own directory:
//!
//! - `events.ndjson`: header record then one dispersal event per line
//! - `report.json` and `report.txt`: machine and tabular metrics
//! - `trajectory.csv`: one row per tick
//! - `overlay.json`: decision dots for the console map

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use reefseed::dispersal::DispersalMode;
use reefseed::metrics::{compute_report, format_table, overlay, MetricsReport};
use reefseed::scenario::{write_event_log, write_trajectory_csv, Scenario, ScenarioOutput, SimRun, Simulation};
use reefseed::sweep::{mean_report, run_seeds, MeanReport};
use serde_json::json;

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn run_dir(out: &Path, scenario: &Scenario, seed: u64) -> PathBuf {
    out.join(format!("{}-seed{seed}", scenario.name))
}

/// Writes every file for one run. The report files are skipped when the log
/// cannot produce a report (for instance when it is empty).
pub fn write_run(dir: &Path, run: &SimRun) -> Result<Option<MetricsReport>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("events.ndjson"), &write_event_log(run))?;
    write(&dir.join("trajectory.csv"), &write_trajectory_csv(run))?;
    write(&dir.join("overlay.json"), &serde_json::to_string(&overlay(&run.events))?)?;
    let report = compute_report(&run.events, run.mode).ok();
    if let Some(r) = &report {
        write(&dir.join("report.json"), &r.to_json())?;
        let title = format!("{} (seed {})", run.scenario, run.seed);
        write(&dir.join("report.txt"), &format_table(&[(title.as_str(), r.table_rows())]))?;
    }
    Ok(report)
}

/// Runs the seeds (in parallel when available) and writes each run. On a
/// failed run the partial outputs of that seed are still written.
pub fn run_and_write(scenario: &Scenario, seeds: &[u64], out: &Path) -> Result<Vec<ScenarioOutput>> {
    let mut outputs = Vec::with_capacity(seeds.len());
    for (&seed, result) in seeds.iter().zip(run_seeds(scenario, seeds)) {
        let dir = run_dir(out, scenario, seed);
        match result {
            Ok(o) => {
                write_run(&dir, &o.run)?;
                outputs.push(o);
            }
            Err(e) => {
                // runs are deterministic, so a rerun reproduces the partial state
                let partial = Simulation::new(&scenario.clone().with_seed(seed)).and_then(|s| s.run());
                if let Ok(run) = partial {
                    write_run(&dir, &run)?;
                }
                return Err(e).with_context(|| format!("seed {seed} failed; partial outputs in {}", dir.display()));
            }
        }
    }
    Ok(outputs)
}

pub fn write_mean(scenario: &Scenario, outputs: &[ScenarioOutput], out: &Path) -> Result<MeanReport> {
    let reports: Vec<MetricsReport> = outputs.iter().map(|o| o.report.clone()).collect();
    let mean = mean_report(&reports).context("no runs to average")?;
    let seeds: Vec<u64> = outputs.iter().map(|o| o.run.seed).collect();
    let doc = json!({ "scenario": scenario.name, "seeds": seeds, "mean": mean, "reports": reports });
    write(&out.join(format!("{}-mean.json", scenario.name)), &serde_json::to_string_pretty(&doc)?)?;
    Ok(mean)
}

fn mode_slug(mode: DispersalMode) -> &'static str {
    match mode {
        DispersalMode::ClassifierGated => "gated",
        DispersalMode::ConstantPump => "constant",
    }
}

/// Runs both modes over the same seeds. Returns the table and the
/// constant-minus-gated wasted-larvae delta.
pub fn compare_and_write(scenario: &Scenario, seeds: &[u64], out: &Path) -> Result<(String, f64)> {
    let mut means = Vec::new();
    for mode in [DispersalMode::ClassifierGated, DispersalMode::ConstantPump] {
        let mut s = scenario.clone().with_mode(mode);
        s.name = format!("{}-{}", scenario.name, mode_slug(mode));
        let outputs = run_and_write(&s, seeds, out)?;
        let reports: Vec<MetricsReport> = outputs.iter().map(|o| o.report.clone()).collect();
        means.push(mean_report(&reports).context("no runs to average")?);
    }
    let (gated, constant) = (means[0], means[1]);
    let delta = constant.wasted_larvae_pct - gated.wasted_larvae_pct;
    let doc = json!({
        "scenario": scenario.name,
        "seeds": seeds,
        "gated": gated,
        "constant": constant,
        "wasted_delta": delta,
    });
    fs::create_dir_all(out)?;
    write(&out.join(format!("{}-compare.json", scenario.name)), &serde_json::to_string_pretty(&doc)?)?;
    let mut rows = gated.table_rows();
    rows.push(constant.table_rows().remove(1));
    let title = if seeds.len() == 1 {
        format!("{} (seed {})", scenario.name, seeds[0])
    } else {
        format!("{} (mean of {} seeds)", scenario.name, seeds.len())
    };
    Ok((format_table(&[(title.as_str(), rows)]), delta))
}
