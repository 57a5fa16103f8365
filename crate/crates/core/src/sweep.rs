//! Batch runs over seeds. Each run is fully isolated, so with the `parallel`
//! feature the seeds are spread over the rayon pool; results keep seed order
//! either way.

use crate::dispersal::DispersalMode;
use crate::error::Result;
use crate::metrics::{MetricsReport, TableRow};
use crate::scenario::{run_scenario, Scenario, ScenarioOutput};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn run_seeds_sequential(scenario: &Scenario, seeds: &[u64]) -> Vec<Result<ScenarioOutput>> {
    seeds.iter().map(|&s| run_scenario(&scenario.clone().with_seed(s))).collect()
}

#[cfg(feature = "parallel")]
pub fn run_seeds(scenario: &Scenario, seeds: &[u64]) -> Vec<Result<ScenarioOutput>> {
    seeds.par_iter().map(|&s| run_scenario(&scenario.clone().with_seed(s))).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_seeds(scenario: &Scenario, seeds: &[u64]) -> Vec<Result<ScenarioOutput>> {
    run_seeds_sequential(scenario, seeds)
}

/// Per-column mean of a set of reports. Not-applicable columns stay `None`
/// unless every report has them.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanReport {
    pub mode: DispersalMode,
    pub suitable_pct: f64,
    pub unsuitable_pct: Option<f64>,
    pub missed_event_pct: Option<f64>,
    pub wasted_larvae_pct: f64,
    pub ground_truth_suitable_pct: f64,
    pub ground_truth_unsuitable_pct: f64,
    pub area_covered: f64,
    pub runs: usize,
}

impl MeanReport {
    /// Same layout as [`MetricsReport::table_rows`].
    pub fn table_rows(&self) -> Vec<TableRow> {
        let label = match self.mode {
            DispersalMode::ClassifierGated => "On-board model",
            DispersalMode::ConstantPump => "Constant pump",
        };
        vec![
            (
                "Ground truth".into(),
                [Some(self.ground_truth_suitable_pct), Some(self.ground_truth_unsuitable_pct), None, None],
            ),
            (
                label.into(),
                [Some(self.suitable_pct), self.unsuitable_pct, self.missed_event_pct, Some(self.wasted_larvae_pct)],
            ),
        ]
    }
}

pub fn mean_report(reports: &[MetricsReport]) -> Option<MeanReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mean_opt = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
        reports.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
    };
    Some(MeanReport {
        mode: reports[0].mode,
        suitable_pct: mean(&|r| r.suitable_pct),
        unsuitable_pct: mean_opt(&|r| r.unsuitable_pct),
        missed_event_pct: mean_opt(&|r| r.missed_event_pct),
        wasted_larvae_pct: mean(&|r| r.wasted_larvae_pct),
        ground_truth_suitable_pct: mean(&|r| r.ground_truth_suitable_pct),
        ground_truth_unsuitable_pct: mean(&|r| r.ground_truth_unsuitable_pct),
        area_covered: mean(&|r| r.area_covered),
        runs: reports.len(),
    })
}

/// Runs `seeds` and averages the reports; fails on the first failed run.
pub fn seed_average(scenario: &Scenario, seeds: &[u64]) -> Result<(MeanReport, Vec<ScenarioOutput>)> {
    let outputs = run_seeds(scenario, seeds).into_iter().collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricsReport> = outputs.iter().map(|o| o.report.clone()).collect();
    let mean = mean_report(&reports).ok_or(crate::Error::EmptyLog)?;
    Ok((mean, outputs))
}
