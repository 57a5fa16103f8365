#![allow(dead_code)]

use reefseed::dispersal::DispersalMode;
use reefseed::scenario::{ClassifierSpec, DispersalSpec, MapSource, MissionSpec, Scenario};
use reefseed::vehicle::PayloadConfig;

/// A small generated-map coverage scenario for property tests.
pub fn small_scenario(
    seed: u64,
    cells: usize,
    cell_size: f64,
    fraction: f64,
    mode: DispersalMode,
    recalls: (f64, f64),
) -> Scenario {
    Scenario {
        name: format!("small-{seed}"),
        seed,
        tick_rate_hz: 2.0,
        duration_limit_s: 7200.0,
        watchdog_factor: 2.0,
        map: MapSource::Generate {
            width_cells: cells,
            height_cells: cells,
            cell_size,
            suitable_fraction: fraction,
            clustering: 0.5,
            origin: None,
        },
        vehicle: Default::default(),
        payload: PayloadConfig::Dispersal { bladder_capacity: 100.0 },
        guidance: Default::default(),
        mission: MissionSpec::Coverage { region: None, track_width: cell_size, run_in: 3.0 },
        start: None,
        classifier: ClassifierSpec {
            model: None,
            recall_suitable: Some(recalls.0),
            recall_unsuitable: Some(recalls.1),
            sticky_frames: 0,
        },
        dispersal: DispersalSpec { mode, flow_rate: 0.01, larvae_density: 1e4, swath_width: 1.0 },
        wind: Default::default(),
    }
}
