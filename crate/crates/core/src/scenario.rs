//! Scenario files, shipped presets and the fixed-step simulation loop.
//!
//! A tick runs guidance, integrates the vehicle, then classifies the cell
//! under the vehicle and lets the dispersal controller act on the prediction.
//! Frames are only taken inside the survey region.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dispersal::{Bladder, DispersalController, DispersalEvent, DispersalMode, FrameContext};
use crate::error::{ensure, Error, Result};
use crate::geom::{Rect, Vec2};
use crate::guidance::{
    follow_path, plan_coverage_with_run_in, GuidanceParams, Mission, MissionMode, DEFAULT_ARRIVAL_RADIUS,
};
use crate::metrics::{compute_report, MetricsReport};
use crate::perception::{calibrate_model, ClassifierModel, EmulatedClassifier, FieldScenario, SubstrateClassifier};
use crate::reefworld::{generate_reef, BenthicMap, ReefParams, SubstrateClass, WindField};
use crate::vehicle::{
    configure_payload, step_dynamics, PayloadConfig, Pose2D, ThrusterCommand, VehicleParams, VehicleState,
};

pub const EVENT_SCHEMA: &str = "reefseed.events";
pub const EVENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    Generate {
        width_cells: usize,
        height_cells: usize,
        cell_size: f64,
        suitable_fraction: f64,
        clustering: f64,
        #[serde(default)]
        origin: Option<Vec2>,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MissionSpec {
    /// Lawnmower over `region`; `None` surveys the whole map.
    Coverage {
        #[serde(default)]
        region: Option<Rect>,
        track_width: f64,
        #[serde(default)]
        run_in: f64,
    },
    Waypoints {
        waypoints: Vec<Vec2>,
        #[serde(default = "default_arrival")]
        arrival_radius: f64,
    },
}

fn default_arrival() -> f64 {
    DEFAULT_ARRIVAL_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    /// Named calibration; overrides the explicit recalls when set.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub recall_suitable: Option<f64>,
    #[serde(default)]
    pub recall_unsuitable: Option<f64>,
    #[serde(default)]
    pub sticky_frames: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersalSpec {
    pub mode: DispersalMode,
    #[serde(default = "default_flow")]
    pub flow_rate: f64,
    #[serde(default = "default_density")]
    pub larvae_density: f64,
    #[serde(default = "default_swath")]
    pub swath_width: f64,
}

fn default_flow() -> f64 {
    0.1
}

fn default_density() -> f64 {
    1e4
}

fn default_swath() -> f64 {
    1.0
}

fn default_tick_rate() -> f64 {
    2.0
}

fn default_watchdog() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_tick_rate")]
    pub tick_rate_hz: f64,
    pub duration_limit_s: f64,
    /// Mission time allowed, as a multiple of naive path length over cruise speed.
    #[serde(default = "default_watchdog")]
    pub watchdog_factor: f64,
    pub map: MapSource,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub payload: PayloadConfig,
    #[serde(default)]
    pub guidance: GuidanceParams,
    pub mission: MissionSpec,
    /// Defaults to the first waypoint, facing the first leg.
    #[serde(default)]
    pub start: Option<Pose2D>,
    pub classifier: ClassifierSpec,
    pub dispersal: DispersalSpec,
    #[serde(default)]
    pub wind: WindField,
}

const PRESETS: &[(&str, &str)] = &[
    ("loomis-gated", include_str!("../scenarios/loomis-gated.toml")),
    ("loomis-constant", include_str!("../scenarios/loomis-constant.toml")),
    ("watson-gated", include_str!("../scenarios/watson-gated.toml")),
    ("watson-constant", include_str!("../scenarios/watson-constant.toml")),
    ("loomis-coverage", include_str!("../scenarios/loomis-coverage.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<Scenario> {
    let (_, text) =
        PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
    Scenario::from_toml(text)
}

/// Derives an independent stream seed from the scenario seed.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serialises")
    }

    /// Loads a scenario file; a relative map path resolves against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_toml(&text)?;
        if let MapSource::File { path: map_path } = &mut s.map {
            if map_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *map_path = dir.join(&*map_path);
                }
            }
        }
        Ok(s)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate_hz
    }

    pub fn classifier_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }

    /// Field-level validation; collects every problem found.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |field: &str, r: Result<()>| {
            if let Err(e) = r {
                problems.push(format!("{field}: {e}"));
            }
        };
        check(
            "tick_rate_hz",
            ensure(self.tick_rate_hz > 0.0 && self.tick_rate_hz.is_finite() && self.tick_rate_hz >= 1.0, || {
                format!("must be >= 1 Hz, got {}", self.tick_rate_hz)
            }),
        );
        check(
            "duration_limit_s",
            ensure(self.duration_limit_s >= 0.0 && self.duration_limit_s.is_finite(), || {
                format!("must be >= 0, got {}", self.duration_limit_s)
            }),
        );
        check(
            "watchdog_factor",
            ensure(self.watchdog_factor >= 1.0 && self.watchdog_factor.is_finite(), || {
                format!("must be >= 1, got {}", self.watchdog_factor)
            }),
        );
        if let MapSource::Generate { width_cells, height_cells, cell_size, suitable_fraction, clustering, .. } =
            &self.map
        {
            let p = ReefParams {
                width_cells: *width_cells,
                height_cells: *height_cells,
                cell_size: *cell_size,
                suitable_fraction: *suitable_fraction,
                clustering: *clustering,
            };
            check("map", p.validate());
        }
        check("vehicle", self.vehicle.validate());
        check("payload", self.payload.validate());
        check("guidance", self.guidance.validate());
        check("wind", self.wind.validate());
        check("classifier", self.classifier_model().map(|_| ()));
        check(
            "dispersal",
            DispersalController::new(
                self.dispersal.mode,
                Bladder::full(1.0).expect("unit bladder"),
                self.dispersal.flow_rate,
                self.dispersal.larvae_density,
                self.dispersal.swath_width,
            )
            .map(|_| ()),
        );
        match &self.mission {
            MissionSpec::Coverage { region, track_width, run_in } => {
                let r = region.unwrap_or(Rect::new(Vec2::ZERO, Vec2::new(1.0, 1.0)));
                check("mission", plan_coverage_with_run_in(r, *track_width, *run_in).map(|_| ()));
            }
            MissionSpec::Waypoints { waypoints, arrival_radius } => {
                check("mission", Mission::new(waypoints.clone(), *arrival_radius, MissionMode::Transect).map(|_| ()))
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn classifier_model(&self) -> Result<ClassifierModel> {
        let seed = self.classifier_seed();
        match (&self.classifier.model, self.classifier.recall_suitable, self.classifier.recall_unsuitable) {
            (Some(name), _, _) => Ok(calibrate_model(name.parse::<FieldScenario>()?, seed)),
            (None, Some(s), Some(u)) => ClassifierModel::new(s, u, seed),
            _ => Err(Error::Config("classifier needs `model` or both recalls".into())),
        }
    }

    pub fn build_map(&self) -> Result<BenthicMap> {
        match &self.map {
            MapSource::Generate { width_cells, height_cells, cell_size, suitable_fraction, clustering, origin } => {
                let p = ReefParams {
                    width_cells: *width_cells,
                    height_cells: *height_cells,
                    cell_size: *cell_size,
                    suitable_fraction: *suitable_fraction,
                    clustering: *clustering,
                };
                Ok(generate_reef(self.seed, &p)?.with_origin(origin.unwrap_or(Vec2::ZERO)))
            }
            MapSource::File { path } => std::fs::read_to_string(path)?.parse(),
        }
    }

    /// The mission and the region in which frames are taken.
    pub fn build_mission(&self, map: &BenthicMap) -> Result<(Mission, Rect)> {
        let bounds = map.bounds();
        match &self.mission {
            MissionSpec::Coverage { region, track_width, run_in } => {
                let region = region.unwrap_or(bounds);
                let inside = region.min.x >= bounds.min.x
                    && region.min.y >= bounds.min.y
                    && region.max.x <= bounds.max.x
                    && region.max.y <= bounds.max.y;
                if !inside {
                    return Err(Error::Config("mission.region must lie inside the map".into()));
                }
                Ok((plan_coverage_with_run_in(region, *track_width, *run_in)?, region))
            }
            MissionSpec::Waypoints { waypoints, arrival_radius } => {
                Ok((Mission::new(waypoints.clone(), *arrival_radius, MissionMode::Transect)?, bounds))
            }
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: DispersalMode) -> Self {
        self.dispersal.mode = mode;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MissionComplete,
    BatteryDepleted,
    DurationLimit,
    Watchdog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub battery: f64,
    pub gauge: f64,
    pub decision: Option<SubstrateClass>,
    pub released: bool,
}

/// Raw products of a simulation run.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub scenario: String,
    pub seed: u64,
    pub mode: DispersalMode,
    pub termination: Termination,
    pub elapsed_s: f64,
    pub watchdog_limit_s: f64,
    pub events: Vec<DispersalEvent>,
    pub trajectory: Vec<TrajectoryRow>,
    pub initial_volume_ul: u64,
    pub final_volume_ul: u64,
}

/// Step-by-step simulation of one vehicle.
pub struct Simulation {
    map: BenthicMap,
    survey: Rect,
    mission: Mission,
    active: usize,
    vehicle: VehicleState,
    vehicle_params: VehicleParams,
    guidance: GuidanceParams,
    wind: WindField,
    classifier: Box<dyn SubstrateClassifier>,
    dispersal: Option<DispersalController>,
    dispersal_spec: DispersalSpec,
    watchdog_factor: f64,
    dt: f64,
    tick: u64,
    duration_limit: f64,
    watchdog_limit: f64,
    trajectory: Vec<TrajectoryRow>,
    termination: Option<Termination>,
    last_decision: Option<(Vec2, SubstrateClass)>,
    name: String,
    seed: u64,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let map = scenario.build_map()?;
        let (mission, survey) = scenario.build_mission(&map)?;
        let model = scenario.classifier_model()?;
        let classifier = EmulatedClassifier::new(model)?.with_sticky_errors(scenario.classifier.sticky_frames);

        let start = scenario.start.unwrap_or_else(|| {
            let first = mission.waypoints[0];
            Pose2D::new(first.x, first.y, mission.initial_direction().angle())
        });
        let vehicle = VehicleState::new(start, scenario.payload);
        let dispersal = match scenario.payload.bladder_capacity() {
            Some(cap) => Some(DispersalController::new(
                scenario.dispersal.mode,
                Bladder::full(cap)?,
                scenario.dispersal.flow_rate,
                scenario.dispersal.larvae_density,
                scenario.dispersal.swath_width,
            )?),
            None => None,
        };
        let mut sim = Self {
            map,
            survey,
            active: 0,
            mission,
            vehicle,
            vehicle_params: scenario.vehicle,
            guidance: scenario.guidance,
            wind: scenario.wind,
            classifier: Box::new(classifier),
            dispersal,
            dispersal_spec: scenario.dispersal.clone(),
            watchdog_factor: scenario.watchdog_factor,
            dt: scenario.dt(),
            tick: 0,
            duration_limit: scenario.duration_limit_s,
            watchdog_limit: 0.0,
            trajectory: Vec::new(),
            termination: None,
            last_decision: None,
            name: scenario.name.clone(),
            seed: scenario.seed,
        };
        sim.reset_watchdog();
        Ok(sim)
    }

    /// Allows the current mission twice its naive duration from now.
    fn reset_watchdog(&mut self) {
        let naive = self.vehicle.pose.position().distance(self.mission.waypoints[0]) + self.mission.path_length();
        // fixed slack covers the initial turn onto short missions
        self.watchdog_limit = self.time() + self.watchdog_factor * naive / self.vehicle_params.cruise_speed_max + 60.0;
    }

    /// Replaces the classifier emulator.
    pub fn with_classifier(mut self, classifier: Box<dyn SubstrateClassifier>) -> Self {
        self.classifier = classifier;
        self
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn vehicle(&self) -> &VehicleState {
        &self.vehicle
    }

    pub fn map(&self) -> &BenthicMap {
        &self.map
    }

    pub fn mission(&self) -> &Mission {
        &self.mission
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn events(&self) -> &[DispersalEvent] {
        self.dispersal.as_ref().map_or(&[], |d| d.events())
    }

    pub fn last_decision(&self) -> Option<(Vec2, SubstrateClass)> {
        self.last_decision
    }

    pub fn gauge(&self) -> f64 {
        self.dispersal.as_ref().and_then(|d| crate::dispersal::fuel_gauge(d.bladder()).ok()).map_or(0.0, |g| g.fraction)
    }

    /// Replaces the mission and restarts from its first waypoint.
    pub fn set_mission(&mut self, mission: Mission) -> Result<()> {
        mission.validate()?;
        self.mission = mission;
        self.active = 0;
        if matches!(self.termination, Some(Termination::MissionComplete | Termination::Watchdog)) {
            self.termination = None;
        }
        self.reset_watchdog();
        Ok(())
    }

    /// Refits the payload. The vehicle must be stationary; a dispersal
    /// payload starts with a full bladder.
    pub fn set_payload(&mut self, config: PayloadConfig) -> Result<()> {
        let vehicle = configure_payload(&self.vehicle, config)?;
        let mode = self.dispersal.as_ref().map_or(self.dispersal_spec.mode, |d| d.mode());
        self.dispersal = match config.bladder_capacity() {
            Some(cap) => Some(DispersalController::new(
                mode,
                Bladder::full(cap)?,
                self.dispersal_spec.flow_rate,
                self.dispersal_spec.larvae_density,
                self.dispersal_spec.swath_width,
            )?),
            None => None,
        };
        self.vehicle = vehicle;
        Ok(())
    }

    pub fn set_dispersal_mode(&mut self, mode: DispersalMode) -> Result<()> {
        self.dispersal_spec.mode = mode;
        match self.dispersal.as_mut() {
            Some(d) => {
                d.set_mode(mode);
                Ok(())
            }
            None => Err(Error::InvalidState("no dispersal payload fitted".into())),
        }
    }

    /// Advances one tick with the thrusters off; the vehicle drifts with the
    /// wind and no frames are taken. Does not count toward the watchdog.
    pub fn hold(&mut self) -> Result<()> {
        let wind = self.wind.drift(self.time());
        self.vehicle = step_dynamics(&self.vehicle_params, &self.vehicle, ThrusterCommand::STOP, wind, self.dt)?;
        self.tick += 1;
        self.watchdog_limit += self.dt;
        Ok(())
    }

    /// Advances one tick. Returns the termination reason once the run is over.
    pub fn step(&mut self) -> Result<Option<Termination>> {
        if let Some(t) = self.termination {
            return Ok(Some(t));
        }
        if self.time() + 1e-9 >= self.duration_limit {
            return Ok(self.finish(Termination::DurationLimit));
        }
        if self.time() > self.watchdog_limit {
            return Ok(self.finish(Termination::Watchdog));
        }
        let out = follow_path(&self.guidance, &self.vehicle, &self.mission, self.active)?;
        self.active = out.active_index;
        if out.complete {
            return Ok(self.finish(Termination::MissionComplete));
        }
        let wind = self.wind.drift(self.time());
        self.vehicle = step_dynamics(&self.vehicle_params, &self.vehicle, out.command, wind, self.dt)?;
        self.tick += 1;
        let t = self.time();

        let pos = self.vehicle.pose.position();
        let mut row = TrajectoryRow {
            t,
            x: pos.x,
            y: pos.y,
            heading: self.vehicle.pose.heading,
            battery: self.vehicle.battery_remaining,
            gauge: 0.0,
            decision: None,
            released: false,
        };
        if let Some(dispersal) = self.dispersal.as_mut() {
            if self.survey.contains(pos) {
                let (col, rowi) = self.map.cell_index(pos)?;
                let truth = self.map.sample_substrate(pos)?;
                let prediction = self.classifier.classify_frame(truth, t);
                let ctx = FrameContext {
                    position: pos,
                    cell: [col as u32, rowi as u32],
                    cell_area: self.map.cell_area(),
                    ground_truth: truth,
                    speed: self.vehicle.speed,
                    dt: self.dt,
                };
                let event = dispersal.process(&prediction, &ctx)?;
                self.vehicle.set_bladder_volume(dispersal.bladder().volume_l());
                self.last_decision = Some((pos, prediction.predicted));
                row.decision = Some(prediction.predicted);
                row.released = event.released();
            }
        }
        row.gauge = self.gauge();
        self.trajectory.push(row);

        if self.vehicle.is_dead() {
            return Ok(self.finish(Termination::BatteryDepleted));
        }
        Ok(None)
    }

    fn finish(&mut self, t: Termination) -> Option<Termination> {
        self.termination = Some(t);
        Some(t)
    }

    pub fn run(mut self) -> Result<SimRun> {
        let termination = loop {
            if let Some(t) = self.step()? {
                break t;
            }
        };
        let elapsed_s = self.time();
        let (mode, initial, events, final_ul) = match self.dispersal {
            Some(d) => (d.mode(), d.initial_ul(), d.events().to_vec(), d.bladder().volume_ul()),
            None => (DispersalMode::ClassifierGated, 0, Vec::new(), 0),
        };
        Ok(SimRun {
            scenario: self.name,
            seed: self.seed,
            mode,
            termination,
            elapsed_s,
            watchdog_limit_s: self.watchdog_limit,
            events,
            trajectory: self.trajectory,
            initial_volume_ul: initial,
            final_volume_ul: final_ul,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub run: SimRun,
    pub report: MetricsReport,
}

/// Runs a scenario to completion and computes its report. A watchdog expiry is
/// an error; use [`Simulation::run`] directly to keep partial outputs.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioOutput> {
    let run = Simulation::new(scenario)?.run()?;
    if run.termination == Termination::Watchdog {
        return Err(Error::Watchdog { elapsed: run.elapsed_s, limit: run.watchdog_limit_s });
    }
    let report = compute_report(&run.events, run.mode)?;
    Ok(ScenarioOutput { run, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub gated: MetricsReport,
    pub constant: MetricsReport,
    /// Constant-pump minus gated wasted-larvae percentage points.
    pub wasted_delta: f64,
}

/// Runs the same seed and trajectory under both dispersal modes.
pub fn compare_modes(scenario: &Scenario) -> Result<ModeComparison> {
    let gated = run_scenario(&scenario.clone().with_mode(DispersalMode::ClassifierGated))?.report;
    let constant = run_scenario(&scenario.clone().with_mode(DispersalMode::ConstantPump))?.report;
    Ok(ModeComparison { wasted_delta: constant.wasted_larvae_pct - gated.wasted_larvae_pct, gated, constant })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LogHeader {
    schema: String,
    version: u32,
    scenario: String,
    seed: u64,
    mode: DispersalMode,
}

/// Newline-delimited JSON: one header record, then one record per event.
pub fn write_event_log(run: &SimRun) -> String {
    let header = LogHeader {
        schema: EVENT_SCHEMA.into(),
        version: EVENT_SCHEMA_VERSION,
        scenario: run.scenario.clone(),
        seed: run.seed,
        mode: run.mode,
    };
    let mut out = serde_json::to_string(&header).expect("header serialises");
    out.push('\n');
    for e in &run.events {
        out.push_str(&serde_json::to_string(e).expect("event serialises"));
        out.push('\n');
    }
    out
}

#[derive(Deserialize)]
struct RawEvent {
    frame_id: Option<u64>,
    timestamp: Option<f64>,
    position: Option<Vec2>,
    cell: Option<[u32; 2]>,
    cell_area: Option<f64>,
    ground_truth: Option<SubstrateClass>,
    predicted: Option<SubstrateClass>,
    released_ul: Option<u64>,
    released_larvae: Option<u64>,
    #[serde(default)]
    bladder_empty: bool,
}

/// Parses an event log, returning the dispersal mode and the events.
pub fn read_event_log(text: &str) -> Result<(DispersalMode, Vec<DispersalEvent>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(Error::EmptyLog)?;
    let header: LogHeader =
        serde_json::from_str(first).map_err(|e| Error::DataIntegrity(format!("log header: {e}")))?;
    if header.schema != EVENT_SCHEMA || header.version != EVENT_SCHEMA_VERSION {
        return Err(Error::DataIntegrity(format!("unsupported log schema {} v{}", header.schema, header.version)));
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let raw: RawEvent =
            serde_json::from_str(line).map_err(|e| Error::DataIntegrity(format!("line {lineno}: {e}")))?;
        let need = |field: &str| Error::DataIntegrity(format!("line {lineno}: missing `{field}`"));
        events.push(DispersalEvent {
            frame_id: raw.frame_id.ok_or_else(|| need("frame_id"))?,
            timestamp: raw.timestamp.ok_or_else(|| need("timestamp"))?,
            position: raw.position.ok_or_else(|| need("position"))?,
            cell: raw.cell.ok_or_else(|| need("cell"))?,
            cell_area: raw.cell_area.ok_or_else(|| need("cell_area"))?,
            ground_truth: raw.ground_truth.ok_or_else(|| need("ground_truth"))?,
            predicted: raw.predicted.ok_or_else(|| need("predicted"))?,
            released_ul: raw.released_ul.ok_or_else(|| need("released_ul"))?,
            released_larvae: raw.released_larvae.ok_or_else(|| need("released_larvae"))?,
            bladder_empty: raw.bladder_empty,
        });
    }
    Ok((header.mode, events))
}

fn class_name(c: SubstrateClass) -> &'static str {
    match c {
        SubstrateClass::Suitable => "suitable",
        SubstrateClass::Unsuitable => "unsuitable",
    }
}

/// Trajectory rows as CSV for overlay rendering.
pub fn write_trajectory_csv(run: &SimRun) -> String {
    let mut out = String::from("t,x,y,heading,battery,gauge,decision,released\n");
    for r in &run.trajectory {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.x,
            r.y,
            r.heading,
            r.battery,
            r.gauge,
            r.decision.map_or("", class_name),
            r.released as u8
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in preset_names() {
            let s = preset(name).unwrap();
            assert_eq!(s.name, name);
            s.validate().unwrap();
        }
        assert!(matches!(preset("heron"), Err(Error::Config(_))));
    }

    #[test]
    fn validation_reports_fields() {
        let mut s = preset("loomis-gated").unwrap();
        s.tick_rate_hz = 0.0;
        s.classifier.model = Some("nope".into());
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("tick_rate_hz"), "{err}");
        assert!(err.contains("classifier"), "{err}");
    }

    #[test]
    fn zero_duration_gives_empty_log() {
        let mut s = preset("loomis-gated").unwrap();
        s.duration_limit_s = 0.0;
        assert_eq!(run_scenario(&s).unwrap_err(), Error::EmptyLog);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = "bogus = 1\n".to_string() + &preset("loomis-gated").unwrap().to_toml();
        assert!(Scenario::from_toml(&text).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = preset("watson-constant").unwrap();
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }
}
