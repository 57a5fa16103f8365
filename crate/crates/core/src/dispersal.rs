//! Pump gating and larvae bladder accounting.
//!
//! Volumes are tracked in whole microliters so that released volume plus the
//! bladder remainder always equals the initial fill exactly.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geom::Vec2;
use crate::perception::Prediction;
use crate::reefworld::SubstrateClass;

/// Upper bound on larvae released per square meter of seabed swept.
pub const MAX_AREAL_DENSITY: f64 = 10_000.0;

/// Gauge fraction at or below which the operator is warned.
pub const LOW_LARVAE_FRACTION: f64 = 0.05;

pub const UL_PER_L: f64 = 1_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersalMode {
    ClassifierGated,
    ConstantPump,
}

impl std::str::FromStr for DispersalMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classifier-gated" | "gated" => Ok(DispersalMode::ClassifierGated),
            "constant-pump" | "constant" => Ok(DispersalMode::ConstantPump),
            other => Err(crate::Error::Config(format!("unknown dispersal mode `{other}`"))),
        }
    }
}

pub fn liters_to_ul(liters: f64) -> u64 {
    (liters * UL_PER_L).round() as u64
}

pub fn ul_to_liters(ul: u64) -> f64 {
    ul as f64 / UL_PER_L
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bladder {
    capacity_ul: u64,
    volume_ul: u64,
}

impl Bladder {
    pub fn full(capacity_l: f64) -> Result<Self> {
        Self::new(capacity_l, capacity_l)
    }

    pub fn new(capacity_l: f64, volume_l: f64) -> Result<Self> {
        ensure(capacity_l.is_finite() && capacity_l >= 0.0, || format!("capacity must be >= 0, got {capacity_l}"))?;
        ensure((0.0..=capacity_l).contains(&volume_l), || format!("volume {volume_l} L outside [0, {capacity_l}] L"))?;
        Ok(Self { capacity_ul: liters_to_ul(capacity_l), volume_ul: liters_to_ul(volume_l) })
    }

    pub fn capacity_l(&self) -> f64 {
        ul_to_liters(self.capacity_ul)
    }

    pub fn volume_l(&self) -> f64 {
        ul_to_liters(self.volume_ul)
    }

    pub fn volume_ul(&self) -> u64 {
        self.volume_ul
    }

    pub fn is_empty(&self) -> bool {
        self.volume_ul == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpState {
    pub running: bool,
    /// Liters per second while running.
    pub flow_rate: f64,
    /// Larvae per liter of bladder contents.
    pub larvae_density: f64,
}

impl PumpState {
    pub fn validate(&self) -> Result<()> {
        ensure(self.flow_rate >= 0.0 && self.flow_rate.is_finite(), || {
            format!("flow_rate must be >= 0, got {}", self.flow_rate)
        })?;
        ensure(self.larvae_density >= 0.0 && self.larvae_density.is_finite(), || {
            format!("larvae_density must be >= 0, got {}", self.larvae_density)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateDecision {
    pub pump_on: bool,
    pub low_larvae_alert: bool,
}

/// Pump on/off for one frame. Uses the prediction only, never ground truth.
pub fn gate_decision(mode: DispersalMode, prediction: &Prediction, bladder: &Bladder) -> GateDecision {
    if bladder.is_empty() {
        return GateDecision { pump_on: false, low_larvae_alert: true };
    }
    let pump_on = match mode {
        DispersalMode::ClassifierGated => prediction.predicted.is_suitable(),
        DispersalMode::ConstantPump => true,
    };
    GateDecision { pump_on, low_larvae_alert: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Release {
    pub released_ul: u64,
    pub released_larvae: u64,
    /// Demand exceeded what was left in the bladder.
    pub empty_alert: bool,
    /// Flow was reduced to respect the areal density cap.
    pub flow_capped: bool,
}

/// Releases larvae for one step of `dt` seconds while sweeping a swath of
/// `swath_width` meters at `speed` m/s.
pub fn release_step(
    bladder: &Bladder,
    pump: &PumpState,
    dt: f64,
    swath_width: f64,
    speed: f64,
) -> Result<(Bladder, Release)> {
    ensure(dt > 0.0 && dt.is_finite(), || format!("dt must be positive, got {dt}"))?;
    ensure(swath_width > 0.0 && swath_width.is_finite(), || {
        format!("swath_width must be positive, got {swath_width}")
    })?;
    ensure(speed.is_finite(), || "speed must be finite".into())?;
    pump.validate()?;
    if !pump.running {
        return Ok((*bladder, Release::default()));
    }

    let mut flow = pump.flow_rate;
    let mut flow_capped = false;
    if pump.larvae_density > 0.0 {
        let cap = MAX_AREAL_DENSITY * swath_width * speed.abs() / pump.larvae_density;
        if flow > cap {
            flow = cap;
            flow_capped = true;
        }
    }
    let demand_ul = (flow * dt * UL_PER_L).floor() as u64;
    let released_ul = demand_ul.min(bladder.volume_ul);
    let empty_alert = demand_ul > bladder.volume_ul;
    let released_larvae = (ul_to_liters(released_ul) * pump.larvae_density).floor() as u64;
    let next = Bladder { volume_ul: bladder.volume_ul - released_ul, ..*bladder };
    Ok((next, Release { released_ul, released_larvae, empty_alert, flow_capped }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeReading {
    pub fraction: f64,
    pub low_larvae_alert: bool,
}

/// Remaining-larvae estimate shown to the operator.
pub fn fuel_gauge(bladder: &Bladder) -> Result<GaugeReading> {
    ensure(bladder.capacity_ul > 0, || "bladder capacity is zero".into())?;
    let fraction = bladder.volume_ul as f64 / bladder.capacity_ul as f64;
    Ok(GaugeReading { fraction, low_larvae_alert: fraction <= LOW_LARVAE_FRACTION })
}

/// One classified frame and what the pump did about it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersalEvent {
    pub frame_id: u64,
    pub timestamp: f64,
    pub position: Vec2,
    /// `[col, row]` of the map cell under the vehicle.
    pub cell: [u32; 2],
    pub cell_area: f64,
    pub ground_truth: SubstrateClass,
    pub predicted: SubstrateClass,
    pub released_ul: u64,
    pub released_larvae: u64,
    /// The bladder was empty when the decision was made.
    pub bladder_empty: bool,
}

impl DispersalEvent {
    pub fn released(&self) -> bool {
        self.released_ul > 0
    }

    pub fn released_liters(&self) -> f64 {
        ul_to_liters(self.released_ul)
    }
}

/// Where and when a frame was taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameContext {
    pub position: Vec2,
    pub cell: [u32; 2],
    pub cell_area: f64,
    pub ground_truth: SubstrateClass,
    pub speed: f64,
    pub dt: f64,
}

/// Per-vehicle gating state machine with an append-only event log.
#[derive(Debug, Clone)]
pub struct DispersalController {
    mode: DispersalMode,
    bladder: Bladder,
    initial_ul: u64,
    flow_rate: f64,
    larvae_density: f64,
    swath_width: f64,
    events: Vec<DispersalEvent>,
}

impl DispersalController {
    pub fn new(
        mode: DispersalMode,
        bladder: Bladder,
        flow_rate: f64,
        larvae_density: f64,
        swath_width: f64,
    ) -> Result<Self> {
        PumpState { running: false, flow_rate, larvae_density }.validate()?;
        ensure(swath_width > 0.0 && swath_width.is_finite(), || {
            format!("swath_width must be positive, got {swath_width}")
        })?;
        Ok(Self {
            mode,
            initial_ul: bladder.volume_ul,
            bladder,
            flow_rate,
            larvae_density,
            swath_width,
            events: Vec::new(),
        })
    }

    pub fn mode(&self) -> DispersalMode {
        self.mode
    }

    /// Switches the gating mode for subsequent frames.
    pub fn set_mode(&mut self, mode: DispersalMode) {
        self.mode = mode;
    }

    pub fn bladder(&self) -> &Bladder {
        &self.bladder
    }

    pub fn initial_ul(&self) -> u64 {
        self.initial_ul
    }

    pub fn events(&self) -> &[DispersalEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<DispersalEvent> {
        self.events
    }

    /// Gates, releases and logs one frame.
    pub fn process(&mut self, prediction: &Prediction, ctx: &FrameContext) -> Result<DispersalEvent> {
        let gate = gate_decision(self.mode, prediction, &self.bladder);
        let pump = PumpState { running: gate.pump_on, flow_rate: self.flow_rate, larvae_density: self.larvae_density };
        let (bladder, release) = release_step(&self.bladder, &pump, ctx.dt, self.swath_width, ctx.speed)?;
        self.bladder = bladder;
        let event = DispersalEvent {
            frame_id: prediction.frame_id,
            timestamp: prediction.timestamp,
            position: ctx.position,
            cell: ctx.cell,
            cell_area: ctx.cell_area,
            ground_truth: ctx.ground_truth,
            predicted: prediction.predicted,
            released_ul: release.released_ul,
            released_larvae: release.released_larvae,
            bladder_empty: gate.low_larvae_alert,
        };
        self.events.push(event);
        Ok(event)
    }
}
