//! Console feed messages. Every websocket text frame is one JSON object with a
//! `type` field and, for most types, a `data` field.

use reefseed::fleetlink::{CommandMessage, TelemetryMessage};
use reefseed::guidance::{FormationSpec, Mission};
use serde::{Deserialize, Serialize};

/// Per-vehicle state as seen by the hub.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleStatus {
    pub vehicle_id: String,
    pub stale: bool,
    /// Seconds since the hub started.
    pub last_seen: f64,
    pub telemetry: Option<TelemetryMessage>,
}

/// One mission assignment from a formation dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub vehicle_id: String,
    pub mission: Mission,
}

/// Server to console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum FeedMessage {
    Snapshot {
        vehicles: Vec<VehicleStatus>,
    },
    Telemetry(TelemetryMessage),
    VehicleJoined {
        vehicle_id: String,
    },
    VehicleLeft {
        vehicle_id: String,
    },
    /// Full set of stale vehicles, sent whenever it changes.
    Stale {
        vehicle_ids: Vec<String>,
    },
    /// Missions sent out by a formation dispatch.
    Dispatched {
        assignments: Vec<Assignment>,
    },
    /// Answer to a console request carrying the same `id`.
    Reply {
        id: Option<u64>,
        ok: bool,
        error: Option<String>,
    },
    /// This subscriber fell behind and `skipped` frames were dropped.
    Lagged {
        skipped: u64,
    },
}

/// Console to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum ConsoleRequest {
    Command(CommandMessage),
    DispatchFormation {
        base: Mission,
        spec: FormationSpec,
        /// Also send Start to every assigned vehicle.
        #[serde(default)]
        start: bool,
    },
    Snapshot,
}

/// A console request with an optional correlation id echoed in the reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsoleEnvelope {
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(flatten)]
    pub request: ConsoleRequest,
}

impl FeedMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feed message serialises")
    }
}
