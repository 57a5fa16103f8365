//! Fleet wire protocol and session registry.
//!
//! Frame layout:
//!
//! ```text
//! +----------------+-----+---------------------------+
//! | length: u32 BE | tag | canonical JSON payload    |
//! +----------------+-----+---------------------------+
//! ```
//!
//! `length` counts the tag byte plus the payload. Tag `0x01` is telemetry,
//! `0x02` a command. The payload is the compact JSON rendering of the message
//! with fields in declaration order; decoding re-encodes and rejects any frame
//! whose bytes differ, so every message has exactly one valid encoding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersal::DispersalMode;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::guidance::{formation_offsets, FormationSpec, Mission, MAX_FLEET};
use crate::reefworld::SubstrateClass;
use crate::vehicle::{PayloadConfig, Pose2D};

pub const DEFAULT_PORT: u16 = 7077;
pub const MAX_PAYLOAD: usize = 64 * 1024;
pub const HEADER_LEN: usize = 4;
pub const MAX_VEHICLE_ID_LEN: usize = 64;

pub const TAG_TELEMETRY: u8 = 0x01;
pub const TAG_COMMAND: u8 = 0x02;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("frame length {0} is below the minimum")]
    TooShort(usize),
    #[error("payload of {0} bytes exceeds the 64 KiB limit")]
    Oversize(usize),
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("payload is not in canonical form")]
    NonCanonical,
    #[error("invalid message: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub position: Vec2,
    pub predicted: SubstrateClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MissionProgress {
    pub waypoint_index: u32,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryMessage {
    pub vehicle_id: String,
    pub sequence: u64,
    pub timestamp: f64,
    pub pose: Pose2D,
    pub battery: f64,
    /// Bladder fuel-gauge fraction.
    pub gauge: f64,
    pub last_decision: Option<Decision>,
    pub mission_progress: MissionProgress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Command {
    UploadMission(Mission),
    SetPayload(PayloadConfig),
    SetDispersalMode(DispersalMode),
    Start,
    Stop,
    ReturnHome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub vehicle_id: String,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Telemetry(TelemetryMessage),
    Command(CommandMessage),
}

impl From<TelemetryMessage> for Message {
    fn from(m: TelemetryMessage) -> Self {
        Message::Telemetry(m)
    }
}

impl From<CommandMessage> for Message {
    fn from(m: CommandMessage) -> Self {
        Message::Command(m)
    }
}

impl Message {
    pub fn vehicle_id(&self) -> &str {
        match self {
            Message::Telemetry(t) => &t.vehicle_id,
            Message::Command(c) => &c.vehicle_id,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), CodecError> {
        let invalid = |m: &str| Err(CodecError::Invalid(m.to_string()));
        let id = self.vehicle_id();
        if id.is_empty() || id.len() > MAX_VEHICLE_ID_LEN {
            return invalid("vehicle_id must be 1..=64 bytes");
        }
        match self {
            Message::Telemetry(t) => {
                let finite =
                    [t.timestamp, t.pose.x, t.pose.y, t.pose.heading, t.battery, t.gauge].iter().all(|v| v.is_finite());
                if !finite {
                    return invalid("telemetry fields must be finite");
                }
                if !(t.pose.heading > -std::f64::consts::PI && t.pose.heading <= std::f64::consts::PI) {
                    return invalid("heading outside (-pi, pi]");
                }
                if !(0.0..=1.0).contains(&t.battery) || !(0.0..=1.0).contains(&t.gauge) {
                    return invalid("battery and gauge must be fractions");
                }
                if t.last_decision.is_some_and(|d| !d.position.is_finite()) {
                    return invalid("decision position must be finite");
                }
            }
            Message::Command(c) => match &c.command {
                Command::UploadMission(m) => m.validate().map_err(|e| CodecError::Invalid(e.to_string()))?,
                Command::SetPayload(p) => p.validate().map_err(|e| CodecError::Invalid(e.to_string()))?,
                _ => {}
            },
        }
        Ok(())
    }
}

fn payload_json(msg: &Message) -> std::result::Result<(u8, Vec<u8>), CodecError> {
    let res = match msg {
        Message::Telemetry(t) => serde_json::to_vec(t).map(|v| (TAG_TELEMETRY, v)),
        Message::Command(c) => serde_json::to_vec(c).map(|v| (TAG_COMMAND, v)),
    };
    res.map_err(|e| CodecError::Malformed(e.to_string()))
}

pub fn encode_message(msg: &Message) -> std::result::Result<Vec<u8>, CodecError> {
    msg.validate()?;
    let (tag, payload) = payload_json(msg)?;
    if payload.len() > MAX_PAYLOAD {
        return Err(CodecError::Oversize(payload.len()));
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + 1 + payload.len());
    frame.extend_from_slice(&((payload.len() + 1) as u32).to_be_bytes());
    frame.push(tag);
    frame.extend_from_slice(&payload);
    Ok(frame)
}

/// Decodes the first frame in `buf`. `Ok(None)` means more bytes are needed.
/// On success returns the message and the number of bytes consumed.
pub fn try_decode_frame(buf: &[u8]) -> std::result::Result<Option<(Message, usize)>, CodecError> {
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    // tag plus at least `{}`
    if len < 3 {
        return Err(CodecError::TooShort(len));
    }
    if len - 1 > MAX_PAYLOAD {
        return Err(CodecError::Oversize(len - 1));
    }
    let end = HEADER_LEN + len;
    if buf.len() < end {
        return Ok(None);
    }
    let tag = buf[HEADER_LEN];
    let payload = &buf[HEADER_LEN + 1..end];
    let malformed = |e: serde_json::Error| CodecError::Malformed(e.to_string());
    let msg = match tag {
        TAG_TELEMETRY => Message::Telemetry(serde_json::from_slice(payload).map_err(malformed)?),
        TAG_COMMAND => Message::Command(serde_json::from_slice(payload).map_err(malformed)?),
        other => return Err(CodecError::UnknownTag(other)),
    };
    msg.validate()?;
    if payload_json(&msg)?.1 != payload {
        return Err(CodecError::NonCanonical);
    }
    Ok(Some((msg, end)))
}

/// Decodes exactly one frame occupying all of `buf`.
pub fn decode_message(buf: &[u8]) -> std::result::Result<Message, CodecError> {
    match try_decode_frame(buf)? {
        Some((msg, used)) if used == buf.len() => Ok(msg),
        Some((_, used)) => Err(CodecError::Trailing(buf.len() - used)),
        None => {
            let needed = if buf.len() < HEADER_LEN {
                HEADER_LEN
            } else {
                HEADER_LEN + u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize
            };
            Err(CodecError::Truncated { needed, have: buf.len() })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub last_seen: f64,
    pub stale: bool,
    pub last_sequence: Option<u64>,
}

/// Active vehicle sessions, at most [`MAX_FLEET`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FleetRegistry {
    sessions: BTreeMap<String, Session>,
}

impl FleetRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }

    /// Registered, non-stale vehicles in id order.
    pub fn active(&self) -> Vec<&str> {
        self.sessions.iter().filter(|(_, s)| !s.stale).map(|(k, _)| k.as_str()).collect()
    }

    /// Adds a session, or refreshes `last_seen` for a known id.
    pub fn register_vehicle(&mut self, vehicle_id: &str, now: f64) -> Result<()> {
        if vehicle_id.is_empty() || vehicle_id.len() > MAX_VEHICLE_ID_LEN {
            return Err(Error::InvalidParameter("vehicle id must be 1..=64 bytes".into()));
        }
        if let Some(s) = self.sessions.get_mut(vehicle_id) {
            s.last_seen = s.last_seen.max(now);
            return Ok(());
        }
        if self.sessions.len() >= MAX_FLEET {
            return Err(Error::FleetCapacity(self.sessions.len()));
        }
        self.sessions.insert(vehicle_id.to_string(), Session { last_seen: now, stale: false, last_sequence: None });
        Ok(())
    }

    pub fn unregister_vehicle(&mut self, vehicle_id: &str) -> bool {
        self.sessions.remove(vehicle_id).is_some()
    }

    /// Records a telemetry frame received at `now`. Frames whose sequence does
    /// not advance are rejected and leave the session untouched.
    pub fn ingest_telemetry(&mut self, msg: &TelemetryMessage, now: f64) -> Result<()> {
        let s = self.sessions.get_mut(&msg.vehicle_id).ok_or_else(|| Error::UnknownVehicle(msg.vehicle_id.clone()))?;
        if let Some(last) = s.last_sequence {
            if msg.sequence <= last {
                return Err(Error::OutOfOrder { vehicle: msg.vehicle_id.clone(), got: msg.sequence, last });
            }
        }
        s.last_sequence = Some(msg.sequence);
        s.last_seen = s.last_seen.max(now);
        Ok(())
    }

    /// Recomputes staleness and returns the ids that are stale as of `now`.
    pub fn staleness_sweep(&mut self, now: f64, timeout: f64) -> Vec<String> {
        let mut stale = Vec::new();
        for (id, s) in &mut self.sessions {
            s.stale = now - s.last_seen > timeout;
            if s.stale {
                stale.push(id.clone());
            }
        }
        stale
    }

    /// Checks whether `cmd` may be forwarded to its vehicle.
    pub fn validate_command(&self, cmd: &CommandMessage) -> Result<()> {
        let s = self.sessions.get(&cmd.vehicle_id).ok_or_else(|| Error::UnknownVehicle(cmd.vehicle_id.clone()))?;
        match cmd.command {
            Command::Stop => Ok(()),
            Command::UploadMission(_) | Command::Start if s.stale => Err(Error::StaleVehicle(cmd.vehicle_id.clone())),
            _ => Ok(()),
        }
    }

    /// Translates `base` by each formation slot and assigns the slots to
    /// active vehicles in id order.
    pub fn dispatch_formation(&self, base: &Mission, spec: &FormationSpec) -> Result<Vec<(String, Mission)>> {
        base.validate()?;
        let offsets = formation_offsets(spec)?;
        let active = self.active();
        if active.len() < spec.count {
            return Err(Error::Dispatch(format!("formation needs {} vehicles, {} active", spec.count, active.len())));
        }
        let dir = base.initial_direction();
        Ok(active
            .into_iter()
            .zip(offsets)
            .map(|(id, off)| (id.to_string(), base.translated(off.to_world(dir))))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::{FormationShape, MissionMode};

    #[allow(clippy::approx_constant)]
    pub(crate) fn sample_telemetry() -> TelemetryMessage {
        TelemetryMessage {
            vehicle_id: "asv-1".into(),
            sequence: 42,
            timestamp: 10.5,
            pose: Pose2D::new(12.5, -3.25, 1.5708),
            battery: 0.9,
            gauge: 0.75,
            last_decision: None,
            mission_progress: MissionProgress { waypoint_index: 3, complete: false },
        }
    }

    #[test]
    fn telemetry_fixture_is_byte_exact() {
        let payload = br#"{"vehicle_id":"asv-1","sequence":42,"timestamp":10.5,"pose":{"x":12.5,"y":-3.25,"heading":1.5708},"battery":0.9,"gauge":0.75,"last_decision":null,"mission_progress":{"waypoint_index":3,"complete":false}}"#;
        let mut fixture = ((payload.len() + 1) as u32).to_be_bytes().to_vec();
        fixture.push(0x01);
        fixture.extend_from_slice(payload);
        assert_eq!(&fixture[..5], &[0x00, 0x00, 0x00, 0xcc, 0x01]);

        let msg = Message::Telemetry(sample_telemetry());
        assert_eq!(encode_message(&msg).unwrap(), fixture);
        assert_eq!(decode_message(&fixture).unwrap(), msg);
    }

    #[test]
    fn empty_and_short_frames_rejected() {
        assert!(matches!(decode_message(&[]), Err(CodecError::Truncated { .. })));
        assert_eq!(decode_message(&[0, 0, 0, 0]), Err(CodecError::TooShort(0)));
        assert_eq!(decode_message(&[0, 0, 0, 1, 1]), Err(CodecError::TooShort(1)));
    }

    #[test]
    fn oversize_rejected() {
        let mission = Mission::new(
            (0..6000).map(|i| Vec2::new(i as f64 * 1.123456789, 0.5)).collect(),
            1.0,
            MissionMode::Transect,
        )
        .unwrap();
        let msg = Message::Command(CommandMessage { vehicle_id: "a".into(), command: Command::UploadMission(mission) });
        assert!(matches!(encode_message(&msg), Err(CodecError::Oversize(_))));
        let header = ((MAX_PAYLOAD + 2) as u32).to_be_bytes();
        assert!(matches!(try_decode_frame(&header), Err(CodecError::Oversize(_))));
    }

    #[test]
    fn non_canonical_payload_rejected() {
        let payload = br#"{"vehicle_id":"a", "command":{"kind":"stop"}}"#;
        let mut frame = ((payload.len() + 1) as u32).to_be_bytes().to_vec();
        frame.push(TAG_COMMAND);
        frame.extend_from_slice(payload);
        assert_eq!(decode_message(&frame), Err(CodecError::NonCanonical));
    }

    #[test]
    fn trailing_and_partial() {
        let frame = encode_message(&sample_telemetry().into()).unwrap();
        let mut two = frame.clone();
        two.extend_from_slice(&frame);
        assert_eq!(decode_message(&two), Err(CodecError::Trailing(frame.len())));
        assert_eq!(try_decode_frame(&frame[..frame.len() - 1]).unwrap(), None);
        let (_, used) = try_decode_frame(&two).unwrap().unwrap();
        assert_eq!(used, frame.len());
    }

    #[test]
    fn invalid_messages_rejected() {
        let mut t = sample_telemetry();
        t.gauge = 1.5;
        assert!(matches!(encode_message(&t.into()), Err(CodecError::Invalid(_))));
        let mut t = sample_telemetry();
        t.vehicle_id.clear();
        assert!(encode_message(&t.into()).is_err());
        let mut t = sample_telemetry();
        t.timestamp = f64::NAN;
        assert!(encode_message(&t.into()).is_err());
    }

    #[test]
    fn registry_capacity() {
        let mut reg = FleetRegistry::new();
        for i in 0..7 {
            reg.register_vehicle(&format!("asv-{i}"), 0.0).unwrap();
        }
        assert_eq!(reg.active().len(), 7);
        reg.register_vehicle("asv-3", 5.0).unwrap();
        assert_eq!(reg.len(), 7);
        assert_eq!(reg.session("asv-3").unwrap().last_seen, 5.0);
        assert_eq!(reg.register_vehicle("asv-8", 0.0), Err(Error::FleetCapacity(7)));
        assert!(reg.register_vehicle("", 0.0).is_err());
    }

    #[test]
    fn out_of_order_telemetry_rejected() {
        let mut reg = FleetRegistry::new();
        reg.register_vehicle("asv-1", 0.0).unwrap();
        let t = sample_telemetry();
        reg.ingest_telemetry(&t, 1.0).unwrap();
        let before = reg.clone();
        assert!(matches!(reg.ingest_telemetry(&t, 2.0), Err(Error::OutOfOrder { .. })));
        assert_eq!(reg, before);
        let mut unknown = sample_telemetry();
        unknown.vehicle_id = "ghost".into();
        assert_eq!(reg.ingest_telemetry(&unknown, 1.0), Err(Error::UnknownVehicle("ghost".into())));
    }

    #[test]
    fn staleness_walkthrough() {
        let mut reg = FleetRegistry::new();
        reg.register_vehicle("asv-1", 0.0).unwrap();
        reg.register_vehicle("asv-2", 0.0).unwrap();
        assert!(reg.staleness_sweep(1.0, 5.0).is_empty());

        let mut t = sample_telemetry();
        t.vehicle_id = "asv-2".into();
        reg.ingest_telemetry(&t, 10.0).unwrap();
        // asv-1 silent for twice the timeout
        assert_eq!(reg.staleness_sweep(10.0, 5.0), vec!["asv-1".to_string()]);
        let stale_upload = CommandMessage {
            vehicle_id: "asv-1".into(),
            command: Command::UploadMission(Mission::transect(vec![Vec2::ZERO]).unwrap()),
        };
        assert_eq!(reg.validate_command(&stale_upload), Err(Error::StaleVehicle("asv-1".into())));
        let stop = CommandMessage { vehicle_id: "asv-1".into(), command: Command::Stop };
        assert!(reg.validate_command(&stop).is_ok());
        assert_eq!(reg.active(), vec!["asv-2"]);

        t.vehicle_id = "asv-1".into();
        reg.ingest_telemetry(&t, 11.0).unwrap();
        assert!(reg.staleness_sweep(12.0, 5.0).is_empty());
        assert!(reg.validate_command(&stale_upload).is_ok());

        let ghost = CommandMessage { vehicle_id: "ghost".into(), command: Command::Stop };
        assert_eq!(reg.validate_command(&ghost), Err(Error::UnknownVehicle("ghost".into())));
    }

    #[test]
    fn dispatch_examples() {
        let base = Mission::transect(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)]).unwrap();
        let mut reg = FleetRegistry::new();
        reg.register_vehicle("a", 0.0).unwrap();
        let one = reg
            .dispatch_formation(&base, &FormationSpec { shape: FormationShape::Vee, spacing: 5.0, count: 1 })
            .unwrap();
        assert_eq!(one, vec![("a".to_string(), base.clone())]);

        reg.register_vehicle("b", 0.0).unwrap();
        let line3 = FormationSpec { shape: FormationShape::Line, spacing: 5.0, count: 3 };
        assert!(matches!(reg.dispatch_formation(&base, &line3), Err(Error::Dispatch(_))));

        reg.register_vehicle("c", 0.0).unwrap();
        let missions = reg.dispatch_formation(&base, &line3).unwrap();
        let mut ys: Vec<f64> = missions.iter().map(|(_, m)| m.waypoints[0].y).collect();
        for (_, m) in &missions {
            assert_eq!(m.waypoints[0].y, m.waypoints[1].y);
            assert_eq!(m.waypoints[1].x - m.waypoints[0].x, 100.0);
        }
        ys.sort_by(f64::total_cmp);
        assert_eq!(ys, vec![-5.0, 0.0, 5.0]);
    }
}
