//! Simulated vehicles that connect to the service over TCP exactly like
//! field units: telemetry out every tick, commands in.

use std::io;
use std::net::SocketAddr;
use std::time::Duration;

use reefseed::fleetlink::{
    encode_message, Command, CommandMessage, Decision, Message, MissionProgress, TelemetryMessage,
};
use reefseed::guidance::Mission;
use reefseed::perception::EmulatedClassifier;
use reefseed::scenario::{Scenario, Simulation, Termination};
use reefseed::vehicle::Pose2D;
use reefseed::Vec2;
use tokio::io::AsyncWriteExt;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, watch};
use tracing::{info, warn};

use crate::server::read_frame;

#[derive(Debug, Clone)]
pub struct SimVehicleConfig {
    pub vehicle_id: String,
    pub scenario: Scenario,
    /// Added to the scenario's start position.
    pub start_offset: Vec2,
    /// Replaces the scenario's classifier stream seed.
    pub classifier_seed: Option<u64>,
    /// Wall-clock time per simulation tick.
    pub tick_period: Duration,
    /// Follow the scenario mission without waiting for Start.
    pub autostart: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimVehicleReport {
    pub vehicle_id: String,
    pub ticks: u64,
    pub telemetry_sent: u64,
    pub commands: Vec<Command>,
    pub final_pose: Pose2D,
    pub events: usize,
    pub termination: Option<Termination>,
}

fn other(e: impl std::fmt::Display) -> io::Error {
    io::Error::other(e.to_string())
}

/// Builds the simulation a vehicle runs, before it connects.
pub fn build_simulation(config: &SimVehicleConfig) -> reefseed::Result<Simulation> {
    let mut scenario = config.scenario.clone();
    let base = Simulation::new(&scenario)?;
    let start = base.vehicle().pose;
    scenario.start = Some(Pose2D::new(start.x + config.start_offset.x, start.y + config.start_offset.y, start.heading));
    let sim = Simulation::new(&scenario)?;
    Ok(match config.classifier_seed {
        Some(seed) => {
            let mut model = scenario.classifier_model()?;
            model.rng_seed = seed;
            let classifier = EmulatedClassifier::new(model)?.with_sticky_errors(scenario.classifier.sticky_frames);
            sim.with_classifier(Box::new(classifier))
        }
        None => sim,
    })
}

struct Vehicle {
    id: String,
    sim: Simulation,
    home: Vec2,
    running: bool,
    sequence: u64,
    commands: Vec<Command>,
}

impl Vehicle {
    fn apply(&mut self, command: Command) {
        let result = match &command {
            Command::UploadMission(m) => self.sim.set_mission(m.clone()),
            Command::SetPayload(p) => self.sim.set_payload(*p),
            Command::SetDispersalMode(mode) => self.sim.set_dispersal_mode(*mode),
            Command::Start => {
                self.running = true;
                Ok(())
            }
            Command::Stop => {
                self.running = false;
                Ok(())
            }
            Command::ReturnHome => Mission::transect(vec![self.home]).and_then(|m| {
                self.running = true;
                self.sim.set_mission(m)
            }),
        };
        if let Err(e) = result {
            warn!(vehicle = %self.id, "command {command:?} failed: {e}");
        }
        self.commands.push(command);
    }

    fn tick(&mut self) -> reefseed::Result<()> {
        if self.running {
            if let Some(t) = self.sim.step()? {
                info!(vehicle = %self.id, "run ended: {t:?}");
                self.running = false;
            }
            Ok(())
        } else {
            self.sim.hold()
        }
    }

    fn telemetry(&mut self) -> TelemetryMessage {
        self.sequence += 1;
        let v = self.sim.vehicle();
        TelemetryMessage {
            vehicle_id: self.id.clone(),
            sequence: self.sequence,
            timestamp: self.sim.time(),
            pose: v.pose,
            battery: v.battery_remaining.clamp(0.0, 1.0),
            gauge: self.sim.gauge().clamp(0.0, 1.0),
            last_decision: self.sim.last_decision().map(|(position, predicted)| Decision { position, predicted }),
            mission_progress: MissionProgress {
                waypoint_index: self.sim.active_index() as u32,
                complete: self.sim.termination() == Some(Termination::MissionComplete),
            },
        }
    }
}

/// Connects to `addr` and runs until `stop` flips or the server hangs up.
pub async fn run_sim_vehicle(
    addr: SocketAddr,
    config: SimVehicleConfig,
    mut stop: watch::Receiver<bool>,
) -> io::Result<SimVehicleReport> {
    let sim = build_simulation(&config).map_err(other)?;
    let home = sim.vehicle().pose.position();
    let mut v = Vehicle {
        id: config.vehicle_id.clone(),
        sim,
        home,
        running: config.autostart,
        sequence: 0,
        commands: Vec::new(),
    };

    let stream = TcpStream::connect(addr).await?;
    stream.set_nodelay(true)?;
    let (mut reader, mut writer) = stream.into_split();
    let (cmd_tx, mut cmd_rx) = mpsc::channel::<CommandMessage>(64);
    let read_task = tokio::spawn(async move {
        let mut buf = Vec::new();
        while let Ok(Some(msg)) = read_frame(&mut reader, &mut buf).await {
            if let Message::Command(c) = msg {
                if cmd_tx.send(c).await.is_err() {
                    break;
                }
            }
        }
    });

    let first = encode_message(&Message::Telemetry(v.telemetry())).map_err(other)?;
    writer.write_all(&first).await?;
    let mut sent = 1;
    let mut ticks = 0;
    let mut interval = tokio::time::interval(config.tick_period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut server_gone = false;

    loop {
        tokio::select! {
            _ = interval.tick() => {
                v.tick().map_err(other)?;
                ticks += 1;
                let frame = encode_message(&Message::Telemetry(v.telemetry())).map_err(other)?;
                if writer.write_all(&frame).await.is_err() {
                    break;
                }
                sent += 1;
            }
            cmd = cmd_rx.recv(), if !server_gone => match cmd {
                Some(c) if c.vehicle_id == v.id => v.apply(c.command),
                Some(c) => warn!(vehicle = %v.id, "ignoring command addressed to {}", c.vehicle_id),
                None => server_gone = true,
            },
            _ = crate::server::stopped(&mut stop) => break,
        }
        if server_gone {
            break;
        }
    }
    read_task.abort();
    let _ = writer.shutdown().await;
    Ok(SimVehicleReport {
        vehicle_id: v.id,
        ticks,
        telemetry_sent: sent,
        commands: v.commands,
        final_pose: v.sim.vehicle().pose,
        events: v.sim.events().len(),
        termination: v.sim.termination(),
    })
}
