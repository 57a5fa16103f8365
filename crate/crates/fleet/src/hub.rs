//! The hub task: sole owner of the fleet registry and the per-vehicle command
//! links. Everything else reaches it through a [`HubHandle`].

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use reefseed::fleetlink::{Command, CommandMessage, FleetRegistry, TelemetryMessage};
use reefseed::guidance::{FormationSpec, Mission};
use tokio::sync::{broadcast, mpsc, oneshot};
use tracing::{debug, info, warn};

use crate::feed::{Assignment, FeedMessage, VehicleStatus};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum HubError {
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error("hub has shut down")]
    Closed,
    #[error("telemetry for `{got}` on the link registered as `{expected}`")]
    WrongVehicle { expected: String, got: String },
    #[error("command queue for `{0}` is full")]
    QueueFull(String),
    #[error("vehicle `{0}` has no open link")]
    NoLink(String),
}

/// Registry errors carried as text so that they can cross task boundaries.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("{0}")]
pub struct FleetError(pub String);

impl From<reefseed::Error> for HubError {
    fn from(e: reefseed::Error) -> Self {
        HubError::Fleet(FleetError(e.to_string()))
    }
}

pub type HubResult<T> = Result<T, HubError>;

#[derive(Debug, Clone)]
pub struct HubConfig {
    /// Silence after which a vehicle is flagged stale.
    pub stale_timeout: Duration,
    pub sweep_interval: Duration,
    /// Frames buffered per console subscriber before it starts dropping.
    pub feed_capacity: usize,
    /// Commands buffered per vehicle link.
    pub command_queue: usize,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            stale_timeout: Duration::from_secs(5),
            sweep_interval: Duration::from_millis(500),
            feed_capacity: 256,
            command_queue: 32,
        }
    }
}

/// Identifies one connection; a reconnect under the same vehicle id gets a
/// new link id so that the old connection's departure is ignored.
pub type LinkId = u64;

enum Request {
    Join { vehicle_id: String, link: mpsc::Sender<CommandMessage>, reply: oneshot::Sender<HubResult<LinkId>> },
    Telemetry { link: LinkId, msg: TelemetryMessage },
    Leave { vehicle_id: String, link: LinkId },
    Command { cmd: CommandMessage, reply: oneshot::Sender<HubResult<()>> },
    Dispatch { base: Mission, spec: FormationSpec, start: bool, reply: oneshot::Sender<HubResult<Vec<Assignment>>> },
    Snapshot { reply: oneshot::Sender<Vec<VehicleStatus>> },
}

struct Link {
    id: LinkId,
    tx: mpsc::Sender<CommandMessage>,
}

pub struct Hub {
    config: HubConfig,
    started: Instant,
    registry: FleetRegistry,
    links: BTreeMap<String, Link>,
    latest: BTreeMap<String, TelemetryMessage>,
    stale: BTreeSet<String>,
    next_link: LinkId,
    feed: broadcast::Sender<FeedMessage>,
}

/// Cheap, cloneable access to a running hub.
#[derive(Clone)]
pub struct HubHandle {
    tx: mpsc::Sender<Request>,
    feed: broadcast::Sender<FeedMessage>,
}

impl Hub {
    /// Starts the hub task. It runs until every handle has been dropped.
    pub fn spawn(config: HubConfig) -> HubHandle {
        let (tx, rx) = mpsc::channel(1024);
        let (feed, _) = broadcast::channel(config.feed_capacity.max(1));
        let hub = Hub {
            config,
            started: Instant::now(),
            registry: FleetRegistry::new(),
            links: BTreeMap::new(),
            latest: BTreeMap::new(),
            stale: BTreeSet::new(),
            next_link: 1,
            feed: feed.clone(),
        };
        tokio::spawn(hub.run(rx));
        HubHandle { tx, feed }
    }

    fn now(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn publish(&self, msg: FeedMessage) {
        // no subscribers is fine
        let _ = self.feed.send(msg);
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Request>) {
        let mut sweep = tokio::time::interval(self.config.sweep_interval);
        sweep.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                req = rx.recv() => match req {
                    Some(req) => self.handle(req),
                    None => break,
                },
                _ = sweep.tick() => self.sweep(),
            }
        }
        debug!("hub stopped");
    }

    fn handle(&mut self, req: Request) {
        match req {
            Request::Join { vehicle_id, link, reply } => {
                let _ = reply.send(self.join(vehicle_id, link));
            }
            Request::Telemetry { link, msg } => self.telemetry(link, msg),
            Request::Leave { vehicle_id, link } => self.leave(&vehicle_id, link),
            Request::Command { cmd, reply } => {
                let _ = reply.send(self.command(cmd));
            }
            Request::Dispatch { base, spec, start, reply } => {
                let _ = reply.send(self.dispatch(&base, &spec, start));
            }
            Request::Snapshot { reply } => {
                let _ = reply.send(self.snapshot());
            }
        }
    }

    fn join(&mut self, vehicle_id: String, tx: mpsc::Sender<CommandMessage>) -> HubResult<LinkId> {
        self.registry.register_vehicle(&vehicle_id, self.now())?;
        let id = self.next_link;
        self.next_link += 1;
        let replaced = self.links.insert(vehicle_id.clone(), Link { id, tx }).is_some();
        info!(vehicle = %vehicle_id, link = id, replaced, "vehicle joined");
        self.publish(FeedMessage::VehicleJoined { vehicle_id });
        Ok(id)
    }

    fn telemetry(&mut self, link: LinkId, msg: TelemetryMessage) {
        if self.links.get(&msg.vehicle_id).map(|l| l.id) != Some(link) {
            warn!(vehicle = %msg.vehicle_id, link, "telemetry from a superseded link dropped");
            return;
        }
        match self.registry.ingest_telemetry(&msg, self.now()) {
            Ok(()) => {
                self.latest.insert(msg.vehicle_id.clone(), msg.clone());
                self.publish(FeedMessage::Telemetry(msg));
            }
            Err(e) => warn!(vehicle = %msg.vehicle_id, "telemetry rejected: {e}"),
        }
    }

    fn leave(&mut self, vehicle_id: &str, link: LinkId) {
        if self.links.get(vehicle_id).map(|l| l.id) != Some(link) {
            return;
        }
        self.links.remove(vehicle_id);
        self.latest.remove(vehicle_id);
        self.registry.unregister_vehicle(vehicle_id);
        if self.stale.remove(vehicle_id) {
            self.publish(FeedMessage::Stale { vehicle_ids: self.stale.iter().cloned().collect() });
        }
        info!(vehicle = %vehicle_id, "vehicle left");
        self.publish(FeedMessage::VehicleLeft { vehicle_id: vehicle_id.to_string() });
    }

    fn command(&mut self, cmd: CommandMessage) -> HubResult<()> {
        self.registry.validate_command(&cmd)?;
        let link = self.links.get(&cmd.vehicle_id).ok_or_else(|| HubError::NoLink(cmd.vehicle_id.clone()))?;
        let id = cmd.vehicle_id.clone();
        link.tx.try_send(cmd).map_err(|e| match e {
            mpsc::error::TrySendError::Full(_) => HubError::QueueFull(id),
            mpsc::error::TrySendError::Closed(_) => HubError::NoLink(id),
        })
    }

    fn dispatch(&mut self, base: &Mission, spec: &FormationSpec, start: bool) -> HubResult<Vec<Assignment>> {
        let plan = self.registry.dispatch_formation(base, spec)?;
        // check every vehicle before sending anything
        for (id, mission) in &plan {
            let upload = CommandMessage { vehicle_id: id.clone(), command: Command::UploadMission(mission.clone()) };
            self.registry.validate_command(&upload)?;
        }
        let mut out = Vec::with_capacity(plan.len());
        for (id, mission) in plan {
            self.command(CommandMessage { vehicle_id: id.clone(), command: Command::UploadMission(mission.clone()) })?;
            if start {
                self.command(CommandMessage { vehicle_id: id.clone(), command: Command::Start })?;
            }
            out.push(Assignment { vehicle_id: id, mission });
        }
        self.publish(FeedMessage::Dispatched { assignments: out.clone() });
        Ok(out)
    }

    fn sweep(&mut self) {
        let now = self.now();
        let stale: BTreeSet<String> =
            self.registry.staleness_sweep(now, self.config.stale_timeout.as_secs_f64()).into_iter().collect();
        if stale != self.stale {
            for id in stale.difference(&self.stale) {
                warn!(vehicle = %id, "vehicle stale");
            }
            self.stale = stale;
            self.publish(FeedMessage::Stale { vehicle_ids: self.stale.iter().cloned().collect() });
        }
    }

    fn snapshot(&self) -> Vec<VehicleStatus> {
        self.registry
            .ids()
            .map(|id| {
                let s = self.registry.session(id).expect("listed id has a session");
                VehicleStatus {
                    vehicle_id: id.to_string(),
                    stale: s.stale,
                    last_seen: s.last_seen,
                    telemetry: self.latest.get(id).cloned(),
                }
            })
            .collect()
    }
}

impl HubHandle {
    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> HubResult<T> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).await.map_err(|_| HubError::Closed)?;
        rx.await.map_err(|_| HubError::Closed)
    }

    /// Registers a vehicle link. Commands for the vehicle arrive on the
    /// receiving end of `link`.
    pub async fn join(&self, vehicle_id: &str, link: mpsc::Sender<CommandMessage>) -> HubResult<LinkId> {
        self.call(|reply| Request::Join { vehicle_id: vehicle_id.to_string(), link, reply }).await?
    }

    pub async fn telemetry(&self, link: LinkId, msg: TelemetryMessage) -> HubResult<()> {
        self.tx.send(Request::Telemetry { link, msg }).await.map_err(|_| HubError::Closed)
    }

    pub async fn leave(&self, vehicle_id: &str, link: LinkId) {
        let _ = self.tx.send(Request::Leave { vehicle_id: vehicle_id.to_string(), link }).await;
    }

    pub async fn command(&self, cmd: CommandMessage) -> HubResult<()> {
        self.call(|reply| Request::Command { cmd, reply }).await?
    }

    pub async fn dispatch(&self, base: Mission, spec: FormationSpec, start: bool) -> HubResult<Vec<Assignment>> {
        self.call(|reply| Request::Dispatch { base, spec, start, reply }).await?
    }

    pub async fn snapshot(&self) -> HubResult<Vec<VehicleStatus>> {
        self.call(|reply| Request::Snapshot { reply }).await
    }

    /// A new console subscription. Frames published before this call are not
    /// delivered.
    pub fn subscribe(&self) -> broadcast::Receiver<FeedMessage> {
        self.feed.subscribe()
    }
}
