//! Fleet-control service for up to seven reef-seeding ASVs.
//!
//! Vehicles connect over TCP and speak the length-prefixed frame protocol of
//! [`reefseed::fleetlink`]. A single hub task owns the session registry;
//! connection tasks talk to it over channels. Telemetry is fanned out to
//! websocket console subscribers on the same port, and slow subscribers drop
//! frames instead of stalling vehicles.
//!
//! - [`hub`]: the registry-owning actor and its handle
//! - [`server`]: TCP accept loop, vehicle links and the HTTP/websocket feed
//! - [`feed`]: JSON messages exchanged with console clients
//! - [`simvehicle`]: simulated vehicles that connect like real ones

pub mod feed;
pub mod hub;
pub mod server;
pub mod simvehicle;

pub use hub::{Hub, HubConfig, HubHandle};
pub use server::{serve, FleetServer, ServerConfig};
