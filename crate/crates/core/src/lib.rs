//! Deterministic simulator for classifier-gated coral larvae dispersal from
//! small autonomous surface vehicles.
//!
//! The crate is organised bottom-up:
//!
//! * [`reefworld`] synthetic benthic substrate maps and wind disturbance.
//! * [`vehicle`] differential-drive kinematics, battery and payload modes.
//! * [`guidance`] cross-track path following, coverage planning and formations.
//! * [`perception`] a seeded substrate-classifier emulator and confusion metrics.
//! * [`dispersal`] the pump-gating state machine and bladder accounting.
//! * [`metrics`] area-weighted field accounting over dispersal event logs.
//! * [`fleetlink`] the fleet wire protocol and session registry.
//! * [`scenario`] scenario files, presets and the simulation loop.
//! * [`sweep`] batch runs over seeds, parallel when the `parallel` feature is on.

pub mod dispersal;
pub mod error;
pub mod fleetlink;
pub mod geom;
pub mod guidance;
pub mod metrics;
pub mod perception;
pub mod reefworld;
pub mod scenario;
pub mod sweep;
pub mod vehicle;

pub use error::{Error, Result};
pub use geom::Vec2;
