//! Differential-drive surface vehicle: unicycle kinematics, linear battery
//! drain and dockside payload reconfiguration.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geom::{wrap_angle, Vec2};

pub const DEFAULT_CRUISE_SPEED: f64 = 0.75;
pub const DEFAULT_ENDURANCE_S: f64 = 7200.0;
pub const DEFAULT_OMEGA_MAX: f64 = 0.5;
pub const DEFAULT_BLADDER_L: f64 = 100.0;

/// Below this speed the vehicle counts as stationary for reconfiguration.
pub const STATIONARY_SPEED: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Forward speed at full symmetric thrust, m/s.
    pub cruise_speed_max: f64,
    /// Yaw rate at full differential thrust, rad/s.
    pub omega_max: f64,
    /// Seconds of full-thrust running on a full battery.
    pub endurance_s: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { cruise_speed_max: DEFAULT_CRUISE_SPEED, omega_max: DEFAULT_OMEGA_MAX, endurance_s: DEFAULT_ENDURANCE_S }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cruise_speed_max", self.cruise_speed_max),
            ("omega_max", self.omega_max),
            ("endurance_s", self.endurance_s),
        ] {
            ensure(v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Radians in (-pi, pi].
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayloadConfig {
    /// Spawn net; the vehicle drives stern-first into the net opening.
    Collection,
    Dispersal {
        bladder_capacity: f64,
    },
    Monitoring {
        camera_footprint: f64,
    },
}

impl Default for PayloadConfig {
    fn default() -> Self {
        PayloadConfig::Dispersal { bladder_capacity: DEFAULT_BLADDER_L }
    }
}

impl PayloadConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PayloadConfig::Collection => Ok(()),
            PayloadConfig::Dispersal { bladder_capacity } => {
                ensure(bladder_capacity > 0.0 && bladder_capacity.is_finite(), || {
                    format!("bladder_capacity must be positive, got {bladder_capacity}")
                })
            }
            PayloadConfig::Monitoring { camera_footprint } => {
                ensure(camera_footprint > 0.0 && camera_footprint.is_finite(), || {
                    format!("camera_footprint must be positive, got {camera_footprint}")
                })
            }
        }
    }

    pub fn drive_sign(&self) -> DriveSign {
        match self {
            PayloadConfig::Collection => DriveSign::Reverse,
            _ => DriveSign::Forward,
        }
    }

    pub fn bladder_capacity(&self) -> Option<f64> {
        match *self {
            PayloadConfig::Dispersal { bladder_capacity } => Some(bladder_capacity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveSign {
    Forward,
    Reverse,
}

impl DriveSign {
    pub fn factor(self) -> f64 {
        match self {
            DriveSign::Forward => 1.0,
            DriveSign::Reverse => -1.0,
        }
    }
}

/// Normalised thruster demand, each side clamped to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrusterCommand {
    left: f64,
    right: f64,
}

impl ThrusterCommand {
    pub const STOP: ThrusterCommand = ThrusterCommand { left: 0.0, right: 0.0 };

    /// NaN demands are treated as zero.
    pub fn new(left: f64, right: f64) -> Self {
        let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self { left: clamp(left), right: clamp(right) }
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    /// Signed forward speed, m/s. Negative when driving stern-first.
    pub speed: f64,
    pub battery_remaining: f64,
    pub payload: PayloadConfig,
    pub bladder_volume: f64,
    pub drive_sign: DriveSign,
}

impl VehicleState {
    /// Fully charged, stationary vehicle with a full bladder for dispersal payloads.
    pub fn new(pose: Pose2D, payload: PayloadConfig) -> Self {
        Self {
            pose,
            speed: 0.0,
            battery_remaining: 1.0,
            payload,
            bladder_volume: payload.bladder_capacity().unwrap_or(0.0),
            drive_sign: payload.drive_sign(),
        }
    }

    pub fn is_dead(&self) -> bool {
        self.battery_remaining <= 0.0
    }

    /// Direction of travel under positive thrust.
    pub fn travel_heading(&self) -> f64 {
        match self.drive_sign {
            DriveSign::Forward => self.pose.heading,
            DriveSign::Reverse => wrap_angle(self.pose.heading + std::f64::consts::PI),
        }
    }

    pub fn set_bladder_volume(&mut self, liters: f64) {
        let cap = self.payload.bladder_capacity().unwrap_or(0.0);
        self.bladder_volume = liters.clamp(0.0, cap);
    }
}

/// Battery values this close to empty are snapped to zero so that the
/// depletion tick does not depend on accumulated rounding.
const BATTERY_SNAP: f64 = 1e-9;

/// Advances one explicit-Euler step of the unicycle model.
pub fn step_dynamics(
    params: &VehicleParams,
    state: &VehicleState,
    cmd: ThrusterCommand,
    wind: Vec2,
    dt: f64,
) -> Result<VehicleState> {
    ensure(dt > 0.0 && dt.is_finite(), || format!("dt must be positive, got {dt}"))?;
    if state.is_dead() {
        return Ok(*state);
    }
    let (l, r) = (cmd.left(), cmd.right());
    let v = state.drive_sign.factor() * params.cruise_speed_max * (l + r) / 2.0;
    let omega = params.omega_max * (r - l) / 2.0;

    let heading = state.pose.heading;
    let velocity = Vec2::from_angle(heading) * v + wind;
    let pos = state.pose.position() + velocity * dt;

    let drain = (l.abs() + r.abs()) / 2.0 * dt / params.endurance_s;
    let mut battery = state.battery_remaining - drain;
    if battery < BATTERY_SNAP {
        battery = 0.0;
    }

    Ok(VehicleState {
        pose: Pose2D::new(pos.x, pos.y, heading + omega * dt),
        speed: v,
        battery_remaining: battery,
        ..*state
    })
}

/// Swaps the payload. Only allowed while stationary.
pub fn configure_payload(state: &VehicleState, config: PayloadConfig) -> Result<VehicleState> {
    config.validate()?;
    if state.speed.abs() >= STATIONARY_SPEED {
        return Err(Error::InvalidState(format!("cannot reconfigure payload while moving at {:.3} m/s", state.speed)));
    }
    Ok(VehicleState {
        payload: config,
        drive_sign: config.drive_sign(),
        bladder_volume: config.bladder_capacity().unwrap_or(0.0),
        ..*state
    })
}

/// Remaining run time in seconds at the given thrust duty cycle.
pub fn endurance_estimate(params: &VehicleParams, state: &VehicleState, duty: f64) -> Result<f64> {
    if duty == 0.0 {
        return Err(Error::UndefinedEndurance);
    }
    ensure(duty > 0.0 && duty <= 1.0, || format!("duty must be in (0, 1], got {duty}"))?;
    Ok(state.battery_remaining.max(0.0) * params.endurance_s / duty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn dispersal_state() -> VehicleState {
        VehicleState::new(Pose2D::default(), PayloadConfig::default())
    }

    #[test]
    fn full_thrust_cruise() {
        let p = VehicleParams::default();
        let s = step_dynamics(&p, &dispersal_state(), ThrusterCommand::new(1.0, 1.0), Vec2::ZERO, 1.0).unwrap();
        assert!((s.pose.x - 0.75).abs() < 1e-12);
        assert_eq!(s.pose.y, 0.0);
        assert_eq!(s.pose.heading, 0.0);
    }

    #[test]
    fn pure_rotation() {
        let p = VehicleParams::default();
        let s = step_dynamics(&p, &dispersal_state(), ThrusterCommand::new(1.0, -1.0), Vec2::ZERO, 1.0).unwrap();
        assert_eq!(s.pose.position(), Vec2::ZERO);
        assert!((s.pose.heading + p.omega_max).abs() < 1e-12);
    }

    #[test]
    fn wind_drift_only() {
        let p = VehicleParams::default();
        let s = step_dynamics(&p, &dispersal_state(), ThrusterCommand::STOP, Vec2::new(0.2, 0.0), 10.0).unwrap();
        assert!((s.pose.x - 2.0).abs() < 1e-12 && s.pose.y == 0.0);
        assert_eq!(s.battery_remaining, 1.0);
    }

    #[test]
    fn non_positive_dt_rejected() {
        let p = VehicleParams::default();
        for dt in [0.0, -1.0, f64::NAN] {
            assert!(step_dynamics(&p, &dispersal_state(), ThrusterCommand::STOP, Vec2::ZERO, dt).is_err());
        }
    }

    #[test]
    fn dead_vehicle_does_not_move() {
        let p = VehicleParams::default();
        let mut s = dispersal_state();
        s.battery_remaining = 0.0;
        let next = step_dynamics(&p, &s, ThrusterCommand::new(1.0, 1.0), Vec2::new(0.3, 0.0), 1.0).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn thruster_command_clamps() {
        let c = ThrusterCommand::new(3.0, -7.0);
        assert_eq!((c.left(), c.right()), (1.0, -1.0));
        assert_eq!(ThrusterCommand::new(f64::NAN, 0.5).left(), 0.0);
    }

    #[test]
    fn configure_collection_reverses() {
        let s = configure_payload(&dispersal_state(), PayloadConfig::Collection).unwrap();
        assert_eq!(s.drive_sign, DriveSign::Reverse);
        assert_eq!(s.bladder_volume, 0.0);
        let back = configure_payload(&s, PayloadConfig::Monitoring { camera_footprint: 3.0 }).unwrap();
        assert_eq!(back.drive_sign, DriveSign::Forward);
        assert_eq!(back.bladder_volume, 0.0);
    }

    #[test]
    fn configure_dispersal_fills_bladder() {
        let s = VehicleState::new(Pose2D::default(), PayloadConfig::Collection);
        let s = configure_payload(&s, PayloadConfig::Dispersal { bladder_capacity: 100.0 }).unwrap();
        assert_eq!(s.bladder_volume, 100.0);
        assert_eq!(s.drive_sign, DriveSign::Forward);
    }

    #[test]
    fn configure_while_moving_rejected() {
        let mut s = dispersal_state();
        s.speed = 0.5;
        assert!(matches!(configure_payload(&s, PayloadConfig::Collection), Err(Error::InvalidState(_))));
        assert!(configure_payload(&dispersal_state(), PayloadConfig::Dispersal { bladder_capacity: 0.0 }).is_err());
    }

    #[test]
    fn endurance_examples() {
        let p = VehicleParams::default();
        let mut s = dispersal_state();
        assert_eq!(endurance_estimate(&p, &s, 1.0).unwrap(), 7200.0);
        s.battery_remaining = 0.5;
        assert_eq!(endurance_estimate(&p, &s, 0.5).unwrap(), 7200.0);
        s.battery_remaining = 0.0;
        assert_eq!(endurance_estimate(&p, &s, 0.3).unwrap(), 0.0);
        assert_eq!(endurance_estimate(&p, &s, 0.0), Err(Error::UndefinedEndurance));
    }

    fn depletion_time(dt: f64) -> f64 {
        let p = VehicleParams::default();
        let mut s = dispersal_state();
        let mut t = 0.0;
        let mut ticks = 0u64;
        while !s.is_dead() {
            s = step_dynamics(&p, &s, ThrusterCommand::new(1.0, 1.0), Vec2::ZERO, dt).unwrap();
            ticks += 1;
            t = ticks as f64 * dt;
        }
        t
    }

    #[test]
    fn battery_depletes_at_two_hours() {
        for dt in [0.1, 1.0] {
            let t = depletion_time(dt);
            assert!((t - 7200.0).abs() <= dt, "dt={dt}: depleted at {t}");
        }
    }

    fn arb_cmd() -> impl Strategy<Value = ThrusterCommand> {
        (-1.5f64..1.5, -1.5f64..1.5).prop_map(|(l, r)| ThrusterCommand::new(l, r))
    }

    proptest! {
        #[test]
        fn energy_speed_heading_invariants(cmds in proptest::collection::vec(arb_cmd(), 1..60),
                                           dt in 0.05f64..1.0) {
            let p = VehicleParams::default();
            let mut s = dispersal_state();
            for c in cmds {
                let next = step_dynamics(&p, &s, c, Vec2::new(0.1, -0.05), dt).unwrap();
                prop_assert!(next.battery_remaining <= s.battery_remaining);
                prop_assert!(next.speed.abs() <= p.cruise_speed_max + 1e-12);
                prop_assert!(next.pose.heading > -PI && next.pose.heading <= PI);
                s = next;
            }
        }

        #[test]
        fn reversed_drive_mirrors_displacement(cmds in proptest::collection::vec(arb_cmd(), 1..40)) {
            let p = VehicleParams::default();
            let start = Pose2D::new(3.0, -2.0, 0.7);
            let mut fwd = VehicleState::new(start, PayloadConfig::default());
            let mut rev = VehicleState::new(start, PayloadConfig::Collection);
            for c in cmds {
                fwd = step_dynamics(&p, &fwd, c, Vec2::ZERO, 0.5).unwrap();
                rev = step_dynamics(&p, &rev, c, Vec2::ZERO, 0.5).unwrap();
                let df = fwd.pose.position() - start.position();
                let dr = rev.pose.position() - start.position();
                prop_assert!((df + dr).norm() < 1e-9);
                prop_assert_eq!(fwd.pose.heading, rev.pose.heading);
            }
        }
    }
}
