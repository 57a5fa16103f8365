//! Path following, coverage planning and swath formations.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geom::{wrap_angle, Rect, Vec2};
use crate::vehicle::{Pose2D, ThrusterCommand, VehicleState};

pub const MAX_FLEET: usize = 7;
pub const DEFAULT_ARRIVAL_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSegment {
    start: Vec2,
    end: Vec2,
}

impl PathSegment {
    pub fn new(start: Vec2, end: Vec2) -> Result<Self> {
        ensure(start.is_finite() && end.is_finite(), || "segment endpoints must be finite".into())?;
        ensure(start != end, || "degenerate path segment".into())?;
        Ok(Self { start, end })
    }

    pub fn start(&self) -> Vec2 {
        self.start
    }

    pub fn end(&self) -> Vec2 {
        self.end
    }

    pub fn direction(&self) -> Vec2 {
        (self.end - self.start).unit()
    }

    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    pub fn reversed(&self) -> Self {
        Self { start: self.end, end: self.start }
    }

    /// Distance along the segment direction from `start` to the projection of `p`.
    pub fn along_track(&self, p: Vec2) -> f64 {
        (p - self.start).dot(self.direction())
    }
}

/// Signed distance from the pose to the line through `segment`, positive to
/// the left of the direction of travel.
pub fn cross_track_error(pose: &Pose2D, segment: &PathSegment) -> f64 {
    let d = segment.end - segment.start;
    d.cross(pose.position() - segment.start) / d.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionMode {
    Transect,
    Coverage,
    Station,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub waypoints: Vec<Vec2>,
    #[serde(default = "default_arrival_radius")]
    pub arrival_radius: f64,
    pub mode: MissionMode,
}

fn default_arrival_radius() -> f64 {
    DEFAULT_ARRIVAL_RADIUS
}

impl Mission {
    pub fn new(waypoints: Vec<Vec2>, arrival_radius: f64, mode: MissionMode) -> Result<Self> {
        let m = Self { waypoints, arrival_radius, mode };
        m.validate()?;
        Ok(m)
    }

    pub fn transect(waypoints: Vec<Vec2>) -> Result<Self> {
        Self::new(waypoints, DEFAULT_ARRIVAL_RADIUS, MissionMode::Transect)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.waypoints.is_empty(), || "mission has no waypoints".into())?;
        ensure(self.waypoints.iter().all(|w| w.is_finite()), || "waypoints must be finite".into())?;
        ensure(self.arrival_radius > 0.0 && self.arrival_radius.is_finite(), || {
            format!("arrival_radius must be positive, got {}", self.arrival_radius)
        })
    }

    /// Sum of straight-line leg lengths.
    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn translated(&self, offset: Vec2) -> Mission {
        Mission { waypoints: self.waypoints.iter().map(|&w| w + offset).collect(), ..self.clone() }
    }

    /// Direction of the first leg, or +x for single-waypoint missions.
    pub fn initial_direction(&self) -> Vec2 {
        self.waypoints
            .windows(2)
            .map(|w| w[1] - w[0])
            .find(|d| d.norm() > 0.0)
            .map(Vec2::unit)
            .unwrap_or(Vec2::new(1.0, 0.0))
    }
}

/// Gains for [`follow_path`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceParams {
    /// Lookahead distance along the active segment, m.
    pub lookahead: f64,
    /// Multiplies cross-track error before the lookahead angle is formed.
    pub cross_track_gain: f64,
    /// Differential thrust per radian of heading error.
    pub heading_gain: f64,
    /// Symmetric thrust demand before steering is mixed in.
    pub cruise_thrust: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self { lookahead: 2.0, cross_track_gain: 2.0, heading_gain: 2.0, cruise_thrust: 1.0 }
    }
}

impl GuidanceParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lookahead", self.lookahead),
            ("cross_track_gain", self.cross_track_gain),
            ("heading_gain", self.heading_gain),
            ("cruise_thrust", self.cruise_thrust),
        ] {
            ensure(v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"))?;
        }
        ensure(self.cruise_thrust <= 1.0, || "cruise_thrust must be <= 1".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowOutput {
    pub command: ThrusterCommand,
    pub active_index: usize,
    pub complete: bool,
    /// Cross-track error against the active leg; `None` while heading for the first waypoint.
    pub cross_track: Option<f64>,
}

/// One guidance update: line-of-sight steering toward a lookahead point on the
/// active leg, with the cross-track error fed back through the lookahead angle.
///
/// Waypoint `active_index` is the end of the active leg; leg 0 steers directly
/// at the first waypoint. A waypoint is reached inside `arrival_radius` or once
/// the vehicle has passed it along the leg.
pub fn follow_path(
    params: &GuidanceParams,
    state: &VehicleState,
    mission: &Mission,
    active_index: usize,
) -> Result<FollowOutput> {
    mission.validate()?;
    let last = mission.waypoints.len() - 1;
    ensure(active_index <= last, || format!("active index {active_index} outside mission of {} waypoints", last + 1))?;
    let pos = state.pose.position();
    let mut active = active_index;

    let leg = |i: usize| -> Option<PathSegment> {
        (i > 0).then(|| PathSegment::new(mission.waypoints[i - 1], mission.waypoints[i]).ok()).flatten()
    };
    loop {
        let target = mission.waypoints[active];
        let passed = leg(active).is_some_and(|s| s.along_track(pos) >= s.length());
        if pos.distance(target) >= mission.arrival_radius && !passed {
            break;
        }
        if active == last {
            return Ok(FollowOutput {
                command: ThrusterCommand::STOP,
                active_index: active,
                complete: true,
                cross_track: leg(active).map(|s| cross_track_error(&state.pose, &s)),
            });
        }
        active += 1;
    }

    let target = mission.waypoints[active];
    let (desired, cross_track) = match leg(active) {
        Some(seg) => {
            let cte = cross_track_error(&state.pose, &seg);
            let path_heading = seg.direction().angle();
            (path_heading - (params.cross_track_gain * cte / params.lookahead).atan(), Some(cte))
        }
        None => ((target - pos).angle(), None),
    };
    let heading_error = wrap_angle(desired - state.travel_heading());
    let turn = (params.heading_gain * heading_error).clamp(-1.0, 1.0);
    Ok(FollowOutput { command: mix(params.cruise_thrust, turn), active_index: active, complete: false, cross_track })
}

/// Mixes forward and turn demand, giving up forward thrust first so the
/// differential part is never clipped.
fn mix(forward: f64, turn: f64) -> ThrusterCommand {
    let mut left = forward - turn;
    let mut right = forward + turn;
    let excess = left.max(right) - 1.0;
    if excess > 0.0 {
        left -= excess;
        right -= excess;
    }
    ThrusterCommand::new(left, right)
}

/// Boustrophedon coverage of `region` with transects parallel to its long side.
pub fn plan_coverage(region: Rect, track_width: f64) -> Result<Mission> {
    plan_coverage_with_run_in(region, track_width, 0.0)
}

/// As [`plan_coverage`], with every transect extended by `run_in` meters past
/// both region edges so the vehicle turns outside the region.
///
/// `n = ceil(short / track_width)` transects are spread evenly between the two
/// lines inset `track_width / 2` from the region edges, so their spacing never
/// exceeds `track_width`. A track wider than the short side gives a single
/// transect on the midline.
pub fn plan_coverage_with_run_in(region: Rect, track_width: f64, run_in: f64) -> Result<Mission> {
    ensure(!region.is_degenerate(), || "coverage region is degenerate".into())?;
    ensure(track_width > 0.0 && track_width.is_finite(), || {
        format!("track_width must be positive, got {track_width}")
    })?;
    ensure(run_in >= 0.0 && run_in.is_finite(), || format!("run_in must be >= 0, got {run_in}"))?;

    let along_x = region.width() >= region.height();
    let (long_min, long_max, short_min, short) = if along_x {
        (region.min.x, region.max.x, region.min.y, region.height())
    } else {
        (region.min.y, region.max.y, region.min.x, region.width())
    };
    // tolerance keeps exact multiples from rounding up to an extra transect
    let count = ((short / track_width - 1e-9).ceil() as usize).max(1);
    let offsets: Vec<f64> = if count == 1 {
        vec![short / 2.0]
    } else {
        let spacing = (short - track_width) / (count - 1) as f64;
        (0..count).map(|i| track_width / 2.0 + i as f64 * spacing).collect()
    };

    let (a, b) = (long_min - run_in, long_max + run_in);
    let mut waypoints = Vec::with_capacity(2 * count);
    for (i, off) in offsets.iter().enumerate() {
        let s = short_min + off;
        let (from, to) = if i % 2 == 0 { (a, b) } else { (b, a) };
        let pt = |l: f64| if along_x { Vec2::new(l, s) } else { Vec2::new(s, l) };
        waypoints.push(pt(from));
        waypoints.push(pt(to));
    }
    Mission::new(waypoints, DEFAULT_ARRIVAL_RADIUS, MissionMode::Coverage)
}

/// Track width giving the requested sidelap between adjacent camera footprints.
pub fn track_width_for_overlap(footprint: f64, sidelap: f64) -> Result<f64> {
    ensure(footprint > 0.0, || "footprint must be positive".into())?;
    ensure((0.0..1.0).contains(&sidelap), || "sidelap must be in [0, 1)".into())?;
    Ok(footprint * (1.0 - sidelap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormationShape {
    Line,
    Vee,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    pub shape: FormationShape,
    pub spacing: f64,
    pub count: usize,
}

/// Offset in the leader's frame: `lateral` positive to port, `longitudinal`
/// positive ahead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationOffset {
    pub lateral: f64,
    pub longitudinal: f64,
}

impl FormationOffset {
    /// World-frame displacement for a formation travelling along `direction`.
    pub fn to_world(&self, direction: Vec2) -> Vec2 {
        let u = direction.unit();
        u * self.longitudinal + u.perp() * self.lateral
    }
}

/// Slot offsets for a swath formation, mirror-symmetric about the leader axis.
///
/// Odd counts put a vehicle on the leader point; even counts leave it as a
/// virtual guide point between the two innermost vehicles. Slots are listed
/// centre-out, port before starboard.
pub fn formation_offsets(spec: &FormationSpec) -> Result<Vec<FormationOffset>> {
    if spec.count > MAX_FLEET {
        return Err(Error::FleetSize(spec.count));
    }
    ensure(spec.count >= 1, || "formation needs at least one vehicle".into())?;
    ensure(spec.spacing > 0.0 && spec.spacing.is_finite(), || {
        format!("spacing must be positive, got {}", spec.spacing)
    })?;
    let s = spec.spacing;
    let odd = spec.count % 2 == 1;
    let mut out = Vec::with_capacity(spec.count);
    if odd {
        out.push(FormationOffset { lateral: 0.0, longitudinal: 0.0 });
    }
    for pair in 0..spec.count / 2 {
        let rank = if odd { pair as f64 + 1.0 } else { pair as f64 + 0.5 };
        let longitudinal = match spec.shape {
            FormationShape::Line => 0.0,
            FormationShape::Vee => -rank * s,
        };
        out.push(FormationOffset { lateral: rank * s, longitudinal });
        out.push(FormationOffset { lateral: -rank * s, longitudinal });
    }
    Ok(out)
}
