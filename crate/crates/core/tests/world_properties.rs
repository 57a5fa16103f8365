use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reefseed::guidance::{cross_track_error, follow_path, GuidanceParams, Mission, PathSegment};
use reefseed::reefworld::{generate_reef, ReefParams, WindField};
use reefseed::vehicle::{step_dynamics, PayloadConfig, Pose2D, VehicleParams, VehicleState, DEFAULT_CRUISE_SPEED};
use reefseed::Vec2;

fn params(w: usize, h: usize, f: f64, c: f64) -> ReefParams {
    ReefParams { width_cells: w, height_cells: h, cell_size: 0.5, suitable_fraction: f, clustering: c }
}

/// Drives along a 100 m transect on the x axis and returns the largest
/// |cross-track error| over the second half of it.
fn steady_state_cte(offset: f64, heading: f64, wind: Vec2, payload: PayloadConfig) -> f64 {
    let mission = Mission::transect(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)]).unwrap();
    let seg = PathSegment::new(Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)).unwrap();
    let g = GuidanceParams::default();
    let vp = VehicleParams::default();
    let wind = WindField::steady(wind);
    let mut state = VehicleState::new(Pose2D::new(0.0, offset, heading), payload);
    let mut active = 0;
    let dt = 0.5;
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let out = follow_path(&g, &state, &mission, active).unwrap();
        active = out.active_index;
        if out.complete {
            return worst;
        }
        state = step_dynamics(&vp, &state, out.command, wind.velocity, dt).unwrap();
        if state.pose.x >= 50.0 && state.pose.x <= 98.0 {
            worst = worst.max(cross_track_error(&state.pose, &seg).abs());
        }
    }
    panic!("transect did not complete");
}

#[test]
fn tracking_settles_from_offsets_up_to_five_meters() {
    for offset in [-5.0, -3.0, -1.0, 0.0, 1.0, 2.5, 5.0] {
        for heading in [0.0, 0.5, -0.5] {
            let e = steady_state_cte(offset, heading, Vec2::ZERO, PayloadConfig::default());
            assert!(e < 0.5, "offset {offset} heading {heading}: {e}");
        }
    }
}

#[test]
fn tracking_holds_under_crosswind() {
    for wind in [Vec2::new(0.0, 0.2), Vec2::new(0.0, -0.2), Vec2::new(0.141, 0.141), Vec2::new(-0.141, 0.141)] {
        for offset in [-5.0, 0.0, 5.0] {
            let e = steady_state_cte(offset, 0.0, wind, PayloadConfig::default());
            assert!(e < 0.5, "wind {wind:?} offset {offset}: {e}");
        }
    }
}

#[test]
fn reversed_drive_tracks_as_well() {
    let e = steady_state_cte(3.0, 0.0, Vec2::new(0.0, 0.2), PayloadConfig::Collection);
    assert!(e < 0.5, "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), f in 0.0f64..=1.0, c in 0.0f64..=1.0) {
        let p = params(40, 30, f, c);
        let a = generate_reef(seed, &p).unwrap();
        let b = generate_reef(seed, &p).unwrap();
        prop_assert_eq!(a.cells(), b.cells());
    }

    #[test]
    fn large_maps_hit_the_target_fraction(seed in any::<u64>(), f in 0.0f64..=1.0, c in 0.0f64..=1.0) {
        let m = generate_reef(seed, &params(100, 100, f, c)).unwrap();
        prop_assert!((m.suitable_fraction() - f).abs() <= 0.01);
    }

    #[test]
    fn missions_terminate_from_far_starts(
        x in -250.0f64..300.0,
        y in -250.0f64..300.0,
        heading in -3.1f64..3.1,
    ) {
        // region is 0..50 on each side, so starts span ten times its bounding box
        let mission = Mission::transect(vec![Vec2::new(5.0, 5.0), Vec2::new(45.0, 5.0), Vec2::new(45.0, 45.0)]).unwrap();
        let start = Pose2D::new(x, y, heading);
        let naive = start.position().distance(mission.waypoints[0]) + mission.path_length();
        let limit = 2.0 * naive / DEFAULT_CRUISE_SPEED + 60.0;
        let g = GuidanceParams::default();
        let vp = VehicleParams::default();
        let mut state = VehicleState::new(start, PayloadConfig::default());
        let (mut active, mut t, dt) = (0, 0.0, 0.5);
        loop {
            let out = follow_path(&g, &state, &mission, active).unwrap();
            active = out.active_index;
            if out.complete {
                break;
            }
            state = step_dynamics(&vp, &state, out.command, Vec2::ZERO, dt).unwrap();
            t += dt;
            prop_assert!(t <= limit, "still running at {t} s (limit {limit})");
        }
    }
}

#[test]
fn sampling_matches_direct_indexing_on_random_probes() {
    let m = generate_reef(7, &params(64, 48, 0.4, 0.5)).unwrap().with_origin(Vec2::new(-3.0, 11.0));
    let b = m.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let p = Vec2::new(rng.random_range(b.min.x..b.max.x), rng.random_range(b.min.y..b.max.y));
        let col = ((p.x - b.min.x) / 0.5).floor() as usize;
        let row = ((p.y - b.min.y) / 0.5).floor() as usize;
        assert_eq!(m.sample_substrate(p).unwrap(), m.cells()[row * 64 + col], "probe {p:?}");
    }
}
