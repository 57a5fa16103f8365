mod common;

use common::small_scenario;
use proptest::prelude::*;
use reefseed::dispersal::{gate_decision, release_step, Bladder, DispersalMode, PumpState, MAX_AREAL_DENSITY};
use reefseed::perception::Prediction;
use reefseed::reefworld::SubstrateClass;
use reefseed::scenario::Simulation;

fn mode_strategy() -> impl Strategy<Value = DispersalMode> {
    prop_oneof![Just(DispersalMode::ClassifierGated), Just(DispersalMode::ConstantPump)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bladder_volume_is_conserved(
        seed in 0u64..1000,
        cells in 4usize..12,
        fraction in 0.0f64..=1.0,
        mode in mode_strategy(),
        capacity in 0.05f64..2.0,
    ) {
        let mut s = small_scenario(seed, cells, 1.0, fraction, mode, (0.9, 0.9));
        s.payload = reefseed::vehicle::PayloadConfig::Dispersal { bladder_capacity: capacity };
        let run = Simulation::new(&s).unwrap().run().unwrap();
        let released: u64 = run.events.iter().map(|e| e.released_ul).sum();
        prop_assert_eq!(released + run.final_volume_ul, run.initial_volume_ul);
    }

    #[test]
    fn gated_release_never_follows_unsuitable_prediction(
        seed in 0u64..1000,
        cells in 4usize..12,
        fraction in 0.0f64..=1.0,
        recall_s in 0.5f64..1.0,
        recall_u in 0.5f64..1.0,
    ) {
        let s = small_scenario(seed, cells, 1.0, fraction, DispersalMode::ClassifierGated, (recall_s, recall_u));
        let run = Simulation::new(&s).unwrap().run().unwrap();
        for e in &run.events {
            prop_assert!(!(e.released_ul > 0 && e.predicted == SubstrateClass::Unsuitable));
        }
    }

    #[test]
    fn areal_density_cap_holds_per_event(
        seed in 0u64..1000,
        cells in 4usize..10,
        flow in 0.001f64..5.0,
        density in 1.0f64..1e6,
    ) {
        let mut s = small_scenario(seed, cells, 1.0, 0.5, DispersalMode::ConstantPump, (0.9, 0.9));
        s.dispersal.flow_rate = flow;
        s.dispersal.larvae_density = density;
        let sim = Simulation::new(&s).unwrap();
        let dt = sim.dt();
        let run = sim.run().unwrap();
        let area = s.dispersal.swath_width * reefseed::vehicle::DEFAULT_CRUISE_SPEED * dt;
        for e in &run.events {
            prop_assert!(e.released_larvae as f64 <= MAX_AREAL_DENSITY * area * (1.0 + 1e-9), "{} over {}", e.released_larvae, area);
        }
    }

    #[test]
    fn release_step_respects_density_at_any_speed(
        volume in 0.0f64..100.0,
        flow in 0.0f64..10.0,
        density in 1.0f64..1e7,
        swath in 0.1f64..5.0,
        speed in 0.0f64..0.75,
        dt in 0.01f64..2.0,
    ) {
        let b = Bladder::new(100.0, volume).unwrap();
        let pump = PumpState { running: true, flow_rate: flow, larvae_density: density };
        let (after, r) = release_step(&b, &pump, dt, swath, speed).unwrap();
        let covered = swath * speed * dt;
        prop_assert!(r.released_larvae as f64 <= MAX_AREAL_DENSITY * covered * (1.0 + 1e-9) + 1e-12);
        prop_assert_eq!(after.volume_ul() + r.released_ul, b.volume_ul());
    }

    #[test]
    fn gate_is_sound_for_any_prediction(empty in any::<bool>(), suitable in any::<bool>()) {
        let b = if empty { Bladder::new(1.0, 0.0).unwrap() } else { Bladder::full(1.0).unwrap() };
        let class = if suitable { SubstrateClass::Suitable } else { SubstrateClass::Unsuitable };
        let p = Prediction { predicted: class, frame_id: 0, timestamp: 0.0 };
        let g = gate_decision(DispersalMode::ClassifierGated, &p, &b);
        prop_assert!(!g.pump_on || (suitable && !empty));
        let c = gate_decision(DispersalMode::ConstantPump, &p, &b);
        prop_assert_eq!(c.pump_on, !empty);
    }
}

#[test]
fn constant_pump_dominates_gated_at_every_timestamp() {
    for seed in 0..10u64 {
        let gated = small_scenario(seed, 12, 1.0, 0.45, DispersalMode::ClassifierGated, (0.95, 0.9));
        let constant = gated.clone().with_mode(DispersalMode::ConstantPump);
        let g = Simulation::new(&gated).unwrap().run().unwrap();
        let c = Simulation::new(&constant).unwrap().run().unwrap();
        assert_eq!(g.events.len(), c.events.len());
        let (mut cg, mut cc) = (0u64, 0u64);
        for (eg, ec) in g.events.iter().zip(&c.events) {
            assert_eq!(eg.timestamp, ec.timestamp);
            assert_eq!(eg.predicted, ec.predicted);
            cg += eg.released_ul;
            cc += ec.released_ul;
            assert!(cc >= cg, "seed {seed} t={}: {cc} < {cg}", eg.timestamp);
        }
    }
}
