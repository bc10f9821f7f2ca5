//! Property tests for the model invariants.

use copess::dynamics::{load_shares, simulate, Calibration, Footprint, InitialState, Scenario, TiltSchedule};
use copess::lattice::{LatticeCalibration, DENSIFICATION_MM, MAX_PRINTABLE_DENSITY, MIN_PRINTABLE_DENSITY};
use copess::map::{all_cells, cell_center, cell_index, StiffnessMap, GRID, TILE_SPAN_MM};
use copess::pipeline::{estimate_velocity, localize, nearest_neighbor_sync, LocalizationEstimate, TimedStream};
use copess::sensing::{simulate_frame, SensorFrame};
use proptest::prelude::*;
use std::sync::OnceLock;

fn calib() -> &'static Calibration {
    static C: OnceLock<Calibration> = OnceLock::new();
    C.get_or_init(Calibration::builtin)
}

fn lattice() -> &'static LatticeCalibration {
    &calib().lattice
}

fn density() -> impl Strategy<Value = f64> {
    MIN_PRINTABLE_DENSITY..=MAX_PRINTABLE_DENSITY
}

fn sorted_times(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..0.2, 1..max_len).prop_map(|steps| {
        steps
            .iter()
            .scan(0.0, |t, dt| {
                *t += dt;
                Some(*t)
            })
            .collect()
    })
}

fn impulse_scenario(rho: f64, v0: f64) -> Scenario {
    let mut s = Scenario::new(StiffnessMap::uniform(rho));
    s.tilt_schedule = TiltSchedule::flat();
    s.initial = InitialState {
        x_mm: cell_center((1, 0)).0,
        y_mm: cell_center((1, 0)).1,
        vx_mm_s: v0,
        vy_mm_s: 0.0,
    };
    s.sim.duration_s = 2.0;
    s
}

proptest! {
    #[test]
    fn loading_is_strictly_increasing(rho in density(), a in 0.0..DENSIFICATION_MM, b in 0.0..DENSIFICATION_MM) {
        prop_assume!(a < b);
        let m = lattice().model(rho).unwrap();
        prop_assert!(m.loading_force(a).unwrap() < m.loading_force(b).unwrap());
    }

    #[test]
    fn inversion_round_trips(rho in density(), d in 0.0..DENSIFICATION_MM) {
        let m = lattice().model(rho).unwrap();
        let f = m.loading_force(d).unwrap();
        let back = m.invert_loading(f).unwrap();
        prop_assert!((m.loading_force(back).unwrap() - f).abs() <= 1e-9);
    }

    #[test]
    fn hysteresis_loop_closes_below_loading(rho in density(), frac in 0.05f64..=1.0, x in 0.0f64..=1.0) {
        let m = lattice().model(rho).unwrap();
        let peak = frac * DENSIFICATION_MM;
        prop_assert_eq!(m.unloading_force(0.0, peak).unwrap(), 0.0);
        prop_assert!((m.unloading_force(peak, peak).unwrap() - m.loading_force(peak).unwrap()).abs() < 1e-9);
        let d = x * peak;
        prop_assert!(m.unloading_force(d, peak).unwrap() <= m.loading_force(d).unwrap() + 1e-12);
    }

    #[test]
    fn sync_matches_exhaustive_oracle(ta in sorted_times(40), tb in sorted_times(40)) {
        let a = TimedStream::new(ta.iter().map(|&t| (t, ())).collect(), 20.0).unwrap();
        let b = TimedStream::new(tb.iter().map(|&t| (t, ())).collect(), 20.0).unwrap();
        let pairs = nearest_neighbor_sync(&a, &b).unwrap();
        prop_assert_eq!(pairs.len(), ta.len());
        for p in &pairs {
            // First index attaining the minimum is the earlier sample on ties.
            let oracle = (0..tb.len())
                .min_by(|&i, &j| (tb[i] - p.t_a).abs().total_cmp(&(tb[j] - p.t_a).abs()))
                .unwrap();
            prop_assert_eq!(p.index_b, oracle);
        }
    }

    #[test]
    fn shares_balance_the_weight(x in 0.0..=TILE_SPAN_MM, y in 0.0..=TILE_SPAN_MM, r in 1.0f64..60.0) {
        let shares = load_shares(Footprint::Disc { radius_mm: r }, (x, y)).unwrap();
        let total: f64 = shares.iter().flatten().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(shares.iter().flatten().all(|s| *s >= 0.0));
    }

    #[test]
    fn single_cell_localizes_to_its_coil(row in 0..GRID, col in 0..GRID, dl in 0.6f64..100.0) {
        let mut f = SensorFrame::zero(0.0);
        f.delta_uh[cell_index((row, col))] = dl;
        let e = localize(&f, &calib().array, 0.5);
        prop_assert_eq!((e.x_mm, e.y_mm), calib().array.center((row, col)));
    }

    #[test]
    fn mirrored_frames_localize_on_the_axis(values in prop::array::uniform8(0.0f64..50.0)) {
        // Mirror columns 0..2 onto 3..1 so the frame is symmetric about x = 75 mm.
        let mut f = SensorFrame::zero(0.0);
        for r in 0..GRID {
            for c in 0..2 {
                let v = values[r * 2 + c];
                f.delta_uh[cell_index((r, c))] = v;
                f.delta_uh[cell_index((r, GRID - 1 - c))] = v;
            }
        }
        let e = localize(&f, &calib().array, 0.5);
        if e.detected {
            prop_assert!((e.x_mm - TILE_SPAN_MM / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn no_crosstalk(row in 0..GRID, col in 0..GRID, load in 0.01f64..1.7) {
        let c = calib();
        let mut loads = [[0.0; GRID]; GRID];
        loads[row][col] = load;
        let map = StiffnessMap::uniform(0.07);
        let frame = simulate_frame(&c.array, &map, &c.lattice, &c.gap, &loads, 0.0).unwrap();
        for cell in all_cells().filter(|&cell| cell != (row, col)) {
            prop_assert_eq!(frame.channel(cell), 0.0);
        }
        prop_assert!(frame.channel((row, col)) > 0.0);
    }

    #[test]
    fn velocity_exact_on_constant_motion(v in -200.0f64..200.0, x0 in 0.0f64..50.0, n in 6usize..40) {
        let track: Vec<LocalizationEstimate> = (0..n)
            .map(|i| {
                let t = i as f64 * 0.05;
                LocalizationEstimate { t_s: t, x_mm: x0 + v * t, y_mm: 75.0, confidence_uh: 1.0, detected: true }
            })
            .collect();
        for e in estimate_velocity(&track, 5).unwrap() {
            prop_assert!((e.vx_mm_s - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flat_runs_only_lose_energy(rho in prop::sample::select(vec![0.07, 0.10, 0.20]), v0 in 10.0f64..350.0) {
        let out = simulate(&impulse_scenario(rho, v0), calib()).unwrap();
        for w in out.trajectory.samples.windows(2) {
            prop_assert!(w[1].state.kinetic_energy_per_mass() <= w[0].state.kinetic_energy_per_mass() + 1e-9);
        }
    }

    #[test]
    fn stiffer_pads_roll_further(v0 in 20.0f64..250.0) {
        let travel = |rho| simulate(&impulse_scenario(rho, v0), calib()).unwrap().trajectory.travel_mm();
        let (a, b, c) = (travel(0.07), travel(0.10), travel(0.20));
        prop_assert!(a < b && b < c, "{a} {b} {c}");
    }

    #[test]
    fn simulation_is_deterministic(rho in prop::sample::select(vec![0.07, 0.10, 0.20]), v0 in 0.0f64..300.0, tilt in -15.0f64..15.0) {
        let mut s = impulse_scenario(rho, v0);
        s.tilt_schedule = TiltSchedule::constant(tilt);
        s.sim.duration_s = 0.5;
        let a = simulate(&s, calib()).unwrap();
        let b = simulate(&s, calib()).unwrap();
        prop_assert_eq!(a, b);
    }
}
