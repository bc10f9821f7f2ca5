// Friction calibration from the motion anchors, then flat-tile impulse
// runs and tilt thresholds per density.

use copess::dynamics::{simulate, Calibration, InitialState, Scenario, TiltSchedule, DEFAULT_IMPULSE_MM_S};
use copess::map::{cell_center, StiffnessMap};

pub fn run_example() -> copess::Result<()> {
    let c = Calibration::builtin();
    let f = &c.friction;
    println!(
        "impulse {} mm/s, kinetic/static ratio {:.4}",
        f.impulse_mm_s, f.kinetic_ratio
    );
    for rho in [0.07, 0.10, 0.20] {
        let mut s = Scenario::new(StiffnessMap::uniform(rho));
        s.tilt_schedule = TiltSchedule::flat();
        s.initial = InitialState {
            x_mm: cell_center((1, 0)).0,
            y_mm: cell_center((1, 0)).1,
            vx_mm_s: DEFAULT_IMPULSE_MM_S,
            vy_mm_s: 0.0,
        };
        s.sim.duration_s = 3.0;
        let out = simulate(&s, &c)?;
        println!(
            "rho {rho:.2}: mu_s {:.4}, mu_k {:.4}, tilt to start {:.2} deg, predicted stop {:.1} mm, simulated travel {:.1} mm, {:?}",
            f.mu_static(rho),
            f.mu_kinetic(rho),
            f.initiation_tilt_deg(rho),
            f.stopping_distance(rho, DEFAULT_IMPULSE_MM_S),
            out.trajectory.travel_mm(),
            out.termination
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
