// An object launched across a stiff-to-soft boundary brakes harder as
// soon as its centre enters the soft half.

use copess::dynamics::{simulate, Calibration, InitialState, Scenario, TiltSchedule};
use copess::map::{cell_center, StiffnessMap, PITCH_MM};

pub fn run_example() -> copess::Result<()> {
    let c = Calibration::builtin();
    let mut s = Scenario::new(StiffnessMap::split_columns(0.20, 0.07, 2));
    s.tilt_schedule = TiltSchedule::flat();
    s.initial = InitialState {
        x_mm: cell_center((1, 0)).0,
        y_mm: cell_center((1, 0)).1,
        vx_mm_s: 300.0,
        vy_mm_s: 0.0,
    };
    s.sim.duration_s = 2.0;
    let out = simulate(&s, &c)?;
    let boundary = 2.0 * PITCH_MM;
    let samples = &out.trajectory.samples;
    let decel = |i: usize| (samples[i - 1].state.vx_mm_s - samples[i].state.vx_mm_s) / s.sim.dt_s;
    let cross = samples.iter().position(|p| p.state.x_mm >= boundary).expect("crosses boundary");
    println!(
        "before boundary: {:.1} mm/s^2, after: {:.1} mm/s^2 (ratio {:.3}, friction ratio {:.3})",
        decel(cross - 1),
        decel(cross + 1),
        decel(cross + 1) / decel(cross - 1),
        c.friction.mu_kinetic(0.07) / c.friction.mu_kinetic(0.20)
    );
    for p in samples.iter().step_by(100) {
        println!(
            "t {:.2} s  x {:6.1} mm  v {:6.1} mm/s  rho {:.2}",
            p.t_s, p.state.x_mm, p.state.vx_mm_s, p.cell_density
        );
    }
    println!("final x {:.1} mm", out.final_state().x_mm);
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
