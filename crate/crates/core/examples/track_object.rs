// Localize a rolling object from simulated coil frames and estimate its
// velocity, compared against the simulator's ground truth.

use copess::dynamics::{simulate, Calibration, InitialState, Scenario, TiltSchedule};
use copess::map::StiffnessMap;
use copess::pipeline::{estimate_velocity, localize_all, DEFAULT_NOISE_FLOOR_UH, DEFAULT_VELOCITY_WINDOW};

pub fn run_example() -> copess::Result<()> {
    let c = Calibration::builtin();
    let mut s = Scenario::new(StiffnessMap::uniform(0.20));
    s.tilt_schedule = TiltSchedule::flat();
    s.initial = InitialState {
        x_mm: 37.5,
        y_mm: 75.0,
        vx_mm_s: 200.0,
        vy_mm_s: 0.0,
    };
    s.sim.duration_s = 1.5;
    let out = simulate(&s, &c)?;
    let track = localize_all(&out.frames, &c.array, DEFAULT_NOISE_FLOOR_UH);
    let velocity = estimate_velocity(&track, DEFAULT_VELOCITY_WINDOW)?;
    for (est, v) in track.iter().zip(&velocity).step_by(2) {
        let truth = out.trajectory.samples[(est.t_s / s.sim.dt_s).round() as usize].state;
        println!(
            "t {:.2} s  x {:6.1} (true {:6.1}) mm  vx {:6.1} (true {:6.1}) mm/s",
            est.t_s, est.x_mm, truth.x_mm, v.vx_mm_s, truth.vx_mm_s
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
