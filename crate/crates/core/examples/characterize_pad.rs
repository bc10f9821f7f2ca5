// Simulated compression cycles on one pad, read back through the coil,
// then the four pad metrics and cycle-to-cycle repeatability.

use copess::dynamics::Calibration;
use copess::pipeline::{characterize, repeatability_correlation, simulate_compression_cycle, simulate_repeated_cycles, CycleSettings};

pub fn run_example() -> copess::Result<()> {
    let c = Calibration::builtin();
    for rho in [0.07, 0.10, 0.20] {
        let mut settings = CycleSettings::full_stroke(rho);
        // The force gauge clock runs 10 ms behind the coil clock.
        settings.force_clock_offset_s = 0.010;
        let logs = simulate_compression_cycle(&c, &settings)?;
        let m = characterize(&logs.force, &logs.frames, rho, &c.gap)?;
        println!(
            "rho {rho:.2}: k0 {:.3} N/mm, F_op {:.2} N, S {:.2} uH/N, h {:.2} %",
            m.effective_stiffness_n_per_mm, m.operational_force_range_n, m.sensitivity_uh_per_n, m.hysteresis_pct
        );
    }
    let settings = CycleSettings::full_stroke(0.10);
    let clean = simulate_repeated_cycles(&c, &settings, 200, 0.0, 0)?;
    let noisy = simulate_repeated_cycles(&c, &settings, 200, 0.01, 42)?;
    println!(
        "repeatability over 200 cycles: {:.3} % clean, {:.3} % with 1 % noise",
        repeatability_correlation(&clean, 3, 3)?,
        repeatability_correlation(&noisy, 3, 3)?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
