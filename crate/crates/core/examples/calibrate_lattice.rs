// Fit the density scaling laws to the anchor table and query the model
// between anchors.

use copess::lattice::{builtin_anchors, calibrate_from_anchors, Quantity};

pub fn run_example() -> copess::Result<()> {
    let calib = calibrate_from_anchors(&builtin_anchors())?;
    for fit in &calib.fits {
        let worst = fit.residuals.iter().map(|r| r.relative.abs()).fold(0.0, f64::max);
        println!(
            "{:?}: {:.3} * rho^{:.3} (worst anchor residual {:.1} %)",
            fit.quantity,
            fit.law.coefficient,
            fit.law.exponent,
            100.0 * worst
        );
    }

    let k = |rho| calib.quantity_at(Quantity::Stiffness, rho);
    let f = |rho| calib.quantity_at(Quantity::ForceRange, rho);
    let s = |rho| calib.quantity_at(Quantity::Sensitivity, rho);
    println!(
        "0.07 -> 0.20: stiffness x{:.2}, force range x{:.2}, sensitivity /{:.1}",
        k(0.20) / k(0.07),
        f(0.20) / f(0.07),
        s(0.07) / s(0.20)
    );

    for rho in [0.07, 0.085, 0.10, 0.15, 0.20, 0.25] {
        let m = calib.model(rho)?;
        println!(
            "rho {rho:.3}: k0 {:.3} N/mm, F_op {:.2} N, F(4 mm) {:.2} N{}",
            m.k0,
            m.f_op,
            m.loading_force(4.0)?,
            if calib.is_extrapolated(rho) { " (extrapolated)" } else { "" }
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
