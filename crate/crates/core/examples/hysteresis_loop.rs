// Loading and unloading branches of a full 6 mm stroke, and the loop
// width each density produces.

use copess::lattice::{hysteresis_metric, LatticeCalibration, DENSIFICATION_MM};

pub fn run_example() -> copess::Result<()> {
    let calib = LatticeCalibration::builtin();
    for rho in [0.07, 0.10, 0.20] {
        let m = calib.model(rho)?;
        let grid: Vec<f64> = (0..=60).map(|i| DENSIFICATION_MM * i as f64 / 60.0).collect();
        let loading = grid.iter().map(|&d| Ok((d, m.loading_force(d)?))).collect::<copess::Result<Vec<_>>>()?;
        let unloading = grid
            .iter()
            .map(|&d| Ok((d, m.unloading_force(d, DENSIFICATION_MM)?)))
            .collect::<copess::Result<Vec<_>>>()?;
        println!("rho {rho:.2}: hysteresis {:.2} %", hysteresis_metric(&loading, &unloading)?);
        for i in (0..=60).step_by(15) {
            println!(
                "  d {:4.1} mm  load {:6.3} N  unload {:6.3} N",
                grid[i], loading[i].1, unloading[i].1
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
