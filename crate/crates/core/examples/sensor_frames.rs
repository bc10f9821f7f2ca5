// Turning per-cell loads into a coil frame and back.

use copess::dynamics::{load_shares, Calibration, Footprint};
use copess::map::{cell_index, StiffnessMap};
use copess::sensing::{recover_loads, simulate_frame};

pub fn run_example() -> copess::Result<()> {
    let c = Calibration::builtin();
    let map = StiffnessMap::split_columns(0.20, 0.07, 2);
    for rho in [0.07, 0.10, 0.20] {
        println!("gap slope at rho {rho:.2}: {:.3} uH/mm", c.gap.slope(rho));
    }

    // A 0.5 kg disc straddling the density boundary.
    let weight = 0.5 * 9.81;
    let shares = load_shares(Footprint::Disc { radius_mm: 40.0 }, (80.0, 60.0)).expect("on tile");
    let mut loads = shares;
    for row in loads.iter_mut() {
        for v in row.iter_mut() {
            *v *= weight;
        }
    }
    let frame = simulate_frame(&c.array, &map, &c.lattice, &c.gap, &loads, 0.0)?;
    let back = recover_loads(&frame, &map, &c.lattice, &c.gap)?;
    for (r, row) in loads.iter().enumerate() {
        for (col, load) in row.iter().enumerate() {
            if *load > 0.0 {
                println!(
                    "cell ({r},{col}) rho {:.2}: load {:.3} N -> {:7.3} uH -> {:.3} N",
                    map.density((r, col)),
                    load,
                    frame.delta_uh[cell_index((r, col))],
                    back[r][col]
                );
            }
        }
    }

    // Everything on one soft cell densifies it.
    let mut point = [[0.0; 4]; 4];
    point[1][3] = weight;
    if let Err(e) = simulate_frame(&c.array, &map, &c.lattice, &c.gap, &point, 0.0) {
        println!("point load: {e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
