// Search column layouts so that a launched object comes to rest in a
// chosen cell, then show the tilt needed to start it anywhere.

use copess::dynamics::{Calibration, InitialState, Scenario, TiltSchedule};
use copess::guidance::{optimize, tilt_threshold_profile, GuidanceGoal, OptimizeSettings, SearchSpace};
use copess::map::{cell_center, StiffnessMap};

pub fn run_example() -> copess::Result<()> {
    let c = Calibration::builtin();
    let mut template = Scenario::new(StiffnessMap::uniform(0.10));
    template.tilt_schedule = TiltSchedule::flat();
    template.initial = InitialState {
        x_mm: cell_center((1, 0)).0,
        y_mm: cell_center((1, 0)).1,
        vx_mm_s: 300.0,
        vy_mm_s: 0.0,
    };
    template.sim.duration_s = 3.0;
    let goal = GuidanceGoal::stop_in_cell((1, 3));
    let settings = OptimizeSettings {
        space: SearchSpace::BandedColumns,
        budget: 100,
        ..Default::default()
    };
    let result = optimize(&goal, &template, &c, &settings)?;
    println!(
        "best columns {:?}, cost {:.3} mm after {} evaluations (exhaustive: {})",
        result.best.map.densities[0],
        result.evaluation.cost,
        result.trace.len(),
        result.exhaustive
    );
    for row in tilt_threshold_profile(&result.best.map, &c.friction) {
        println!("  {}", row.iter().map(|t| format!("{t:5.2}")).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
