// Load a scenario file with defaults filled in, run it, and write the
// logs plus a manifest to an output folder.

use copess::dynamics::simulate;
use copess::scenario_io::{load_calibration, parse_scenario, OutputDir, RunManifest};
use copess::sensing::write_frames;

const SCENARIO: &str = r#"{
  "map": [[0.20, 0.20, 0.07, 0.07],
          [0.20, 0.20, 0.07, 0.07],
          [0.20, 0.20, 0.07, 0.07],
          [0.20, 0.20, 0.07, 0.07]],
  "tilt_schedule": {"knots": [{"t_s": 0, "deg": 0}]},
  "initial": {"x_mm": 18.75, "y_mm": 56.25, "vx_mm_s": 300},
  "sim": {"duration_s": 2}
}"#;

pub fn run_example() -> copess::Result<()> {
    let file = parse_scenario(SCENARIO, "inline")?;
    println!("resolved scenario:\n{}", file.canonical_json());

    let bad = SCENARIO.replace("0.20, 0.20, 0.07, 0.07]]", "0.05, 0.20, 0.07, 0.40]]");
    let v = parse_scenario(&bad, "inline")?.violations();
    println!("edited copy has {} violations: {v:?}", v.len());

    let (calibration, source) = load_calibration(None)?;
    let out = simulate(&file.scenario(), &calibration)?;
    let dir = std::env::temp_dir().join("copess-scenario-example");
    let mut manifest = RunManifest::new("example", source, 0);
    manifest.scenario_digest = Some(file.digest());
    let mut od = OutputDir::create(&dir, manifest)?;
    od.write_with("trajectory.csv", |w| out.trajectory.write_csv(w))?;
    od.write_with("frames.csv", |w| write_frames(w, &out.frames))?;
    let manifest = od.finish()?;
    println!("wrote {:?} to {} (digest {})", manifest.outputs, dir.display(), file.digest());
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
