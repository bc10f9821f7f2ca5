//! Every runnable example doubles as a smoke test.

mod calibrate_lattice {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/calibrate_lattice.rs"));
}

#[test]
fn calibrate_lattice_runs() {
    calibrate_lattice::run_example().expect("calibrate lattice example should run");
}

mod hysteresis_loop {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/hysteresis_loop.rs"));
}

#[test]
fn hysteresis_loop_runs() {
    hysteresis_loop::run_example().expect("hysteresis loop example should run");
}

mod sensor_frames {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/sensor_frames.rs"));
}

#[test]
fn sensor_frames_runs() {
    sensor_frames::run_example().expect("sensor frames example should run");
}

mod rolling_stop {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/rolling_stop.rs"));
}

#[test]
fn rolling_stop_runs() {
    rolling_stop::run_example().expect("rolling stop example should run");
}

mod boundary_deceleration {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/boundary_deceleration.rs"));
}

#[test]
fn boundary_deceleration_runs() {
    boundary_deceleration::run_example().expect("boundary deceleration example should run");
}

mod track_object {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/track_object.rs"));
}

#[test]
fn track_object_runs() {
    track_object::run_example().expect("track object example should run");
}

mod characterize_pad {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/characterize_pad.rs"));
}

#[test]
fn characterize_pad_runs() {
    characterize_pad::run_example().expect("characterize pad example should run");
}

mod stream_sync {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/stream_sync.rs"));
}

#[test]
fn stream_sync_runs() {
    stream_sync::run_example().expect("stream sync example should run");
}

mod design_surface {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/design_surface.rs"));
}

#[test]
fn design_surface_runs() {
    design_surface::run_example().expect("design surface example should run");
}

mod scenario_files {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/scenario_files.rs"));
}

#[test]
fn scenario_files_runs() {
    scenario_files::run_example().expect("scenario files example should run");
}
