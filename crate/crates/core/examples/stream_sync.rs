// Pair a 50 Hz force stream with 20 Hz coil frames by nearest timestamp.

use copess::pipeline::{nearest_neighbor_sync, TimedStream};

pub fn run_example() -> copess::Result<()> {
    let force = TimedStream::new((0..50).map(|i| (0.003 + i as f64 / 50.0, i as f64 * 0.1)).collect(), 50.0)?;
    // Coil frames cover the whole force record; outside it no bound holds.
    let coil = TimedStream::new((0..=20).map(|i| (i as f64 / 20.0, i)).collect(), 20.0)?;
    let pairs = nearest_neighbor_sync(&force, &coil)?;
    let worst = pairs.iter().map(|p| p.error_s()).fold(0.0, f64::max);
    for p in pairs.iter().take(6) {
        println!("force #{:2} at {:.3} s -> frame #{:2} at {:.3} s", p.index_a, p.t_a, p.index_b, p.t_b);
    }
    println!(
        "worst pairing error {:.1} ms (bound {:.1} ms)",
        1e3 * worst,
        1e3 * coil.median_period().expect("several samples") / 2.0
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> copess::Result<()> {
    run_example()
}
