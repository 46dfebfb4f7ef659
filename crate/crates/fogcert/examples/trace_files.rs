//! Mobility traces: synthesize a random-waypoint walk, write it out in the
//! ns-2 movement format, load it back, and interpolate positions. The same
//! file can then drive a simulation via `trace.file` (or `--trace`).
//!
//! ```text
//! cargo run --release --example trace_files
//! ```

use fogcert::grid::{CellGrid, Position};
use fogcert::mobility::{load_trace, synthesize, to_ns2, WaypointParams};
use fogcert::model::ProducerId;

fn main() {
    let grid = CellGrid::new(Position::new(0.0, 0.0), 600.0, 600.0, 200.0).unwrap();
    let params = WaypointParams {
        speed_range: (0.9, 1.5),
        pause_range_ms: (10_000, 50_000),
        seed: 7,
    };
    let traces = synthesize(&grid, 3, 600_000, &params);
    println!("synthesized {} tracks over {} s", traces.producer_count(), traces.duration() / 1000);

    let path = std::env::temp_dir().join("fogcert-example.tr");
    std::fs::write(&path, to_ns2(&traces)).unwrap();
    println!("wrote {}", path.display());
    for line in to_ns2(&traces).lines().take(5) {
        println!("  {line}");
    }
    println!("  ...");

    let loaded = load_trace(&path).unwrap();
    println!("\npedestrian 0, one position every two minutes:");
    for minute in (0..=10).step_by(2) {
        let p = loaded.position_at(ProducerId(0), minute * 60_000).unwrap();
        let cell = grid.cell_of(grid.clamp(p)).unwrap();
        println!("  t = {minute:>2} min -> {p} in {cell}");
    }

    // the round trip preserves the motion
    let a = traces.position_at(ProducerId(1), 300_000).unwrap();
    let b = loaded.position_at(ProducerId(1), 300_000).unwrap();
    println!("\nround-trip drift after 5 min: {:.3} m", a.distance(&b));
    std::fs::remove_file(&path).ok();
}
