//! Evaluates `(d/dt - Laplacian)^s` of a smooth bump by the spectral,
//! hypersingular and extension routes and prints their agreement.
//!
//! cargo run --release --example three_routes -- [nx nt]

use std::f64::consts::PI;
use std::time::Instant;

use fracheat::fracop::consistency_report;
use fracheat::{Field, FracParams, SpaceTimeGrid};

fn main() -> fracheat::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (nx, nt) = (args.first().copied().unwrap_or(64), args.get(1).copied().unwrap_or(32));
    let grid = SpaceTimeGrid::new(1, 2.0 * PI, nx, 2.0 * PI, nt)?;
    let bump = Field::from_fn(grid, |x, t| {
        (-4.0 * (1.0 - (x[0] - PI).cos()) - 2.0 * (1.0 - (t - PI).cos())).exp()
    });
    for s in [0.25, 0.5, 0.75] {
        let start = Instant::now();
        let report = consistency_report(&bump, FracParams::new(s)?)?;
        println!("s = {s}  ({:.2?})", start.elapsed());
        for (a, b, e) in report.pairs() {
            println!("  {a:>9} vs {b:<9}  l2 {:.3e}  sup {:.3e}", e.l2_rel, e.sup_rel);
        }
        for (name, c) in &report.calibration {
            println!("  C[{name}] = {c:.10}");
        }
    }
    Ok(())
}
