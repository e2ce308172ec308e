//! Solves the degenerate extension equation on a truncated half space and
//! compares its Neumann traces with the spectral operator.
//!
//! cargo run --release --example extension_pde -- [s]

use std::f64::consts::PI;
use std::time::Instant;

use fracheat::extension::{flux_trace, neumann_trace, run_extension_pde, ExtensionGrid, InterfaceRule, PdeOptions};
use fracheat::fracop::apply_spectral;
use fracheat::{norms, Field, FracParams, SpaceTimeGrid};

fn main() -> fracheat::Result<()> {
    let s: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let p = FracParams::new(s)?;
    let base = SpaceTimeGrid::new(1, 2.0 * PI, 32, 2.0 * PI, 16)?;
    let f = Field::from_fn(base, |x, t| (-2.0 * (1.0 - (x[0] - 3.0).cos()) - (1.0 - (t - 2.0).cos())).exp());
    let target = apply_spectral(&f, p);
    for (name, opts) in [("monotone", PdeOptions::default()), ("accurate", PdeOptions::accurate())] {
        let grid = ExtensionGrid::graded(base, p, 32, 4.0)?;
        let start = Instant::now();
        let run = run_extension_pde(&f, p, &grid, &opts)?;
        let (_, q) = norms(&neumann_trace(&run.field, p)?, &target)?;
        let (_, fl) = norms(&flux_trace(&run.field, p, InterfaceRule::Harmonic)?, &target)?;
        println!(
            "{name:>8}: {} periods, periodicity {:.1e}, trace L2 error quotient {q:.2e} flux {fl:.2e} ({:.2?})",
            run.periods,
            run.periodicity,
            start.elapsed()
        );
    }
    Ok(())
}
