//! Oscillation of the quotient of two positive solutions vanishing on a
//! Lipschitz wall, at three mesh resolutions.
//!
//! cargo run --release --example harnack_quotient -- [s slope]

use std::time::Instant;

use fracheat::harnack::{run_experiment, BoundaryData, DataSpec, DomainSpec, HarnackConfig, SolveOptions, WallSpec};

fn config(s: f64, slope: f64, n: usize) -> HarnackConfig {
    let data = |center: [f64; 2]| BoundaryData {
        initial: DataSpec::Sum {
            terms: vec![
                DataSpec::WallDistance { amplitude: 1.0, cap: 0.5 },
                DataSpec::Bump { center, radius: 0.6, amplitude: 2.0 },
            ],
        },
        lateral: DataSpec::Zero,
        vanish_on: vec![],
    };
    let wall = if slope == 0.0 { WallSpec::Flat } else { WallSpec::Wedge { slope, vertex: 0.0 } };
    HarnackConfig {
        s,
        domain: DomainSpec { wall, x_range: (0.0, 2.0), slab: (-1.0, 1.0), r0: 0.5, horizon: 0.5, nx: n, ny: n },
        data: [data([0.6, -0.3]), data([1.2, 0.35])],
        solve: SolveOptions { steps: 2 * n, cg_tol: 1e-12 },
        wall_height: 0.0,
        t0: None,
        delta: None,
        r: 0.5,
        depth: 3,
    }
}

fn main() -> fracheat::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (s, slope) = (args.first().copied().unwrap_or(0.5), args.get(1).copied().unwrap_or(0.0));
    for n in [64, 128, 192] {
        let start = Instant::now();
        let report = run_experiment(&config(s, slope, n))?;
        println!("n = {n}  ({:.2?})", start.elapsed());
        print!("{}", report.csv());
        println!("{}", report.summary_json());
    }
    Ok(())
}
