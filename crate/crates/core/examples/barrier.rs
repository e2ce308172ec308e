//! Builds the barrier at the vertex of a wedge-shaped wall and checks that it
//! dominates solutions with small lateral data that vanish near the vertex.
//!
//! cargo run --release --example barrier

use fracheat::harnack::{build_barrier, build_domain, solve_weighted_nodal, DomainSpec, SolveOptions, WallSpec};
use fracheat::FracParams;

fn main() -> fracheat::Result<()> {
    let p = FracParams::new(0.3)?;
    let domain = build_domain(&DomainSpec {
        wall: WallSpec::Wedge { slope: 1.0, vertex: 0.0 },
        x_range: (0.0, 2.0),
        slab: (-1.0, 1.0),
        r0: 0.5,
        horizon: 0.4,
        nx: 32,
        ny: 32,
    })?;
    let vertex = domain.left_wall_point(0.0);
    let t0 = 0.4;
    let barrier = build_barrier(&domain, p, vertex, t0)?;
    let others = (0..barrier.psi.len()).filter(|&k| k != barrier.vertex);
    let min_other = others.map(|k| barrier.psi[k]).fold(f64::INFINITY, f64::min);
    println!("psi at the vertex {:.1e}, smallest elsewhere {min_other:.3e}", barrier.psi[barrier.vertex]);

    // lateral data of size eps away from the vertex, zero within 0.3 of it
    let eps = 0.1;
    let mut data = vec![0.0; domain.node_count()];
    for j in 0..=domain.spec.ny {
        for i in 0..=domain.spec.nx {
            let [x, y] = domain.physical_coords(i, j);
            if (x - vertex[0]).hypot(y - vertex[1]) > 0.3 {
                data[domain.node(i, j)] = eps;
            }
        }
    }
    let sol = solve_weighted_nodal(&domain, p, &data, &data, &SolveOptions { steps: 40, cg_tol: 1e-12 })?;
    // eps + c psi dominates the initial data once c psi(., 0) >= eps off the vertex
    let c = eps / (min_other + t0);
    let mut worst = f64::NEG_INFINITY;
    for (n, (&t, u)) in sol.times.iter().zip(&sol.values).enumerate() {
        for (k, v) in u.iter().enumerate() {
            worst = worst.max(v.abs() - (eps + c * barrier.eval(k, t)));
        }
        if n % 10 == 0 {
            println!("t = {t:.2}: u at the vertex {:.2e}", u[barrier.vertex]);
        }
    }
    println!("max of |u| - (eps + c psi) over all levels: {worst:.2e} (c = {c:.3})");
    Ok(())
}
