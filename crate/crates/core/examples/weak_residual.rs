//! Weak-form residual of the exact extension under refinement, and the
//! reflection test: the even reflection is a weak solution across `y = 0`
//! only where the operator output vanishes.
//!
//! cargo run --release --example weak_residual

use std::f64::consts::PI;

use fracheat::extension::{even_reflect, poisson_extend, weak_residual, ExtensionGrid, TestBump};
use fracheat::fracop::solution_vanishing_on;
use fracheat::{Cylinder, Field, FracParams, SpaceTimeGrid};

fn main() -> fracheat::Result<()> {
    let p = FracParams::new(0.5)?;
    let theta = TestBump { center: vec![3.0], y: 1.0, t: 3.0, radius_x: 1.0, radius_y: 0.6, radius_t: 1.5 };
    let mut grid = ExtensionGrid::graded(SpaceTimeGrid::new(1, 2.0 * PI, 32, 2.0 * PI, 16)?, p, 32, 2.0)?;
    for _ in 0..3 {
        let f = Field::from_fn(*grid.base(), |x, t| (-2.0 * (1.0 - (x[0] - 3.0).cos()) - (1.0 - (t - 2.0).cos())).exp());
        let r = weak_residual(&poisson_extend(&f, p, &grid)?, &theta, p)?;
        println!("Nx = {:>3}, J = {:>3}: residual {r:.3e}", grid.base().nx(), grid.j());
        grid = grid.refined()?;
    }

    let base = SpaceTimeGrid::new(1, 2.0 * PI, 32, 2.0 * PI, 16)?;
    let patch = Cylinder::new(vec![PI], PI, 1.0)?;
    let (f, _) = solution_vanishing_on(base, p, &patch)?;
    let u = even_reflect(&poisson_extend(&f, p, &ExtensionGrid::graded(base, p, 32, 3.0)?)?);
    let on = TestBump { center: vec![PI], y: 0.0, t: PI, radius_x: 0.9, radius_y: 0.5, radius_t: 0.9 };
    let off = TestBump { center: vec![0.0], t: 1.5 * PI, ..on.clone() };
    println!("straddling bump on the zero patch:  {:.3e}", weak_residual(&u, &on, p)?);
    println!("straddling bump off the zero patch: {:.3e}", weak_residual(&u, &off, p)?);
    Ok(())
}
