//! Applies `(d/dt - Laplacian)^s` to single space-time modes and checks the
//! eigenvalue, then the parabolic scaling law on a band-limited field.
//!
//! cargo run --release --example spectral_multiplier

use num_complex::Complex64;

use fracheat::fracop::{apply_spectral, multiplier_value};
use fracheat::{norms, parabolic_rescale, Field, FracParams, SpaceTimeGrid};

fn main() -> fracheat::Result<()> {
    let g = SpaceTimeGrid::new(1, 2.0 * std::f64::consts::PI, 64, 2.0 * std::f64::consts::PI, 64)?;
    let p = FracParams::new(0.4)?;
    for (k, w) in [(1, 0), (2, 3), (-3, -1)] {
        let mode = Field::from_complex_fn(g, |x, t| Complex64::from_polar(1.0, k as f64 * x[0] + w as f64 * t));
        let out = apply_spectral(&mode, p);
        let m = multiplier_value(p.s(), &[k as f64], -(w as f64));
        let (err, _) = norms(&out, &mode.map(|v| v * m))?;
        println!("mode (k = {k:>2}, omega = {w:>2}): multiplier {m:.6}, relative error {err:.1e}");
    }
    let f = Field::from_fn(g, |x, t| (x[0] + t).cos() + 0.5 * (2.0 * x[0] - t).sin());
    for r in [2.0, 4.0] {
        let lhs = apply_spectral(&parabolic_rescale(&f, r)?, p);
        let rhs = parabolic_rescale(&apply_spectral(&f, p), r)?.scale(r.powf(2.0 * p.s()));
        println!("scaling r = {r}: relative sup error {:.1e}", norms(&lhs, &rhs)?.0);
    }
    Ok(())
}
