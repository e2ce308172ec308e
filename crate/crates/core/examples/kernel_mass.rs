//! Total mass of the extension kernel at several heights.
//!
//! cargo run --release --example kernel_mass

use fracheat::kernels::kernel_mass;
use fracheat::FracParams;

fn main() -> fracheat::Result<()> {
    for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let p = FracParams::new(s)?;
        let masses: Vec<String> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&y| kernel_mass(y, p).map(|m| format!("{:+.3e}", m - 1.0)))
            .collect::<fracheat::Result<_>>()?;
        println!("s = {s:<4}  mass - 1 at y = 0.1, 1, 10:  {}", masses.join("  "));
    }
    Ok(())
}
