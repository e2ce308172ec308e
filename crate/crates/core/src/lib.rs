//! Numerical toolkit for the fractional heat operator `(d/dt - Laplacian)^s`,
//! 0 < s < 1.
//!
//! Three independent evaluations are provided and cross-checked:
//!
//! * [`fracop::apply_spectral`]: the Fourier multiplier `(|xi|^2 - i tau)^s`;
//! * [`fracop::apply_singular`]: the parabolic hypersingular integral against
//!   the heat kernel;
//! * [`fracop::apply_extension_route`]: the weighted Neumann trace of the
//!   extension to the upper half space, where `u` solves
//!   `y^a u_t - div(y^a grad u) = 0` with `a = 1 - 2s`.
//!
//! [`extension`] solves that degenerate equation directly, and [`harnack`]
//! runs boundary Harnack experiments for `lambda u_t - div(A grad u) = 0` in
//! Lipschitz cylinders.

pub mod cli;
pub mod error;
pub mod extension;
pub mod fracop;
pub mod grid;
pub mod harnack;
pub mod kernels;
pub mod linalg;
pub mod params;
pub mod report;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{norms, parabolic_rescale, Cylinder, Field, SpaceTimeGrid};
pub use params::FracParams;
pub use report::RouteReport;
