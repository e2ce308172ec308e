//! Heat kernel `W` and the extension kernel
//! `Gamma_y(x,t) = c_s y^{2s} t^{-1-s} W(x,t) exp(-y^2/(4t))`.
//!
//! The normalization is `c_s = 1/(4^s Gamma(s))`. Reducing the total mass to
//! `int_0^inf t^{-1-s} e^{-1/(4t)} dt = 4^s Gamma(s)` shows this is the constant
//! giving a positive kernel of unit mass; the historical prefactor
//! `1/(4^s Gamma(-s))` is negative on (0,1) and has mass -Gamma(s)/Gamma(-s).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::params::FracParams;
use crate::special::{gamma, laguerre_rule};
use crate::spectral;

/// Gauss-Weierstrass kernel `(4 pi t)^{-n/2} exp(-|x|^2/(4t))`, zero for `t <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernel {
    pub n: usize,
}

impl HeatKernel {
    pub fn new(n: usize) -> Self {
        HeatKernel { n }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        (4.0 * PI * t).powf(-(self.n as f64) / 2.0) * (-r2 / (4.0 * t)).exp()
    }
}

/// The extension (Poisson-type) kernel in the upper half space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionKernel {
    pub params: FracParams,
    pub n: usize,
    pub normalization_constant: f64,
}

impl ExtensionKernel {
    pub fn new(params: FracParams, n: usize) -> Self {
        ExtensionKernel { params, n, normalization_constant: params.kernel_constant() }
    }

    /// `Gamma_y(x, t)` for `y > 0`; zero for `t <= 0`.
    pub fn eval(&self, y: f64, x: &[f64], t: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("extension height y = {y} must be positive")));
        }
        if t <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.time_profile(y, t) * HeatKernel::new(self.n).eval(x, t))
    }

    /// `int Gamma_y(x, t) dx`, the kernel with the spatial heat kernel integrated out.
    pub fn time_profile(&self, y: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let s = self.params.s();
        self.normalization_constant
            * y.powf(self.params.trace_power())
            * t.powf(-1.0 - s)
            * (-y * y / (4.0 * t)).exp()
    }

    /// Fourier symbol of `Gamma_y` acting on `exp(i(xi.x + omega t))`:
    /// `c_s y^{2s} int_0^inf sigma^{-1-s} e^{-y^2/(4 sigma)} e^{-sigma z} d sigma`,
    /// `z = |xi|^2 + i omega`.
    ///
    /// The lag contour is rotated by `-arg(z)/2` and rescaled to the
    /// symmetric form `int exp(-q cosh v) cosh(s v) dv`, `q = y sqrt(z)`,
    /// which decays double-exponentially and is summed by the trapezoid rule.
    pub fn symbol(&self, y: f64, xi: &[f64], omega: f64) -> Complex64 {
        let z = Complex64::new(xi.iter().map(|v| v * v).sum(), omega);
        if z.norm() == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let s = self.params.s();
        let q = y * z.sqrt();
        cosh_integral(q, s) * (q / 2.0).powf(s) * (2.0 / gamma(s))
    }

    /// `u(., y, .) = Gamma_y * f` on the periodic grid of `f`.
    pub fn convolve(&self, f: &Field, y: f64) -> Result<Field> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("extension height y = {y} must be positive")));
        }
        let table = spectral::symbol_table(f.grid(), |xi, om| self.symbol(y, xi, om));
        Ok(spectral::apply_table(f, &table, true))
    }
}

/// `int_0^inf exp(-q cosh v) cosh(s v) dv` for `|arg q| <= pi/4`.
fn cosh_integral(q: Complex64, s: f64) -> Complex64 {
    let re = q.re;
    debug_assert!(re > 0.0);
    // Truncate where the integrand drops below e^-45 of its peak.
    let mut v_max: f64 = 1.0;
    while re * v_max.cosh() - s * v_max - re < 45.0 {
        v_max += 0.5;
    }
    let h = 0.06;
    let steps = (v_max / h).ceil() as usize;
    let mut acc = 0.5 * (-q).exp();
    for k in 1..=steps {
        let v = k as f64 * h;
        acc += (-q * v.cosh()).exp() * (s * v).cosh();
    }
    acc * h
}

/// `int int Gamma_y dx dt` by generalized Gauss-Laguerre quadrature after
/// `u = y^2/(4t)`, comparing 64- and 96-node rules.
pub fn kernel_mass(y: f64, p: FracParams) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::domain(format!("extension height y = {y} must be positive")));
    }
    let kernel = ExtensionKernel::new(p, 1);
    let s = p.s();
    let estimate = |degree: usize| -> f64 {
        laguerre_rule(degree, s - 1.0)
            .iter()
            .map(|&(u, w)| {
                let t = y * y / (4.0 * u);
                let jac = y * y / (4.0 * u * u);
                let weight_fn = u.powf(s - 1.0) * (-u).exp();
                w * kernel.time_profile(y, t) * jac / weight_fn
            })
            .sum()
    };
    let coarse = estimate(64);
    let fine = estimate(96);
    if (coarse - fine).abs() > 1e-10 * fine.abs().max(1.0) {
        return Err(Error::Convergence { what: "kernel mass quadrature".into(), coarse, fine });
    }
    Ok(fine)
}

/// Sup-norm distance between `Gamma_y * f` and `f` for each height.
pub fn delta_limit_check(f: &Field, heights: &[f64], p: FracParams) -> Result<Vec<f64>> {
    if heights.iter().any(|&y| !(y > 0.0)) || heights.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::domain("heights must be positive and strictly decreasing"));
    }
    let kernel = ExtensionKernel::new(p, f.grid().n());
    heights
        .iter()
        .map(|&y| Ok(kernel.convolve(f, y)?.sub(f)?.sup_norm()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpaceTimeGrid;
    use crate::special::legendre_rule;

    #[test]
    fn heat_kernel_values() {
        let w = HeatKernel::new(1);
        assert!((w.eval(&[0.0], 1.0 / (4.0 * PI)) - 1.0).abs() < 1e-15);
        assert_eq!(w.eval(&[0.3], -1.0), 0.0);
        assert_eq!(w.eval(&[0.3], 0.0), 0.0);
        assert!(w.eval(&[5.0], 0.1) > 0.0);
    }

    #[test]
    fn heat_kernel_unit_mass() {
        let w = HeatKernel::new(1);
        let mass: f64 = (-20..20)
            .flat_map(|k| legendre_rule(20, k as f64, k as f64 + 1.0))
            .map(|(x, wt)| wt * w.eval(&[x], 1.0))
            .sum();
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn heat_kernel_semigroup() {
        // (W_t1 * W_t2)(x) == W_{t1+t2}(x) by quadrature in the convolution variable.
        let w = HeatKernel::new(1);
        for x in [0.0, 0.7, -1.9] {
            let conv: f64 = (-40..40)
                .flat_map(|k| legendre_rule(16, k as f64 * 0.25, (k + 1) as f64 * 0.25))
                .map(|(z, wt)| wt * w.eval(&[x - z], 0.3) * w.eval(&[z], 0.5))
                .sum();
            assert!((conv - w.eval(&[x], 0.8)).abs() < 1e-8);
        }
    }

    #[test]
    fn gamma_kernel_causal_and_domain() {
        let k = ExtensionKernel::new(FracParams::new(0.3).unwrap(), 1);
        assert_eq!(k.eval(0.5, &[0.1], 0.0).unwrap(), 0.0);
        assert_eq!(k.eval(0.5, &[0.1], -2.0).unwrap(), 0.0);
        assert!(k.eval(0.0, &[0.1], 1.0).is_err());
        assert!(k.eval(-1.0, &[0.1], 1.0).is_err());
    }

    #[test]
    fn gamma_kernel_positive() {
        for i in 1..10 {
            let k = ExtensionKernel::new(FracParams::new(i as f64 / 10.0).unwrap(), 2);
            for &y in &[0.01, 0.3, 2.0] {
                for &t in &[1e-4, 0.1, 1.0, 50.0] {
                    assert!(k.eval(y, &[0.2, -0.4], t).unwrap() >= 0.0);
                }
            }
        }
    }

    #[test]
    fn half_power_constant() {
        // s = 1/2: c = 1/(2 Gamma(1/2)) = 1/(2 sqrt(pi))
        let k = ExtensionKernel::new(FracParams::new(0.5).unwrap(), 1);
        assert!((k.normalization_constant - 0.5 / PI.sqrt()).abs() < 1e-15);
        let (y, x, t): (f64, f64, f64) = (0.4, 0.3, 0.7);
        let expect = k.normalization_constant * y * t.powf(-1.5)
            * HeatKernel::new(1).eval(&[x], t)
            * (-y * y / (4.0 * t)).exp();
        assert!((k.eval(y, &[x], t).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn mass_is_one_and_height_independent() {
        for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let p = FracParams::new(s).unwrap();
            let m1 = kernel_mass(0.1, p).unwrap();
            for y in [1.0, 10.0] {
                let m = kernel_mass(y, p).unwrap();
                assert!((m - 1.0).abs() < 1e-8, "s={s} y={y} mass={m}");
                assert!((m - m1).abs() < 1e-12);
            }
        }
        assert!(kernel_mass(0.0, FracParams::new(0.5).unwrap()).is_err());
    }

    #[test]
    fn symbol_closed_form_at_half() {
        // For s = 1/2 the symbol is exp(-y sqrt(|xi|^2 + i omega)).
        let k = ExtensionKernel::new(FracParams::new(0.5).unwrap(), 1);
        for &(xi, om) in &[(1.0, 0.0), (0.0, 3.0), (2.0, -5.0), (7.0, 40.0), (0.0, -0.1)] {
            for &y in &[1e-3, 0.05, 0.5, 2.0] {
                let z = Complex64::new(xi * xi, om);
                let exact = (-y * z.sqrt()).exp();
                let got = k.symbol(y, &[xi], om);
                assert!((got - exact).norm() < 1e-13, "xi={xi} om={om} y={y}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn symbol_of_constant_is_one() {
        let k = ExtensionKernel::new(FracParams::new(0.3).unwrap(), 2);
        assert_eq!(k.symbol(0.7, &[0.0, 0.0], 0.0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn delta_limit_constant_field() {
        let g = SpaceTimeGrid::new(1, 2.0 * PI, 16, 2.0 * PI, 8).unwrap();
        let f = Field::from_fn(g, |_, _| 3.0);
        let errs = delta_limit_check(&f, &[0.5, 0.25, 0.125], FracParams::new(0.4).unwrap()).unwrap();
        assert!(errs.iter().all(|&e| e <= 1e-6));
    }

    #[test]
    fn delta_limit_rejects_unsorted_heights() {
        let g = SpaceTimeGrid::new(1, 1.0, 8, 1.0, 8).unwrap();
        let f = Field::zeros(g);
        let p = FracParams::new(0.4).unwrap();
        assert!(delta_limit_check(&f, &[0.1, 0.2], p).is_err());
        assert!(delta_limit_check(&f, &[0.1, -0.2], p).is_err());
    }

    proptest::proptest! {
        #[test]
        fn mass_is_one_for_any_height(s in 0.05f64..0.95, y in 0.01f64..20.0) {
            let m = kernel_mass(y, FracParams::new(s).unwrap()).unwrap();
            proptest::prop_assert!((m - 1.0).abs() < 1e-8);
        }
    }
}
