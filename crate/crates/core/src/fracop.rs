//! Evaluation of `(d/dt - Laplacian)^s f` on the periodic lattice.
//!
//! Frequencies follow the convention of the multiplier `(|xi|^2 - i tau)^s`:
//! `tau` is dual to `t` through `exp(i(xi.x - tau t))`. The FFT bins of
//! [`SpaceTimeGrid`] use `exp(i(xi.x + omega t))`, so `tau = -omega`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Cylinder, Field, SpaceTimeGrid};
use crate::kernels::ExtensionKernel;
use crate::params::FracParams;
use crate::report::RouteReport;
use crate::special::{composite_rule, legendre_rule};
use crate::spectral::{self, Interpolant};

pub const SPECTRAL: &str = "spectral";
pub const SINGULAR: &str = "singular";
pub const EXTENSION: &str = "extension";

/// `(|xi|^2 - i tau)^s` on the principal branch, zero at the origin.
pub fn multiplier_value(s: f64, xi: &[f64], tau: f64) -> Complex64 {
    let z = Complex64::new(xi.iter().map(|v| v * v).sum(), -tau);
    if z.norm() == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z.powf(s)
    }
}

/// The multiplier tabulated over the FFT bins of a grid.
#[derive(Debug, Clone)]
pub struct Multiplier {
    pub params: FracParams,
    pub grid: SpaceTimeGrid,
    pub table: Vec<Complex64>,
}

impl Multiplier {
    pub fn new(params: FracParams, grid: SpaceTimeGrid) -> Self {
        let s = params.s();
        let table = spectral::symbol_table(&grid, |xi, om| multiplier_value(s, xi, -om));
        Multiplier { params, grid, table }
    }
}

/// `(d/dt - Laplacian)^s f` by Fourier multiplication.
pub fn apply_spectral(f: &Field, p: FracParams) -> Field {
    let m = Multiplier::new(p, *f.grid());
    spectral::apply_table(f, &m.table, true)
}

/// Spectral route for any exponent in `(0, 1]`. `s = 1` gives `f_t - Laplacian f`
/// and exists for checking the multiplier; the other routes require `s < 1`.
pub fn apply_heat_power(f: &Field, s: f64) -> Result<Field> {
    let p = if s == 1.0 {
        FracParams::heat_operator()
    } else {
        FracParams::new(s)?
    };
    Ok(apply_spectral(f, p))
}

/// Time-lag quadrature for the hypersingular integral.
///
/// Panels break at `t_cut (k/K)^grading`; the first panel absorbs the
/// `tau^{-s}` endpoint behaviour through `tau = tau_1 v^{1/(1-s)}`, so a
/// quadratic grading suffices for every `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularQuadRule {
    pub t_cut: f64,
    pub grading: f64,
    pub panels: usize,
    pub degree: usize,
    /// Relative L2 gap allowed between this rule and its refinement.
    pub tolerance: f64,
}

impl SingularQuadRule {
    /// One full time period, quadratic grading, 200 panels of 8 nodes.
    pub fn for_grid(grid: &SpaceTimeGrid) -> Self {
        SingularQuadRule {
            t_cut: grid.period(),
            grading: 2.0,
            panels: 200,
            degree: 8,
            tolerance: 1e-6,
        }
    }

    pub fn refined(&self) -> Self {
        SingularQuadRule { panels: 2 * self.panels, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_cut > 0.0 && self.grading >= 1.0 && self.panels >= 1 && self.degree >= 1) {
            return Err(Error::domain(format!("invalid singular quadrature rule {self:?}")));
        }
        Ok(())
    }

    /// Panel breakpoints `0 = tau_0 < ... < tau_K = t_cut`.
    pub fn breaks(&self) -> Vec<f64> {
        (0..=self.panels)
            .map(|k| self.t_cut * (k as f64 / self.panels as f64).powf(self.grading))
            .collect()
    }

    /// Nodes and weights for `int_0^{t_cut} g(tau) d tau` where `g ~ tau^{-s}` at 0.
    pub fn nodes(&self, s: f64) -> Vec<(f64, f64)> {
        let breaks = self.breaks();
        let tau1 = breaks[1];
        let power = 1.0 / (1.0 - s);
        let mut out: Vec<(f64, f64)> = legendre_rule(self.degree, 0.0, 1.0)
            .into_iter()
            .map(|(v, w)| (tau1 * v.powf(power), w * tau1 * power * v.powf(power - 1.0)))
            .collect();
        out.extend(composite_rule(&breaks[1..], self.degree));
        out
    }
}

/// `int_{t_cut}^inf exp(-z tau) tau^{-1-s} d tau` for `Re z >= 0`, `z != 0`.
///
/// The path is rotated to `tau = t_cut + rho exp(-i arg z)` so that the
/// exponential decays monotonically, then integrated on geometric panels.
fn lag_tail(z: Complex64, s: f64, t_cut: f64) -> Complex64 {
    let r = z.norm();
    let dir = Complex64::from_polar(1.0, -z.arg());
    // exp(-r rho) < e^-45 beyond rho_max
    let rho_max = 45.0 / r;
    let mut breaks = vec![0.0, f64::min(0.25 * t_cut, 1.0 / r)];
    while *breaks.last().unwrap() < rho_max {
        let last = *breaks.last().unwrap();
        breaks.push(f64::min(2.0 * last, last + 2.0 / r).min(rho_max).max(last * 1.000001));
        if breaks.len() > 4000 {
            break;
        }
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (rho, w) in composite_rule(&breaks, 16) {
        acc += w * (-r * rho).exp() * (t_cut + rho * dir).powf(-1.0 - s);
    }
    acc * (-z * t_cut).exp() * dir
}

/// `1 - exp(-w)` without cancellation for small `w`.
fn one_minus_exp(w: Complex64) -> Complex64 {
    if w.norm() < 1e-2 {
        // Taylor terms up to w^6
        let mut term = w;
        let mut acc = w;
        for k in 2..=6 {
            term *= -w / k as f64;
            acc += term;
        }
        acc
    } else {
        1.0 - (-w).exp()
    }
}

/// Per-frequency symbol of the discretized hypersingular integral.
fn singular_symbol(p: FracParams, rule: &SingularQuadRule, nodes: &[(f64, f64)], z: Complex64) -> Complex64 {
    if z.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let s = p.s();
    let mut body = Complex64::new(0.0, 0.0);
    for &(tau, w) in nodes {
        body += w * one_minus_exp(z * tau) * tau.powf(-1.0 - s);
    }
    let local_tail = rule.t_cut.powf(-s) / s;
    (body + local_tail - lag_tail(z, s, rule.t_cut)) * p.singular_constant()
}

fn singular_table(grid: &SpaceTimeGrid, p: FracParams, rule: &SingularQuadRule) -> Vec<Complex64> {
    let nodes = rule.nodes(p.s());
    spectral::symbol_table(grid, |xi, om| {
        let z = Complex64::new(xi.iter().map(|v| v * v).sum(), om);
        singular_symbol(p, rule, &nodes, z)
    })
}

/// `(d/dt - Laplacian)^s f` as the hypersingular integral
///
/// `s/Gamma(1-s) int_0^inf [f(x,t) - (e^{tau Laplacian} f)(x, t - tau)] tau^{-1-s} d tau`.
///
/// The spatial integral against the heat kernel is the heat semigroup, applied
/// exactly in Fourier space; only the time lag is discretized. Lags up to
/// `rule.t_cut` use the graded rule, the remaining tail is integrated along a
/// rotated path. The result is compared against a rule with twice the panels.
pub fn apply_singular(f: &Field, p: FracParams, rule: &SingularQuadRule) -> Result<Field> {
    rule.validate()?;
    let grid = *f.grid();
    let coarse = spectral::apply_table(f, &singular_table(&grid, p, rule), true);
    let fine = spectral::apply_table(f, &singular_table(&grid, p, &rule.refined()), true);
    let gap = fine.sub(&coarse)?.l2_norm();
    let scale = fine.l2_norm().max(f.l2_norm() * 1e-12).max(1e-300);
    if gap > rule.tolerance * scale {
        return Err(Error::Convergence {
            what: "hypersingular lag quadrature".into(),
            coarse: coarse.l2_norm(),
            fine: fine.l2_norm(),
        });
    }
    Ok(fine)
}

/// Exponents of the correction terms in `D(y) = D_0 + sum_j c_j y^{e_j}`,
/// the small-`y` expansion of the weighted difference quotient.
pub fn trace_correction_exponents(s: f64, count: usize) -> Vec<f64> {
    let mut exps: Vec<f64> = Vec::new();
    let mut k = 0.0;
    while exps.len() < count + 4 {
        for e in [2.0 * k + 2.0 - 2.0 * s, 2.0 * k + 2.0] {
            if !exps.iter().any(|x| (x - e).abs() < 1e-9) {
                exps.push(e);
            }
        }
        k += 1.0;
    }
    exps.sort_by(|a, b| a.total_cmp(b));
    exps.truncate(count);
    exps
}

/// Least-squares weights `beta` with `D_0 = sum_i beta_i D(y_i)` for the fit
/// `D(y) = D_0 + sum_j c_j y^{e_j}`.
pub(crate) fn extrapolation_weights(heights: &[f64], exponents: &[f64]) -> Vec<f64> {
    let rows = heights.len();
    let cols = exponents.len() + 1;
    assert!(rows >= cols, "need at least as many heights as fit terms");
    // Scale heights to unit size so the columns stay comparable.
    let y_ref = heights.iter().cloned().fold(0.0, f64::max);
    let design: Vec<Vec<f64>> = heights
        .iter()
        .map(|&y| {
            let mut row = vec![1.0];
            row.extend(exponents.iter().map(|&e| (y / y_ref).powf(e)));
            row
        })
        .collect();
    // Normal equations, solved by Gauss-Jordan on the small Gram matrix.
    let mut gram = vec![vec![0.0; cols + rows]; cols];
    for i in 0..cols {
        for j in 0..cols {
            gram[i][j] = (0..rows).map(|r| design[r][i] * design[r][j]).sum();
        }
        for r in 0..rows {
            gram[i][cols + r] = design[r][i];
        }
    }
    for c in 0..cols {
        let piv = (c..cols)
            .max_by(|&a, &b| gram[a][c].abs().total_cmp(&gram[b][c].abs()))
            .unwrap();
        gram.swap(c, piv);
        let d = gram[c][c];
        for v in gram[c].iter_mut() {
            *v /= d;
        }
        for r in 0..cols {
            if r != c {
                let factor = gram[r][c];
                if factor != 0.0 {
                    let pivot_row = gram[c].clone();
                    for (v, pv) in gram[r].iter_mut().zip(pivot_row) {
                        *v -= factor * pv;
                    }
                }
            }
        }
    }
    gram[0][cols..].to_vec()
}

/// Extrapolates difference quotients `D(y_i)` (one field per height) to `y = 0`.
///
/// Uses up to three correction terms. The estimate is repeated without the
/// largest height; disagreement beyond `tol` is reported as divergence.
pub(crate) fn extrapolate_to_zero(
    heights: &[f64],
    quotients: &[Field],
    s: f64,
    tol: f64,
) -> Result<Field> {
    let fit = |hs: &[f64], qs: &[Field]| -> Result<Field> {
        let terms = (hs.len() - 1).min(3);
        let beta = extrapolation_weights(hs, &trace_correction_exponents(s, terms));
        let mut acc = qs[0].scale(beta[0]);
        for (q, b) in qs.iter().zip(&beta).skip(1) {
            acc = acc.axpy(*b, q)?;
        }
        Ok(acc)
    };
    let all = fit(heights, quotients)?;
    if heights.len() >= 3 {
        let fewer = fit(&heights[1..], &quotients[1..])?;
        let gap = fewer.sub(&all)?.l2_norm();
        if gap > tol * all.l2_norm().max(1e-300) {
            return Err(Error::Convergence {
                what: "trace extrapolation".into(),
                coarse: fewer.l2_norm(),
                fine: all.l2_norm(),
            });
        }
    }
    Ok(all)
}

/// Default probe heights: five halvings starting from a quarter of the
/// spatial spacing.
pub fn default_probes(grid: &SpaceTimeGrid) -> Vec<f64> {
    let y0 = 0.25 * grid.hx();
    (0..5).map(|k| y0 * 0.5f64.powi(k)).collect()
}

fn check_probes(probes: &[f64]) -> Result<()> {
    if probes.len() < 2
        || probes.iter().any(|&y| !(y > 0.0))
        || probes.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::domain(
            "probe heights must be positive, strictly decreasing, at least two",
        ));
    }
    Ok(())
}

/// Uncalibrated trace `lim_{y->0} -(Gamma_y * f - f) / y^{2s}`.
pub fn raw_extension_trace(f: &Field, p: FracParams, probes: &[f64]) -> Result<Field> {
    check_probes(probes)?;
    let kernel = ExtensionKernel::new(p, f.grid().n());
    let quotients = probes
        .iter()
        .map(|&y| {
            let u = kernel.convolve(f, y)?;
            Ok(f.sub(&u)?.scale(y.powf(-p.trace_power())))
        })
        .collect::<Result<Vec<_>>>()?;
    extrapolate_to_zero(probes, &quotients, p.s(), 5e-2)
}

/// Least-squares constant `C` minimizing `|C raw - target|` in L2.
pub fn fit_constant(raw: &Field, target: &Field) -> Result<f64> {
    let denom: f64 = raw.values().iter().map(|v| v.norm_sqr()).sum();
    if denom == 0.0 {
        return Err(Error::domain("cannot calibrate on a vanishing trace"));
    }
    if raw.grid() != target.grid() {
        return Err(Error::shape("calibration fields live on different grids"));
    }
    let num: f64 = raw
        .values()
        .iter()
        .zip(target.values())
        .map(|(a, b)| (a.conj() * b).re)
        .sum();
    Ok(num / denom)
}

/// Fixed calibration field: `cos(2 pi x_1 / L + 2 pi t / T)`.
pub fn calibration_mode(grid: SpaceTimeGrid) -> Field {
    let (kx, kt) = (2.0 * std::f64::consts::PI / grid.length(), 2.0 * std::f64::consts::PI / grid.period());
    Field::from_fn(grid, move |x, t| (kx * x[0] + kt * t).cos())
}

/// Neumann constant fitted once per `s` on [`calibration_mode`].
pub fn calibrate_neumann(p: FracParams, grid: SpaceTimeGrid, probes: &[f64]) -> Result<f64> {
    let mode = calibration_mode(grid);
    let raw = raw_extension_trace(&mode, p, probes)?;
    fit_constant(&raw, &apply_spectral(&mode, p))
}

/// `(d/dt - Laplacian)^s f` as the calibrated Neumann trace of the extension.
pub fn apply_extension_route(f: &Field, p: FracParams, probes: &[f64]) -> Result<Field> {
    let c = calibrate_neumann(p, *f.grid(), probes)?;
    Ok(raw_extension_trace(f, p, probes)?.scale(c))
}

/// Brute-force value of the hypersingular integral at one point.
///
/// `f` is evaluated through its trigonometric interpolant. The heat-kernel
/// average is a direct Gauss-Legendre sum in `x'` for short lags and a
/// trapezoid sum against the periodized heat kernel once the kernel is wider
/// than a quarter period. Lags run out to 50 time periods with the local term
/// integrated analytically beyond; the nonlocal remainder is dropped.
/// Only `n = 1` is supported.
pub fn oracle_singular(f: &Field, p: FracParams, x: f64, t: f64) -> Result<Complex64> {
    let grid = *f.grid();
    if grid.n() != 1 {
        return Err(Error::domain("brute-force oracle supports n = 1 only"));
    }
    let s = p.s();
    let mean = f.mean();
    let centered = f.map(|v| v - mean);
    let interp = Interpolant::new(&centered);
    let coeffs = spectral::forward(&centered);
    let (nx, nt) = (grid.nx(), grid.nt());
    let (len, per) = (grid.length(), grid.period());
    let f0 = interp.eval(&[x], t);

    // spatial amplitudes of f(., t') for a single time t'
    let spatial_at = |tp: f64| -> Vec<Complex64> {
        (0..nx)
            .map(|kx| {
                (0..nt)
                    .map(|it| {
                        let (_, om) = grid.frequencies(grid.flat_index(&[kx], it));
                        let basis = if it == nt / 2 {
                            Complex64::new((om * tp).cos(), 0.0)
                        } else {
                            Complex64::from_polar(1.0, om * tp)
                        };
                        coeffs[grid.flat_index(&[kx], it)] * basis
                    })
                    .sum()
            })
            .collect()
    };
    let eval_x = |amp: &[Complex64], xp: f64| -> Complex64 {
        amp.iter()
            .enumerate()
            .map(|(kx, c)| {
                let k = crate::grid::signed_bin(kx, nx) as f64;
                let w = 2.0 * std::f64::consts::PI * k / len;
                if kx == nx / 2 {
                    c * (w * xp).cos()
                } else {
                    c * Complex64::from_polar(1.0, w * xp)
                }
            })
            .sum()
    };
    let heat = crate::kernels::HeatKernel::new(1);
    // int W(x', tau) [f(x, t) - f(x - x', t - tau)] dx'
    let deficit = |tau: f64| -> Complex64 {
        let amp = spatial_at(t - tau);
        let reach = 12.0 * tau.sqrt();
        if reach < 0.25 * len {
            let panels = ((2.0 * reach / grid.hx()).ceil() as usize).max(24);
            let h = 2.0 * reach / panels as f64;
            let breaks: Vec<f64> = (0..=panels).map(|k| -reach + k as f64 * h).collect();
            composite_rule(&breaks, 8)
                .into_iter()
                .map(|(xp, w)| (f0 - eval_x(&amp, x - xp)) * (w * heat.eval(&[xp], tau)))
                .sum()
        } else {
            let m = 4 * nx;
            let h = len / m as f64;
            let images = (reach / len).ceil() as i64 + 1;
            (0..m)
                .map(|j| {
                    let xp = j as f64 * h;
                    let wper: f64 = (-images..=images)
                        .map(|k| heat.eval(&[xp + k as f64 * len], tau))
                        .sum();
                    (f0 - eval_x(&amp, x - xp)) * (h * wper)
                })
                .sum()
        }
    };
    let t_max = 50.0 * per;
    let rule = SingularQuadRule {
        t_cut: per,
        grading: 2.0,
        panels: 400,
        degree: 8,
        tolerance: 0.0,
    };
    let mut nodes = rule.nodes(s);
    let far_panels = ((t_max - per) / (2.0 * grid.ht())).ceil() as usize;
    let far_breaks: Vec<f64> = (0..=far_panels)
        .map(|k| per + (t_max - per) * k as f64 / far_panels as f64)
        .collect();
    nodes.extend(composite_rule(&far_breaks, 8));
    let body: Complex64 = nodes
        .par_iter()
        .map(|&(tau, w)| deficit(tau) * (w * tau.powf(-1.0 - s)))
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok((body + f0 * t_max.powf(-s) / s) * p.singular_constant())
}

/// Runs all three routes on `f` and tabulates their agreement.
///
/// `calibration` holds the mode-fitted Neumann constant under `extension`,
/// the constant refitted on `f` itself under `extension_self_fit`, and the
/// closed-form value under `extension_closed_form`.
pub fn consistency_report(f: &Field, p: FracParams) -> Result<RouteReport> {
    consistency_report_with(f, p, &SingularQuadRule::for_grid(f.grid()), &default_probes(f.grid()))
}

pub fn consistency_report_with(
    f: &Field,
    p: FracParams,
    rule: &SingularQuadRule,
    probes: &[f64],
) -> Result<RouteReport> {
    if !f.is_real() {
        return Err(Error::domain("consistency report expects a real field"));
    }
    let spectral_out = apply_spectral(f, p);
    let singular_out = apply_singular(f, p, rule)?;
    let c_mode = calibrate_neumann(p, *f.grid(), probes)?;
    let raw = raw_extension_trace(f, p, probes)?;
    let extension_out = raw.scale(c_mode);

    let mut report = RouteReport::new();
    report.calibration.insert(EXTENSION.into(), c_mode);
    report.calibration.insert("extension_closed_form".into(), p.neumann_constant());
    if raw.l2_norm() > 0.0 {
        report
            .calibration
            .insert("extension_self_fit".into(), fit_constant(&raw, &spectral_out)?);
    }
    report.insert(SPECTRAL, spectral_out)?;
    report.insert(SINGULAR, singular_out)?;
    report.insert(EXTENSION, extension_out)?;
    Ok(report)
}

/// A smooth `f` with `(d/dt - Laplacian)^s f = g`, where `g` is the
/// difference of two equal bumps placed away from `patch`. The operator
/// output vanishes on the patch up to the bump tails (exactly zero there for
/// the compactly supported bumps used).
///
/// Returns `(f, g)`.
pub fn solution_vanishing_on(
    grid: SpaceTimeGrid,
    p: FracParams,
    patch: &Cylinder,
) -> Result<(Field, Field)> {
    if grid.n() != 1 {
        return Err(Error::domain("patch construction implemented for n = 1"));
    }
    let (len, per) = (grid.length(), grid.period());
    let width = 0.15 * len;
    let t_width = 0.3 * per;
    // Source centres half a period away from the patch in space, shifted by
    // whole grid cells so the two bumps carry identical discrete mass.
    let half = (grid.nx() / 2) as f64 * grid.hx();
    let c1 = (patch.center[0] + half).rem_euclid(len);
    let quarter = (grid.nt() / 4) as f64 * grid.ht();
    let d1 = (patch.time + quarter).rem_euclid(per);
    let d2 = (patch.time - quarter).rem_euclid(per);
    let wrap = |d: f64, p: f64| d - p * (d / p).round();
    let bump = |r: f64| if r.abs() < 1.0 { (-1.0 / (1.0 - r * r)).exp() } else { 0.0 };
    let g = Field::from_fn(grid, |x, t| {
        let sx = bump(wrap(x[0] - c1, len) / width);
        sx * (bump(wrap(t - d1, per) / t_width) - bump(wrap(t - d2, per) / t_width))
    });
    let m = Multiplier::new(p, grid);
    let mut coeffs = spectral::forward(&g);
    for (c, mv) in coeffs.iter_mut().zip(&m.table) {
        *c = if mv.norm() == 0.0 { Complex64::new(0.0, 0.0) } else { *c / mv };
    }
    let f = spectral::inverse(grid, coeffs, true);
    Ok((f, g))
}
