//! The degenerate parabolic problem `y^a u_t = div(y^a grad u)` in the upper
//! half space `y > 0`, with `u(x, 0, t) = f(x, t)`.
//!
//! [`poisson_extend`] samples the exact extension `Gamma_y * f`;
//! [`solve_extension_pde`] solves the equation with a conservative
//! finite-volume scheme in `y`, second differences in `x` and implicit
//! time stepping. [`weak_residual`] evaluates the integrated-by-parts form of the
//! equation against smooth bumps.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fracop;
use crate::grid::{Field, SpaceTimeGrid};
use crate::kernels::ExtensionKernel;
use crate::linalg::conjugate_gradient;
use crate::params::FracParams;

/// Base lattice times a non-uniform grid in the extension variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionGrid {
    base: SpaceTimeGrid,
    y_nodes: Vec<f64>,
    mirrored: bool,
}

impl ExtensionGrid {
    /// `y_j = y_max (j/J)^gamma` with `gamma = max(2, 2/(1 - max(a, 0)))`.
    pub fn graded(base: SpaceTimeGrid, p: FracParams, j: usize, y_max: f64) -> Result<Self> {
        let gamma = f64::max(2.0, 2.0 / (1.0 - p.a().max(0.0)));
        Self::with_grading(base, j, y_max, gamma)
    }

    pub fn with_grading(base: SpaceTimeGrid, j: usize, y_max: f64, gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0) {
            return Err(Error::domain("grading exponent must be at least 1"));
        }
        let nodes = (0..=j).map(|k| y_max * (k as f64 / j as f64).powf(gamma)).collect();
        Self::from_nodes(base, nodes)
    }

    /// Explicit nodes: start at 0, strictly increasing, at least 17 of them.
    pub fn from_nodes(base: SpaceTimeGrid, y_nodes: Vec<f64>) -> Result<Self> {
        if y_nodes.len() < 17 {
            return Err(Error::domain("extension grid needs J >= 16"));
        }
        if y_nodes[0] != 0.0 || y_nodes.windows(2).any(|w| !(w[1] > w[0])) || !y_nodes.last().unwrap().is_finite() {
            return Err(Error::domain("y nodes must start at 0 and increase strictly"));
        }
        Ok(ExtensionGrid { base, y_nodes, mirrored: false })
    }

    pub fn base(&self) -> &SpaceTimeGrid {
        &self.base
    }

    /// Heights, ascending. For a mirrored grid these run from `-y_max` to `y_max`.
    pub fn y_nodes(&self) -> &[f64] {
        &self.y_nodes
    }

    pub fn y_max(&self) -> f64 {
        *self.y_nodes.last().unwrap()
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    pub fn ny(&self) -> usize {
        self.y_nodes.len()
    }

    /// Number of intervals of the half-space grid.
    pub fn j(&self) -> usize {
        if self.mirrored {
            (self.ny() - 1) / 2
        } else {
            self.ny() - 1
        }
    }

    /// Row holding `y = 0`.
    pub fn trace_row(&self) -> usize {
        if self.mirrored {
            self.j()
        } else {
            0
        }
    }

    fn spatial_len(&self) -> usize {
        self.base.nx().pow(self.base.n() as u32)
    }

    pub fn len(&self) -> usize {
        self.spatial_len() * self.ny() * self.base.nt()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `(spatial flat index, y row, time index)`.
    pub fn index(&self, sp: usize, j: usize, it: usize) -> usize {
        (sp * self.ny() + j) * self.base.nt() + it
    }

    /// Doubles `Nx`, `Nt` and the number of y intervals, keeping the grading.
    pub fn refined(&self) -> Result<Self> {
        let half: Vec<f64> = if self.mirrored {
            self.y_nodes[self.j()..].to_vec()
        } else {
            self.y_nodes.clone()
        };
        // Interpolate the node map y(j/J) at half steps, monotone by construction.
        let mut nodes = Vec::with_capacity(2 * half.len() - 1);
        for w in half.windows(2) {
            nodes.push(w[0]);
            nodes.push(if w[0] == 0.0 {
                // The graded map is a power near 0; keep the power-law spacing.
                let ratio = half[2] / half[1];
                let gamma = ratio.log2();
                w[1] * 0.5f64.powf(gamma)
            } else {
                (w[0] * w[1]).sqrt().max(0.5 * (w[0] + w[1]) - 0.25 * (w[1] - w[0]))
            });
        }
        nodes.push(*half.last().unwrap());
        let g = ExtensionGrid::from_nodes(self.base.refined(), nodes)?;
        Ok(if self.mirrored { g.mirror() } else { g })
    }

    fn mirror(&self) -> ExtensionGrid {
        if self.mirrored {
            return self.clone();
        }
        let mut nodes: Vec<f64> = self.y_nodes[1..].iter().rev().map(|y| -y).collect();
        nodes.extend_from_slice(&self.y_nodes);
        ExtensionGrid { base: self.base, y_nodes: nodes, mirrored: true }
    }
}

/// Real samples `u(x, y_j, t)` on an [`ExtensionGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionField {
    grid: ExtensionGrid,
    values: Vec<f64>,
}

impl ExtensionField {
    pub fn zeros(grid: ExtensionGrid) -> Self {
        let values = vec![0.0; grid.len()];
        ExtensionField { grid, values }
    }

    pub fn from_fn(grid: ExtensionGrid, f: impl Fn(&[f64], f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let g = out.grid.clone();
        let nt = g.base.nt();
        for sp in 0..g.spatial_len() {
            for (j, &y) in g.y_nodes.iter().enumerate() {
                for it in 0..nt {
                    let (x, t) = g.base.coords(sp * nt + it);
                    out.values[g.index(sp, j, it)] = f(&x, y, t);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &ExtensionGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, sp: usize, j: usize, it: usize) -> f64 {
        self.values[self.grid.index(sp, j, it)]
    }

    /// The samples at one height as a core field.
    pub fn slice(&self, j: usize) -> Field {
        let g = &self.grid;
        let nt = g.base.nt();
        let vals = (0..g.base.len())
            .map(|i| Complex64::new(self.values[g.index(i / nt, j, i % nt)], 0.0))
            .collect();
        Field::from_values(g.base, vals, true).expect("slice matches base grid")
    }

    fn set_slice(&mut self, j: usize, f: &Field) -> Result<()> {
        let nt = self.grid.base.nt();
        for (i, v) in f.values().iter().enumerate() {
            let idx = self.grid.index(i / nt, j, i % nt);
            self.values[idx] = v.re;
        }
        Ok(())
    }

    /// `u(x, 0, t)`.
    pub fn trace(&self) -> Field {
        self.slice(self.grid.trace_row())
    }

    pub fn max_abs_diff(&self, other: &ExtensionField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::shape("extension fields on different grids"));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// CSV with header `# extgrid n Nx Nt J`, followed by `# domain L T` and
    /// `# ynodes ...`, then rows `ix[,iy],j,it,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        let b = &g.base;
        writeln!(w, "# extgrid {} {} {} {}", b.n(), b.nx(), b.nt(), g.ny() - 1)?;
        writeln!(w, "# domain {:.16e} {:.16e}", b.length(), b.period())?;
        let ys: Vec<String> = g.y_nodes.iter().map(|y| format!("{y:.16e}")).collect();
        writeln!(w, "# ynodes {}", ys.join(" "))?;
        let nt = b.nt();
        for sp in 0..g.spatial_len() {
            let (spi, _) = b.unflatten(sp * nt);
            let prefix: String = spi.iter().map(|i| format!("{i},")).collect();
            for j in 0..g.ny() {
                for it in 0..nt {
                    writeln!(w, "{prefix}{j},{it},{:.16e}", self.values[g.index(sp, j, it)])?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<ExtensionField> {
        let mut dims: Option<(usize, usize, usize, usize)> = None;
        let mut domain: Option<(f64, f64)> = None;
        let mut ynodes: Option<Vec<f64>> = None;
        let mut field: Option<ExtensionField> = None;
        let bad = |n: usize, what: &str| Error::Config(format!("line {}: {what}", n + 1));
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# extgrid") {
                let v: Vec<usize> = rest
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| bad(n, "bad integer")))
                    .collect::<Result<_>>()?;
                if v.len() != 4 {
                    return Err(bad(n, "extgrid header needs n Nx Nt J"));
                }
                dims = Some((v[0], v[1], v[2], v[3]));
                continue;
            }
            if let Some(rest) = line.strip_prefix("# domain") {
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| bad(n, "bad float")))
                    .collect::<Result<_>>()?;
                if v.len() != 2 {
                    return Err(bad(n, "domain line needs L T"));
                }
                domain = Some((v[0], v[1]));
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ynodes") {
                ynodes = Some(
                    rest.split_whitespace()
                        .map(|s| s.parse().map_err(|_| bad(n, "bad float")))
                        .collect::<Result<_>>()?,
                );
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            if field.is_none() {
                let (dn, nx, nt, j) = dims.ok_or_else(|| bad(n, "data before extgrid header"))?;
                let (l, t) = domain.ok_or_else(|| bad(n, "missing domain line"))?;
                let ys = ynodes.clone().ok_or_else(|| bad(n, "missing ynodes line"))?;
                if ys.len() != j + 1 {
                    return Err(bad(n, "ynodes count does not match J"));
                }
                let base = SpaceTimeGrid::new(dn, l, nx, t, nt)?;
                let g = if ys[0] < 0.0 {
                    let half = ys[(ys.len() - 1) / 2..].to_vec();
                    let g = ExtensionGrid::from_nodes(base, half)?.mirror();
                    if g.y_nodes != ys {
                        return Err(bad(n, "mirrored ynodes are not symmetric"));
                    }
                    g
                } else {
                    ExtensionGrid::from_nodes(base, ys)?
                };
                field = Some(ExtensionField::zeros(g));
            }
            let f = field.as_mut().unwrap();
            let g = f.grid.clone();
            let cols: Vec<&str> = line.split(',').collect();
            let dn = g.base.n();
            if cols.len() != dn + 3 {
                return Err(bad(n, "wrong column count"));
            }
            let idx: Vec<usize> = cols[..dn + 2]
                .iter()
                .map(|c| c.trim().parse().map_err(|_| bad(n, "bad index")))
                .collect::<Result<_>>()?;
            if idx[..dn].iter().any(|&i| i >= g.base.nx()) || idx[dn] >= g.ny() || idx[dn + 1] >= g.base.nt() {
                return Err(bad(n, "index out of range"));
            }
            let sp = g.base.flat_index(&idx[..dn], 0) / g.base.nt();
            let v: f64 = cols[dn + 2].trim().parse().map_err(|_| bad(n, "bad value"))?;
            f.values[g.index(sp, idx[dn], idx[dn + 1])] = v;
        }
        field.ok_or_else(|| Error::Config("no extension data".into()))
    }
}

/// `int_lo^hi |y|^a dy`.
fn weight_integral(lo: f64, hi: f64, a: f64) -> f64 {
    let prim = |y: f64| y.abs().powf(1.0 + a) / (1.0 + a) * y.signum();
    prim(hi) - prim(lo)
}

/// `int_lo^hi |y|^{-a} dy` for an interval not containing 0 in its interior.
fn resistance(lo: f64, hi: f64, a: f64) -> f64 {
    weight_integral(lo, hi, -a)
}

/// How the weight enters the flux between neighbouring y nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterfaceRule {
    /// `1 / int |y|^{-a} dy` over the interval, exact for `y`-only profiles
    /// with constant flux such as `c + d |y|^{1-a}`.
    #[default]
    Harmonic,
    /// `|y_mid|^a / (y_{j+1} - y_j)`.
    Midpoint,
}

/// Finite-volume coefficients of `div(|y|^a grad u)` on the y nodes.
///
/// Node `j` owns the dual cell between neighbouring midpoints (clipped to the
/// grid ends); `cell_mass[j]` is the exact weight integral over it and
/// `flux[j]` couples nodes `j` and `j+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedStencil {
    pub cell_mass: Vec<f64>,
    pub flux: Vec<f64>,
    /// `cell_mass / hx^2`, the coefficient of each second difference in `x`.
    pub spatial: Vec<f64>,
}

impl WeightedStencil {
    pub fn new(grid: &ExtensionGrid, a: f64) -> Self {
        Self::with_rule(grid, a, InterfaceRule::default())
    }

    pub fn with_rule(grid: &ExtensionGrid, a: f64, rule: InterfaceRule) -> Self {
        let y = &grid.y_nodes;
        let ny = y.len();
        let mid: Vec<f64> = y.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let cell_mass: Vec<f64> = (0..ny)
            .map(|j| {
                let lo = if j == 0 { y[0] } else { mid[j - 1] };
                let hi = if j == ny - 1 { y[ny - 1] } else { mid[j] };
                weight_integral(lo, hi, a)
            })
            .collect();
        let flux = y
            .windows(2)
            .zip(&mid)
            .map(|(w, m)| match rule {
                InterfaceRule::Harmonic => 1.0 / resistance(w[0], w[1], a),
                InterfaceRule::Midpoint => m.abs().powf(a) / (w[1] - w[0]),
            })
            .collect();
        let h2 = grid.base.hx().powi(2);
        let spatial = cell_mass.iter().map(|m| m / h2).collect();
        WeightedStencil { cell_mass, flux, spatial }
    }
}

/// `u(., y_j, .) = Gamma_{y_j} * f` for every positive height, `f` at `y = 0`.
pub fn poisson_extend(f: &Field, p: FracParams, grid: &ExtensionGrid) -> Result<ExtensionField> {
    if f.grid() != grid.base() {
        return Err(Error::shape("field and extension grid disagree"));
    }
    let kernel = ExtensionKernel::new(p, grid.base.n());
    let mut out = ExtensionField::zeros(grid.clone());
    for (j, &y) in grid.y_nodes.iter().enumerate() {
        let slice = if y == 0.0 { f.clone() } else { kernel.convolve(f, y.abs())? };
        out.set_slice(j, &slice)?;
    }
    Ok(out)
}

/// Closure of the truncated domain at `y = y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopClosure {
    /// Values of [`poisson_extend`] at the top row.
    Dirichlet,
    /// No flux through the top.
    Neumann,
}

/// Implicit time integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScheme {
    /// First order; the only scheme with a discrete comparison principle.
    #[default]
    BackwardEuler,
    /// Second order, not damping stiff modes near `y = 0`.
    CrankNicolson,
    /// Second order and L-stable; the first step is backward Euler.
    Bdf2,
}

/// How boundary data is evaluated between base time samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataInterpolation {
    /// Piecewise linear; preserves pointwise ordering of the data.
    #[default]
    Linear,
    /// Trigonometric interpolation, exact for band-limited data.
    Trigonometric,
}

/// Time stepping controls for [`solve_extension_pde_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    pub scheme: TimeScheme,
    /// Steps per base time interval.
    pub substeps: usize,
    pub data: DataInterpolation,
    pub min_periods: usize,
    pub max_periods: usize,
    /// Relative sup change between consecutive periods that ends the run.
    pub periodicity_tol: f64,
    pub cg_tol: f64,
    pub top: TopClosure,
    /// Start from `poisson_extend(f)` at `t = 0` instead of `f(x, 0)` copied upward.
    pub warm_start: bool,
    pub interface: InterfaceRule,
    pub spatial: SpatialOperator,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions {
            scheme: TimeScheme::BackwardEuler,
            substeps: 4,
            data: DataInterpolation::Linear,
            min_periods: 3,
            max_periods: 60,
            periodicity_tol: 1e-8,
            cg_tol: 1e-10,
            top: TopClosure::Dirichlet,
            warm_start: true,
            interface: InterfaceRule::Harmonic,
            spatial: SpatialOperator::SecondDifference,
        }
    }
}

impl PdeOptions {
    /// Second order in time and spectral in `x`. Gives up the discrete
    /// comparison principle of the default scheme.
    pub fn accurate() -> Self {
        PdeOptions {
            scheme: TimeScheme::Bdf2,
            data: DataInterpolation::Trigonometric,
            spatial: SpatialOperator::Spectral,
            cg_tol: 1e-13,
            ..Default::default()
        }
    }
}

/// Spatial neighbours (minus, plus) along every axis, periodic.
fn spatial_neighbours(base: &SpaceTimeGrid) -> Vec<Vec<(usize, usize)>> {
    let nx = base.nx();
    let n = base.n();
    let len = nx.pow(n as u32);
    (0..len)
        .map(|sp| {
            (0..n)
                .map(|axis| {
                    let stride = nx.pow((n - 1 - axis) as u32);
                    let i = (sp / stride) % nx;
                    let minus = sp - i * stride + ((i + nx - 1) % nx) * stride;
                    let plus = sp - i * stride + ((i + 1) % nx) * stride;
                    (minus, plus)
                })
                .collect()
        })
        .collect()
}

/// Discretization of the spatial Laplacian in the extension solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpatialOperator {
    /// Periodic second differences; keeps the system an M-matrix.
    #[default]
    SecondDifference,
    /// Fourier multiplier `|xi|^2`, exact on the lattice modes.
    Spectral,
}

/// `-Laplacian` in `x` acting on every y row of the column-major state.
enum XLaplacian {
    Stencil(Vec<Vec<(usize, usize)>>),
    Fourier {
        /// `hx^2 |xi|^2` per spatial bin, matching the `m_j / hx^2` coefficient.
        eig: Vec<f64>,
        nx: usize,
        n: usize,
        forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
        inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
    },
}

impl XLaplacian {
    fn new(base: &SpaceTimeGrid, kind: SpatialOperator) -> Self {
        match kind {
            SpatialOperator::SecondDifference => XLaplacian::Stencil(spatial_neighbours(base)),
            SpatialOperator::Spectral => {
                let (nx, n) = (base.nx(), base.n());
                let nsp = nx.pow(n as u32);
                let w = 2.0 * std::f64::consts::PI / base.length();
                let eig = (0..nsp)
                    .map(|sp| {
                        let mut acc = 0.0;
                        let mut rest = sp;
                        for _ in 0..n {
                            let k = crate::grid::signed_bin(rest % nx, nx) as f64;
                            rest /= nx;
                            acc += (w * k).powi(2);
                        }
                        acc * base.hx().powi(2)
                    })
                    .collect();
                let mut planner = rustfft::FftPlanner::new();
                XLaplacian::Fourier {
                    eig,
                    nx,
                    n,
                    forward: planner.plan_fft_forward(nx),
                    inverse: planner.plan_fft_inverse(nx),
                }
            }
        }
    }

    /// Adds `spatial[j] * (-Laplacian_h u)` to `out`.
    fn add_to(&self, st: &WeightedStencil, ny: usize, u: &[f64], out: &mut [f64]) {
        match self {
            XLaplacian::Stencil(nbrs) => {
                for (sp, nb) in nbrs.iter().enumerate() {
                    for j in 0..ny {
                        let k = sp * ny + j;
                        let mut lap = 0.0;
                        for &(m, p) in nb {
                            lap += 2.0 * u[k] - u[m * ny + j] - u[p * ny + j];
                        }
                        out[k] += st.spatial[j] * lap;
                    }
                }
            }
            XLaplacian::Fourier { eig, nx, n, forward, inverse } => {
                let nsp = eig.len();
                let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                let mut lane = vec![Complex64::new(0.0, 0.0); *nx];
                // spatial axis `axis` has stride nx^(n-1-axis) * ny in the state
                let mut transform = |buf: &mut [Complex64], fft: &dyn rustfft::Fft<f64>| {
                    for axis in 0..*n {
                        let stride = nx.pow((*n - 1 - axis) as u32) * ny;
                        let block = stride * nx;
                        for base in 0..buf.len() {
                            if (base % block) >= stride {
                                continue;
                            }
                            for (i, slot) in lane.iter_mut().enumerate() {
                                *slot = buf[base + i * stride];
                            }
                            fft.process(&mut lane);
                            for (i, v) in lane.iter().enumerate() {
                                buf[base + i * stride] = *v;
                            }
                        }
                    }
                };
                transform(&mut buf, forward.as_ref());
                for sp in 0..nsp {
                    for j in 0..ny {
                        buf[sp * ny + j] *= eig[sp] / nsp as f64;
                    }
                }
                transform(&mut buf, inverse.as_ref());
                for sp in 0..nsp {
                    for j in 0..ny {
                        out[sp * ny + j] += st.spatial[j] * buf[sp * ny + j].re;
                    }
                }
            }
        }
    }
}

/// `A u` for the full column-major state `u[sp * ny + j]`, where
/// `A = -div(y^a grad)` in finite-volume form.
fn apply_operator(st: &WeightedStencil, lap: &XLaplacian, ny: usize, u: &[f64], out: &mut [f64]) {
    for k in 0..u.len() {
        let j = k % ny;
        let c = u[k];
        let mut acc = 0.0;
        if j > 0 {
            acc += st.flux[j - 1] * (c - u[k - 1]);
        }
        if j + 1 < ny {
            acc += st.flux[j] * (c - u[k + 1]);
        }
        out[k] = acc;
    }
    lap.add_to(st, ny, u, out);
}

/// Solves `y^a u_t = div(y^a grad u)` on the truncated slab with `u = f` at
/// `y = 0`, periodic in `x` and `t`, using default [`PdeOptions`].
pub fn solve_extension_pde(f: &Field, p: FracParams, grid: &ExtensionGrid) -> Result<ExtensionField> {
    solve_extension_pde_with(f, p, grid, &PdeOptions::default())
}

/// Result of the transient run behind [`solve_extension_pde_with`].
#[derive(Debug, Clone)]
pub struct PdeRun {
    pub field: ExtensionField,
    pub periods: usize,
    pub periodicity: f64,
    pub max_cg_iterations: usize,
}

pub fn solve_extension_pde_with(
    f: &Field,
    p: FracParams,
    grid: &ExtensionGrid,
    opts: &PdeOptions,
) -> Result<ExtensionField> {
    Ok(run_extension_pde(f, p, grid, opts)?.field)
}

pub fn run_extension_pde(
    f: &Field,
    p: FracParams,
    grid: &ExtensionGrid,
    opts: &PdeOptions,
) -> Result<PdeRun> {
    if grid.mirrored {
        return Err(Error::domain("the PDE is posed on the half-space grid"));
    }
    if f.grid() != grid.base() {
        return Err(Error::shape("field and extension grid disagree"));
    }
    if opts.substeps == 0 || opts.max_periods < opts.min_periods {
        return Err(Error::domain(format!("invalid PDE options {opts:?}")));
    }
    if f.max_imag() > 0.0 {
        return Err(Error::domain("boundary data must be real"));
    }
    let base = grid.base;
    let (nt, ny) = (base.nt(), grid.ny());
    let nsp = grid.spatial_len();
    let st = WeightedStencil::with_rule(grid, p.a(), opts.interface);
    let xlap = XLaplacian::new(&base, opts.spatial);
    let dirichlet_top = opts.top == TopClosure::Dirichlet;
    let top_row = ny - 1;

    let need_extension = dirichlet_top || opts.warm_start;
    let reference = if need_extension { Some(poisson_extend(f, p, grid)?) } else { None };
    let bottom: Vec<Vec<f64>> = (0..nt).map(|it| (0..nsp).map(|sp| f.values()[sp * nt + it].re).collect()).collect();
    let top: Vec<Vec<f64>> = match (&reference, dirichlet_top) {
        (Some(r), true) => (0..nt).map(|it| (0..nsp).map(|sp| r.get(sp, top_row, it)).collect()).collect(),
        _ => vec![vec![0.0; nsp]; nt],
    };
    let free = |j: usize| j > 0 && (j < top_row || !dirichlet_top);

    // state in column-major layout u[sp * ny + j]
    let mut u = vec![0.0; nsp * ny];
    for sp in 0..nsp {
        for j in 0..ny {
            u[sp * ny + j] = match &reference {
                Some(r) if opts.warm_start => r.get(sp, j, 0),
                _ => bottom[0][sp],
            };
        }
    }

    let dt = base.ht() / opts.substeps as f64;
    let theta = if opts.scheme == TimeScheme::CrankNicolson { 0.5 } else { 1.0 };
    let free_idx: Vec<usize> = (0..nsp * ny).filter(|k| free(k % ny)).collect();
    let mut pos = vec![usize::MAX; nsp * ny];
    for (i, &k) in free_idx.iter().enumerate() {
        pos[k] = i;
    }
    let mass: Vec<f64> = free_idx.iter().map(|&k| st.cell_mass[k % ny]).collect();
    let x_diag = match &xlap {
        XLaplacian::Stencil(_) => 2.0 * base.n() as f64,
        XLaplacian::Fourier { eig, .. } => eig.iter().sum::<f64>() / eig.len() as f64,
    };
    // system matrix (lead M / dt + theta A); lead is 3/2 for BDF2 after its first step
    let diag_for = |lead: f64| -> Vec<f64> {
        free_idx
            .iter()
            .map(|&k| {
                let j = k % ny;
                let mut a = x_diag * st.spatial[j];
                if j > 0 {
                    a += st.flux[j - 1];
                }
                if j + 1 < ny {
                    a += st.flux[j];
                }
                lead * st.cell_mass[j] / dt + theta * a
            })
            .collect()
    };
    let matvec_for = |lead: f64| {
        let (free_idx, mass, st, xlap) = (&free_idx, &mass, &st, &xlap);
        move |x: &[f64], y: &mut [f64]| {
            let mut full = vec![0.0; nsp * ny];
            for (i, &k) in free_idx.iter().enumerate() {
                full[k] = x[i];
            }
            let mut au = vec![0.0; nsp * ny];
            apply_operator(st, xlap, ny, &full, &mut au);
            for (i, &k) in free_idx.iter().enumerate() {
                y[i] = lead * mass[i] / dt * x[i] + theta * au[k];
            }
        }
    };
    let bdf = opts.scheme == TimeScheme::Bdf2;
    let (diag_one, diag_bdf) = (diag_for(1.0), diag_for(1.5));
    let (matvec_one, matvec_bdf) = (matvec_for(1.0), matvec_for(1.5));
    let mut u_prev: Option<Vec<f64>> = None;

    // boundary rows sampled at every substep time, indexed [step * substeps + sub][sp]
    let sub_n = opts.substeps;
    let fine_rows = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; nsp]; nt * sub_n];
        for sp in 0..nsp {
            let series: Vec<f64> = rows.iter().map(|r| r[sp]).collect();
            let fine = match opts.data {
                DataInterpolation::Trigonometric => crate::spectral::upsample_periodic(&series, sub_n),
                DataInterpolation::Linear => (0..nt * sub_n)
                    .map(|i| {
                        let (k, w) = (i / sub_n, (i % sub_n) as f64 / sub_n as f64);
                        (1.0 - w) * series[k] + w * series[(k + 1) % nt]
                    })
                    .collect(),
            };
            for (i, v) in fine.into_iter().enumerate() {
                out[i][sp] = v;
            }
        }
        out
    };
    let bottom_fine = fine_rows(&bottom);
    let top_fine = if dirichlet_top { fine_rows(&top) } else { Vec::new() };
    let boundary_at = |step: usize, sub: usize, out: &mut Vec<f64>| {
        let i = (step * sub_n + sub) % (nt * sub_n);
        for sp in 0..nsp {
            out[sp * ny] = bottom_fine[i][sp];
            if dirichlet_top {
                out[sp * ny + top_row] = top_fine[i][sp];
            }
        }
    };

    let mut record = vec![0.0; grid.len()];
    let mut previous: Option<Vec<f64>> = None;
    let mut x: Vec<f64> = free_idx.iter().map(|&k| u[k]).collect();
    let mut au_old = vec![0.0; nsp * ny];
    let mut bvec = vec![0.0; nsp * ny];
    let mut rhs = vec![0.0; free_idx.len()];
    let mut ab = vec![0.0; nsp * ny];
    let mut max_iter_seen = 0;
    let mut periodicity = f64::INFINITY;
    for period in 1..=opts.max_periods {
        for step in 0..nt {
            // record the state at the base time t_step
            for sp in 0..nsp {
                for j in 0..ny {
                    record[grid.index(sp, j, step)] = u[sp * ny + j];
                }
            }
            for sub in 1..=opts.substeps {
                apply_operator(&st, &xlap, ny, &u, &mut au_old);
                bvec.iter_mut().for_each(|v| *v = 0.0);
                boundary_at(step, sub, &mut bvec);
                apply_operator(&st, &xlap, ny, &bvec, &mut ab);
                let use_bdf = bdf && u_prev.is_some();
                for (i, &k) in free_idx.iter().enumerate() {
                    rhs[i] = match (&u_prev, use_bdf) {
                        (Some(old), true) => mass[i] / dt * (2.0 * u[k] - 0.5 * old[k]) - ab[k],
                        _ => mass[i] / dt * u[k] - (1.0 - theta) * au_old[k] - theta * ab[k],
                    };
                }
                let stats = if use_bdf {
                    conjugate_gradient(&matvec_bdf, &diag_bdf, &rhs, &mut x, opts.cg_tol, 20_000)?
                } else {
                    conjugate_gradient(&matvec_one, &diag_one, &rhs, &mut x, opts.cg_tol, 20_000)?
                };
                max_iter_seen = max_iter_seen.max(stats.iterations);
                if bdf {
                    u_prev = Some(u.clone());
                }
                for k in 0..nsp * ny {
                    u[k] = if pos[k] == usize::MAX { bvec[k] } else { x[pos[k]] };
                }
            }
        }
        if let Some(prev) = &previous {
            let scale = record.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            periodicity = record.iter().zip(prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
            if period >= opts.min_periods && periodicity < opts.periodicity_tol {
                return Ok(PdeRun {
                    field: ExtensionField { grid: grid.clone(), values: record },
                    periods: period,
                    periodicity,
                    max_cg_iterations: max_iter_seen,
                });
            }
        }
        previous = Some(record.clone());
    }
    Err(Error::Convergence {
        what: format!("time periodicity after {} periods (change {periodicity:e})", opts.max_periods),
        coarse: previous.map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).unwrap_or(0.0),
        fine: record.iter().map(|x| x * x).sum::<f64>().sqrt(),
    })
}

/// Calibrated `-C (u(., y, .) - u(., 0, .)) / y^{2s}` extrapolated to `y = 0`.
///
/// Uses the smallest positive heights below `y_max / 4`, at most five and at
/// least three. `C` is the constant fitted by [`fracop::calibrate_neumann`].
pub fn neumann_trace(u: &ExtensionField, p: FracParams) -> Result<Field> {
    let g = &u.grid;
    let row0 = g.trace_row();
    let rows: Vec<usize> = (row0 + 1..g.ny()).filter(|&j| g.y_nodes[j] < 0.25 * g.y_max()).take(5).collect();
    if rows.len() < 3 {
        return Err(Error::domain("neumann trace needs three positive heights below y_max/4"));
    }
    let f = u.slice(row0);
    let mut heights: Vec<f64> = rows.iter().map(|&j| g.y_nodes[j]).collect();
    let mut quotients: Vec<Field> = rows
        .iter()
        .map(|&j| {
            let y = g.y_nodes[j];
            Ok(f.sub(&u.slice(j))?.scale(y.powf(-p.trace_power())))
        })
        .collect::<Result<_>>()?;
    heights.reverse();
    quotients.reverse();
    let raw = fracop::extrapolate_to_zero(&heights, &quotients, p.s(), 5e-2)?;
    let c = fracop::calibrate_neumann(p, g.base, &fracop::default_probes(&g.base))?;
    Ok(raw.scale(c))
}

/// Calibrated trace from the discrete flux balance of the bottom half cell:
/// `lim y^a u_y = F_{1/2} - m_0 (u_t - Laplacian u)(., 0, .)`, with the
/// boundary term evaluated spectrally. Equals `-2s` times the limit of the
/// difference quotient used by [`neumann_trace`].
///
/// Suited to fields from [`solve_extension_pde`], where difference quotients
/// at small heights amplify the discretization error.
pub fn flux_trace(u: &ExtensionField, p: FracParams, interface: InterfaceRule) -> Result<Field> {
    let g = &u.grid;
    if g.mirrored {
        return Err(Error::domain("flux trace expects a half-space field"));
    }
    let st = WeightedStencil::with_rule(g, p.a(), interface);
    let f = u.slice(0);
    let heat = fracop::apply_heat_power(&f, 1.0)?;
    let flux = u.slice(1).sub(&f)?.scale(st.flux[0]).axpy(-st.cell_mass[0], &heat)?;
    let c = fracop::calibrate_neumann(p, g.base, &fracop::default_probes(&g.base))?;
    Ok(flux.scale(-c / (2.0 * p.s())))
}

/// `u(x, -y, t) = u(x, y, t)` on the mirrored grid. Already mirrored fields are
/// returned unchanged.
pub fn even_reflect(u: &ExtensionField) -> ExtensionField {
    if u.grid.mirrored {
        return u.clone();
    }
    let grid = u.grid.mirror();
    let (ny_half, nt) = (u.grid.ny(), u.grid.base.nt());
    let j0 = ny_half - 1;
    let mut out = ExtensionField::zeros(grid.clone());
    for sp in 0..u.grid.spatial_len() {
        for j in 0..ny_half {
            for it in 0..nt {
                let v = u.get(sp, j, it);
                out.values[grid.index(sp, j0 + j, it)] = v;
                out.values[grid.index(sp, j0 - j, it)] = v;
            }
        }
    }
    out
}

/// Smooth test function: a product of `exp(-1/(1-r^2))` profiles in each
/// spatial coordinate, in `y` and in `t` (periodic distance in `x` and `t`).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TestBump {
    pub center: Vec<f64>,
    pub y: f64,
    pub t: f64,
    pub radius_x: f64,
    pub radius_y: f64,
    pub radius_t: f64,
}

fn profile(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

fn periodic_offset(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

impl TestBump {
    pub fn eval(&self, base: &SpaceTimeGrid, x: &[f64], y: f64, t: f64) -> f64 {
        let mut v = profile((y - self.y) / self.radius_y)
            * profile(periodic_offset(t - self.t, base.period()) / self.radius_t);
        for (xi, ci) in x.iter().zip(&self.center) {
            v *= profile(periodic_offset(xi - ci, base.length()) / self.radius_x);
        }
        v
    }

    fn validate(&self, grid: &ExtensionGrid) -> Result<()> {
        let b = &grid.base;
        let y_lo = grid.y_nodes[0];
        if self.center.len() != b.n()
            || !(self.radius_x > 0.0 && self.radius_y > 0.0 && self.radius_t > 0.0)
            || 2.0 * self.radius_x >= b.length()
            || 2.0 * self.radius_t >= b.period()
        {
            return Err(Error::domain(format!("malformed test bump {self:?}")));
        }
        if self.y - self.radius_y < y_lo || self.y + self.radius_y > grid.y_max() {
            return Err(Error::domain(format!(
                "test bump y-support [{}, {}] leaves [{y_lo}, {}]",
                self.y - self.radius_y,
                self.y + self.radius_y,
                grid.y_max()
            )));
        }
        Ok(())
    }
}

/// Discrete weak form
///
/// `sum_n dt sum_cells [ -|y|^a u^n (theta^{n+1} - theta^n)/dt + |y|^a grad u^n . grad theta^n ]`
///
/// with exact weight integrals over dual cells in `y`, interface gradients in
/// `y` and forward differences in `x`. The time sum runs over the whole
/// period, so it telescopes for `u` constant. Returns the absolute value.
pub fn weak_residual(u: &ExtensionField, theta: &TestBump, p: FracParams) -> Result<f64> {
    let g = &u.grid;
    theta.validate(g)?;
    let b = g.base;
    let (nt, ny, nsp) = (b.nt(), g.ny(), g.spatial_len());
    let st = WeightedStencil::new(g, p.a());
    let nbrs = spatial_neighbours(&b);
    let cell = b.hx().powi(b.n() as i32);
    let mut th = vec![0.0; g.len()];
    for sp in 0..nsp {
        let (x, _) = b.coords(sp * nt);
        for (j, &y) in g.y_nodes.iter().enumerate() {
            for it in 0..nt {
                th[g.index(sp, j, it)] = theta.eval(&b, &x, y, it as f64 * b.ht());
            }
        }
    }
    let mut time_term = 0.0;
    let mut grad_term = 0.0;
    for sp in 0..nsp {
        for j in 0..ny {
            for it in 0..nt {
                let k = g.index(sp, j, it);
                let uk = u.values[k];
                let next = g.index(sp, j, (it + 1) % nt);
                time_term -= st.cell_mass[j] * uk * (th[next] - th[k]);
                if j + 1 < ny {
                    let up = g.index(sp, j + 1, it);
                    grad_term += st.flux[j] * (u.values[up] - uk) * (th[up] - th[k]);
                }
                for &(_, plus) in &nbrs[sp] {
                    let kp = g.index(plus, j, it);
                    grad_term += st.spatial[j] * (u.values[kp] - uk) * (th[kp] - th[k]);
                }
            }
        }
    }
    Ok(((time_term + b.ht() * grad_term) * cell).abs())
}
