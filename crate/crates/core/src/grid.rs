//! Periodic space-time lattices and the complex fields sampled on them.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic lattice on the torus `[0, L)^n x [0, T)`.
///
/// Samples sit at `x_i = i L / Nx` and `t_k = k T / Nt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    n: usize,
    length: f64,
    nx: usize,
    period: f64,
    nt: usize,
}

impl SpaceTimeGrid {
    pub fn new(n: usize, length: f64, nx: usize, period: f64, nt: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::domain(format!("spatial dimension {n} not in {{1, 2}}")));
        }
        for (name, count) in [("Nx", nx), ("Nt", nt)] {
            if count < 4 || count % 2 != 0 {
                return Err(Error::domain(format!("{name} = {count} must be even and >= 4")));
            }
        }
        if !(length > 0.0 && length.is_finite() && period > 0.0 && period.is_finite()) {
            return Err(Error::domain("spatial and temporal periods must be positive"));
        }
        Ok(SpaceTimeGrid { n, length, nx, period, nt })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn hx(&self) -> f64 {
        self.length / self.nx as f64
    }
    pub fn ht(&self) -> f64 {
        self.period / self.nt as f64
    }

    /// Axis lengths, spatial axes first, time last.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.nx; self.n];
        s.push(self.nt);
        s
    }

    pub fn len(&self) -> usize {
        self.nx.pow(self.n as u32) * self.nt
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same torus, twice the samples per axis.
    pub fn refined(&self) -> Self {
        SpaceTimeGrid { nx: 2 * self.nx, nt: 2 * self.nt, ..*self }
    }

    pub fn flat_index(&self, spatial: &[usize], it: usize) -> usize {
        let mut idx = 0;
        for &i in spatial {
            idx = idx * self.nx + i;
        }
        idx * self.nt + it
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn unflatten(&self, mut idx: usize) -> (Vec<usize>, usize) {
        let it = idx % self.nt;
        idx /= self.nt;
        let mut spatial = vec![0; self.n];
        for slot in spatial.iter_mut().rev() {
            *slot = idx % self.nx;
            idx /= self.nx;
        }
        (spatial, it)
    }

    pub fn coords(&self, idx: usize) -> (Vec<f64>, f64) {
        let (sp, it) = self.unflatten(idx);
        let hx = self.hx();
        (sp.iter().map(|&i| i as f64 * hx).collect(), it as f64 * self.ht())
    }

    /// Spatial angular frequencies per axis and the temporal angular
    /// frequency `omega` of the FFT bin `idx`, for modes `exp(i(xi.x + omega t))`.
    pub fn frequencies(&self, idx: usize) -> (Vec<f64>, f64) {
        let (sp, it) = self.unflatten(idx);
        let xi = sp
            .iter()
            .map(|&k| 2.0 * PI * signed_bin(k, self.nx) as f64 / self.length)
            .collect();
        (xi, 2.0 * PI * signed_bin(it, self.nt) as f64 / self.period)
    }

    fn check_same(&self, other: &SpaceTimeGrid) -> Result<()> {
        if self != other {
            return Err(Error::shape(format!("grid {self:?} differs from {other:?}")));
        }
        Ok(())
    }
}

/// Signed frequency of FFT bin `k` out of `n`; the Nyquist bin maps to `+n/2`.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Complex samples on a [`SpaceTimeGrid`]. `real` marks data that must
/// stay real (imaginary parts are checked, not silently dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: SpaceTimeGrid,
    values: Vec<Complex64>,
    real: bool,
}

impl Field {
    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        Field { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()], real: true }
    }

    pub fn from_values(grid: SpaceTimeGrid, values: Vec<Complex64>, real: bool) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::shape(format!(
                "{} samples for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field { grid, values, real })
    }

    /// Samples a real function of `(x, t)`.
    pub fn from_fn(grid: SpaceTimeGrid, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x, t) = grid.coords(i);
                Complex64::new(f(&x, t), 0.0)
            })
            .collect();
        Field { grid, values, real: true }
    }

    pub fn from_complex_fn(grid: SpaceTimeGrid, f: impl Fn(&[f64], f64) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x, t) = grid.coords(i);
                f(&x, t)
            })
            .collect();
        Field { grid, values, real: false }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn get(&self, spatial: &[usize], it: usize) -> Complex64 {
        self.values[self.grid.flat_index(spatial, it)]
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            real: self.real,
        }
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| v * c)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b * c).collect(),
            real: self.real && other.real,
        })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    /// Space-time mean of the samples.
    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    /// Drops imaginary parts after asserting they are below `tol`.
    pub(crate) fn into_real_checked(mut self, tol: f64) -> Field {
        let im = self.max_imag();
        assert!(
            im <= tol * self.sup_norm().max(1.0),
            "real field acquired imaginary part {im:e}"
        );
        for v in &mut self.values {
            v.im = 0.0;
        }
        self.real = true;
        self
    }

    /// CSV with header `# grid n Nx Nt L T` and rows `ix[,iy],it,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        writeln!(
            w,
            "# grid {} {} {} {:.16e} {:.16e}",
            g.n, g.nx, g.nt, g.length, g.period
        )?;
        let mut line = String::new();
        for (i, v) in self.values.iter().enumerate() {
            line.clear();
            let (sp, it) = g.unflatten(i);
            for ix in sp {
                write!(line, "{ix},").unwrap();
            }
            writeln!(line, "{it},{:.16e},{:.16e}", v.re, v.im).unwrap();
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Parses the format written by [`write_csv`](Self::write_csv). Other
    /// `#` lines before the grid header are ignored. Rows may come in any order.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Field> {
        let mut grid = None;
        let mut values = Vec::new();
        let mut seen = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Config(format!("line {}: {what}", lineno + 1));
            if let Some(rest) = line.strip_prefix("# grid") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 5 {
                    return Err(bad("grid header needs n Nx Nt L T"));
                }
                let parse_u = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
                let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
                let g = SpaceTimeGrid::new(
                    parse_u(parts[0])?,
                    parse_f(parts[3])?,
                    parse_u(parts[1])?,
                    parse_f(parts[4])?,
                    parse_u(parts[2])?,
                )?;
                values = vec![Complex64::new(0.0, 0.0); g.len()];
                seen = vec![false; g.len()];
                grid = Some(g);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let g = grid.as_ref().ok_or_else(|| bad("data before grid header"))?;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != g.n + 3 {
                return Err(bad("wrong column count"));
            }
            let mut sp = Vec::with_capacity(g.n);
            for c in &cols[..g.n] {
                let i: usize = c.trim().parse().map_err(|_| bad("bad index"))?;
                if i >= g.nx {
                    return Err(bad("spatial index out of range"));
                }
                sp.push(i);
            }
            let it: usize = cols[g.n].trim().parse().map_err(|_| bad("bad index"))?;
            if it >= g.nt {
                return Err(bad("time index out of range"));
            }
            let re: f64 = cols[g.n + 1].trim().parse().map_err(|_| bad("bad value"))?;
            let im: f64 = cols[g.n + 2].trim().parse().map_err(|_| bad("bad value"))?;
            let idx = g.flat_index(&sp, it);
            values[idx] = Complex64::new(re, im);
            seen[idx] = true;
        }
        let grid = grid.ok_or_else(|| Error::Config("missing `# grid` header".into()))?;
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("sample {missing} missing from CSV")));
        }
        let real = values.iter().all(|v| v.im == 0.0);
        Field::from_values(grid, values, real)
    }
}

/// Relative sup and L2 discrepancies of `f` against the reference `g`.
pub fn norms(f: &Field, g: &Field) -> Result<(f64, f64)> {
    f.grid.check_same(&g.grid)?;
    let floor = 1e-300;
    let diff = f.sub(g)?;
    Ok((
        diff.sup_norm() / g.sup_norm().max(floor),
        diff.l2_norm() / g.l2_norm().max(floor),
    ))
}

/// Parabolic cylinder `C_r(x,t) = B(x,r) x (t - r^2, t + r^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Vec<f64>,
    pub time: f64,
    pub radius: f64,
}

impl Cylinder {
    pub fn new(center: Vec<f64>, time: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::domain("cylinder radius must be positive"));
        }
        Ok(Cylinder { center, time, radius })
    }

    pub fn half_time(&self) -> f64 {
        self.radius * self.radius
    }

    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        let d2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 < self.radius * self.radius && (t - self.time).abs() < self.half_time()
    }

    /// Same test with distances measured on the torus of `grid`.
    pub fn contains_periodic(&self, grid: &SpaceTimeGrid, x: &[f64], t: f64) -> bool {
        let wrap = |d: f64, p: f64| d - p * (d / p).round();
        let d2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| wrap(a - b, grid.length).powi(2))
            .sum();
        d2 < self.radius * self.radius
            && wrap(t - self.time, grid.period).abs() < self.half_time()
    }
}

/// `f_r(x, t) = f(r x, r^2 t)`, evaluating the trigonometric interpolant of `f`.
///
/// Exact for band-limited fields whenever the rescaled modes stay below Nyquist
/// and `r` is an integer (so the result is periodic again).
pub fn parabolic_rescale(f: &Field, r: f64) -> Result<Field> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("rescale factor r = {r} must be positive")));
    }
    let grid = *f.grid();
    let shape = grid.shape();
    let mut data = f.values().to_vec();
    for (axis, &len) in shape.iter().enumerate() {
        let (period, factor) = if axis < grid.n() {
            (grid.length(), r)
        } else {
            (grid.period(), r * r)
        };
        let h = period / len as f64;
        let targets: Vec<f64> = (0..len).map(|i| factor * i as f64 * h).collect();
        crate::spectral::interpolate_axis(&mut data, &shape, axis, period, &targets);
    }
    let out = Field::from_values(grid, data, f.is_real())?;
    Ok(if f.is_real() { out.into_real_checked(1e-10) } else { out })
}
