//! Boundary Harnack experiments for `lambda u_t - div(A grad u) = 0` with
//! `lambda = |y|^a`, in two-dimensional cylinders whose left wall is the
//! Lipschitz graph `x = x_lo + phi(y)`.
//!
//! Solutions are computed with P1 finite elements (exact weight integrals per
//! triangle, lumped mass) and backward Euler. The flattening
//! `rho(xi, y) = (xi + phi(y), y)` maps the rectangle onto the domain and turns
//! `A = lambda I` into `A_hat = lambda [[1 + phi'^2, -phi'], [-phi', 1]]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::conjugate_gradient;
use crate::params::FracParams;

/// Piecewise-linear wall offset `phi(y)` through the given knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallProfile {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl WallProfile {
    pub fn new(y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if y.len() != x.len() || y.len() < 2 || y.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("wall knots need increasing y and matching x"));
        }
        Ok(WallProfile { y, x })
    }

    pub fn eval(&self, y: f64) -> f64 {
        let n = self.y.len();
        let k = match self.y.iter().position(|&k| k > y) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        };
        let w = (y - self.y[k]) / (self.y[k + 1] - self.y[k]);
        self.x[k] + w * (self.x[k + 1] - self.x[k])
    }

    /// Slope on the piece containing `(lo + hi)/2`.
    pub fn slope_between(&self, lo: f64, hi: f64) -> f64 {
        let m = 0.5 * (lo + hi);
        let k = self.y.iter().position(|&k| k > m).map_or(self.y.len() - 2, |k| k.max(1) - 1);
        (self.x[k + 1] - self.x[k]) / (self.y[k + 1] - self.y[k])
    }

    pub fn lipschitz(&self) -> f64 {
        self.y
            .windows(2)
            .zip(self.x.windows(2))
            .map(|(y, x)| ((x[1] - x[0]) / (y[1] - y[0])).abs())
            .fold(0.0, f64::max)
    }
}

/// Shape of the left wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WallSpec {
    Flat,
    /// `phi(y) = slope (y - slab_lo)`.
    Linear { slope: f64 },
    /// `phi(y) = slope |y - vertex|`.
    Wedge { slope: f64, vertex: f64 },
    Knots { y: Vec<f64>, x: Vec<f64> },
}

impl WallSpec {
    fn profile(&self, slab: (f64, f64)) -> Result<WallProfile> {
        match self {
            WallSpec::Flat => WallProfile::new(vec![slab.0, slab.1], vec![0.0, 0.0]),
            WallSpec::Linear { slope } => {
                WallProfile::new(vec![slab.0, slab.1], vec![0.0, slope * (slab.1 - slab.0)])
            }
            WallSpec::Wedge { slope, vertex } => {
                if !(*vertex > slab.0 && *vertex < slab.1) {
                    return Err(Error::domain("wedge vertex must lie inside the slab"));
                }
                WallProfile::new(
                    vec![slab.0, *vertex, slab.1],
                    vec![slope * (vertex - slab.0), 0.0, slope * (slab.1 - vertex)],
                )
            }
            WallSpec::Knots { y, x } => WallProfile::new(y.clone(), x.clone()),
        }
    }
}

/// Where a boundary node sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryClass {
    /// The Lipschitz graph under test.
    LeftWall,
    RightWall,
    /// `y = y_lo` and `y = y_hi`.
    SlabFace,
}

/// Geometry and mesh resolution of a cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub wall: WallSpec,
    /// Extent in the flattened coordinate `xi = x - phi(y)`.
    pub x_range: (f64, f64),
    pub slab: (f64, f64),
    #[serde(default = "default_r0")]
    pub r0: f64,
    pub horizon: f64,
    pub nx: usize,
    pub ny: usize,
}

fn default_r0() -> f64 {
    0.5
}

/// A mapped structured mesh: node `(i, j)` sits at
/// `(x_lo + i hx + phi(y_j), y_lo + j hy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzCylinder {
    pub spec: DomainSpec,
    pub phi: WallProfile,
    pub lipschitz: f64,
}

/// Validates the domain description and measures the Lipschitz constant on the wall nodes.
pub fn build_domain(spec: &DomainSpec) -> Result<LipschitzCylinder> {
    let (lo, hi) = spec.slab;
    if !(lo < hi) {
        return Err(Error::domain(format!("degenerate slab ({lo}, {hi})")));
    }
    if !(spec.x_range.0 < spec.x_range.1) || !(spec.horizon > 0.0) || spec.nx < 2 || spec.ny < 2 {
        return Err(Error::domain("cylinder needs positive extents and at least 2x2 cells"));
    }
    let phi = spec.wall.profile(spec.slab)?;
    if phi.y[0] > lo || *phi.y.last().unwrap() < hi {
        return Err(Error::domain("wall knots must cover the slab"));
    }
    let dom = LipschitzCylinder { spec: spec.clone(), lipschitz: phi.lipschitz(), phi };
    if !dom.lipschitz.is_finite() {
        return Err(Error::domain("wall is not Lipschitz"));
    }
    Ok(dom)
}

impl LipschitzCylinder {
    pub fn hx(&self) -> f64 {
        (self.spec.x_range.1 - self.spec.x_range.0) / self.spec.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.spec.slab.1 - self.spec.slab.0) / self.spec.ny as f64
    }

    pub fn node_count(&self) -> usize {
        (self.spec.nx + 1) * (self.spec.ny + 1)
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.spec.nx + 1) + i
    }

    /// Flattened coordinates of node `(i, j)`.
    pub fn flat_coords(&self, i: usize, j: usize) -> [f64; 2] {
        [self.spec.x_range.0 + i as f64 * self.hx(), self.spec.slab.0 + j as f64 * self.hy()]
    }

    pub fn physical_coords(&self, i: usize, j: usize) -> [f64; 2] {
        let [xi, y] = self.flat_coords(i, j);
        [xi + self.phi.eval(y), y]
    }

    pub fn boundary_class(&self, i: usize, j: usize) -> Option<BoundaryClass> {
        if i == 0 {
            Some(BoundaryClass::LeftWall)
        } else if i == self.spec.nx {
            Some(BoundaryClass::RightWall)
        } else if j == 0 || j == self.spec.ny {
            Some(BoundaryClass::SlabFace)
        } else {
            None
        }
    }

    /// `|phi(y_j) - phi(y_k)| <= M |y_j - y_k|` over all pairs of wall nodes.
    pub fn check_lipschitz(&self, m: f64) -> bool {
        let ys: Vec<f64> = (0..=self.spec.ny).map(|j| self.flat_coords(0, j)[1]).collect();
        ys.iter().all(|&a| {
            ys.iter().all(|&b| (self.phi.eval(a) - self.phi.eval(b)).abs() <= m * (a - b).abs() * (1.0 + 1e-12) + 1e-15)
        })
    }

    /// Point on the left wall at height `y`.
    pub fn left_wall_point(&self, y: f64) -> [f64; 2] {
        [self.spec.x_range.0 + self.phi.eval(y), y]
    }

    /// Boundary polygon through all boundary nodes, counter-clockwise.
    pub fn boundary_polygon(&self) -> Vec<[f64; 2]> {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut pts = Vec::new();
        for i in 0..nx {
            pts.push(self.physical_coords(i, 0));
        }
        for j in 0..ny {
            pts.push(self.physical_coords(nx, j));
        }
        for i in (1..=nx).rev() {
            pts.push(self.physical_coords(i, ny));
        }
        for j in (1..=ny).rev() {
            pts.push(self.physical_coords(0, j));
        }
        pts
    }

    /// Exact distance from `p` to the boundary polygon.
    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        let poly = self.boundary_polygon();
        (0..poly.len())
            .map(|k| segment_distance(p, poly[k], poly[(k + 1) % poly.len()]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `p` lies strictly inside the physical domain.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (lo, hi) = self.spec.slab;
        if !(p[1] > lo && p[1] < hi) {
            return false;
        }
        let xi = p[0] - self.phi.eval(p[1]);
        xi > self.spec.x_range.0 && xi < self.spec.x_range.1
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

/// Interior reference point at scale `r` next to a left-wall point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorkscrewPoint {
    pub boundary_point: [f64; 2],
    pub r: f64,
    pub point: [f64; 2],
    /// Guaranteed ratio `dist(point, boundary) / r`, `1/(2 sqrt(1 + M^2))`.
    pub kappa: f64,
}

impl CorkscrewPoint {
    /// `A_r = x_hat + (r/2) e_x`. Requires the rest of the boundary to be at
    /// least `r` away from `x_hat`, which is checked.
    pub fn new(domain: &LipschitzCylinder, wall_height: f64, r: f64) -> Result<Self> {
        let x_hat = domain.left_wall_point(wall_height);
        let point = [x_hat[0] + 0.5 * r, x_hat[1]];
        let kappa = 0.5 / (1.0 + domain.lipschitz.powi(2)).sqrt();
        let cp = CorkscrewPoint { boundary_point: x_hat, r, point, kappa };
        let (d_bdry, d_hat) = cp.distances(domain);
        if !(d_bdry >= kappa * r * (1.0 - 1e-12) && d_hat >= kappa * r * (1.0 - 1e-12) && d_hat < r) {
            return Err(Error::domain(format!(
                "no corkscrew point at scale {r}: boundary distance {d_bdry}, needs {}",
                kappa * r
            )));
        }
        Ok(cp)
    }

    /// `(dist(A_r, boundary), dist(A_r, x_hat))`.
    pub fn distances(&self, domain: &LipschitzCylinder) -> (f64, f64) {
        let d_hat = ((self.point[0] - self.boundary_point[0]).powi(2) + (self.point[1] - self.boundary_point[1]).powi(2)).sqrt();
        (domain.distance_to_boundary(self.point), d_hat)
    }
}

/// The change of variables `rho(xi, y) = (xi + phi(y), y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenMap {
    pub phi: WallProfile,
}

impl FlattenMap {
    pub fn forward(&self, xi: f64, y: f64, t: f64) -> (f64, f64, f64) {
        (xi + self.phi.eval(y), y, t)
    }

    pub fn inverse(&self, x: f64, y: f64, t: f64) -> (f64, f64, f64) {
        (x - self.phi.eval(y), y, t)
    }

    /// `D rho` for wall slope `p`.
    pub fn jacobian(p: f64) -> [[f64; 2]; 2] {
        [[1.0, p], [0.0, 1.0]]
    }

    /// `A_hat / lambda = D rho^{-1} D rho^{-T} |det D rho|` for slope `p`.
    pub fn coefficient(p: f64) -> [[f64; 2]; 2] {
        [[1.0 + p * p, -p], [-p, 1.0]]
    }

    /// Extreme eigenvalues of [`coefficient`](Self::coefficient).
    pub fn eigenvalues(p: f64) -> (f64, f64) {
        let tr = 2.0 + p * p;
        let disc = (tr * tr - 4.0).max(0.0).sqrt();
        (0.5 * (tr - disc), 0.5 * (tr + disc))
    }

    /// Smallest `beta_hat` with `beta_hat^{-1} |xi|^2 <= xi.A_hat xi / lambda <= beta_hat |xi|^2`.
    pub fn beta_hat(m: f64) -> f64 {
        let (lo, hi) = Self::eigenvalues(m);
        hi.max(1.0 / lo)
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
struct Csr {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        Csr { indptr, indices, data }
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.indptr.len() - 1 {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.indptr.len() - 1)
            .map(|r| {
                (self.indptr[r]..self.indptr[r + 1])
                    .find(|&k| self.indices[k] == r)
                    .map_or(0.0, |k| self.data[k])
            })
            .collect()
    }

    fn max_positive_offdiagonal(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for r in 0..self.indptr.len() - 1 {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.indices[k] != r {
                    worst = worst.max(self.data[k]);
                }
            }
        }
        worst
    }
}

/// `int_T |y|^a dA` for a triangle, exact.
pub fn weight_integral_triangle(v: [[f64; 2]; 3], a: f64) -> f64 {
    let mut pts = v;
    pts.sort_by(|p, q| p[1].total_cmp(&q[1]));
    let [p0, p1, p2] = pts;
    // horizontal width at the middle vertex
    let x_on_long = if p2[1] == p0[1] {
        p0[0]
    } else {
        p0[0] + (p2[0] - p0[0]) * (p1[1] - p0[1]) / (p2[1] - p0[1])
    };
    let w1 = (p1[0] - x_on_long).abs();
    let prim0 = |y: f64| y.signum() * y.abs().powf(a + 1.0) / (a + 1.0);
    let prim1 = |y: f64| y.abs().powf(a + 2.0) / (a + 2.0);
    let mut total = 0.0;
    if p1[1] > p0[1] {
        // w1 (y - y0)/(y1 - y0) on [y0, y1]
        let int = (prim1(p1[1]) - prim1(p0[1])) - p0[1] * (prim0(p1[1]) - prim0(p0[1]));
        total += w1 * int / (p1[1] - p0[1]);
    }
    if p2[1] > p1[1] {
        let int = p2[1] * (prim0(p2[1]) - prim0(p1[1])) - (prim1(p2[1]) - prim1(p1[1]));
        total += w1 * int / (p2[1] - p1[1]);
    }
    total
}

/// P1 stiffness and lumped mass for `lambda = |y|^a` and a constant matrix
/// `B` per triangle (`A = lambda B`).
#[derive(Debug, Clone)]
pub struct P1System {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub fixed: Vec<bool>,
    stiffness: Csr,
    pub mass: Vec<f64>,
}

impl P1System {
    fn assemble(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        coeffs: &[[[f64; 2]; 2]],
        weight_nodes: &[[f64; 2]],
        fixed: Vec<bool>,
        a: f64,
    ) -> Self {
        let n = nodes.len();
        let mut trip = Vec::with_capacity(9 * triangles.len());
        let mut mass = vec![0.0; n];
        for (t, b) in triangles.iter().zip(coeffs) {
            let p: Vec<[f64; 2]> = t.iter().map(|&k| nodes[k]).collect();
            let lam = weight_integral_triangle([weight_nodes[t[0]], weight_nodes[t[1]], weight_nodes[t[2]]], a);
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let area = 0.5 * det.abs();
            // gradients of barycentric coordinates
            let grads: Vec<[f64; 2]> = (0..3)
                .map(|k| {
                    let (q1, q2) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                    [(q1[1] - q2[1]) / det, (q2[0] - q1[0]) / det]
                })
                .collect();
            // lambda integral is over the weight-space triangle, area-normalized
            let wt_area = {
                let w: Vec<[f64; 2]> = t.iter().map(|&k| weight_nodes[k]).collect();
                0.5 * ((w[1][0] - w[0][0]) * (w[2][1] - w[0][1]) - (w[2][0] - w[0][0]) * (w[1][1] - w[0][1])).abs()
            };
            let lam_phys = lam * area / wt_area;
            for i in 0..3 {
                mass[t[i]] += lam_phys / 3.0;
                for j in 0..3 {
                    let bg = [
                        b[0][0] * grads[j][0] + b[0][1] * grads[j][1],
                        b[1][0] * grads[j][0] + b[1][1] * grads[j][1],
                    ];
                    trip.push((t[i], t[j], lam_phys * (grads[i][0] * bg[0] + grads[i][1] * bg[1])));
                }
            }
        }
        let stiffness = Csr::from_triplets(n, trip);
        P1System { nodes, triangles, fixed, stiffness, mass }
    }

    /// Largest positive off-diagonal stiffness entry (non-positive for an M-matrix).
    pub fn max_offdiagonal(&self) -> f64 {
        self.stiffness.max_positive_offdiagonal()
    }

    /// `K u` over all nodes.
    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.stiffness.matvec(u, &mut out);
        out
    }

    /// Backward Euler for `M u_t + K u = 0` with `u = lateral(node, t)` on fixed nodes.
    pub fn solve_parabolic(
        &self,
        initial: &[f64],
        lateral: &dyn Fn(usize, f64) -> f64,
        horizon: f64,
        steps: usize,
        cg_tol: f64,
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.nodes.len();
        if initial.len() != n || steps == 0 {
            return Err(Error::shape("initial data does not match the mesh"));
        }
        let dt = horizon / steps as f64;
        let free: Vec<usize> = (0..n).filter(|&k| !self.fixed[k]).collect();
        let mut pos = vec![usize::MAX; n];
        for (i, &k) in free.iter().enumerate() {
            pos[k] = i;
        }
        let kdiag = self.stiffness.diagonal();
        let diag: Vec<f64> = free.iter().map(|&k| self.mass[k] / dt + kdiag[k]).collect();
        let matvec = |x: &[f64], y: &mut [f64]| {
            let mut full = vec![0.0; n];
            for (i, &k) in free.iter().enumerate() {
                full[k] = x[i];
            }
            let mut kx = vec![0.0; n];
            self.stiffness.matvec(&full, &mut kx);
            for (i, &k) in free.iter().enumerate() {
                y[i] = self.mass[k] / dt * x[i] + kx[k];
            }
        };
        let mut u = initial.to_vec();
        for k in 0..n {
            if self.fixed[k] {
                u[k] = lateral(k, 0.0);
            }
        }
        let mut levels = vec![u.clone()];
        let mut x: Vec<f64> = free.iter().map(|&k| u[k]).collect();
        for step in 1..=steps {
            let t = step as f64 * dt;
            let mut bnd = vec![0.0; n];
            for k in 0..n {
                if self.fixed[k] {
                    bnd[k] = lateral(k, t);
                }
            }
            let kb = self.apply_stiffness(&bnd);
            let rhs: Vec<f64> = free.iter().map(|&k| self.mass[k] / dt * u[k] - kb[k]).collect();
            conjugate_gradient(&matvec, &diag, &rhs, &mut x, cg_tol, 50_000)?;
            for k in 0..n {
                u[k] = if pos[k] == usize::MAX { bnd[k] } else { x[pos[k]] };
            }
            levels.push(u.clone());
        }
        Ok(levels)
    }

    /// Solves `K psi = rhs` on free nodes with `psi = boundary` on fixed ones.
    pub fn solve_elliptic(&self, rhs: &[f64], boundary: &[f64], cg_tol: f64) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        let free: Vec<usize> = (0..n).filter(|&k| !self.fixed[k]).collect();
        let kdiag = self.stiffness.diagonal();
        let diag: Vec<f64> = free.iter().map(|&k| kdiag[k]).collect();
        let mut bnd = vec![0.0; n];
        for k in 0..n {
            if self.fixed[k] {
                bnd[k] = boundary[k];
            }
        }
        let kb = self.apply_stiffness(&bnd);
        let b: Vec<f64> = free.iter().map(|&k| rhs[k] - kb[k]).collect();
        let matvec = |x: &[f64], y: &mut [f64]| {
            let mut full = vec![0.0; n];
            for (i, &k) in free.iter().enumerate() {
                full[k] = x[i];
            }
            let mut kx = vec![0.0; n];
            self.stiffness.matvec(&full, &mut kx);
            for (i, &k) in free.iter().enumerate() {
                y[i] = kx[k];
            }
        };
        let mut x = vec![0.0; free.len()];
        conjugate_gradient(matvec, &diag, &b, &mut x, cg_tol, 50_000)?;
        let mut out = bnd;
        for (i, &k) in free.iter().enumerate() {
            out[k] = x[i];
        }
        Ok(out)
    }
}

/// Splits each structured cell along the diagonal that keeps every element
/// matrix free of positive off-diagonal couplings, when one exists.
fn structured_triangles(
    nx: usize,
    ny: usize,
    node: impl Fn(usize, usize) -> usize,
    coords: &dyn Fn(usize, usize) -> [f64; 2],
    coeff: &dyn Fn(usize) -> [[f64; 2]; 2],
) -> (Vec<[usize; 3]>, Vec<[[f64; 2]; 2]>) {
    let mut tris = Vec::with_capacity(2 * nx * ny);
    let mut coeffs = Vec::with_capacity(2 * nx * ny);
    let worst = |t: [[f64; 2]; 3], b: [[f64; 2]; 2]| -> f64 {
        let det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
        let g: Vec<[f64; 2]> = (0..3)
            .map(|k| {
                let (q1, q2) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                [(q1[1] - q2[1]) / det, (q2[0] - q1[0]) / det]
            })
            .collect();
        let mut w = f64::NEG_INFINITY;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let bg = [b[0][0] * g[j][0] + b[0][1] * g[j][1], b[1][0] * g[j][0] + b[1][1] * g[j][1]];
                    w = w.max(g[i][0] * bg[0] + g[i][1] * bg[1]);
                }
            }
        }
        w
    };
    for j in 0..ny {
        let b = coeff(j);
        for i in 0..nx {
            let (a, bb, c, d) = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1));
            let split1 = [[a, bb, c], [a, c, d]];
            let split2 = [[a, bb, d], [bb, c, d]];
            let score = |s: &[[(usize, usize); 3]; 2]| {
                s.iter()
                    .map(|t| worst([coords(t[0].0, t[0].1), coords(t[1].0, t[1].1), coords(t[2].0, t[2].1)], b))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let chosen = if score(&split1) <= score(&split2) + 1e-14 { split1 } else { split2 };
            for t in chosen {
                tris.push([node(t[0].0, t[0].1), node(t[1].0, t[1].1), node(t[2].0, t[2].1)]);
                coeffs.push(b);
            }
        }
    }
    (tris, coeffs)
}

/// Initial and lateral data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSpec {
    Zero,
    Constant { value: f64 },
    /// `amplitude exp(-1/(1 - |X - center|^2 / radius^2))`, zero outside.
    Bump { center: [f64; 2], radius: f64, amplitude: f64 },
    /// `amplitude * dist_to_left_wall(X)` clipped to `[0, cap]`, a profile
    /// vanishing linearly on the wall.
    WallDistance { amplitude: f64, cap: f64 },
    Sum { terms: Vec<DataSpec> },
}

impl DataSpec {
    pub fn eval(&self, domain: &LipschitzCylinder, p: [f64; 2]) -> f64 {
        match self {
            DataSpec::Zero => 0.0,
            DataSpec::Constant { value } => *value,
            DataSpec::Bump { center, radius, amplitude } => {
                let r2 = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (radius * radius);
                if r2 < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
            DataSpec::WallDistance { amplitude, cap } => {
                let xi = p[0] - domain.phi.eval(p[1]) - domain.spec.x_range.0;
                (amplitude * xi).clamp(0.0, *cap)
            }
            DataSpec::Sum { terms } => terms.iter().map(|d| d.eval(domain, p)).sum(),
        }
    }
}

/// Data on the parabolic boundary. `lateral` applies on every boundary node
/// for `t > 0` except on the classes in `vanish_on`, where the data is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub initial: DataSpec,
    #[serde(default = "zero_data")]
    pub lateral: DataSpec,
    #[serde(default = "all_classes")]
    pub vanish_on: Vec<BoundaryClass>,
}

fn zero_data() -> DataSpec {
    DataSpec::Zero
}

fn all_classes() -> Vec<BoundaryClass> {
    vec![BoundaryClass::LeftWall, BoundaryClass::RightWall, BoundaryClass::SlabFace]
}

/// Time stepping for [`solve_weighted`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub steps: usize,
    pub cg_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { steps: 200, cg_tol: 1e-12 }
    }
}

/// Nodal values at every time level `t_n = n T / steps`.
#[derive(Debug, Clone)]
pub struct WeightedSolution {
    pub system: P1System,
    /// Flattened coordinates, used for point location.
    pub flat_nodes: Vec<[f64; 2]>,
    pub class: Vec<Option<BoundaryClass>>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// `(nx, ny, x_lo, y_lo, hx, hy)` of the structured flattened mesh, if any.
    structured: Option<(usize, usize, f64, f64, f64, f64)>,
    phi: Option<WallProfile>,
}

impl WeightedSolution {
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.system.nodes
    }

    pub fn final_values(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    /// P1 interpolation at a physical point and a time level.
    pub fn eval(&self, p: [f64; 2], level: usize) -> Option<f64> {
        let (nx, ny, x0, y0, hx, hy) = self.structured?;
        let phi = self.phi.as_ref()?;
        let xi = p[0] - phi.eval(p[1]);
        let (fi, fj) = ((xi - x0) / hx, (p[1] - y0) / hy);
        if fi < -1e-12 || fj < -1e-12 || fi > nx as f64 + 1e-12 || fj > ny as f64 + 1e-12 {
            return None;
        }
        let (i, j) = ((fi.floor() as usize).min(nx - 1), (fj.floor() as usize).min(ny - 1));
        let cell = 2 * (j * nx + i);
        let q = [xi, p[1]];
        for t in &self.system.triangles[cell..cell + 2] {
            let v: Vec<[f64; 2]> = t.iter().map(|&k| self.flat_nodes[k]).collect();
            let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
            let l1 = ((q[0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (q[1] - v[0][1])) / det;
            let l2 = ((v[1][0] - v[0][0]) * (q[1] - v[0][1]) - (q[0] - v[0][0]) * (v[1][1] - v[0][1])) / det;
            let l0 = 1.0 - l1 - l2;
            if l0 >= -1e-9 && l1 >= -1e-9 && l2 >= -1e-9 {
                let u = &self.values[level];
                return Some(l0 * u[t[0]] + l1 * u[t[1]] + l2 * u[t[2]]);
            }
        }
        None
    }

    /// Time level closest to `t`.
    pub fn level_at(&self, t: f64) -> usize {
        let dt = self.times[1] - self.times[0];
        ((t / dt).round() as usize).min(self.times.len() - 1)
    }
}

fn nodal_data(domain: &LipschitzCylinder, data: &BoundaryData) -> Result<(Vec<f64>, Vec<f64>, Vec<Option<BoundaryClass>>)> {
    let (nx, ny) = (domain.spec.nx, domain.spec.ny);
    let mut init = vec![0.0; domain.node_count()];
    let mut lat = vec![0.0; domain.node_count()];
    let mut class = vec![None; domain.node_count()];
    for j in 0..=ny {
        for i in 0..=nx {
            let k = domain.node(i, j);
            let p = domain.physical_coords(i, j);
            class[k] = domain.boundary_class(i, j);
            init[k] = data.initial.eval(domain, p);
            if let Some(c) = class[k] {
                lat[k] = if data.vanish_on.contains(&c) { 0.0 } else { data.lateral.eval(domain, p) };
            }
        }
    }
    if init.iter().chain(&lat).any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::domain("boundary data must be finite and non-negative"));
    }
    Ok((init, lat, class))
}

fn mapped_system(domain: &LipschitzCylinder, p: FracParams, flattened: bool) -> (P1System, Vec<[f64; 2]>) {
    let (nx, ny) = (domain.spec.nx, domain.spec.ny);
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let flat: Vec<[f64; 2]> = (0..=ny).flat_map(|j| (0..=nx).map(move |i| (i, j))).map(|(i, j)| domain.flat_coords(i, j)).collect();
    let phys: Vec<[f64; 2]> = (0..=ny).flat_map(|j| (0..=nx).map(move |i| (i, j))).map(|(i, j)| domain.physical_coords(i, j)).collect();
    let hy = domain.hy();
    let y_lo = domain.spec.slab.0;
    let slope = |j: usize| domain.phi.slope_between(y_lo + j as f64 * hy, y_lo + (j + 1) as f64 * hy);
    let fixed: Vec<bool> = (0..=ny).flat_map(|j| (0..=nx).map(move |i| (i, j))).map(|(i, j)| domain.boundary_class(i, j).is_some()).collect();
    let (tris, coeffs) = if flattened {
        structured_triangles(nx, ny, node, &|i, j| domain.flat_coords(i, j), &|j| FlattenMap::coefficient(slope(j)))
    } else {
        structured_triangles(nx, ny, node, &|i, j| domain.physical_coords(i, j), &|_| [[1.0, 0.0], [0.0, 1.0]])
    };
    let mesh_nodes = if flattened { flat.clone() } else { phys.clone() };
    // the weight depends on y only, identical in both coordinate systems
    (P1System::assemble(mesh_nodes, tris, &coeffs, &flat, fixed, p.a()), flat)
}

/// Solves `lambda u_t = div(lambda grad u)` on the mapped mesh of `domain`.
pub fn solve_weighted(
    domain: &LipschitzCylinder,
    p: FracParams,
    data: &BoundaryData,
    opts: &SolveOptions,
) -> Result<WeightedSolution> {
    let (init, lat, class) = nodal_data(domain, data)?;
    solve_mapped(domain, p, &init, &lat, opts, false, class)
}

/// Solves the same problem with nodal data given directly (boundary entries
/// of `lateral` are used for `t > 0`).
pub fn solve_weighted_nodal(
    domain: &LipschitzCylinder,
    p: FracParams,
    initial: &[f64],
    lateral: &[f64],
    opts: &SolveOptions,
) -> Result<WeightedSolution> {
    let class = (0..=domain.spec.ny)
        .flat_map(|j| (0..=domain.spec.nx).map(move |i| (i, j)))
        .map(|(i, j)| domain.boundary_class(i, j))
        .collect();
    solve_mapped(domain, p, initial, lateral, opts, false, class)
}

fn solve_mapped(
    domain: &LipschitzCylinder,
    p: FracParams,
    initial: &[f64],
    lateral: &[f64],
    opts: &SolveOptions,
    flattened: bool,
    class: Vec<Option<BoundaryClass>>,
) -> Result<WeightedSolution> {
    let (system, flat) = mapped_system(domain, p, flattened);
    let levels = system.solve_parabolic(initial, &|k, _| lateral[k], domain.spec.horizon, opts.steps, opts.cg_tol)?;
    let times = (0..=opts.steps).map(|n| n as f64 * domain.spec.horizon / opts.steps as f64).collect();
    let structured = Some((domain.spec.nx, domain.spec.ny, domain.spec.x_range.0, domain.spec.slab.0, domain.hx(), domain.hy()));
    Ok(WeightedSolution { system, flat_nodes: flat, class, times, values: levels, structured, phi: Some(domain.phi.clone()) })
}

/// The problem in flattened coordinates, ready to solve.
#[derive(Debug, Clone)]
pub struct FlatProblem {
    pub domain: LipschitzCylinder,
    pub params: FracParams,
}

impl FlatProblem {
    /// Solves with coefficient `A_hat` on the rectangle; node values are
    /// indexed like the mapped mesh, so the pull-back is the identity on nodes.
    pub fn solve(&self, data: &BoundaryData, opts: &SolveOptions) -> Result<WeightedSolution> {
        let (init, lat, class) = nodal_data(&self.domain, data)?;
        let mut sol = solve_mapped(&self.domain, self.params, &init, &lat, opts, true, class)?;
        // report physical node positions
        let phys: Vec<[f64; 2]> = (0..=self.domain.spec.ny)
            .flat_map(|j| (0..=self.domain.spec.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.domain.physical_coords(i, j))
            .collect();
        sol.system.nodes = phys;
        Ok(sol)
    }
}

/// The flattening map and the transformed problem.
pub fn flatten(domain: &LipschitzCylinder, p: FracParams) -> (FlattenMap, FlatProblem) {
    (FlattenMap { phi: domain.phi.clone() }, FlatProblem { domain: domain.clone(), params: p })
}

/// Independent solve on a Cartesian grid of spacing `h` covering the domain;
/// nodes not strictly inside are held at zero. Returns node coordinates and
/// the values at the final time.
pub fn solve_cartesian(
    domain: &LipschitzCylinder,
    p: FracParams,
    initial: &DataSpec,
    h: f64,
    opts: &SolveOptions,
) -> Result<(Vec<[f64; 2]>, Vec<bool>, Vec<f64>)> {
    let (ylo, yhi) = domain.spec.slab;
    let phis: Vec<f64> = domain.phi.x.clone();
    let (pmin, pmax) = phis.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    let (xlo, xhi) = (domain.spec.x_range.0 + pmin, domain.spec.x_range.1 + pmax);
    let nx = ((xhi - xlo) / h).ceil() as usize;
    let ny = ((yhi - ylo) / h).round() as usize;
    let hy = (yhi - ylo) / ny as f64;
    let coords = |i: usize, j: usize| [xlo + i as f64 * h, ylo + j as f64 * hy];
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let nodes: Vec<[f64; 2]> = (0..=ny).flat_map(|j| (0..=nx).map(move |i| (i, j))).map(|(i, j)| coords(i, j)).collect();
    let inside: Vec<bool> = nodes.iter().map(|&q| domain.contains(q)).collect();
    let fixed: Vec<bool> = inside.iter().map(|b| !b).collect();
    let (tris, coeffs) = structured_triangles(nx, ny, node, &coords, &|_| [[1.0, 0.0], [0.0, 1.0]]);
    let system = P1System::assemble(nodes.clone(), tris, &coeffs, &nodes, fixed, p.a());
    let init: Vec<f64> = nodes.iter().zip(&inside).map(|(&q, &ins)| if ins { initial.eval(domain, q) } else { 0.0 }).collect();
    let levels = system.solve_parabolic(&init, &|_, _| 0.0, domain.spec.horizon, opts.steps, opts.cg_tol)?;
    Ok((nodes, inside, levels.last().unwrap().clone()))
}

/// Spatial part of the barrier and the time it is anchored at.
#[derive(Debug, Clone)]
pub struct Barrier {
    pub psi: Vec<f64>,
    pub t0: f64,
    pub vertex: usize,
}

impl Barrier {
    /// `psi(X) + (t0 - t)` at node `k`.
    pub fn eval(&self, k: usize, t: f64) -> f64 {
        self.psi[k] + (self.t0 - t)
    }
}

/// Barrier at the boundary node nearest `x0`: `K psi = M 1` (the discrete
/// form of `div(lambda grad psi) = -lambda`) with `psi = |X - X0|` on the
/// boundary, so that `psi(X) + (t0 - t)` solves the backward Euler scheme.
pub fn build_barrier(domain: &LipschitzCylinder, p: FracParams, x0: [f64; 2], t0: f64) -> Result<Barrier> {
    let (system, _) = mapped_system(domain, p, false);
    let vertex = (0..system.nodes.len())
        .filter(|&k| system.fixed[k])
        .min_by(|&a, &b| {
            let da = (system.nodes[a][0] - x0[0]).hypot(system.nodes[a][1] - x0[1]);
            let db = (system.nodes[b][0] - x0[0]).hypot(system.nodes[b][1] - x0[1]);
            da.total_cmp(&db)
        })
        .unwrap();
    let snap = (system.nodes[vertex][0] - x0[0]).hypot(system.nodes[vertex][1] - x0[1]);
    if snap > 1e-9 * (1.0 + x0[0].abs() + x0[1].abs()) {
        return Err(Error::domain(format!("barrier point is {snap:e} away from the nearest boundary node")));
    }
    let v = system.nodes[vertex];
    let boundary: Vec<f64> = system.nodes.iter().map(|q| (q[0] - v[0]).hypot(q[1] - v[1])).collect();
    let psi = system.solve_elliptic(&system.mass, &boundary, 1e-13)?;
    Ok(Barrier { psi, t0, vertex })
}

/// Outcome of the Hölder fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HolderFit {
    /// The quotient is constant to within the noise floor at every scale.
    Exact,
    /// `osc_k ~ c r_k^slope`; `alpha = min(slope, 1)`.
    Fitted { alpha: f64, slope: f64, c: f64, r2: f64 },
    /// Fewer than three usable scales, or R^2 below 0.9, or slope <= 0.
    Unreliable { slope: f64, r2: f64, scales: usize },
}

/// Oscillation of `u/v` over shrinking cylinders at a boundary point.
#[derive(Debug, Clone, Serialize)]
pub struct QuotientProfile {
    pub boundary_point: [f64; 2],
    pub t0: f64,
    pub radii: Vec<f64>,
    pub osc: Vec<f64>,
    pub fit: HolderFit,
    /// `u(A_r, t0) / v(A_r, t0)`.
    pub corkscrew_ratio: f64,
    /// `min` and `max` of `(u/v) / corkscrew_ratio` over `Q_{r/4}`.
    pub normalized_range: (f64, f64),
}

/// Controls for [`quotient_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotientOptions {
    /// Nodes within this many cells of the boundary with `v < mask |v|_inf` are skipped.
    pub mask: f64,
    pub near_boundary_cells: usize,
    /// Scales with `osc <= noise * max|u/v|` are excluded from the fit.
    pub noise: f64,
    /// Waiting time: `t0 >= delta^2` is required.
    pub delta: f64,
}

impl QuotientOptions {
    /// `delta = sqrt(T)/4`, noise ten times a `1e-12` solver tolerance.
    pub fn for_horizon(horizon: f64) -> Self {
        QuotientOptions { mask: 1e-10, near_boundary_cells: 2, noise: 1e-11, delta: 0.25 * horizon.sqrt() }
    }
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Oscillation of `u/v` over `Q_{r_k}(X0, t0) = {|x - x0| < r_k, |y - y0| < r_k, |t - t0| < r_k^2}`
/// restricted to `t >= delta^2`, for `r_k = r 2^{-k}`, `k = 0..=depth`, with `X0` on the left wall at height `wall_height`.
pub fn quotient_profile(
    domain: &LipschitzCylinder,
    u: &WeightedSolution,
    v: &WeightedSolution,
    wall_height: f64,
    t0: f64,
    r: f64,
    depth: usize,
    opts: &QuotientOptions,
) -> Result<QuotientProfile> {
    if u.values.len() != v.values.len() || u.nodes() != v.nodes() {
        return Err(Error::shape("quotient of solutions on different meshes"));
    }
    if t0 < opts.delta * opts.delta {
        return Err(Error::domain(format!("t0 = {t0} precedes the waiting time delta^2 = {}", opts.delta * opts.delta)));
    }
    let x0 = domain.left_wall_point(wall_height);
    let nodes = u.nodes();
    let vmax = v.values.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let (nx, ny) = (domain.spec.nx, domain.spec.ny);
    let near = opts.near_boundary_cells;
    let near_boundary = |k: usize| {
        let (i, j) = (k % (nx + 1), k / (nx + 1));
        i <= near || j <= near || i + near >= nx || j + near >= ny
    };
    let cylinder_quotients = |rad: f64| -> Result<Vec<f64>> {
        let mut q = Vec::new();
        for (level, &t) in u.times.iter().enumerate() {
            if (t - t0).abs() >= rad * rad || t < opts.delta * opts.delta {
                continue;
            }
            for (k, p) in nodes.iter().enumerate() {
                if u.class[k].is_some() || (p[0] - x0[0]).abs() >= rad || (p[1] - x0[1]).abs() >= rad {
                    continue;
                }
                let (uk, vk) = (u.values[level][k], v.values[level][k]);
                if vk < opts.mask * vmax {
                    if near_boundary(k) {
                        continue;
                    }
                    return Err(Error::DegenerateQuotient(format!("v = {vk:e} at interior node {p:?}, t = {t}")));
                }
                q.push(uk / vk);
            }
        }
        Ok(q)
    };
    let mut radii = Vec::new();
    let mut osc = Vec::new();
    let mut qmax = 0.0f64;
    for k in 0..=depth {
        let rk = r * 0.5f64.powi(k as i32);
        let q = cylinder_quotients(rk)?;
        if q.is_empty() {
            return Err(Error::domain(format!("no mesh nodes inside Q_r at scale {rk}")));
        }
        let (lo, hi) = q.iter().fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
        qmax = qmax.max(hi.abs()).max(lo.abs());
        radii.push(rk);
        osc.push(hi - lo);
    }
    let floor = opts.noise * qmax;
    let usable: Vec<usize> = (0..osc.len()).filter(|&k| osc[k] > floor).collect();
    let fit = if usable.is_empty() {
        HolderFit::Exact
    } else {
        let xs: Vec<f64> = usable.iter().map(|&k| radii[k].ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|&k| osc[k].ln()).collect();
        if xs.len() < 3 {
            HolderFit::Unreliable { slope: f64::NAN, r2: f64::NAN, scales: xs.len() }
        } else {
            let (slope, icpt, r2) = least_squares_line(&xs, &ys);
            if r2 >= 0.9 && slope > 0.0 {
                let alpha = slope.min(1.0);
                // c from the fitted line evaluated with the reported exponent
                let c = xs.iter().zip(&ys).map(|(x, y)| y - alpha * x).fold(f64::MIN, f64::max).exp();
                let _ = icpt;
                HolderFit::Fitted { alpha, slope, c, r2 }
            } else {
                HolderFit::Unreliable { slope, r2, scales: xs.len() }
            }
        }
    };
    let cork = CorkscrewPoint::new(domain, wall_height, r)?;
    let level = u.level_at(t0);
    let (ua, va) = (u.eval(cork.point, level), v.eval(cork.point, level));
    let corkscrew_ratio = match (ua, va) {
        (Some(a), Some(b)) if b > 0.0 => a / b,
        _ => return Err(Error::DegenerateQuotient("v vanishes at the corkscrew point".into())),
    };
    let quarter = cylinder_quotients(0.25 * r)?;
    let normalized_range = quarter
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x / corkscrew_ratio), b.max(x / corkscrew_ratio)));
    Ok(QuotientProfile { boundary_point: x0, t0, radii, osc, fit, corkscrew_ratio, normalized_range })
}

/// `sup u` over the box of half-width `r` at `center` for `t in [t1 - r^2, t1]`
/// divided by `inf u` over the same box for `t in [t1 + r^2, t1 + 2 r^2]`.
pub fn interior_harnack_ratio(sol: &WeightedSolution, center: [f64; 2], r: f64, t1: f64) -> Result<f64> {
    let mut sup = f64::MIN;
    let mut inf = f64::MAX;
    for (level, &t) in sol.times.iter().enumerate() {
        let early = t >= t1 - r * r && t <= t1;
        let late = t >= t1 + r * r && t <= t1 + 2.0 * r * r;
        if !early && !late {
            continue;
        }
        for (k, p) in sol.nodes().iter().enumerate() {
            if (p[0] - center[0]).abs() <= r && (p[1] - center[1]).abs() <= r {
                let val = sol.values[level][k];
                if early {
                    sup = sup.max(val);
                }
                if late {
                    inf = inf.min(val);
                }
            }
        }
    }
    if !(inf > 0.0) || sup == f64::MIN {
        return Err(Error::DegenerateQuotient("solution not positive on the later cylinder".into()));
    }
    Ok(sup / inf)
}

/// One boundary Harnack experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackConfig {
    pub s: f64,
    pub domain: DomainSpec,
    pub data: [BoundaryData; 2],
    #[serde(default)]
    pub solve: SolveOptions,
    /// Height of the boundary point on the left wall.
    pub wall_height: f64,
    /// Anchor time; defaults to half the horizon.
    pub t0: Option<f64>,
    /// Waiting time; defaults to `sqrt(T)/4`.
    pub delta: Option<f64>,
    pub r: f64,
    pub depth: usize,
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    pub profile: QuotientProfile,
    pub lipschitz: f64,
    pub corkscrew: CorkscrewPoint,
}

impl HarnackReport {
    /// `k,r_k,osc_k` rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("k,r_k,osc_k\n");
        for (k, (r, o)) in self.profile.radii.iter().zip(&self.profile.osc).enumerate() {
            out.push_str(&format!("{k},{r:.16e},{o:.16e}\n"));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let (alpha, c, r2) = match self.profile.fit {
            HolderFit::Exact => (serde_json::json!("exact"), serde_json::Value::Null, serde_json::Value::Null),
            HolderFit::Fitted { alpha, c, r2, .. } => (alpha.into(), c.into(), r2.into()),
            HolderFit::Unreliable { r2, .. } => (serde_json::Value::Null, serde_json::Value::Null, r2.into()),
        };
        serde_json::json!({
            "alpha": alpha,
            "c": c,
            "r2": r2,
            "fit": self.profile.fit,
            "corkscrew value": self.profile.corkscrew_ratio,
            "corkscrew point": self.corkscrew.point,
            "normalized range": [self.profile.normalized_range.0, self.profile.normalized_range.1],
            "lipschitz": self.lipschitz,
        })
    }
}

pub fn run_experiment(cfg: &HarnackConfig) -> Result<HarnackReport> {
    let p = FracParams::new(cfg.s)?;
    let domain = build_domain(&cfg.domain)?;
    let u = solve_weighted(&domain, p, &cfg.data[0], &cfg.solve)?;
    let v = solve_weighted(&domain, p, &cfg.data[1], &cfg.solve)?;
    let mut opts = QuotientOptions::for_horizon(cfg.domain.horizon);
    if let Some(d) = cfg.delta {
        opts.delta = d;
    }
    opts.noise = 10.0 * cfg.solve.cg_tol;
    let t0 = cfg.t0.unwrap_or(0.5 * cfg.domain.horizon);
    let profile = quotient_profile(&domain, &u, &v, cfg.wall_height, t0, cfg.r, cfg.depth, &opts)?;
    let corkscrew = CorkscrewPoint::new(&domain, cfg.wall_height, cfg.r)?;
    Ok(HarnackReport { profile, lipschitz: domain.lipschitz, corkscrew })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(wall: WallSpec, n: usize) -> DomainSpec {
        DomainSpec { wall, x_range: (0.0, 2.0), slab: (-1.0, 1.0), r0: 0.5, horizon: 0.5, nx: n, ny: n }
    }

    fn bump(center: [f64; 2]) -> BoundaryData {
        BoundaryData {
            initial: DataSpec::Bump { center, radius: 0.7, amplitude: 1.0 },
            lateral: DataSpec::Zero,
            vanish_on: all_classes(),
        }
    }

    #[test]
    fn domain_validation_and_lipschitz() {
        assert!(build_domain(&DomainSpec { slab: (1.0, 1.0), ..spec(WallSpec::Flat, 8) }).is_err());
        let d = build_domain(&spec(WallSpec::Wedge { slope: 1.0, vertex: 0.0 }, 16)).unwrap();
        assert_eq!(d.lipschitz, 1.0);
        assert!(d.check_lipschitz(1.0));
        assert!(!d.check_lipschitz(0.99));
        let flat = build_domain(&spec(WallSpec::Flat, 8)).unwrap();
        assert_eq!(flat.boundary_class(0, 3), Some(BoundaryClass::LeftWall));
        assert_eq!(flat.boundary_class(8, 3), Some(BoundaryClass::RightWall));
        assert_eq!(flat.boundary_class(3, 0), Some(BoundaryClass::SlabFace));
        assert_eq!(flat.boundary_class(3, 3), None);
    }

    #[test]
    fn triangle_weight_integrals() {
        let t = [[0.0, 0.0], [1.0, 0.0], [0.3, 1.0]];
        assert!((weight_integral_triangle(t, 0.0) - 0.5).abs() < 1e-15);
        // int over {0<y<1, 0<x<1-y} of y^a = 1/((a+1)(a+2))
        for a in [-0.6, 0.4] {
            let t = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
            let exact = 1.0 / ((a + 1.0) * (a + 2.0));
            assert!((weight_integral_triangle(t, a) - exact).abs() < 1e-14);
            // straddling y = 0: symmetric triangle has twice the half integral
            let t = [[0.0, -1.0], [0.0, 1.0], [1.0, 0.0]];
            let half = 1.0 / (a + 1.0) - 1.0 / (a + 2.0);
            assert!((weight_integral_triangle(t, a) - 2.0 * half).abs() < 1e-14);
        }
    }

    #[test]
    fn flatten_coefficient_for_unit_slope() {
        let c = FlattenMap::coefficient(1.0);
        assert_eq!(c, [[2.0, -1.0], [-1.0, 1.0]]);
        // D rho^{-1} D rho^{-T} by hand
        let j = FlattenMap::jacobian(1.0);
        let inv = [[1.0, -j[0][1]], [0.0, 1.0]];
        let prod = [
            [inv[0][0] * inv[0][0] + inv[0][1] * inv[0][1], inv[0][0] * inv[1][0] + inv[0][1] * inv[1][1]],
            [inv[1][0] * inv[0][0] + inv[1][1] * inv[0][1], inv[1][0] * inv[1][0] + inv[1][1] * inv[1][1]],
        ];
        assert_eq!(prod, c);
        let (lo, hi) = FlattenMap::eigenvalues(1.0);
        assert!((hi - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((lo * hi - 1.0).abs() < 1e-14);
        for m in [0.0, 0.5, 1.0, 2.0] {
            assert!(FlattenMap::beta_hat(m) <= (1.0 + m) * (1.0 + m) + 1e-14);
        }
        let fm = FlattenMap { phi: build_domain(&spec(WallSpec::Linear { slope: 1.0 }, 4)).unwrap().phi };
        let (x, y, t) = fm.forward(0.3, 0.5, 0.1);
        let (xi, yb, tb) = fm.inverse(x, y, t);
        assert!((xi - 0.3).abs() < 1e-15 && yb == 0.5 && tb == 0.1);
    }

    #[test]
    fn stiffness_is_m_matrix() {
        let p = FracParams::new(0.3).unwrap();
        for wall in [WallSpec::Flat, WallSpec::Linear { slope: 1.0 }, WallSpec::Wedge { slope: 1.0, vertex: 0.0 }] {
            let d = build_domain(&spec(wall, 12)).unwrap();
            for flat in [false, true] {
                let (sys, _) = mapped_system(&d, p, flat);
                assert!(sys.max_offdiagonal() <= 1e-12, "{:?}", sys.max_offdiagonal());
                assert!(sys.mass.iter().all(|m| *m > 0.0));
            }
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let d = build_domain(&spec(WallSpec::Flat, 8)).unwrap();
        let data = BoundaryData { initial: DataSpec::Zero, lateral: DataSpec::Zero, vanish_on: vec![] };
        let sol = solve_weighted(&d, FracParams::new(0.4).unwrap(), &data, &SolveOptions { steps: 10, cg_tol: 1e-12 }).unwrap();
        assert!(sol.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn negative_data_rejected() {
        let d = build_domain(&spec(WallSpec::Flat, 8)).unwrap();
        let data = BoundaryData { initial: DataSpec::Constant { value: -1.0 }, lateral: DataSpec::Zero, vanish_on: vec![] };
        assert!(solve_weighted(&d, FracParams::new(0.4).unwrap(), &data, &SolveOptions::default()).is_err());
    }

    #[test]
    fn flattened_and_mapped_solves_coincide() {
        let p = FracParams::new(0.6).unwrap();
        let d = build_domain(&spec(WallSpec::Wedge { slope: 1.0, vertex: 0.0 }, 16)).unwrap();
        let data = bump([1.2, 0.1]);
        let opts = SolveOptions { steps: 20, cg_tol: 1e-13 };
        let direct = solve_weighted(&d, p, &data, &opts).unwrap();
        let (_, flat) = flatten(&d, p);
        let pulled = flat.solve(&data, &opts).unwrap();
        let diff = direct.final_values().iter().zip(pulled.final_values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = direct.final_values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff <= 1e-9 * scale, "{diff:e}");
    }

    fn flat_vs_cartesian(n: usize) -> f64 {
        let p = FracParams::new(0.5).unwrap();
        let d = build_domain(&spec(WallSpec::Wedge { slope: 1.0, vertex: 0.0 }, n)).unwrap();
        let data = bump([1.5, 0.0]);
        let opts = SolveOptions { steps: 40, cg_tol: 1e-12 };
        let (_, flat) = flatten(&d, p);
        let sol = flat.solve(&data, &opts).unwrap();
        let (nodes, inside, cart) = solve_cartesian(&d, p, &data.initial, 2.0 / n as f64, &opts).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for k in (0..nodes.len()).filter(|&k| inside[k]) {
            let f = sol.eval(nodes[k], opts.steps).unwrap();
            num += (f - cart[k]).powi(2);
            den += f * f;
        }
        (num / den).sqrt()
    }

    #[test]
    fn flattened_solve_matches_cartesian_solve() {
        let (coarse, fine) = (flat_vs_cartesian(48), flat_vs_cartesian(96));
        assert!(coarse <= 5e-2, "{coarse:e}");
        assert!(fine < coarse, "{fine:e} vs {coarse:e}");
    }

    #[test]
    fn nonnegativity_and_max_principle() {
        let p = FracParams::new(0.75).unwrap();
        let d = build_domain(&spec(WallSpec::Linear { slope: 0.7 }, 16)).unwrap();
        let sol = solve_weighted(&d, p, &bump([1.3, 0.0]), &SolveOptions { steps: 30, cg_tol: 1e-13 }).unwrap();
        assert!(sol.values.iter().flatten().all(|v| *v >= -1e-12 && *v <= 1.0 + 1e-12));
    }

    #[test]
    fn corkscrew_distances() {
        for m in [0.0, 0.5, 1.0, 2.0] {
            let d = build_domain(&spec(WallSpec::Wedge { slope: m, vertex: 0.0 }, 32)).unwrap();
            let c = CorkscrewPoint::new(&d, 0.0, 0.25).unwrap();
            let (db, dh) = c.distances(&d);
            assert!(db >= c.kappa * 0.25 * (1.0 - 1e-12) && db <= dh);
            assert!(dh >= c.kappa * 0.25 * (1.0 - 1e-12) && dh < 0.25);
        }
        let d = build_domain(&spec(WallSpec::Flat, 8)).unwrap();
        assert!(CorkscrewPoint::new(&d, 0.95, 0.5).is_err());
    }

    #[test]
    fn barrier_vanishes_only_at_vertex() {
        let p = FracParams::new(0.5).unwrap();
        let d = build_domain(&spec(WallSpec::Wedge { slope: 1.0, vertex: 0.0 }, 16)).unwrap();
        let b = build_barrier(&d, p, d.left_wall_point(0.0), 0.3).unwrap();
        let (sys, _) = mapped_system(&d, p, false);
        assert!(b.psi[b.vertex].abs() < 1e-14);
        for k in 0..sys.nodes.len() {
            if k != b.vertex {
                assert!(b.psi[k] > 0.0);
            }
        }
        assert!((b.eval(b.vertex, 0.3)).abs() < 1e-14);
        assert!(build_barrier(&d, p, [1.0, 0.5], 0.3).is_err());
    }

    #[test]
    fn barrier_solves_the_scheme() {
        let p = FracParams::new(0.3).unwrap();
        let d = build_domain(&spec(WallSpec::Flat, 12)).unwrap();
        let b = build_barrier(&d, p, d.left_wall_point(1.0 / 3.0), 0.5).unwrap();
        let (sys, _) = mapped_system(&d, p, false);
        let init: Vec<f64> = (0..sys.nodes.len()).map(|k| b.eval(k, 0.0)).collect();
        let levels = sys.solve_parabolic(&init, &|k, t| b.eval(k, t), 0.5, 10, 1e-13).unwrap();
        for (n, lv) in levels.iter().enumerate() {
            let t = 0.05 * n as f64;
            let err = lv.iter().enumerate().map(|(k, v)| (v - b.eval(k, t)).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "level {n}: {err:e}");
        }
    }

    #[test]
    fn quotient_sentinels() {
        let p = FracParams::new(0.5).unwrap();
        let d = build_domain(&spec(WallSpec::Flat, 32)).unwrap();
        let opts = SolveOptions { steps: 40, cg_tol: 1e-12 };
        let v = solve_weighted(&d, p, &bump([1.0, 0.0]), &opts).unwrap();
        let mut u2 = v.clone();
        u2.values.iter_mut().flatten().for_each(|x| *x *= 2.0);
        let q = QuotientOptions::for_horizon(0.5);
        let prof = quotient_profile(&d, &v, &v, 0.0, 0.25, 0.5, 2, &q).unwrap();
        assert_eq!(prof.fit, HolderFit::Exact);
        let prof2 = quotient_profile(&d, &u2, &v, 0.0, 0.25, 0.5, 2, &q).unwrap();
        assert_eq!(prof2.fit, HolderFit::Exact);
        assert!((prof2.corkscrew_ratio - 2.0).abs() < 1e-12);
        assert!(quotient_profile(&d, &v, &v, 0.0, 0.001, 0.5, 2, &q).is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = HarnackConfig {
            s: 0.5,
            domain: spec(WallSpec::Flat, 16),
            data: [bump([1.0, 0.0]), bump([1.4, 0.3])],
            solve: SolveOptions::default(),
            wall_height: 0.0,
            t0: None,
            delta: None,
            r: 0.5,
            depth: 3,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: HarnackConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    proptest::proptest! {
        #[test]
        fn flatten_round_trips(
            slope in -2.0f64..2.0,
            xi in -1.0f64..1.0,
            y in -1.0f64..1.0,
            t in 0.0f64..1.0,
        ) {
            let phi = WallProfile::new(vec![-1.0, 0.0, 1.0], vec![slope, 0.0, slope]).unwrap();
            let map = FlattenMap { phi };
            let (x, yy, tt) = map.forward(xi, y, t);
            let (xi2, y2, t2) = map.inverse(x, yy, tt);
            proptest::prop_assert!((xi2 - xi).abs() < 1e-12 && y2 == y && t2 == t);
            let (lo, hi) = FlattenMap::eigenvalues(slope);
            proptest::prop_assert!(lo > 0.0 && lo <= hi);
            proptest::prop_assert!(FlattenMap::beta_hat(slope.abs()) <= (1.0 + slope.abs()).powi(2) + 1e-12);
        }
    }
}
