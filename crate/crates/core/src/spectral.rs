//! FFT plumbing on the periodic lattice: transforms along axes, Fourier
//! multipliers, and trigonometric interpolation.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::grid::{signed_bin, Field, SpaceTimeGrid};

fn lane_bases(shape: &[usize], axis: usize) -> (usize, Vec<usize>) {
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let mut bases = Vec::with_capacity(outer * stride);
    for o in 0..outer {
        for i in 0..stride {
            bases.push(o * len * stride + i);
        }
    }
    (stride, bases)
}

/// In-place multidimensional FFT. The forward transform is scaled by `1/N`
/// so that it returns the amplitudes of `exp(+i k.x)` modes.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    for (axis, &len) in shape.iter().enumerate() {
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let (stride, bases) = lane_bases(shape, axis);
        let mut lane = vec![Complex64::new(0.0, 0.0); len];
        for base in bases {
            for (j, slot) in lane.iter_mut().enumerate() {
                *slot = data[base + j * stride];
            }
            fft.process(&mut lane);
            for (j, v) in lane.iter().enumerate() {
                data[base + j * stride] = *v;
            }
        }
    }
    if !inverse {
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Fourier amplitudes of a field, indexed like the field itself.
pub fn forward(f: &Field) -> Vec<Complex64> {
    let mut data = f.values().to_vec();
    fft_nd(&mut data, &f.grid().shape(), false);
    data
}

/// Field with the given amplitudes.
pub fn inverse(grid: SpaceTimeGrid, mut coeffs: Vec<Complex64>, real: bool) -> Field {
    fft_nd(&mut coeffs, &grid.shape(), true);
    let out = Field::from_values(grid, coeffs, real).expect("coefficient count matches grid");
    if real {
        out.into_real_checked(1e-10)
    } else {
        out
    }
}

/// Tabulates `symbol(xi, omega)` over all bins of `grid`, where `omega` is the
/// angular frequency of `exp(i omega t)`.
///
/// On Nyquist bins the symbol is averaged over both signs of the aliased
/// frequency, which keeps real fields real.
pub fn symbol_table<S>(grid: &SpaceTimeGrid, symbol: S) -> Vec<Complex64>
where
    S: Fn(&[f64], f64) -> Complex64 + Sync,
{
    let shape = grid.shape();
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (sp, it) = grid.unflatten(idx);
            let (xi, omega) = grid.frequencies(idx);
            let mut nyq_axes = Vec::new();
            for (axis, &k) in sp.iter().enumerate() {
                if k == shape[axis] / 2 {
                    nyq_axes.push(axis);
                }
            }
            let time_nyq = it == grid.nt() / 2;
            let combos = 1usize << (nyq_axes.len() + usize::from(time_nyq));
            if combos == 1 {
                return symbol(&xi, omega);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            let mut xs = xi.clone();
            for mask in 0..combos {
                for (b, &axis) in nyq_axes.iter().enumerate() {
                    xs[axis] = if mask >> b & 1 == 1 { -xi[axis] } else { xi[axis] };
                }
                let om = if time_nyq && (mask >> nyq_axes.len()) & 1 == 1 {
                    -omega
                } else {
                    omega
                };
                acc += symbol(&xs, om);
            }
            acc / combos as f64
        })
        .collect()
}

/// Multiplies the Fourier amplitudes of `f` by a tabulated symbol.
/// `keeps_real` asserts the symbol is conjugate symmetric.
pub fn apply_table(f: &Field, table: &[Complex64], keeps_real: bool) -> Field {
    let mut coeffs = forward(f);
    for (c, m) in coeffs.iter_mut().zip(table) {
        *c *= m;
    }
    inverse(*f.grid(), coeffs, f.is_real() && keeps_real)
}

/// Evaluates the trigonometric interpolant along `axis` at the given
/// coordinates, replacing every lane. Nyquist modes are interpolated as cosines.
pub(crate) fn interpolate_axis(
    data: &mut [Complex64],
    shape: &[usize],
    axis: usize,
    period: f64,
    targets: &[f64],
) {
    let len = shape[axis];
    assert_eq!(targets.len(), len);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(len);
    let w = 2.0 * std::f64::consts::PI / period;
    // basis[i][k]: value of mode k at target i
    let basis: Vec<Vec<Complex64>> = targets
        .iter()
        .map(|&x| {
            (0..len)
                .map(|k| {
                    let kk = signed_bin(k, len);
                    if k == len / 2 {
                        Complex64::new((w * kk as f64 * x).cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, w * kk as f64 * x)
                    }
                })
                .collect()
        })
        .collect();
    let (stride, bases) = lane_bases(shape, axis);
    let mut lane = vec![Complex64::new(0.0, 0.0); len];
    for base in bases {
        for (j, slot) in lane.iter_mut().enumerate() {
            *slot = data[base + j * stride];
        }
        fft.process(&mut lane);
        for (i, row) in basis.iter().enumerate() {
            let v: Complex64 = row.iter().zip(&lane).map(|(b, c)| b * c).sum();
            data[base + i * stride] = v / len as f64;
        }
    }
}

/// Samples the trigonometric interpolant of a periodic real sequence at
/// `factor` times the rate. The Nyquist mode is split evenly between both
/// signs so the result stays real.
pub fn upsample_periodic(samples: &[f64], factor: usize) -> Vec<f64> {
    let n = samples.len();
    let m = n * factor;
    let mut planner = FftPlanner::new();
    let mut spec: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    for (k, c) in spec.iter().enumerate() {
        let kk = signed_bin(k, n);
        if n % 2 == 0 && k == n / 2 && factor > 1 {
            padded[n / 2] += c * 0.5;
            padded[m - n / 2] += c * 0.5;
        } else {
            padded[kk.rem_euclid(m as i64) as usize] += c;
        }
    }
    planner.plan_fft_inverse(m).process(&mut padded);
    padded.iter().map(|c| c.re / n as f64).collect()
}

/// Evaluates the trigonometric interpolant of `f` at one off-grid point.
/// Costs O(N) per call after an O(N log N) transform done by the caller.
pub struct Interpolant {
    grid: SpaceTimeGrid,
    coeffs: Vec<Complex64>,
}

impl Interpolant {
    pub fn new(f: &Field) -> Self {
        Interpolant { grid: *f.grid(), coeffs: forward(f) }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Complex64 {
        let g = &self.grid;
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, c) in self.coeffs.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (sp, it) = g.unflatten(idx);
            let (xi, omega) = g.frequencies(idx);
            let mut term = *c;
            for (axis, (&k, &fr)) in sp.iter().zip(&xi).enumerate() {
                term *= if k == g.nx() / 2 {
                    Complex64::new((fr * x[axis]).cos(), 0.0)
                } else {
                    Complex64::from_polar(1.0, fr * x[axis])
                };
            }
            term *= if it == g.nt() / 2 {
                Complex64::new((omega * t).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, omega * t)
            };
            acc += term;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn forward_gives_mode_amplitudes() {
        let g = SpaceTimeGrid::new(1, 2.0 * PI, 8, 2.0 * PI, 8).unwrap();
        let f = Field::from_complex_fn(g, |x, t| Complex64::from_polar(1.0, 2.0 * x[0] - t));
        let c = forward(&f);
        let idx = g.flat_index(&[2], 7);
        assert!((c[idx] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        let others: f64 = c.iter().enumerate().filter(|(i, _)| *i != idx).map(|(_, v)| v.norm()).sum();
        assert!(others < 1e-13);
    }

    #[test]
    fn round_trip_2d() {
        let g = SpaceTimeGrid::new(2, 1.0, 8, 1.0, 4).unwrap();
        let f = Field::from_fn(g, |x, t| (x[0] * 3.0).sin() + x[1] * t);
        let back = inverse(g, forward(&f), true);
        assert!(crate::grid::norms(&back, &f).unwrap().0 < 1e-14);
    }

    #[test]
    fn interpolant_matches_samples_and_modes() {
        let g = SpaceTimeGrid::new(1, 2.0 * PI, 16, 4.0, 8).unwrap();
        let f = Field::from_fn(g, |x, t| (3.0 * x[0]).cos() * (2.0 * PI * t / 4.0).sin());
        let it = Interpolant::new(&f);
        let v = it.eval(&[0.37], 1.1);
        let exact = (3.0 * 0.37f64).cos() * (2.0 * PI * 1.1 / 4.0).sin();
        assert!((v.re - exact).abs() < 1e-13 && v.im.abs() < 1e-13);
    }

    #[test]
    fn upsampling_is_exact_for_trig_polynomials() {
        let n = 8;
        let f = |t: f64| 0.3 + (t).cos() - 0.5 * (3.0 * t).sin() + 0.25 * (4.0 * t).cos();
        let samples: Vec<f64> = (0..n).map(|k| f(2.0 * PI * k as f64 / n as f64)).collect();
        let up = upsample_periodic(&samples, 4);
        for (i, v) in up.iter().enumerate() {
            let t = 2.0 * PI * i as f64 / 32.0;
            assert!((v - f(t)).abs() < 1e-13, "{i}: {v} vs {}", f(t));
        }
        assert_eq!(upsample_periodic(&samples, 1).len(), n);
    }

    #[test]
    fn nyquist_symbol_is_averaged() {
        let g = SpaceTimeGrid::new(1, 2.0 * PI, 4, 2.0 * PI, 4).unwrap();
        let table = symbol_table(&g, |_, om| Complex64::new(0.0, om));
        let idx = g.flat_index(&[0], 2);
        assert_eq!(table[idx], Complex64::new(0.0, 0.0));
    }
}
