//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

use fracheat::extension::{
    even_reflect, neumann_trace, poisson_extend, solve_extension_pde_with, weak_residual, ExtensionGrid, PdeOptions,
    TestBump, WeightedStencil,
};
use fracheat::fracop::{
    self, apply_heat_power, apply_spectral, calibrate_neumann, consistency_report, consistency_report_with,
    default_probes, fit_constant, multiplier_value, raw_extension_trace, SingularQuadRule, EXTENSION, SINGULAR,
    SPECTRAL,
};
use fracheat::harnack::{
    build_domain, run_experiment, solve_weighted_nodal, BoundaryData, DataSpec, DomainSpec, HarnackConfig, HolderFit,
    SolveOptions, WallSpec,
};
use fracheat::kernels::kernel_mass;
use fracheat::{norms, parabolic_rescale, Cylinder, Field, FracParams, SpaceTimeGrid};

type Outcome = Result<String, String>;

fn torus(nx: usize, nt: usize) -> SpaceTimeGrid {
    SpaceTimeGrid::new(1, 2.0 * PI, nx, 2.0 * PI, nt).unwrap()
}

fn bump(g: SpaceTimeGrid) -> Field {
    Field::from_fn(g, |x, t| (-4.0 * (1.0 - (x[0] - PI).cos()) - 2.0 * (1.0 - (t - PI).cos())).exp())
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn kernel_mass_criterion() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let p = FracParams::new(s).unwrap();
        let m: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|&y| kernel_mass(y, p).unwrap()).collect();
        worst = m.iter().fold(worst, |w, v| w.max((v - 1.0).abs()));
        let (lo, hi) = m.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        spread = spread.max(hi - lo);
    }
    verdict(worst <= 1e-8 && spread <= 1e-12, format!("max |mass - 1| {worst:.2e}, y-spread {spread:.2e}"))
}

fn multiplier_criterion() -> Outcome {
    let g = torus(32, 16);
    let mut worst: f64 = 0.0;
    for s in [0.2, 0.5, 0.8] {
        let p = FracParams::new(s).unwrap();
        for (k, w) in [(1i32, 0i32), (3, -2), (-5, 4), (0, 7)] {
            let mode = Field::from_complex_fn(g, |x, t| Complex64::from_polar(1.0, k as f64 * x[0] + w as f64 * t));
            let out = apply_spectral(&mode, p);
            // modes e^{i(xi x - tau t)}
            let m = multiplier_value(s, &[k as f64], -(w as f64));
            let expected = mode.map(|v| v * m);
            let (sup, _) = norms(&out, &expected).unwrap();
            worst = worst.max(sup);
        }
    }
    let f = Field::from_fn(g, |x, t| (2.0 * x[0] + 3.0 * t).cos());
    let heat = apply_heat_power(&f, 1.0).unwrap();
    let exact = Field::from_fn(g, |x, t| 4.0 * (2.0 * x[0] + 3.0 * t).cos() - 3.0 * (2.0 * x[0] + 3.0 * t).sin());
    let (s1, _) = norms(&heat, &exact).unwrap();
    verdict(worst <= 1e-12 && s1 <= 1e-10, format!("mode error {worst:.2e}, s=1 heat error {s1:.2e}"))
}

fn three_routes_criterion() -> Outcome {
    let (g, fine) = (torus(64, 32), torus(128, 64));
    let mut lines = Vec::new();
    let mut ok = true;
    for s in [0.25, 0.5, 0.75] {
        let p = FracParams::new(s).unwrap();
        let coarse = consistency_report(&bump(g), p).map_err(|e| e.to_string())?;
        let rule = SingularQuadRule::for_grid(&fine).refined();
        let refined = consistency_report_with(&bump(fine), p, &rule, &default_probes(&fine)).map_err(|e| e.to_string())?;
        let (c, r) = (coarse.max_l2(), refined.max_l2());
        ok &= c <= 5e-3 && r < c;
        lines.push(format!("s={s}: {c:.2e} -> {r:.2e}"));
    }
    verdict(ok, format!("max pairwise L2 (64x32 -> 128x64) {}", lines.join(", ")))
}

fn calibration_criterion() -> Outcome {
    let g = torus(64, 32);
    let probes = default_probes(&g);
    let mut worst: f64 = 0.0;
    for s in [0.25, 0.5, 0.75] {
        let p = FracParams::new(s).unwrap();
        let c_mode = calibrate_neumann(p, g, &probes).unwrap();
        let f = bump(g);
        let c_bump = fit_constant(&raw_extension_trace(&f, p, &probes).unwrap(), &apply_spectral(&f, p)).unwrap();
        worst = worst.max((c_mode / c_bump - 1.0).abs());
    }
    verdict(worst <= 1e-3, format!("max relative gap mode vs bump calibration {worst:.2e}"))
}

/// `|xi|^{2s} g_hat` per mode, by a direct DFT in `x`.
fn fractional_laplacian_1d(g: &[f64], length: f64, s: f64) -> Vec<f64> {
    let n = g.len();
    let coef: Vec<Complex64> = (0..n)
        .map(|k| {
            g.iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        })
        .collect();
    (0..n)
        .map(|j| {
            (0..n)
                .map(|k| {
                    let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                    let xi = 2.0 * PI * kk / length;
                    let mult = if k == n / 2 { 0.0 } else { xi.abs().powf(2.0 * s) };
                    (coef[k] * mult * Complex64::from_polar(1.0, 2.0 * PI * (j * k) as f64 / n as f64)).re
                })
                .sum()
        })
        .collect()
}

fn time_independent_criterion() -> Outcome {
    let g = torus(64, 16);
    let profile = |x: f64| (-2.0 * (1.0 - (x - 1.0).cos())).exp();
    let mut worst: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for s in [0.25, 0.5, 0.75] {
        let p = FracParams::new(s).unwrap();
        let f = Field::from_fn(g, |x, _| profile(x[0]));
        let samples: Vec<f64> = (0..g.nx()).map(|i| profile(i as f64 * g.hx())).collect();
        let reference = fractional_laplacian_1d(&samples, g.length(), s);
        let expected = Field::from_fn(g, |x, _| reference[(x[0] / g.hx()).round() as usize % g.nx()]);
        let report = consistency_report(&f, p).map_err(|e| e.to_string())?;
        for route in [SPECTRAL, SINGULAR, EXTENSION] {
            let out = &report.outputs[route];
            let (_, l2) = norms(out, &expected).unwrap();
            worst = worst.max(l2);
            for ix in 0..g.nx() {
                let vals: Vec<f64> = (0..g.nt()).map(|it| out.get(&[ix], it).re).collect();
                let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
                drift = drift.max((hi - lo) / out.sup_norm());
            }
        }
    }
    verdict(worst <= 5e-3 && drift <= 5e-3, format!("max L2 vs |xi|^2s g_hat {worst:.2e}, max time drift {drift:.2e}"))
}

/// Periodic steady state of the default backward-Euler extension scheme at
/// `a = 0`, by DFT in `x` and in fine time steps and a Thomas solve in `y`.
fn heat_reference(f: &Field, grid: &ExtensionGrid, substeps: usize) -> Vec<f64> {
    let base = *grid.base();
    let (nx, nt, ny) = (base.nx(), base.nt(), grid.ny());
    let nf = nt * substeps;
    let dt = base.ht() / substeps as f64;
    let st = WeightedStencil::new(grid, 0.0);
    let top = poisson_extend(f, FracParams::new(0.5).unwrap(), grid).unwrap();
    // linear interpolation of the boundary rows onto the fine steps
    let fine = |row: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..nx)
            .map(|ix| {
                (0..nf)
                    .map(|i| {
                        let (k, w) = (i / substeps, (i % substeps) as f64 / substeps as f64);
                        (1.0 - w) * row(ix, k) + w * row(ix, (k + 1) % nt)
                    })
                    .collect()
            })
            .collect()
    };
    let bottom = fine(&|ix, it| f.get(&[ix], it).re);
    let upper = fine(&|ix, it| top.get(ix, ny - 1, it));
    let dft2 = |d: &Vec<Vec<f64>>| -> Vec<Vec<Complex64>> {
        (0..nx)
            .map(|k| {
                (0..nf)
                    .map(|q| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for ix in 0..nx {
                            for i in 0..nf {
                                let ph = -2.0 * PI * ((k * ix) as f64 / nx as f64 + (q * i) as f64 / nf as f64);
                                acc += d[ix][i] * Complex64::from_polar(1.0, ph);
                            }
                        }
                        acc / (nx * nf) as f64
                    })
                    .collect()
            })
            .collect()
    };
    let (b_hat, t_hat) = (dft2(&bottom), dft2(&upper));
    let mut u_hat = vec![vec![vec![Complex64::new(0.0, 0.0); ny]; nf]; nx];
    for k in 0..nx {
        let mu = 2.0 - 2.0 * (2.0 * PI * k as f64 / nx as f64).cos();
        for q in 0..nf {
            let shift = (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -2.0 * PI * q as f64 / nf as f64)) / dt;
            // tridiagonal system on rows 1..ny-1
            let m = ny - 2;
            let mut lower = vec![Complex64::new(0.0, 0.0); m];
            let mut diag = vec![Complex64::new(0.0, 0.0); m];
            let mut upper_d = vec![Complex64::new(0.0, 0.0); m];
            let mut rhs = vec![Complex64::new(0.0, 0.0); m];
            for r in 0..m {
                let j = r + 1;
                diag[r] = shift * st.cell_mass[j] + st.flux[j - 1] + st.flux[j] + st.spatial[j] * mu;
                lower[r] = Complex64::new(-st.flux[j - 1], 0.0);
                upper_d[r] = Complex64::new(-st.flux[j], 0.0);
            }
            rhs[0] += st.flux[0] * b_hat[k][q];
            rhs[m - 1] += st.flux[ny - 2] * t_hat[k][q];
            for r in 1..m {
                let w = lower[r] / diag[r - 1];
                diag[r] = diag[r] - w * upper_d[r - 1];
                let prev = rhs[r - 1];
                rhs[r] -= w * prev;
            }
            let mut sol = vec![Complex64::new(0.0, 0.0); m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for r in (0..m - 1).rev() {
                sol[r] = (rhs[r] - upper_d[r] * sol[r + 1]) / diag[r];
            }
            u_hat[k][q][0] = b_hat[k][q];
            u_hat[k][q][ny - 1] = t_hat[k][q];
            u_hat[k][q][1..ny - 1].copy_from_slice(&sol);
        }
    }
    let mut out = vec![0.0; grid.len()];
    for ix in 0..nx {
        for it in 0..nt {
            let i = it * substeps;
            for j in 0..ny {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..nx {
                    for q in 0..nf {
                        let ph = 2.0 * PI * ((k * ix) as f64 / nx as f64 + (q * i) as f64 / nf as f64);
                        acc += u_hat[k][q][j] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[grid.index(ix, j, it)] = acc.re;
            }
        }
    }
    out
}

fn half_power_criterion() -> Outcome {
    let p = FracParams::new(0.5).unwrap();
    let g = ExtensionGrid::graded(torus(16, 8), p, 24, 3.0).unwrap();
    let f = Field::from_fn(*g.base(), |x, t| (-(1.0 - (x[0] - 2.0).cos()) - (1.0 - (t - 1.0).cos())).exp());
    let opts = PdeOptions { periodicity_tol: 1e-13, cg_tol: 1e-14, max_periods: 400, ..PdeOptions::default() };
    let u = solve_extension_pde_with(&f, p, &g, &opts).map_err(|e| e.to_string())?;
    let reference = heat_reference(&f, &g, opts.substeps);
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pde_err = u.values().iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;

    let eg = ExtensionGrid::graded(torus(32, 16), p, 64, 4.0).unwrap();
    let mode = Field::from_fn(*eg.base(), |x, t| (x[0] - t).cos());
    let trace = neumann_trace(&poisson_extend(&mode, p, &eg).unwrap(), p).unwrap();
    let (trace_err, _) = norms(&trace, &apply_spectral(&mode, p)).unwrap();
    verdict(
        pde_err <= 1e-8 && trace_err <= 1e-3,
        format!("PDE vs FFT/tridiagonal heat reference {pde_err:.2e}, trace vs (|xi|^2 - i tau)^(1/2) {trace_err:.2e}"),
    )
}

fn weak_form_criterion() -> Outcome {
    let p = FracParams::new(0.5).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let mut orders = Vec::new();
    for _ in 0..3 {
        let th = TestBump {
            center: vec![rng.gen_range(1.5..4.5)],
            y: rng.gen_range(0.9..1.3),
            t: rng.gen_range(1.5..4.5),
            radius_x: rng.gen_range(0.8..1.2),
            radius_y: rng.gen_range(0.5..0.65),
            radius_t: rng.gen_range(1.0..1.5),
        };
        let mut g = ExtensionGrid::graded(torus(32, 16), p, 32, 2.0).unwrap();
        let mut res = Vec::new();
        for _ in 0..3 {
            let f = bump(*g.base());
            res.push(weak_residual(&poisson_extend(&f, p, &g).unwrap(), &th, p).unwrap());
            g = g.refined().unwrap();
        }
        // least-squares slope of log2(residual) against refinement level
        let ys: Vec<f64> = res.iter().map(|r| -r.log2()).collect();
        let my = ys.iter().sum::<f64>() / 3.0;
        orders.push(ys.iter().enumerate().map(|(k, y)| (k as f64 - 1.0) * (y - my)).sum::<f64>() / 2.0);
    }
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);

    let b = torus(32, 16);
    let patch = Cylinder::new(vec![PI], PI, 1.0).unwrap();
    let (f, _) = fracop::solution_vanishing_on(b, p, &patch).unwrap();
    let g = ExtensionGrid::graded(b, p, 32, 3.0).unwrap();
    let u = even_reflect(&poisson_extend(&f, p, &g).unwrap());
    let on = TestBump { center: vec![PI], y: 0.0, t: PI, radius_x: 0.9, radius_y: 0.5, radius_t: 0.9 };
    let off = TestBump { center: vec![0.0], t: 1.5 * PI, ..on.clone() };
    let (r_on, r_off) = (weak_residual(&u, &on, p).unwrap(), weak_residual(&u, &off, p).unwrap());
    verdict(
        min_order >= 0.9 && r_off > 20.0 * r_on,
        format!("min fitted order {min_order:.2} over 3 bumps and 3 levels; straddling residual on patch {r_on:.2e}, off patch {r_off:.2e}"),
    )
}

fn scaling_criterion() -> Outcome {
    let g = torus(64, 64);
    let f = Field::from_fn(g, |x, t| (x[0] + t).cos() + 0.5 * (3.0 * x[0] - t).sin() + 0.25 * (2.0 * x[0]).cos());
    let mut worst: f64 = 0.0;
    for s in [0.3, 0.7] {
        let p = FracParams::new(s).unwrap();
        for r in [2.0, 4.0] {
            let lhs = apply_spectral(&parabolic_rescale(&f, r).unwrap(), p);
            let rhs = parabolic_rescale(&apply_spectral(&f, p), r).unwrap().scale(r.powf(2.0 * s));
            worst = worst.max(norms(&lhs, &rhs).unwrap().0);
        }
    }
    verdict(worst <= 1e-8, format!("max relative sup error {worst:.2e}"))
}

fn harnack_config(n: usize) -> HarnackConfig {
    let data = |center: [f64; 2]| BoundaryData {
        initial: DataSpec::Sum {
            terms: vec![
                DataSpec::WallDistance { amplitude: 1.0, cap: 0.5 },
                DataSpec::Bump { center, radius: 0.6, amplitude: 2.0 },
            ],
        },
        lateral: DataSpec::Zero,
        vanish_on: vec![],
    };
    HarnackConfig {
        s: 0.5,
        domain: DomainSpec { wall: WallSpec::Flat, x_range: (0.0, 2.0), slab: (-1.0, 1.0), r0: 0.5, horizon: 0.5, nx: n, ny: n },
        data: [data([0.6, -0.3]), data([1.2, 0.35])],
        solve: SolveOptions { steps: 2 * n, cg_tol: 1e-12 },
        wall_height: 0.0,
        t0: None,
        delta: None,
        r: 0.5,
        depth: 3,
    }
}

fn harnack_criterion() -> Outcome {
    let mut rows = Vec::new();
    for n in [64, 128, 192] {
        let rep = run_experiment(&harnack_config(n)).map_err(|e| e.to_string())?;
        rows.push((n, rep.profile.fit, rep.profile.corkscrew_ratio, rep.profile.normalized_range.1));
    }
    let fits_ok = rows.iter().all(|(_, fit, _, _)| {
        matches!(fit, HolderFit::Fitted { alpha, r2, .. } if *alpha > 0.0 && *alpha <= 1.0 && *r2 >= 0.9)
    });
    let (_, _, ratio_fine, bound_fine) = rows[2];
    let stable = rows.iter().all(|(_, _, ratio, bound)| {
        (ratio / ratio_fine - 1.0).abs() <= 0.2 && (bound / bound_fine - 1.0).abs() <= 0.2
    });
    let detail: Vec<String> = rows
        .iter()
        .map(|(n, fit, ratio, bound)| {
            let (a, r2) = match fit {
                HolderFit::Fitted { alpha, r2, .. } => (*alpha, *r2),
                _ => (f64::NAN, f64::NAN),
            };
            format!("n={n}: alpha {a:.2} R2 {r2:.3} u/v(A_r) {ratio:.4} bound {bound:.4}")
        })
        .collect();
    verdict(fits_ok && stable, detail.join("; "))
}

fn comparison_criterion() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let p_ext = FracParams::new(0.35).unwrap();
    let eg = ExtensionGrid::graded(torus(8, 4), p_ext, 16, 2.0).unwrap();
    let opts = PdeOptions { cg_tol: 1e-14, ..PdeOptions::default() };
    let mut worst_ext: f64 = 0.0;
    for _ in 0..1000 {
        let lo: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + if rng.gen_bool(0.5) { rng.gen_range(0.0..0.5) } else { 0.0 }).collect();
        let f_lo = Field::from_fn(*eg.base(), |x, t| lo[((x[0] / eg.base().hx()).round() as usize % 8) * 4 + (t / eg.base().ht()).round() as usize % 4]);
        let f_hi = Field::from_fn(*eg.base(), |x, t| hi[((x[0] / eg.base().hx()).round() as usize % 8) * 4 + (t / eg.base().ht()).round() as usize % 4]);
        let u_lo = solve_extension_pde_with(&f_lo, p_ext, &eg, &opts).map_err(|e| e.to_string())?;
        let u_hi = solve_extension_pde_with(&f_hi, p_ext, &eg, &opts).map_err(|e| e.to_string())?;
        for (a, b) in u_lo.values().iter().zip(u_hi.values()) {
            worst_ext = worst_ext.max(a - b);
        }
    }
    let p_w = FracParams::new(0.7).unwrap();
    let dom = build_domain(&DomainSpec {
        wall: WallSpec::Wedge { slope: 1.0, vertex: 0.0 },
        x_range: (0.0, 2.0),
        slab: (-1.0, 1.0),
        r0: 0.5,
        horizon: 0.2,
        nx: 8,
        ny: 8,
    })
    .unwrap();
    let wopts = SolveOptions { steps: 10, cg_tol: 1e-14 };
    let nn = dom.node_count();
    let mut worst_w: f64 = 0.0;
    for _ in 0..1000 {
        let lo: Vec<f64> = (0..nn).map(|_| rng.gen_range(0.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + if rng.gen_bool(0.5) { rng.gen_range(0.0..0.5) } else { 0.0 }).collect();
        let u_lo = solve_weighted_nodal(&dom, p_w, &lo, &lo, &wopts).map_err(|e| e.to_string())?;
        let u_hi = solve_weighted_nodal(&dom, p_w, &hi, &hi, &wopts).map_err(|e| e.to_string())?;
        for (a, b) in u_lo.values.iter().flatten().zip(u_hi.values.iter().flatten()) {
            worst_w = worst_w.max(a - b);
        }
    }
    verdict(
        worst_ext <= 1e-12 && worst_w <= 1e-12,
        format!("largest ordering violation: extension PDE {worst_ext:.2e}, weighted solver {worst_w:.2e} (1000 pairs each)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("kernel mass", kernel_mass_criterion),
        ("multiplier eigenfunctions", multiplier_criterion),
        ("three-route consistency", three_routes_criterion),
        ("calibration stability", calibration_criterion),
        ("time-independent reduction", time_independent_criterion),
        ("s = 1/2 degeneracy", half_power_criterion),
        ("weak-form residual", weak_form_criterion),
        ("parabolic scaling", scaling_criterion),
        ("boundary Harnack experiment", harnack_criterion),
        ("comparison principles", comparison_criterion),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || f == &(k + 1).to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1} s]", k + 1),
            Err(d) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1} s]", k + 1);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
