//! Batch front end: `fracheat <command> --config run.json [--s --nx --nt --method --out]`.
//!
//! Exit codes: 0 success, 1 tolerance failure, 2 config error, 3 numerical
//! error. Errors are reported as one JSON object on stderr.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{neumann_trace, solve_extension_pde_with, ExtensionGrid, PdeOptions};
use crate::fracop::{self, SingularQuadRule};
use crate::grid::{norms, Field, SpaceTimeGrid};
use crate::harnack::{run_experiment, HarnackConfig};
use crate::kernels::kernel_mass;
use crate::params::FracParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    KernelMass,
    Apply,
    Extend,
    Consistency,
    Harnack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Spectral,
    Singular,
    Extension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default = "two_pi")]
    pub length: f64,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "two_pi")]
    pub period: f64,
    #[serde(default = "default_nt")]
    pub nt: usize,
}

fn one() -> usize {
    1
}
fn two_pi() -> f64 {
    2.0 * PI
}
fn default_nx() -> usize {
    64
}
fn default_nt() -> usize {
    32
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: 1, length: two_pi(), nx: default_nx(), period: two_pi(), nt: default_nt() }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.n, self.length, self.nx, self.period, self.nt)
    }
}

/// Named field generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Builtin {
    Constant {
        #[serde(default)]
        c: f64,
    },
    /// `amplitude cos(2 pi k.x / L + 2 pi kt t / T)`.
    Mode {
        kx: Vec<i64>,
        #[serde(default)]
        kt: i64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// `amplitude exp(-(|x - c|^2 + (t - tc)^2) / width^2)` with periodic distances.
    GaussianBump {
        center: Vec<f64>,
        time: f64,
        width: f64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// `amplitude prod_i psi((x_i - c_i)/width) psi((t - tc)/time_width)`,
    /// `psi(z) = exp(-1/(1 - z^2))` on `|z| < 1`, periodic distances.
    SeparableBump {
        center: Vec<f64>,
        time: f64,
        width: f64,
        time_width: f64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
}

fn unit() -> f64 {
    1.0
}

fn periodic_offset(x: f64, c: f64, period: f64) -> f64 {
    let d = (x - c).rem_euclid(period);
    if d > 0.5 * period {
        d - period
    } else {
        d
    }
}

/// `exp(-1/(1 - z^2))` on `|z| < 1`.
pub fn smooth_bump(z: f64) -> f64 {
    if z.abs() < 1.0 {
        (-1.0 / (1.0 - z * z)).exp()
    } else {
        0.0
    }
}

/// Samples a builtin on the grid.
pub fn generate_builtin(b: &Builtin, grid: SpaceTimeGrid) -> Result<Field> {
    let n = grid.n();
    let (l, tp) = (grid.length(), grid.period());
    let check_dim = |len: usize| {
        if len == n {
            Ok(())
        } else {
            Err(Error::Config(format!("builtin has {len} spatial components, grid has {n}")))
        }
    };
    match b {
        Builtin::Constant { c } => Ok(Field::from_fn(grid, |_, _| *c)),
        Builtin::Mode { kx, kt, amplitude } => {
            check_dim(kx.len())?;
            Ok(Field::from_fn(grid, |x, t| {
                let phase: f64 = kx.iter().zip(x).map(|(k, xi)| 2.0 * PI * *k as f64 * xi / l).sum::<f64>()
                    + 2.0 * PI * *kt as f64 * t / tp;
                amplitude * phase.cos()
            }))
        }
        Builtin::GaussianBump { center, time, width, amplitude } => {
            check_dim(center.len())?;
            if !(*width > 0.0) {
                return Err(Error::Config("bump width must be positive".into()));
            }
            Ok(Field::from_fn(grid, |x, t| {
                let r2: f64 = x.iter().zip(center).map(|(xi, c)| periodic_offset(*xi, *c, l).powi(2)).sum::<f64>()
                    + periodic_offset(t, *time, tp).powi(2);
                amplitude * (-r2 / (width * width)).exp()
            }))
        }
        Builtin::SeparableBump { center, time, width, time_width, amplitude } => {
            check_dim(center.len())?;
            if !(*width > 0.0 && *time_width > 0.0) {
                return Err(Error::Config("bump widths must be positive".into()));
            }
            Ok(Field::from_fn(grid, |x, t| {
                let sp: f64 = x.iter().zip(center).map(|(xi, c)| smooth_bump(periodic_offset(*xi, *c, l) / width)).product();
                amplitude * sp * smooth_bump(periodic_offset(t, *time, tp) / time_width)
            }))
        }
    }
}

/// Analytic integral of a builtin over one cell of the lattice, when the
/// profile fits inside it.
pub fn builtin_mass(b: &Builtin, grid: &SpaceTimeGrid) -> Option<f64> {
    let dims = grid.n() as i32 + 1;
    match b {
        Builtin::Constant { c } => Some(c * grid.length().powi(grid.n() as i32) * grid.period()),
        Builtin::Mode { kx, kt, amplitude } => {
            let zero = kx.iter().all(|k| *k == 0) && *kt == 0;
            Some(if zero { amplitude * grid.length().powi(grid.n() as i32) * grid.period() } else { 0.0 })
        }
        Builtin::GaussianBump { width, amplitude, .. } => Some(amplitude * (PI * width * width).powf(0.5 * dims as f64)),
        Builtin::SeparableBump { width, time_width, amplitude, .. } => {
            let m1 = bump_integral();
            Some(amplitude * (width * m1).powi(grid.n() as i32) * time_width * m1)
        }
    }
}

/// `int_{-1}^{1} exp(-1/(1 - z^2)) dz`, by Gauss-Legendre after `z = tanh(w)`.
pub fn bump_integral() -> f64 {
    // z = tanh(w): dz = sech^2 w dw, 1 - z^2 = sech^2 w, so the integrand is
    // exp(-cosh^2 w) sech^2 w on the real line; it decays double-exponentially.
    let rule = gauss_quad::GaussLegendre::new(std::num::NonZeroUsize::new(64).unwrap());
    let half = 3.5;
    rule.integrate(-half, half, |w: f64| {
        let c = w.cosh();
        (-c * c).exp() / (c * c)
    })
}

/// Where the input field comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSource {
    Builtin(Builtin),
    Csv(PathBuf),
}

/// Tolerances checked by the commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_mass_tol")]
    pub kernel_mass: f64,
    #[serde(default = "default_consistency_tol")]
    pub consistency: f64,
    #[serde(default = "default_extend_tol")]
    pub extend: f64,
}

fn default_mass_tol() -> f64 {
    1e-8
}
fn default_consistency_tol() -> f64 {
    1e-3
}
fn default_extend_tol() -> f64 {
    1e-2
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { kernel_mass: default_mass_tol(), consistency: default_consistency_tol(), extend: default_extend_tol() }
    }
}

/// Extension grid for `extend`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendSpec {
    #[serde(default = "default_j")]
    pub j: usize,
    #[serde(default = "default_ymax")]
    pub y_max: f64,
    /// Use the monotone defaults instead of the accurate preset.
    #[serde(default)]
    pub monotone: bool,
}

fn default_j() -> usize {
    48
}
fn default_ymax() -> f64 {
    4.0
}

impl Default for ExtendSpec {
    fn default() -> Self {
        ExtendSpec { j: default_j(), y_max: default_ymax(), monotone: false }
    }
}

/// Everything a run needs. Loaded from JSON; the five common scalars can be
/// overridden on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default = "half")]
    pub s: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "spectral")]
    pub method: Method,
    #[serde(default)]
    pub input: Option<InputSource>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerance: Tolerances,
    /// Heights for `kernel-mass`.
    #[serde(default = "default_heights")]
    pub heights: Vec<f64>,
    #[serde(default)]
    pub extend: ExtendSpec,
    #[serde(default)]
    pub harnack: Option<HarnackConfig>,
}

fn half() -> f64 {
    0.5
}
fn spectral() -> Method {
    Method::Spectral
}
fn default_heights() -> Vec<f64> {
    vec![0.25, 1.0, 4.0]
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl RunConfig {
    /// Checks the invariants: one command, `s` in (0, 1), input paths exist.
    pub fn validate(&self) -> Result<Command> {
        let cmd = self.command.ok_or_else(|| Error::Config("no command given".into()))?;
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("s = {} is outside (0, 1)", self.s)));
        }
        if let Some(InputSource::Csv(path)) = &self.input {
            if !path.exists() {
                return Err(Error::Config(format!("input {} does not exist", path.display())));
            }
        }
        self.grid.build().map_err(|e| Error::Config(e.to_string()))?;
        if cmd == Command::Harnack && self.harnack.is_none() {
            return Err(Error::Config("harnack needs a `harnack` section".into()));
        }
        Ok(cmd)
    }

    fn load_input(&self, grid: SpaceTimeGrid) -> Result<Field> {
        match &self.input {
            None => Err(Error::Config("this command needs an `input`".into())),
            Some(InputSource::Builtin(b)) => generate_builtin(b, grid),
            Some(InputSource::Csv(path)) => {
                let f = Field::read_csv(BufReader::new(File::open(path)?))?;
                if *f.grid() != grid {
                    return Err(Error::Config(format!("{} does not match the configured grid", path.display())));
                }
                Ok(f)
            }
        }
    }
}

/// Command-line arguments.
#[derive(Debug, Parser)]
#[command(name = "fracheat", version, about = "Fractional heat operator toolkit")]
pub struct Args {
    pub command: Command,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Args {
    /// Reads the config file (if any) and applies the flag overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(c) = cfg.command {
            if c != self.command {
                return Err(Error::Config(format!("config is for {c:?}, command line asks for {:?}", self.command)));
            }
        }
        cfg.command = Some(self.command);
        if let Some(s) = self.s {
            cfg.s = s;
            if let Some(h) = cfg.harnack.as_mut() {
                h.s = s;
            }
        }
        if let Some(nx) = self.nx {
            cfg.grid.nx = nx;
        }
        if let Some(nt) = self.nt {
            cfg.grid.nt = nt;
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        Ok(cfg)
    }
}

/// Result of a successful run: whether tolerances held, and the stdout summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub within_tolerance: bool,
    pub summary: serde_json::Value,
}

fn provenance(cfg: &RunConfig) -> serde_json::Value {
    serde_json::json!({
        "tool": "fracheat",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command,
        "s": cfg.s,
        "grid": cfg.grid,
        "config": cfg,
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn field_csv(cfg: &RunConfig, f: &Field) -> Result<Vec<u8>> {
    let mut buf = format!("# provenance {}\n", provenance(cfg)).into_bytes();
    f.write_csv(&mut buf)?;
    Ok(buf)
}

fn json_bytes(cfg: &RunConfig, body: serde_json::Value) -> Result<Vec<u8>> {
    let doc = serde_json::json!({ "provenance": provenance(cfg), "result": body });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// Executes a validated config. Artifacts are only written after every
/// computation has succeeded.
pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let cmd = cfg.validate()?;
    let p = FracParams::new(cfg.s)?;
    let grid = cfg.grid.build()?;
    let mut artifacts: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    let (within_tolerance, summary) = match cmd {
        Command::KernelMass => {
            let mut rows = Vec::new();
            let mut ok = true;
            for &y in &cfg.heights {
                let m = kernel_mass(y, p)?;
                ok &= (m - 1.0).abs() <= cfg.tolerance.kernel_mass;
                rows.push(serde_json::json!({ "y": y, "mass": m }));
            }
            let body = serde_json::json!({ "masses": rows });
            if let Some(out) = &cfg.output {
                artifacts.push((out.clone(), json_bytes(cfg, body.clone())?));
            }
            (ok, body)
        }
        Command::Apply => {
            let f = cfg.load_input(grid)?;
            let out = match cfg.method {
                Method::Spectral => fracop::apply_spectral(&f, p),
                Method::Singular => fracop::apply_singular(&f, p, &SingularQuadRule::for_grid(&grid))?,
                Method::Extension => fracop::apply_extension_route(&f, p, &fracop::default_probes(&grid))?,
            };
            if let Some(path) = &cfg.output {
                artifacts.push((path.clone(), field_csv(cfg, &out)?));
            }
            (true, serde_json::json!({ "method": cfg.method, "sup": out.sup_norm(), "l2": out.l2_norm() }))
        }
        Command::Extend => {
            let f = cfg.load_input(grid)?;
            let eg = ExtensionGrid::graded(grid, p, cfg.extend.j, cfg.extend.y_max)?;
            let opts = if cfg.extend.monotone { PdeOptions::default() } else { PdeOptions::accurate() };
            let u = solve_extension_pde_with(&f, p, &eg, &opts)?;
            let trace = neumann_trace(&u, p)?;
            let (sup, l2) = norms(&trace, &fracop::apply_spectral(&f, p))?;
            if let Some(path) = &cfg.output {
                let mut buf = format!("# provenance {}\n", provenance(cfg)).into_bytes();
                u.write_csv(&mut buf)?;
                artifacts.push((path.clone(), buf));
                artifacts.push((sibling(path, "trace.csv"), field_csv(cfg, &trace)?));
            }
            (l2 <= cfg.tolerance.extend, serde_json::json!({ "trace_vs_spectral": { "sup_rel": sup, "l2_rel": l2 } }))
        }
        Command::Consistency => {
            let f = cfg.load_input(grid)?;
            let report = fracop::consistency_report(&f, p)?;
            let body = report.summary_json();
            if let Some(path) = &cfg.output {
                artifacts.push((path.clone(), json_bytes(cfg, body.clone())?));
            }
            (report.max_l2() <= cfg.tolerance.consistency, body)
        }
        Command::Harnack => {
            let h = cfg.harnack.as_ref().expect("validated");
            let report = run_experiment(h)?;
            let body = report.summary_json();
            if let Some(path) = &cfg.output {
                let mut csv = format!("# provenance {}\n", provenance(cfg)).into_bytes();
                csv.extend_from_slice(report.csv().as_bytes());
                artifacts.push((path.clone(), csv));
                artifacts.push((sibling(path, "json"), json_bytes(cfg, body.clone())?));
            }
            let ok = !matches!(report.profile.fit, crate::harnack::HolderFit::Unreliable { .. });
            (ok, body)
        }
    };
    for (path, bytes) in &artifacts {
        write_atomic(path, bytes)?;
    }
    Ok(Outcome { within_tolerance, summary })
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Machine-readable error report.
pub fn error_json(e: &Error) -> serde_json::Value {
    let kind = match e {
        Error::Domain(_) => "domain",
        Error::Shape(_) => "shape",
        Error::Convergence { .. } => "convergence",
        Error::Solver { .. } => "solver",
        Error::DegenerateQuotient(_) => "degenerate-quotient",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    serde_json::json!({ "error": kind, "message": e.to_string(), "exit_code": exit_code(e) })
}

/// Sizes the global thread pool from `FRACHEAT_THREADS`.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FRACHEAT_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("FRACHEAT_THREADS={v} is not a count")))?;
        if n == 0 {
            return Err(Error::Config("FRACHEAT_THREADS must be positive".into()));
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Full entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = Error::Config(e.to_string().trim().to_string());
            eprintln!("{}", error_json(&err));
            return 2;
        }
    };
    let result = configure_threads().and_then(|_| args.resolve()).and_then(|cfg| {
        cfg.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        run(&cfg)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.within_tolerance {
                0
            } else {
                let mut detail = BTreeMap::new();
                detail.insert("error", serde_json::json!("tolerance"));
                detail.insert("message", serde_json::json!("result outside tolerance"));
                detail.insert("exit_code", serde_json::json!(1));
                eprintln!("{}", serde_json::json!(detail));
                1
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpaceTimeGrid {
        GridSpec { nx: 32, nt: 16, ..GridSpec::default() }.build().unwrap()
    }

    #[test]
    fn constant_zero_is_zero() {
        let f = generate_builtin(&Builtin::Constant { c: 0.0 }, grid()).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
    }

    #[test]
    fn mode_samples_cosine() {
        let g = grid();
        let f = generate_builtin(&Builtin::Mode { kx: vec![1], kt: 0, amplitude: 1.0 }, g).unwrap();
        for (i, v) in f.values().iter().enumerate() {
            let (x, _) = g.coords(i);
            assert!((v.re - (2.0 * PI * x[0] / g.length()).cos()).abs() < 1e-15);
        }
        assert!(generate_builtin(&Builtin::Mode { kx: vec![1, 2], kt: 0, amplitude: 1.0 }, g).is_err());
    }

    #[test]
    fn bump_masses() {
        let g = GridSpec { nx: 128, nt: 128, ..GridSpec::default() }.build().unwrap();
        let cell = g.hx() * g.ht();
        for b in [
            Builtin::GaussianBump { center: vec![3.0], time: 2.0, width: 0.6, amplitude: 1.0 },
            Builtin::SeparableBump { center: vec![3.0], time: 2.0, width: 1.5, time_width: 2.0, amplitude: 1.0 },
        ] {
            let f = generate_builtin(&b, g).unwrap();
            let sum: f64 = f.values().iter().map(|v| v.re).sum::<f64>() * cell;
            let exact = builtin_mass(&b, &g).unwrap();
            assert!((sum - exact).abs() < 1e-6, "{b:?}: {sum} vs {exact}");
        }
    }

    #[test]
    fn bump_integral_value() {
        let v = bump_integral();
        assert!((v - 0.443_993_816_168_079_4).abs() < 1e-13, "{v}");
    }

    #[test]
    fn unknown_builtin_is_config_error() {
        let text = r#"{"input": {"builtin": {"name": "sawtooth"}}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig { command: Some(Command::Apply), ..RunConfig::default() };
        assert!(cfg.validate().is_ok());
        cfg.s = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.s = 0.5;
        cfg.input = Some(InputSource::Csv("/nonexistent/field.csv".into()));
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.command = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn flags_override_config() {
        let args = Args::try_parse_from(["fracheat", "apply", "--s", "0.3", "--nx", "16", "--method", "singular"]).unwrap();
        let cfg = args.resolve().unwrap();
        assert_eq!((cfg.s, cfg.grid.nx, cfg.method), (0.3, 16, Method::Singular));
    }

    #[test]
    fn apply_spectral_of_constant_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.csv");
        let cfg = RunConfig {
            command: Some(Command::Apply),
            grid: GridSpec { nx: 16, nt: 8, ..GridSpec::default() },
            input: Some(InputSource::Builtin(Builtin::Constant { c: 3.0 })),
            output: Some(out.clone()),
            ..RunConfig::default()
        };
        run(&cfg).unwrap();
        let f = Field::read_csv(BufReader::new(File::open(&out).unwrap())).unwrap();
        assert!(f.sup_norm() < 1e-12);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("# provenance {"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Solver { iterations: 1, residual: 1.0 }), 3);
        assert_eq!(main_with_args(["fracheat", "apply", "--s", "1.5"]), 2);
        assert_eq!(main_with_args(["fracheat", "bogus"]), 2);
    }
}
