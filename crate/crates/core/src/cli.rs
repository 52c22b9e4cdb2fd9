//! Run configurations and the `run`, `sweep` and `verify` drivers used by
//! the `attractor` binary. Each driver writes its artifacts into an output
//! directory and returns a summary the caller turns into an exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attractor::{solve_attractor_with_info, AttractorError, Certificate, DynamicalSystem, SolveInfo, SolveParams, SystemKind};
use crate::conic::{SolveStatus, SolverSettings};
use crate::poly::parse_polynomial;
use crate::semialg::SemialgebraicSet;
use crate::verify::{
    attractor_samples, check_containment, check_interior, check_invariance, check_residuals, estimate_volume,
    estimate_volume_with, SampleSpec, VerificationReport, VolumeEstimate, DEFAULT_STEP,
};

pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const GRID_FILE: &str = "grid.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_TABLE_FILE: &str = "sweep.csv";
pub const SWEEP_JSON_FILE: &str = "sweep.json";
pub const INTERSECTION_GRID_FILE: &str = "intersection_grid.csv";

/// Grids larger than this many points are rejected.
const MAX_GRID_POINTS: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum CliError {
    /// A configuration problem at the given field path.
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Attractor(#[from] AttractorError),
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.into(), message: message.into() }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_error(path))
}

/// A single value or a list, e.g. `"degree": 8` or `"degree": [4, 6, 8]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

/// The constraint set `X`. `ball_radius` is the radius `R` of a ball
/// containing `X`; it defaults to the farthest corner or the outer radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum SetConfig {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ball_radius: Option<f64>,
    },
    Ball {
        radius: f64,
    },
    Annulus {
        inner: f64,
        outer: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ball_radius: Option<f64>,
    },
    /// `{x : g_i(x) ≥ 0}` for the given polynomial strings.
    Generic {
        inequalities: Vec<String>,
        ball_radius: f64,
    },
}

impl SetConfig {
    pub fn build(&self, nvars: usize) -> Result<SemialgebraicSet, CliError> {
        let set = match self {
            SetConfig::Box { lower, upper, ball_radius } => {
                for (name, v) in [("lower", lower), ("upper", upper)] {
                    if v.len() != nvars {
                        return Err(config_error(format!("set.{name}"), format!("expected {nvars} bounds, found {}", v.len())));
                    }
                }
                let corner = lower.iter().zip(upper).map(|(a, b)| a.abs().max(b.abs()).powi(2)).sum::<f64>().sqrt();
                SemialgebraicSet::boxed(lower.clone(), upper.clone(), ball_radius.unwrap_or(corner))
            }
            SetConfig::Ball { radius } => SemialgebraicSet::ball(nvars, *radius),
            SetConfig::Annulus { inner, outer, ball_radius } => {
                SemialgebraicSet::annulus(nvars, *inner, *outer, ball_radius.unwrap_or(*outer))
            }
            SetConfig::Generic { inequalities, ball_radius } => {
                let gs = inequalities
                    .iter()
                    .enumerate()
                    .map(|(i, s)| parse_polynomial(s, nvars).map_err(|e| config_error(format!("set.inequalities[{i}]"), e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                SemialgebraicSet::generic(nvars, gs, *ball_radius)
            }
        };
        set.map_err(|e| config_error("set", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub verbosity: u8,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverConfig { max_iterations: s.max_iterations, feas_tol: s.feas_tol, gap_tol: s.gap_tol, verbosity: s.verbosity }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            max_iterations: self.max_iterations,
            feas_tol: self.feas_tol,
            gap_tol: self.gap_tol,
            verbosity: self.verbosity,
        }
    }
}

/// Sample counts and horizons of the checks run after a solve. Unset
/// horizons default by mode: transient 30 time units or 1000 steps,
/// invariance horizon 20 time units or 100 steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationConfig {
    pub seed: u64,
    pub residual_samples: usize,
    pub attractor_initial: usize,
    /// Defaults to 2000 for flows and 10000 for maps.
    pub attractor_keep: Option<usize>,
    pub transient: Option<f64>,
    pub spacing: Option<f64>,
    pub step: f64,
    pub invariance_points: usize,
    pub invariance_horizon: Option<f64>,
    pub volume_samples: usize,
    pub interior_samples: usize,
    /// Width of the boundary shell for the interior check.
    pub interior_shell: Option<f64>,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            seed: 0,
            residual_samples: 100_000,
            attractor_initial: 200,
            attractor_keep: None,
            transient: None,
            spacing: None,
            step: DEFAULT_STEP,
            invariance_points: 500,
            invariance_horizon: None,
            volume_samples: 200_000,
            interior_samples: 20_000,
            interior_shell: None,
        }
    }
}

impl VerificationConfig {
    pub fn sample_spec(&self, kind: SystemKind) -> SampleSpec {
        let base = match kind {
            SystemKind::Continuous => SampleSpec::continuous(self.attractor_initial, self.attractor_keep.unwrap_or(2000)),
            SystemKind::Discrete => SampleSpec::discrete(self.attractor_initial, self.attractor_keep.unwrap_or(10_000)),
        };
        SampleSpec {
            transient: self.transient.unwrap_or(base.transient),
            spacing: self.spacing.unwrap_or(base.spacing),
            step: self.step,
            ..base
        }
    }

    pub fn horizon(&self, kind: SystemKind) -> f64 {
        self.invariance_horizon.unwrap_or(match kind {
            SystemKind::Continuous => 20.0,
            SystemKind::Discrete => 100.0,
        })
    }

    fn validate(&self) -> Result<(), CliError> {
        let counts = [
            ("residual_samples", self.residual_samples),
            ("attractor_initial", self.attractor_initial),
            ("attractor_keep", self.attractor_keep.unwrap_or(1)),
            ("invariance_points", self.invariance_points),
            ("volume_samples", self.volume_samples),
            ("interior_samples", self.interior_samples),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(config_error(format!("verification.{name}"), "must be positive"));
            }
        }
        if !(self.step > 0.0) {
            return Err(config_error("verification.step", "must be positive"));
        }
        let optional = [
            ("transient", self.transient, true),
            ("spacing", self.spacing, false),
            ("invariance_horizon", self.invariance_horizon, true),
            ("interior_shell", self.interior_shell, false),
        ];
        for (name, v, zero_ok) in optional {
            if let Some(x) = v {
                if !(x > 0.0 || zero_ok && x == 0.0) || !x.is_finite() {
                    return Err(config_error(format!("verification.{name}"), format!("invalid value {x}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis over the bounding box of `X`.
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { resolution: 400 }
    }
}

/// Everything needed to solve and verify one system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: SystemKind,
    pub nvars: usize,
    pub dynamics: Vec<String>,
    pub set: SetConfig,
    pub degree: OneOrMany<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_scale")]
    pub epsilon_scale: f64,
    #[serde(default = "default_rescale")]
    pub rescale: bool,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// In a sweep, also write the membership grid of the intersection of all
    /// certificates.
    #[serde(default)]
    pub intersect: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_scale() -> f64 {
    1.0
}

fn default_rescale() -> bool {
    true
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epsilon_scale: Option<f64>,
    pub degree: Option<u32>,
}

impl RunConfig {
    /// Parses and validates a JSON configuration. Errors name the offending
    /// field, e.g. `set.inner: invalid type`.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(if path == "." { "config".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.verification.seed = s;
        }
        if let Some(r) = o.epsilon_scale {
            self.epsilon_scale = r;
        }
        if let Some(k) = o.degree {
            self.degree = OneOrMany::One(k);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.nvars == 0 {
            return Err(config_error("nvars", "must be at least 1"));
        }
        if self.dynamics.len() != self.nvars {
            return Err(config_error("dynamics", format!("expected {} components, found {}", self.nvars, self.dynamics.len())));
        }
        self.system()?;
        self.set.build(self.nvars)?;
        let degrees = self.degree.values();
        if degrees.is_empty() {
            return Err(config_error("degree", "empty list"));
        }
        for (i, &k) in degrees.iter().enumerate() {
            if k < 2 {
                return Err(config_error(list_path("degree", &self.degree, i), format!("must be at least 2, got {k}")));
            }
        }
        match self.mode {
            SystemKind::Continuous => {
                for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma)] {
                    if v.is_some() {
                        return Err(config_error(name, "only valid when mode is discrete"));
                    }
                }
                let Some(beta) = &self.beta else {
                    return Err(config_error("beta", "required when mode is continuous"));
                };
                let values = beta.values();
                if values.is_empty() {
                    return Err(config_error("beta", "empty list"));
                }
                for (i, &b) in values.iter().enumerate() {
                    if !(b > 0.0 && b.is_finite()) {
                        return Err(config_error(list_path("beta", beta, i), format!("must be positive, got {b}")));
                    }
                }
            }
            SystemKind::Discrete => {
                if self.beta.is_some() {
                    return Err(config_error("beta", "only valid when mode is continuous"));
                }
                for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma)] {
                    match v {
                        None => return Err(config_error(name, "required when mode is discrete")),
                        Some(x) if !(x > 0.0 && x < 1.0) => return Err(config_error(name, format!("must lie in (0, 1), got {x}"))),
                        Some(_) => {}
                    }
                }
            }
        }
        if !(self.epsilon_scale > 0.0 && self.epsilon_scale.is_finite()) {
            return Err(config_error("epsilon_scale", format!("must be positive, got {}", self.epsilon_scale)));
        }
        self.solver.settings().validate().map_err(|e| config_error("solver", e.to_string()))?;
        self.verification.validate()?;
        let points = (self.grid.resolution as f64).powi(self.nvars as i32);
        if self.grid.resolution < 2 || points > MAX_GRID_POINTS as f64 {
            return Err(config_error(
                "grid.resolution",
                format!("need at least 2 points per axis and at most {MAX_GRID_POINTS} in total"),
            ));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<DynamicalSystem, CliError> {
        let f = self
            .dynamics
            .iter()
            .enumerate()
            .map(|(i, s)| parse_polynomial(s, self.nvars).map_err(|e| config_error(format!("dynamics[{i}]"), e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let map = crate::poly::PolynomialMap::new(f).map_err(|e| config_error("dynamics", e.to_string()))?;
        DynamicalSystem::new(self.mode, map).map_err(|e| config_error("dynamics", e.to_string()))
    }

    pub fn constraint_set(&self) -> Result<SemialgebraicSet, CliError> {
        self.set.build(self.nvars)
    }

    /// `(degree, β)` pairs to solve; `β` is `None` for maps.
    pub fn cases(&self) -> Vec<(u32, Option<f64>)> {
        let betas: Vec<Option<f64>> = match &self.beta {
            Some(b) => b.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        self.degree.values().into_iter().flat_map(|k| betas.iter().map(move |b| (k, *b))).collect()
    }

    pub fn params(&self, degree: u32, beta: Option<f64>) -> SolveParams {
        let p = match self.mode {
            SystemKind::Continuous => SolveParams::continuous(degree, beta.expect("validated")),
            SystemKind::Discrete => SolveParams::discrete(degree, self.alpha.expect("validated"), self.gamma.expect("validated")),
        };
        p.with_epsilon_scale(self.epsilon_scale).with_rescale(self.rescale)
    }

    fn single_case(&self) -> Result<(u32, Option<f64>), CliError> {
        match self.cases().as_slice() {
            [one] => Ok(*one),
            _ => {
                let field = if self.degree.values().len() > 1 { "degree" } else { "beta" };
                Err(config_error(field, "run takes a single value; use sweep for lists"))
            }
        }
    }
}

fn list_path<T>(name: &str, v: &OneOrMany<T>, i: usize) -> String {
    match v {
        OneOrMany::One(_) => name.into(),
        OneOrMany::Many(_) => format!("{name}[{i}]"),
    }
}

/// Grid points over the bounding box of `X`, endpoints included, with the
/// last coordinate varying fastest.
pub fn grid_points(set: &SemialgebraicSet, resolution: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = set.bounding_box();
    let n = lo.len();
    let total = resolution.pow(n as u32);
    let axis = |i: usize, j: usize| lo[i] + (hi[i] - lo[i]) * j as f64 / (resolution - 1) as f64;
    (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                x[i] = axis(i, idx % resolution);
                idx /= resolution;
            }
            x
        })
        .collect()
}

fn header(nvars: usize, tail: &str) -> String {
    let mut h: Vec<String> = (1..=nvars).map(|i| format!("x{i}")).collect();
    h.push(tail.into());
    h.join(",") + "\n"
}

fn coordinates(line: &mut String, x: &[f64]) {
    for c in x {
        let _ = write!(line, "{c},");
    }
}

/// CSV with header `x1,...,xn,J,v,w,in_K`, one row per grid point; also
/// returns the number of rows in `K`.
pub fn grid_csv(cert: &Certificate, resolution: usize) -> (String, usize) {
    let pts = grid_points(&cert.set, resolution);
    let rows: Vec<(String, bool)> = pts
        .par_iter()
        .map(|x| {
            let inside = cert.member_unchecked(x, None);
            let mut line = String::new();
            coordinates(&mut line, x);
            let _ = writeln!(line, "{},{},{},{}", cert.j.eval(x), cert.v.eval(x), cert.w.eval(x), inside as u8);
            (line, inside)
        })
        .collect();
    let count = rows.iter().filter(|r| r.1).count();
    let mut out = header(cert.nvars(), "J,v,w,in_K");
    for (line, _) in rows {
        out.push_str(&line);
    }
    (out, count)
}

/// CSV with header `x1,...,xn,in_K` marking membership in every
/// certificate; also returns the number of rows in the intersection.
pub fn intersection_grid_csv(certs: &[&Certificate], set: &SemialgebraicSet, resolution: usize) -> (String, usize) {
    let pts = grid_points(set, resolution);
    let rows: Vec<(String, bool)> = pts
        .par_iter()
        .map(|x| {
            let inside = certs.iter().all(|c| c.member_unchecked(x, None));
            let mut line = String::new();
            coordinates(&mut line, x);
            let _ = writeln!(line, "{}", inside as u8);
            (line, inside)
        })
        .collect();
    let count = rows.iter().filter(|r| r.1).count();
    let mut out = header(set.nvars(), "in_K");
    for (line, _) in rows {
        out.push_str(&line);
    }
    (out, count)
}

/// Runs every check of `cfg` on `cert` for the system `sys` on `set`.
/// Failing checks are recorded in `errors` rather than aborting.
pub fn verify_certificate(cert: &Certificate, sys: &DynamicalSystem, set: &SemialgebraicSet, cfg: &VerificationConfig) -> VerificationReport {
    let mut report = VerificationReport::for_certificate(cert, None);
    let seed = cfg.seed;
    let record = report_error;
    let mut errors = Vec::new();
    match check_residuals(cert, set, cfg.residual_samples, seed) {
        Ok(r) => report.residuals = Some(r),
        Err(e) => errors.push(record("residuals", &e)),
    }
    match attractor_samples(sys, set, &cfg.sample_spec(sys.kind()), seed.wrapping_add(1))
        .map_err(|e| e.to_string())
        .and_then(|pts| check_containment(cert, &pts, None).map_err(|e| e.to_string()))
    {
        Ok(c) => report.containment = Some(c),
        Err(e) => errors.push(record("containment", &e)),
    }
    match check_invariance(cert, sys, cfg.invariance_points, cfg.horizon(sys.kind()), cfg.step, seed.wrapping_add(2), None) {
        Ok(i) => report.invariance = Some(i),
        Err(e) => errors.push(record("invariance", &e)),
    }
    match estimate_volume(cert, set, cfg.volume_samples, seed.wrapping_add(3), None) {
        Ok(v) => report.volume = Some(v),
        Err(e) => errors.push(record("volume", &e)),
    }
    match check_interior(cert, set, cfg.interior_samples, seed.wrapping_add(4), cfg.interior_shell, None) {
        Ok(i) => report.interior = Some(i),
        Err(e) => errors.push(record("interior", &e)),
    }
    report.errors = errors;
    report
}

fn report_error(name: &str, e: &dyn std::fmt::Display) -> String {
    format!("{name}: {e}")
}

/// Figures of merit of one run, written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: SystemKind,
    pub degree: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub epsilon_scale: f64,
    /// Solver status, or `failed` when no certificate was produced.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_k_stderr: Option<f64>,
    pub volume_x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_in_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance_violations: Option<usize>,
    pub verification_passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.8}"));
        let mut s = String::new();
        let _ = writeln!(s, "{} ({:?}), degree {}", self.name.as_deref().unwrap_or("system"), self.mode, self.degree);
        let _ = writeln!(s, "  status {}, d_k {}, epsilon {}", self.status, opt(self.d_k), opt(self.epsilon));
        let _ = writeln!(s, "  volume of K {} ± {} of {:.6}", opt(self.volume_k), opt(self.volume_k_stderr), self.volume_x);
        if let Some(e) = &self.error {
            let _ = writeln!(s, "  error: {e}");
        }
        s
    }
}

/// Result of [`run`]. The process should exit with success iff
/// [`RunOutcome::success`] holds.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub certificate: Option<Certificate>,
    pub info: Option<SolveInfo>,
    pub report: VerificationReport,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// Solver optimal and no invariance violation.
    pub fn success(&self) -> bool {
        self.info.as_ref().is_some_and(|i| i.status == SolveStatus::Optimal)
            && self.report.invariance.as_ref().is_some_and(|i| i.violations == 0)
    }
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_error(out))
}

fn volume_of(set: &SemialgebraicSet, cfg: &RunConfig) -> f64 {
    set.analytic_volume()
        .or_else(|| estimate_volume_with(set, cfg.verification.volume_samples.max(1000), cfg.verification.seed, |_| true).ok().map(|v| v.set_volume))
        .unwrap_or(f64::NAN)
}

/// Solves, verifies and writes `certificate.json`, `grid.csv`,
/// `report.txt`, `report.json` and `summary.json` into `out`. A failed solve
/// still writes the report and summary.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, CliError> {
    let (degree, beta) = cfg.single_case()?;
    let sys = cfg.system()?;
    let set = cfg.constraint_set()?;
    let params = cfg.params(degree, beta);
    create_dir(out)?;
    let mut summary = Summary {
        name: cfg.name.clone(),
        mode: cfg.mode,
        degree,
        beta,
        epsilon_scale: cfg.epsilon_scale,
        status: "failed".into(),
        iterations: None,
        d_k: None,
        epsilon: None,
        volume_k: None,
        volume_k_stderr: None,
        volume_x: volume_of(&set, cfg),
        grid_in_k: None,
        invariance_violations: None,
        verification_passed: false,
        error: None,
    };
    let mut files = Vec::new();
    let (certificate, info, report) = match solve_attractor_with_info(&sys, &set, &params, &cfg.solver.settings()) {
        Ok((cert, info)) => {
            let path = out.join(CERTIFICATE_FILE);
            cert.write(&path)?;
            files.push(path);
            let (grid, count) = grid_csv(&cert, cfg.grid.resolution);
            let path = out.join(GRID_FILE);
            write_file(&path, &grid)?;
            files.push(path);
            let report = verify_certificate(&cert, &sys, &set, &cfg.verification);
            summary.status = info.status.to_string();
            summary.iterations = Some(info.iterations);
            summary.d_k = Some(cert.d_k);
            summary.epsilon = Some(cert.epsilon);
            summary.volume_k = report.volume.as_ref().map(|v| v.volume);
            summary.volume_k_stderr = report.volume.as_ref().map(|v| v.stderr);
            summary.grid_in_k = Some(count);
            summary.invariance_violations = report.invariance.as_ref().map(|i| i.violations);
            summary.verification_passed = report.passed();
            (Some(cert), Some(info), report)
        }
        Err(e) => {
            summary.error = Some(e.to_string());
            let report = VerificationReport { errors: vec![report_error("solve", &e)], epsilon_scale: cfg.epsilon_scale, ..Default::default() };
            (None, None, report)
        }
    };
    for (name, text) in [(REPORT_TEXT_FILE, report.to_text()), (REPORT_JSON_FILE, report.to_json())] {
        let path = out.join(name);
        write_file(&path, &text)?;
        files.push(path);
    }
    let path = out.join(SUMMARY_FILE);
    write_file(&path, &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    files.push(path);
    Ok(RunOutcome { certificate, info, report, summary, files })
}

/// Re-checks the certificate at `certificate` against the system and set of
/// `cfg`, writing `report.txt` and `report.json` into `out`.
pub fn verify(cfg: &RunConfig, certificate: &Path, out: &Path) -> Result<VerificationReport, CliError> {
    let cert = Certificate::read(certificate)?;
    let sys = cfg.system()?;
    let set = cfg.constraint_set()?;
    if cert.nvars() != cfg.nvars {
        return Err(config_error("nvars", format!("certificate has {} variables, config {}", cert.nvars(), cfg.nvars)));
    }
    if cert.kind != cfg.mode {
        return Err(config_error("mode", format!("certificate is for a {:?} system", cert.kind)));
    }
    let report = verify_certificate(&cert, &sys, &set, &cfg.verification);
    create_dir(out)?;
    write_file(&out.join(REPORT_TEXT_FILE), &report.to_text())?;
    write_file(&out.join(REPORT_JSON_FILE), &report.to_json())?;
    Ok(report)
}

/// One row of a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub degree: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<VolumeEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_in_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSummary {
    pub members: usize,
    pub grid_in_k: usize,
    pub volume: VolumeEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intersection: Option<IntersectionSummary>,
}

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from("degree,beta,status,d_k,epsilon,volume,volume_stderr,grid_in_K,error\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.degree,
                opt(r.beta),
                r.status,
                opt(r.d_k),
                opt(r.epsilon),
                opt(r.volume.as_ref().map(|v| v.volume)),
                opt(r.volume.as_ref().map(|v| v.stderr)),
                r.grid_in_k.map_or(String::new(), |c| c.to_string()),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        s
    }

    pub fn success(&self) -> bool {
        self.rows.iter().all(|r| r.error.is_none())
    }
}

fn case_label(degree: u32, beta: Option<f64>) -> String {
    match beta {
        Some(b) => format!("k{degree}_beta{b}"),
        None => format!("k{degree}"),
    }
}

/// Solves every `(degree, β)` combination of `cfg`. Each certificate goes
/// to `out/<label>/certificate.json`; the table goes to `sweep.csv` and
/// `sweep.json`. With `intersect`, the intersection of all certificates is
/// gridded into `intersection_grid.csv`. Failed rows are recorded and the
/// sweep continues.
pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<SweepOutcome, CliError> {
    let cases = cfg.cases();
    if cases.len() < 2 {
        return Err(config_error("degree", "sweep needs at least two values of degree or beta"));
    }
    let sys = cfg.system()?;
    let set = cfg.constraint_set()?;
    create_dir(out)?;
    let settings = cfg.solver.settings();
    let solved: Vec<(SweepRow, Option<Certificate>)> = cases
        .par_iter()
        .map(|&(degree, beta)| {
            let mut row = SweepRow {
                degree,
                beta,
                status: "failed".into(),
                d_k: None,
                epsilon: None,
                volume: None,
                grid_in_k: None,
                error: None,
            };
            match solve_attractor_with_info(&sys, &set, &cfg.params(degree, beta), &settings) {
                Ok((cert, info)) => {
                    row.status = info.status.to_string();
                    row.d_k = Some(cert.d_k);
                    row.epsilon = Some(cert.epsilon);
                    match estimate_volume(&cert, &set, cfg.verification.volume_samples, cfg.verification.seed, None) {
                        Ok(v) => row.volume = Some(v),
                        Err(e) => row.error = Some(e.to_string()),
                    }
                    (row, Some(cert))
                }
                Err(e) => {
                    row.error = Some(e.to_string());
                    (row, None)
                }
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(solved.len());
    let mut certs = Vec::new();
    for (mut row, cert) in solved {
        if let Some(cert) = cert {
            let dir = out.join(case_label(row.degree, row.beta));
            create_dir(&dir)?;
            cert.write(&dir.join(CERTIFICATE_FILE))?;
            if cfg.intersect {
                row.grid_in_k = Some(grid_points(&set, cfg.grid.resolution).iter().filter(|x| cert.member_unchecked(x, None)).count());
            }
            certs.push(cert);
        }
        rows.push(row);
    }
    let intersection = if cfg.intersect && !certs.is_empty() {
        let refs: Vec<&Certificate> = certs.iter().collect();
        let (grid, count) = intersection_grid_csv(&refs, &set, cfg.grid.resolution);
        write_file(&out.join(INTERSECTION_GRID_FILE), &grid)?;
        let volume = estimate_volume_with(&set, cfg.verification.volume_samples, cfg.verification.seed, |x| {
            refs.iter().all(|c| c.member_unchecked(x, None))
        })
        .map_err(|e| config_error("verification.volume_samples", e.to_string()))?;
        Some(IntersectionSummary { members: refs.len(), grid_in_k: count, volume })
    } else {
        None
    };
    let outcome = SweepOutcome { rows, intersection };
    write_file(&out.join(SWEEP_TABLE_FILE), &outcome.to_csv())?;
    write_file(&out.join(SWEEP_JSON_FILE), &(serde_json::to_string_pretty(&outcome).expect("sweep serializes") + "\n"))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str = r#"{
        "name": "decay",
        "mode": "continuous",
        "nvars": 2,
        "dynamics": ["-x1", "-x2"],
        "set": {"shape": "ball", "radius": 1.0},
        "degree": 4,
        "beta": 0.5,
        "verification": {"residual_samples": 2000, "invariance_points": 40, "volume_samples": 4000,
                         "interior_samples": 500, "attractor_initial": 20, "attractor_keep": 100,
                         "invariance_horizon": 5.0},
        "grid": {"resolution": 21}
    }"#;

    fn err_path(text: &str) -> String {
        match RunConfig::from_json(text) {
            Err(CliError::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_and_defaults() {
        let c = RunConfig::from_json(LINEAR).unwrap();
        assert_eq!(c.cases(), vec![(4, Some(0.5))]);
        assert_eq!(c.epsilon_scale, 1.0);
        assert!(c.rescale);
        assert_eq!(c.verification.seed, 0);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn errors_carry_field_paths() {
        let alpha = LINEAR.replace(r#""beta": 0.5,"#, r#""beta": 0.5, "alpha": 0.1,"#);
        assert_eq!(err_path(&alpha), "alpha");
        assert_eq!(err_path(&LINEAR.replace(r#""radius": 1.0"#, r#""radius": "one""#)), "set");
        assert_eq!(err_path(&LINEAR.replace(r#""residual_samples": 2000"#, r#""residual_samples": -1"#)), "verification.residual_samples");
        assert_eq!(err_path(&LINEAR.replace(r#""residual_samples": 2000"#, r#""residual_sample": 2"#)), "verification.residual_sample");
        assert_eq!(err_path(&LINEAR.replace(r#""-x2""#, r#""-x3""#)), "dynamics[1]");
        assert_eq!(err_path(&LINEAR.replace(r#"["-x1", "-x2"]"#, r#"["-x1"]"#)), "dynamics");
        assert_eq!(err_path(&LINEAR.replace(r#""degree": 4"#, r#""degree": [4, 1]"#)), "degree[1]");
        assert_eq!(err_path(&LINEAR.replace(r#""beta": 0.5,"#, "")), "beta");
        assert_eq!(err_path(&LINEAR.replace(r#""resolution": 21"#, r#""resolution": 1"#)), "grid.resolution");
    }

    #[test]
    fn discrete_requires_alpha_and_gamma() {
        let d = LINEAR.replace(r#""mode": "continuous""#, r#""mode": "discrete""#);
        assert_eq!(err_path(&d), "beta");
        let d = d.replace(r#""beta": 0.5,"#, r#""alpha": 0.1,"#);
        assert_eq!(err_path(&d), "gamma");
        let d = d.replace(r#""alpha": 0.1,"#, r#""alpha": 0.1, "gamma": 1.5,"#);
        assert_eq!(err_path(&d), "gamma");
    }

    #[test]
    fn overrides_apply() {
        let mut c = RunConfig::from_json(LINEAR).unwrap();
        c.apply(&Overrides { seed: Some(7), epsilon_scale: Some(8.0), degree: Some(6) }).unwrap();
        assert_eq!((c.verification.seed, c.epsilon_scale, c.cases()), (7, 8.0, vec![(6, Some(0.5))]));
        assert!(c.apply(&Overrides { epsilon_scale: Some(-1.0), ..Default::default() }).is_err());
    }

    #[test]
    fn box_radius_defaults_to_far_corner() {
        let s = SetConfig::Box { lower: vec![0.0, -3.0], upper: vec![1.0, 1.0], ball_radius: None }.build(2).unwrap();
        assert!((s.ball_radius() - 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_layout() {
        let set = SemialgebraicSet::boxed(vec![0.0, -1.0], vec![1.0, 1.0], 2.0).unwrap();
        let g = grid_points(&set, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, -1.0]);
        assert_eq!(g[1], vec![0.0, 0.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }

    #[test]
    fn run_writes_artifacts_and_sweep_needs_two_values() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::from_json(LINEAR).unwrap();
        let o = run(&c, dir.path()).unwrap();
        for f in [CERTIFICATE_FILE, GRID_FILE, REPORT_TEXT_FILE, REPORT_JSON_FILE, SUMMARY_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(o.success(), "{}", o.report.to_text());
        let grid = fs::read_to_string(dir.path().join(GRID_FILE)).unwrap();
        assert!(grid.starts_with("x1,x2,J,v,w,in_K\n"));
        assert_eq!(grid.lines().count(), 1 + 21 * 21);
        assert!(matches!(sweep(&c, dir.path()), Err(CliError::Config { .. })));
    }
}
