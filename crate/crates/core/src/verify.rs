//! Simulation-based checks of a certificate: attractor samples from long
//! trajectories, containment in `K`, positive invariance of `{J ≤ ε}`,
//! sampled constraint residuals, interior shell test and a Monte Carlo
//! estimate of `λ(K)`.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attractor::{constraint_names, AttractorError, Certificate, DynamicalSystem, SystemKind};
use crate::poly::PolynomialMap;
use crate::semialg::{self, chunk_rng, moments, rejection_sample, RejectionLimits, SemialgebraicSet, SetError};

/// States whose norm exceeds this are treated as blown up.
pub const DIVERGENCE_NORM: f64 = 1e8;
/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 0.01;
/// Relative slack of the invariance check, `1e-4 (1 + ε)`.
pub const INVARIANCE_TOLERANCE: f64 = 1e-4;
/// Relative flag level of the residual scan, `1e-6 (1 + max |coef|)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory diverged at t = {time} (|x| > {DIVERGENCE_NORM:e})")]
    Divergence { time: f64 },
    #[error("no trajectory stayed in X through the transient ({initial} initial points)")]
    NoSurvivors { initial: usize },
    #[error("could not sample K: {0}")]
    EmptyK(SetError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Attractor(#[from] AttractorError),
    #[error(transparent)]
    Set(#[from] SetError),
}

/// Sampled path of a flow or orbit of a map; `times` are step indices for
/// maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectories hold at least the initial state")
    }
}

fn check_dims(f: &PolynomialMap, x0: &[f64]) -> Result<(), VerifyError> {
    if !f.is_square() || f.len() != x0.len() {
        return Err(VerifyError::Dimension { expected: f.len(), found: x0.len() });
    }
    Ok(())
}

fn diverged(x: &[f64]) -> bool {
    x.iter().any(|v| !v.is_finite()) || x.iter().map(|v| v * v).sum::<f64>() > DIVERGENCE_NORM * DIVERGENCE_NORM
}

/// Number of uniform steps covering `[0, t]` with step at most `h`.
fn step_count(t: f64, h: f64) -> usize {
    let r = t / h;
    let n = if (r - r.round()).abs() <= 1e-9 * r.max(1.0) { r.round() } else { r.ceil() };
    n as usize
}

/// Classical RK4 integrator with scratch buffers.
struct Rk4<'a> {
    f: &'a PolynomialMap,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(f: &'a PolynomialMap) -> Self {
        let n = f.len();
        Rk4 { f, k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]], tmp: vec![0.0; n] }
    }

    fn step(&mut self, x: &mut [f64], h: f64) {
        let n = x.len();
        let [k1, k2, k3, k4] = &mut self.k;
        self.f.eval_into(x, k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        self.f.eval_into(&self.tmp, k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        self.f.eval_into(&self.tmp, k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * k3[i];
        }
        self.f.eval_into(&self.tmp, k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Advances `x` by `steps` steps of the flow (RK4 with step `h`) or of the
/// map, calling `visit(t, x)` after every step; stops early when `visit`
/// returns false. Returns the time reached, or a divergence error.
fn advance<F>(sys: &DynamicalSystem, x: &mut [f64], t0: f64, steps: usize, h: f64, mut visit: F) -> Result<f64, VerifyError>
where
    F: FnMut(f64, &[f64]) -> bool,
{
    let mut t = t0;
    match sys.kind() {
        SystemKind::Continuous => {
            let mut rk = Rk4::new(sys.f());
            for i in 1..=steps {
                rk.step(x, h);
                t = t0 + i as f64 * h;
                if diverged(x) {
                    return Err(VerifyError::Divergence { time: t });
                }
                if !visit(t, x) {
                    break;
                }
            }
        }
        SystemKind::Discrete => {
            let mut next = vec![0.0; x.len()];
            for i in 1..=steps {
                sys.f().eval_into(x, &mut next);
                x.copy_from_slice(&next);
                t = t0 + i as f64;
                if diverged(x) {
                    return Err(VerifyError::Divergence { time: t });
                }
                if !visit(t, x) {
                    break;
                }
            }
        }
    }
    Ok(t)
}

/// Fixed-step RK4 solution of `ẋ = f(x)`, `x(0) = x0` on `[0, t]`. The step
/// is shrunk to `t / ceil(t / h)` so that it is uniform and ends at `t`.
pub fn simulate_ode(f: &PolynomialMap, x0: &[f64], t: f64, h: f64) -> Result<Trajectory, VerifyError> {
    check_dims(f, x0)?;
    if !(h > 0.0) || !(t >= 0.0) || !t.is_finite() {
        return Err(VerifyError::InvalidArgument(format!("need h > 0 and finite t >= 0, got h = {h}, t = {t}")));
    }
    let steps = step_count(t, h);
    let h = if steps > 0 { t / steps as f64 } else { h };
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(f);
    for i in 1..=steps {
        rk.step(&mut x, h);
        let ti = if i == steps { t } else { i as f64 * h };
        if diverged(&x) {
            return Err(VerifyError::Divergence { time: ti });
        }
        times.push(ti);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Orbit `x0, f(x0), …, f^N(x0)`.
pub fn iterate_map(f: &PolynomialMap, x0: &[f64], steps: usize) -> Result<Trajectory, VerifyError> {
    check_dims(f, x0)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    for i in 1..=steps {
        x = f.eval(&x);
        if diverged(&x) {
            return Err(VerifyError::Divergence { time: i as f64 });
        }
        states.push(x.clone());
    }
    Ok(Trajectory { times: (0..=steps).map(|i| i as f64).collect(), states })
}

/// Trajectory of either kind: `horizon` is a duration for flows and a step
/// count for maps.
pub fn simulate(sys: &DynamicalSystem, x0: &[f64], horizon: f64, h: f64) -> Result<Trajectory, VerifyError> {
    match sys.kind() {
        SystemKind::Continuous => simulate_ode(sys.f(), x0, horizon, h),
        SystemKind::Discrete => iterate_map(sys.f(), x0, horizon.max(0.0).round() as usize),
    }
}

/// How attractor samples are generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    /// Initial conditions drawn uniformly from `X`.
    pub n_init: usize,
    /// Transient duration (flows) or number of steps (maps).
    pub transient: f64,
    /// Number of post-transient points to return.
    pub keep: usize,
    /// RK4 step.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Spacing between recorded points after the transient (time units for
    /// flows, steps for maps).
    #[serde(default = "default_spacing")]
    pub spacing: f64,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn default_spacing() -> f64 {
    0.1
}

impl SampleSpec {
    /// Defaults used for flows: transient 30, step 0.01.
    pub fn continuous(n_init: usize, keep: usize) -> Self {
        SampleSpec { n_init, transient: 30.0, keep, step: DEFAULT_STEP, spacing: 0.1 }
    }

    /// Defaults used for maps: 1000 transient steps, every iterate recorded.
    pub fn discrete(n_init: usize, keep: usize) -> Self {
        SampleSpec { n_init, transient: 1000.0, keep, step: DEFAULT_STEP, spacing: 1.0 }
    }

    fn steps(&self, kind: SystemKind, duration: f64) -> usize {
        match kind {
            SystemKind::Continuous => step_count(duration, self.step),
            SystemKind::Discrete => duration.max(0.0).round() as usize,
        }
    }
}

/// Follows `x` for `steps` steps; `None` if it leaves `X` or diverges.
fn stay_in_set(sys: &DynamicalSystem, set: &SemialgebraicSet, x: &mut [f64], steps: usize, h: f64) -> Option<()> {
    let mut inside = true;
    advance(sys, x, 0.0, steps, h, |_, y| {
        inside = set.contains_unchecked(y);
        inside
    })
    .ok()?;
    inside.then_some(())
}

/// Post-transient states of trajectories started uniformly in `X`.
///
/// For flows, trajectories that leave `X` at any time are dropped, since they
/// do not start in the maximal positively invariant set. Each survivor
/// contributes `ceil(keep / survivors)` points spaced by `spec.spacing`.
///
/// Maps may jump out of `X` and back, and an attractor only partly inside `X`
/// would otherwise yield no samples at all. Orbits of maps are therefore
/// iterated freely, only diverging ones are dropped, and post-transient
/// iterates that land in `X` are kept.
///
/// The result is truncated to `keep`. Deterministic for a fixed seed.
pub fn attractor_samples(
    sys: &DynamicalSystem,
    set: &SemialgebraicSet,
    spec: &SampleSpec,
    seed: u64,
) -> Result<Vec<Vec<f64>>, VerifyError> {
    if sys.nvars() != set.nvars() {
        return Err(VerifyError::Dimension { expected: set.nvars(), found: sys.nvars() });
    }
    if spec.n_init == 0 || spec.keep == 0 || !(spec.step > 0.0) || !(spec.spacing > 0.0) || !(spec.transient >= 0.0) {
        return Err(VerifyError::InvalidArgument("n_init, keep, step and spacing must be positive, transient nonnegative".into()));
    }
    let kind = sys.kind();
    let transient_steps = spec.steps(kind, spec.transient);
    let spacing_steps = spec.steps(kind, spec.spacing).max(1);
    let init = semialg::sample(set, spec.n_init, seed)?;
    if kind == SystemKind::Discrete {
        return map_samples(sys, set, init, transient_steps, spacing_steps, spec.keep);
    }
    let survivors: Vec<Vec<f64>> = init
        .into_par_iter()
        .filter_map(|mut x| stay_in_set(sys, set, &mut x, transient_steps, spec.step).map(|_| x))
        .collect();
    if survivors.is_empty() {
        return Err(VerifyError::NoSurvivors { initial: spec.n_init });
    }
    let per = spec.keep.div_ceil(survivors.len());
    let runs: Vec<Option<Vec<Vec<f64>>>> = survivors
        .into_par_iter()
        .map(|mut x| {
            let mut pts = Vec::with_capacity(per);
            pts.push(x.clone());
            while pts.len() < per {
                stay_in_set(sys, set, &mut x, spacing_steps, spec.step)?;
                pts.push(x.clone());
            }
            Some(pts)
        })
        .collect();
    let mut out: Vec<Vec<f64>> = runs.into_iter().flatten().flatten().collect();
    out.truncate(spec.keep);
    Ok(out)
}

fn map_samples(
    sys: &DynamicalSystem,
    set: &SemialgebraicSet,
    init: Vec<Vec<f64>>,
    transient: usize,
    spacing: usize,
    keep: usize,
) -> Result<Vec<Vec<f64>>, VerifyError> {
    let n_init = init.len();
    let survivors: Vec<Vec<f64>> = init
        .into_par_iter()
        .filter_map(|mut x| advance(sys, &mut x, 0.0, transient, 1.0, |_, _| true).ok().map(|_| x))
        .collect();
    if survivors.is_empty() {
        return Err(VerifyError::NoSurvivors { initial: n_init });
    }
    let per = keep.div_ceil(survivors.len());
    // Orbits that visit X rarely stop after this many recorded iterates.
    let budget = 100 * per.max(10);
    let runs: Vec<Vec<Vec<f64>>> = survivors
        .into_par_iter()
        .map(|mut x| {
            let mut pts = Vec::with_capacity(per);
            for _ in 0..budget {
                if pts.len() == per {
                    break;
                }
                if set.contains_unchecked(&x) {
                    pts.push(x.clone());
                }
                if advance(sys, &mut x, 0.0, spacing, 1.0, |_, _| true).is_err() {
                    break;
                }
            }
            pts
        })
        .collect();
    let mut out: Vec<Vec<f64>> = runs.into_iter().flatten().collect();
    if out.is_empty() {
        return Err(VerifyError::NoSurvivors { initial: n_init });
    }
    out.truncate(keep);
    Ok(out)
}

/// Minimum of each constraint polynomial over uniform samples of `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub names: Vec<String>,
    pub minima: Vec<f64>,
    /// Flag level `-1e-6 (1 + max |coef|)` per constraint.
    pub thresholds: Vec<f64>,
    pub flagged: Vec<bool>,
    pub samples: usize,
}

impl ResidualCheck {
    pub fn passed(&self) -> bool {
        !self.flagged.iter().any(|&f| f)
    }
}

/// Scans the five constraints of `cert` on `n_samples` uniform points of `X`.
pub fn check_residuals(cert: &Certificate, set: &SemialgebraicSet, n_samples: usize, seed: u64) -> Result<ResidualCheck, VerifyError> {
    let sys = cert.system()?;
    let polys = cert.constraint_polynomials(&sys)?;
    let pts = semialg::sample(set, n_samples, seed)?;
    let minima: Vec<f64> = polys
        .iter()
        .map(|p| pts.par_iter().map(|x| p.eval(x)).reduce(|| f64::INFINITY, f64::min))
        .collect();
    let thresholds: Vec<f64> = polys.iter().map(|p| -RESIDUAL_TOLERANCE * (1.0 + p.max_abs_coefficient())).collect();
    let flagged = minima.iter().zip(&thresholds).map(|(m, t)| !(m >= t)).collect();
    Ok(ResidualCheck {
        names: constraint_names(cert.kind).iter().map(|s| s.to_string()).collect(),
        minima,
        thresholds,
        flagged,
        samples: pts.len(),
    })
}

/// Fraction of given points that lie in `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentCheck {
    pub samples: usize,
    pub inside: usize,
    pub fraction: f64,
    /// Largest `J(x) - threshold` over the samples (negative when all fit).
    pub worst_excess: f64,
}

pub fn check_containment(cert: &Certificate, points: &[Vec<f64>], scale: Option<f64>) -> Result<ContainmentCheck, VerifyError> {
    for p in points {
        if p.len() != cert.nvars() {
            return Err(VerifyError::Dimension { expected: cert.nvars(), found: p.len() });
        }
    }
    let thr = cert.threshold(scale);
    let inside = points.par_iter().filter(|x| cert.member_unchecked(x, scale)).count();
    let worst_excess = points.par_iter().map(|x| cert.j.eval(x) - thr).reduce(|| f64::NEG_INFINITY, f64::max);
    let fraction = if points.is_empty() { 0.0 } else { inside as f64 / points.len() as f64 };
    Ok(ContainmentCheck { samples: points.len(), inside, fraction, worst_excess })
}

/// Outcome of simulating points of `K` forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub points: usize,
    pub horizon: f64,
    pub violations: usize,
    /// Largest `J(x(t)) - scale·ε` seen along any trajectory.
    pub worst_excess: f64,
    pub tolerance: f64,
    /// Trajectories that blew up, counted as violations.
    pub diverged: usize,
}

impl InvarianceCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Signed distance-like score, `≤ 0` exactly on `K`.
fn k_score(cert: &Certificate, x: &[f64], scale: Option<f64>) -> f64 {
    let tau = cert.tau();
    (cert.j.eval(x) - cert.threshold(scale)).max(-tau - cert.v.eval(x)).max(-cert.set.min_inequality(x))
}

/// Uniform points of `K` by rejection sampling. Proposals come from the
/// bounding box of `X`; when `K` is too small for that, the box is shrunk
/// around the proposals that violate the membership conditions least
/// (keeping a 25% margin on each side) until the acceptance rate is
/// workable. Every returned point is a member of `K`; uniformity holds as
/// long as the final box covers `K`.
pub fn sample_k(cert: &Certificate, count: usize, seed: u64, scale: Option<f64>) -> Result<Vec<Vec<f64>>, VerifyError> {
    if count == 0 {
        return Err(VerifyError::InvalidArgument("sample count must be positive".into()));
    }
    let (lo0, hi0) = cert.set.bounding_box();
    let (mut lo, mut hi) = (lo0.clone(), hi0.clone());
    let limits = RejectionLimits { max_proposals_per_chunk: 4_000_000, min_rate: 1e-4 };
    let accept = |x: &[f64]| cert.member_unchecked(x, scale);
    let mut last_err = None;
    for round in 0..64u64 {
        match rejection_sample(&lo, &hi, count, seed.wrapping_add(round), limits, accept) {
            Ok(pts) => return Ok(pts),
            Err(e) => last_err = Some(e),
        }
        let mut rng = chunk_rng(seed ^ 0x5eed_0000, round);
        let mut scored: Vec<(f64, Vec<f64>)> = (0..4096)
            .map(|_| {
                let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..=*b)).collect();
                (k_score(cert, &x, scale), x)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let best = &scored[..205];
        let mut shrunk = false;
        for i in 0..lo.len() {
            let (mn, mx) = best.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, x)| (a.min(x[i]), b.max(x[i])));
            let pad = 0.25 * (mx - mn).max(1e-12 * (hi0[i] - lo0[i]));
            let (nl, nh) = ((mn - pad).max(lo0[i]), (mx + pad).min(hi0[i]));
            shrunk |= nh - nl < 0.99 * (hi[i] - lo[i]);
            lo[i] = nl;
            hi[i] = nh;
        }
        if !shrunk {
            break;
        }
    }
    Err(VerifyError::EmptyK(last_err.expect("at least one round ran")))
}

/// Largest `J(x(t)) - scale·ε` along the trajectory from `x0` over the
/// horizon; `None` when it diverges.
fn max_excess(cert: &Certificate, sys: &DynamicalSystem, x0: &[f64], horizon: f64, h: f64, level: f64) -> Option<f64> {
    let steps = match sys.kind() {
        SystemKind::Continuous => step_count(horizon, h),
        SystemKind::Discrete => horizon.max(0.0).round() as usize,
    };
    let h = if steps > 0 && sys.kind() == SystemKind::Continuous { horizon / steps as f64 } else { h };
    let mut worst = cert.j.eval(x0) - level;
    let mut x = x0.to_vec();
    advance(sys, &mut x, 0.0, steps, h, |_, y| {
        worst = worst.max(cert.j.eval(y) - level);
        true
    })
    .ok()?;
    Some(worst)
}

/// Samples `n_points` of `K` and follows each for `horizon` (time or
/// steps); a violation is an excess of `J` over `scale·ε` larger than
/// `1e-4 (1 + ε)`.
pub fn check_invariance(
    cert: &Certificate,
    sys: &DynamicalSystem,
    n_points: usize,
    horizon: f64,
    h: f64,
    seed: u64,
    scale: Option<f64>,
) -> Result<InvarianceCheck, VerifyError> {
    if !(h > 0.0) || !(horizon >= 0.0) {
        return Err(VerifyError::InvalidArgument("need h > 0 and horizon >= 0".into()));
    }
    let pts = sample_k(cert, n_points, seed, scale)?;
    Ok(invariance_from(cert, sys, &pts, horizon, h, scale))
}

/// Invariance check from given starting points.
pub fn invariance_from(
    cert: &Certificate,
    sys: &DynamicalSystem,
    points: &[Vec<f64>],
    horizon: f64,
    h: f64,
    scale: Option<f64>,
) -> InvarianceCheck {
    let level = scale.unwrap_or(cert.params.epsilon_scale) * cert.epsilon;
    let tolerance = INVARIANCE_TOLERANCE * (1.0 + cert.epsilon);
    let results: Vec<Option<f64>> = points.par_iter().map(|x| max_excess(cert, sys, x, horizon, h, level)).collect();
    let diverged = results.iter().filter(|r| r.is_none()).count();
    let worst_excess = results.iter().map(|r| r.unwrap_or(f64::INFINITY)).fold(f64::NEG_INFINITY, f64::max);
    let violations = results.iter().filter(|r| r.is_none_or(|e| e > tolerance)).count();
    InvarianceCheck { points: points.len(), horizon, violations, worst_excess, tolerance, diverged }
}

/// First time from which every later state of `traj` lies in `K`, if any.
pub fn entry_time(cert: &Certificate, traj: &Trajectory, scale: Option<f64>) -> Option<f64> {
    let mut entry = None;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        if cert.member_unchecked(x, scale) {
            entry.get_or_insert(*t);
        } else {
            entry = None;
        }
    }
    entry
}

/// Monte Carlo estimate of the volume of a subset of `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub stderr: f64,
    pub hits: usize,
    pub samples: usize,
    /// `λ(X)` used as the reference volume.
    pub set_volume: f64,
}

/// `λ(X)` in closed form when the shape allows it, otherwise by Monte Carlo.
pub fn set_volume(set: &SemialgebraicSet, seed: u64) -> Result<f64, VerifyError> {
    match set.analytic_volume() {
        Some(v) => Ok(v),
        None => Ok(moments(set, 0, Some(1_000_000), Some(seed))?.volume()),
    }
}

/// `λ(X) · hits / n` over `n` uniform points of `X`, with binomial standard
/// error.
pub fn estimate_volume_with<P>(set: &SemialgebraicSet, n_mc: usize, seed: u64, inside: P) -> Result<VolumeEstimate, VerifyError>
where
    P: Fn(&[f64]) -> bool + Sync,
{
    if n_mc < 1000 {
        return Err(VerifyError::InvalidArgument(format!("need at least 1000 samples, got {n_mc}")));
    }
    let vol_x = set_volume(set, seed)?;
    let pts = semialg::sample(set, n_mc, seed)?;
    let hits = pts.par_iter().filter(|x| inside(x)).count();
    let n = pts.len() as f64;
    let p = hits as f64 / n;
    Ok(VolumeEstimate { volume: vol_x * p, stderr: vol_x * (p * (1.0 - p) / n).sqrt(), hits, samples: pts.len(), set_volume: vol_x })
}

/// Estimate of `λ(K)`.
pub fn estimate_volume(cert: &Certificate, set: &SemialgebraicSet, n_mc: usize, seed: u64, scale: Option<f64>) -> Result<VolumeEstimate, VerifyError> {
    if set.nvars() != cert.nvars() {
        return Err(VerifyError::Dimension { expected: cert.nvars(), found: set.nvars() });
    }
    estimate_volume_with(set, n_mc, seed, |x| cert.member_unchecked(x, scale))
}

/// Sampled test of `{J ≤ scale·ε} ⊂ interior(X)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorCheck {
    /// True when every shell sample has `J > scale·ε`; false means
    /// inconclusive.
    pub holds: bool,
    pub shell_width: f64,
    pub shell_samples: usize,
    /// Smallest `J(x) - scale·ε` over the shell.
    pub min_margin: f64,
}

/// Checks `J > scale·ε` on samples of the shell `{x ∈ X : min g_i(x) ≤ δ}`;
/// `δ` defaults to `1e-2 R_X`.
pub fn check_interior(
    cert: &Certificate,
    set: &SemialgebraicSet,
    n_boundary_samples: usize,
    seed: u64,
    delta: Option<f64>,
    scale: Option<f64>,
) -> Result<InteriorCheck, VerifyError> {
    let delta = delta.unwrap_or(1e-2 * set.ball_radius());
    let level = scale.unwrap_or(cert.params.epsilon_scale) * cert.epsilon;
    let (lo, hi) = set.bounding_box();
    let limits = RejectionLimits { max_proposals_per_chunk: 100_000_000, min_rate: 1e-6 };
    let shell = rejection_sample(&lo, &hi, n_boundary_samples.max(1), seed, limits, |x| {
        set.contains_unchecked(x) && set.min_inequality(x) <= delta
    });
    let Ok(shell) = shell else {
        return Ok(InteriorCheck { holds: false, shell_width: delta, shell_samples: 0, min_margin: f64::NAN });
    };
    let min_margin = shell.par_iter().map(|x| cert.j.eval(x) - level).reduce(|| f64::INFINITY, f64::min);
    Ok(InteriorCheck { holds: min_margin > 0.0, shell_width: delta, shell_samples: shell.len(), min_margin })
}

/// All figures of merit of one verification run. Sections that were not
/// run are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub epsilon: f64,
    pub epsilon_scale: f64,
    pub d_k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<ResidualCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub containment: Option<ContainmentCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<VolumeEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior: Option<InteriorCheck>,
    /// Failures of individual checks, reported instead of aborting.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl VerificationReport {
    pub fn for_certificate(cert: &Certificate, scale: Option<f64>) -> Self {
        VerificationReport {
            epsilon: cert.epsilon,
            epsilon_scale: scale.unwrap_or(cert.params.epsilon_scale),
            d_k: cert.d_k,
            ..Default::default()
        }
    }

    /// No flagged residual, full containment and no invariance violation
    /// among the sections present.
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
            && self.residuals.as_ref().is_none_or(ResidualCheck::passed)
            && self.containment.as_ref().is_none_or(|c| c.inside == c.samples)
            && self.invariance.as_ref().is_none_or(InvarianceCheck::passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "verification report");
        let _ = writeln!(s, "  epsilon {:.6e} (scale {}), d_k {:.8}", self.epsilon, self.epsilon_scale, self.d_k);
        if let Some(r) = &self.residuals {
            let _ = writeln!(s, "  constraint residuals over {} samples of X:", r.samples);
            for i in 0..r.names.len() {
                let _ = writeln!(
                    s,
                    "    {:<28} min {:>13.6e}  flag below {:>10.3e}  {}",
                    r.names[i],
                    r.minima[i],
                    r.thresholds[i],
                    if r.flagged[i] { "FLAGGED" } else { "ok" }
                );
            }
        }
        if let Some(c) = &self.containment {
            let _ = writeln!(s, "  attractor samples in K: {}/{} (fraction {:.6}), worst excess {:.3e}", c.inside, c.samples, c.fraction, c.worst_excess);
        }
        if let Some(i) = &self.invariance {
            let _ = writeln!(
                s,
                "  invariance: {} violations over {} points, horizon {}, worst excess {:.3e} (tolerance {:.1e}, diverged {})",
                i.violations, i.points, i.horizon, i.worst_excess, i.tolerance, i.diverged
            );
        }
        if let Some(v) = &self.volume {
            let _ = writeln!(s, "  volume of K: {:.6} ± {:.6} ({} of {} samples, volume of X {:.6})", v.volume, v.stderr, v.hits, v.samples, v.set_volume);
        }
        if let Some(i) = &self.interior {
            let _ = writeln!(
                s,
                "  sublevel set inside interior of X: {} (shell width {:.3e}, {} samples, min margin {:.3e})",
                if i.holds { "yes" } else { "inconclusive" },
                i.shell_width,
                i.shell_samples,
                i.min_margin
            );
        }
        for e in &self.errors {
            let _ = writeln!(s, "  error: {e}");
        }
        let _ = writeln!(s, "  overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attractor::SolveParams;
    use crate::poly::{parse_polynomial, Polynomial};

    fn map(exprs: &[&str]) -> PolynomialMap {
        PolynomialMap::parse(exprs, exprs.len()).unwrap()
    }

    fn hand_certificate() -> (DynamicalSystem, Certificate) {
        let sys = DynamicalSystem::parse(SystemKind::Continuous, &["-x1", "-x2"]).unwrap();
        let set = SemialgebraicSet::ball(2, 1.0).unwrap();
        let cert = Certificate::from_parts(
            &sys,
            &set,
            SolveParams::continuous(2, 0.5),
            Polynomial::constant(2, 1.0),
            parse_polynomial("x1^2 + x2^2", 2).unwrap(),
            Polynomial::zero(2),
            0.0,
        )
        .unwrap();
        (sys, cert)
    }

    #[test]
    fn rk4_linear_decay() {
        let tr = simulate_ode(&map(&["-x1"]), &[1.0], 1.0, 0.01).unwrap();
        assert_eq!(tr.len(), 101);
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rk4_zero_field_and_oscillator() {
        let tr = simulate_ode(&map(&["0", "0"]), &[0.3, -0.2], 2.0, 0.1).unwrap();
        assert!(tr.states.iter().all(|x| x == &vec![0.3, -0.2]));
        let tr = simulate_ode(&map(&["x2", "-x1"]), &[1.0, 0.0], 2.0 * std::f64::consts::PI, 0.001).unwrap();
        let x = tr.last();
        assert!((x[0] - 1.0).abs() < 1e-7 && x[1].abs() < 1e-7);
    }

    #[test]
    fn rk4_divergence_reports_time() {
        match simulate_ode(&map(&["x1^2"]), &[1.0], 2.0, 0.001) {
            Err(VerifyError::Divergence { time }) => assert!(time > 0.9 && time < 1.01, "{time}"),
            other => panic!("{other:?}"),
        }
        assert!(simulate_ode(&map(&["x1"]), &[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn henon_orbit() {
        let f = map(&["0.6666666666666666*(1 + x2) - 2.1*x1^2", "0.45*x1"]);
        let tr = iterate_map(&f, &[0.0, 0.0], 1).unwrap();
        assert!((tr.states[1][0] - 2.0 / 3.0).abs() < 1e-15 && tr.states[1][1] == 0.0);
        assert_eq!(iterate_map(&f, &[0.1, 0.2], 0).unwrap().states, vec![vec![0.1, 0.2]]);
        let id = PolynomialMap::identity(2);
        assert!(iterate_map(&id, &[0.1, 0.2], 5).unwrap().states.iter().all(|x| x == &vec![0.1, 0.2]));
    }

    #[test]
    fn samples_of_linear_decay_collapse() {
        let sys = DynamicalSystem::parse(SystemKind::Continuous, &["-x1", "-x2"]).unwrap();
        let set = SemialgebraicSet::ball(2, 1.0).unwrap();
        let spec = SampleSpec { transient: 20.0, ..SampleSpec::continuous(50, 100) };
        let pts = attractor_samples(&sys, &set, &spec, 3).unwrap();
        assert_eq!(pts.len(), 100);
        assert!(pts.iter().all(|x| x[0].hypot(x[1]) < 1e-6));
        assert_eq!(pts, attractor_samples(&sys, &set, &spec, 3).unwrap());
    }

    #[test]
    fn henon_samples_lie_in_box() {
        let b = crate::systems::henon(6);
        let pts = attractor_samples(&b.system, &b.set, &SampleSpec::discrete(50, 2000), 5).unwrap();
        assert_eq!(pts.len(), 2000);
        assert!(pts.iter().all(|x| b.set.contains(x).unwrap()));
    }

    #[test]
    fn annulus_samples_for_van_der_pol() {
        let b = crate::systems::van_der_pol(4);
        let pts = attractor_samples(&b.system, &b.set, &SampleSpec::continuous(40, 200), 9).unwrap();
        assert!(pts.iter().all(|x| (0.4..=2.0).contains(&x[0].hypot(x[1]))));
    }

    #[test]
    fn hand_certificate_checks() {
        let (sys, cert) = hand_certificate();
        let r = check_residuals(&cert, &cert.set, 5000, 1).unwrap();
        assert!(r.minima.iter().all(|&m| m >= 0.0), "{:?}", r.minima);
        assert!(r.passed());
        // ε = 0 leaves only the origin in K; check invariance from chosen points
        let pts = vec![vec![0.5, 0.5], vec![-0.3, 0.9], vec![0.0, 0.0]];
        let inv = invariance_from(&cert, &sys, &pts, 20.0, 0.01, Some(1.0));
        assert_eq!(inv.violations, 2);
        let scaled = Certificate { epsilon: 0.5, ..cert.clone() };
        let inv = invariance_from(&scaled, &sys, &pts[..1], 20.0, 0.01, None);
        assert!(inv.passed(), "{inv:?}");
    }

    #[test]
    fn tiny_k_is_sampled_by_shrinking() {
        let (sys, cert) = hand_certificate();
        let pts = sample_k(&cert, 200, 9, None).unwrap();
        assert_eq!(pts.len(), 200);
        assert!(pts.iter().all(|x| cert.member(x, None).unwrap()));
        // spread over the disk J ≤ τ, not collapsed to a point
        let r = pts.iter().map(|x| x[0].hypot(x[1])).fold(0.0, f64::max);
        assert!(r > 0.5 * cert.tau().sqrt(), "{r}");
        let inv = check_invariance(&cert, &sys, 500, 20.0, 0.01, 1, None).unwrap();
        assert_eq!(inv.violations, 0);
    }

    #[test]
    fn flagged_residual_for_zero_w() {
        let (_, cert) = hand_certificate();
        let bad = Certificate { w: Polynomial::zero(2), ..cert };
        let r = check_residuals(&bad, &bad.set, 2000, 2).unwrap();
        assert!(r.flagged[0]);
        assert!(!r.passed());
    }

    #[test]
    fn full_and_empty_volume() {
        let sq = SemialgebraicSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0], 2f64.sqrt()).unwrap();
        let all = estimate_volume_with(&sq, 4000, 1, |_| true).unwrap();
        assert_eq!(all.volume, 4.0);
        assert_eq!(all.stderr, 0.0);
        let none = estimate_volume_with(&sq, 4000, 1, |_| false).unwrap();
        assert_eq!(none.volume, 0.0);
        let half = estimate_volume_with(&sq, 20000, 1, |x| x[0] > 0.0).unwrap();
        assert!((half.volume - 2.0).abs() < 3.0 * half.stderr + 1e-12);
        assert!(estimate_volume_with(&sq, 10, 1, |_| true).is_err());
    }

    #[test]
    fn interior_shell() {
        let (_, cert) = hand_certificate();
        let c = Certificate { epsilon: 0.25, ..cert.clone() };
        let r = check_interior(&c, &c.set, 2000, 4, Some(0.02), None).unwrap();
        assert!(r.holds && r.min_margin > 0.7, "{r:?}");
        let flat = Certificate { j: Polynomial::zero(2), epsilon: 0.0, ..cert.clone() };
        assert!(!check_interior(&flat, &flat.set, 500, 4, None, None).unwrap().holds);
        let big = Certificate { epsilon: 5.0, ..cert };
        assert!(!check_interior(&big, &big.set, 500, 4, None, None).unwrap().holds);
    }

    #[test]
    fn entry_time_requires_staying() {
        let (sys, cert) = hand_certificate();
        let c = Certificate { epsilon: 0.01, ..cert };
        let tr = simulate(&sys, &[0.9, 0.0], 5.0, 0.01).unwrap();
        let t = entry_time(&c, &tr, None).unwrap();
        // J = 0.81 e^{-2t} ≤ 0.01 from t = ln(81)/2
        assert!((t - 81f64.ln() / 2.0).abs() < 0.02, "{t}");
    }
}
