//! Outer approximations of global attractors from a degree-`k` SOS tightening.
//!
//! Continuous time (`ẋ = f(x)`), unknowns `w, J, v` of degree `k` and `ε ≥ 0`:
//!
//! ```text
//! minimize  ∫_X w dx + ε λ(X)
//! s.t.      w + J - v - 1 ≥ 0,  w ≥ 0,  J ≥ 0,
//!           ε - ∇J·f - J - v ≥ 0,  β v - ∇v·f ≥ 0          on X
//! ```
//!
//! Discrete time (`x⁺ = f(x)`) replaces the last two constraints with
//! `ε - γ J∘f + J - v ≥ 0` and `v - α v∘f ≥ 0`. The outer approximation is
//! `K = {J ≤ ε} ∩ {v ≥ 0} ∩ X`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{self, ConicSolution, Residuals, SolveStatus, SolverSettings};
use crate::poly::{basis_len, parse_polynomial, PolyError, Polynomial, PolynomialMap};
use crate::semialg::{affine_map, moments, SemialgebraicSet, SetError, Shape};
use crate::sos::{SosError, SosProgram};

pub const DEFAULT_BETA: f64 = 0.2;
pub const DEFAULT_ALPHA: f64 = 0.002;
pub const DEFAULT_GAMMA: f64 = 0.05;
/// Largest allowed degree of `J∘f` in discrete programs.
pub const DEFAULT_COMPOSITION_CAP: u32 = 40;
/// Monte Carlo sample count for moments of generic sets.
pub const DEFAULT_MOMENT_SAMPLES: usize = 1_000_000;

const CERTIFICATE_FORMAT: &str = "attractor-certificate";
const CERTIFICATE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AttractorError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("system is {found:?}, operation needs {expected:?}")]
    WrongKind { expected: SystemKind, found: SystemKind },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("degree of J∘f would be {degree}, above the cap {cap}; use a smaller k")]
    CompositionTooLarge { degree: u32, cap: u32 },
    #[error("solver returned {status}; no certificate")]
    SolverFailed { status: SolveStatus, iterations: usize },
    #[error("certificates are defined on different sets")]
    MismatchedSets,
    #[error("malformed certificate: {0}")]
    Format(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Continuous,
    Discrete,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicalSystem {
    kind: SystemKind,
    f: PolynomialMap,
}

impl DynamicalSystem {
    pub fn new(kind: SystemKind, f: PolynomialMap) -> Result<Self, AttractorError> {
        if !f.is_square() || f.is_empty() {
            return Err(AttractorError::Dimension { expected: f.nvars(), found: f.len() });
        }
        Ok(DynamicalSystem { kind, f })
    }

    pub fn continuous(f: PolynomialMap) -> Result<Self, AttractorError> {
        Self::new(SystemKind::Continuous, f)
    }

    pub fn discrete(f: PolynomialMap) -> Result<Self, AttractorError> {
        Self::new(SystemKind::Discrete, f)
    }

    pub fn parse<S: AsRef<str>>(kind: SystemKind, exprs: &[S]) -> Result<Self, AttractorError> {
        Self::new(kind, PolynomialMap::parse(exprs, exprs.len())?)
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn f(&self) -> &PolynomialMap {
        &self.f
    }

    pub fn nvars(&self) -> usize {
        self.f.nvars()
    }

    /// The same dynamics in coordinates `y = (x - center) / scale`.
    pub fn rescaled(&self, center: &[f64], scale: f64) -> Result<Self, AttractorError> {
        let map = affine_map(center, scale);
        let comps = self
            .f
            .components()
            .iter()
            .enumerate()
            .map(|(i, fi)| {
                let g = fi.compose(&map)?;
                Ok(match self.kind {
                    SystemKind::Continuous => g.scale(1.0 / scale),
                    SystemKind::Discrete => (&g - &Polynomial::constant(g.nvars(), center[i])).scale(1.0 / scale),
                })
            })
            .collect::<Result<Vec<_>, PolyError>>()?;
        Self::new(self.kind, PolynomialMap::new(comps)?)
    }

    pub fn expressions(&self) -> Vec<String> {
        self.f.components().iter().map(|p| p.to_string()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub degree: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "one")]
    pub epsilon_scale: f64,
    /// Solve in coordinates where the bounding box of `X` is `[-1, 1]^n`.
    #[serde(default = "yes")]
    pub rescale: bool,
    #[serde(default = "composition_cap")]
    pub composition_cap: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_samples: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn composition_cap() -> u32 {
    DEFAULT_COMPOSITION_CAP
}

impl SolveParams {
    pub fn continuous(degree: u32, beta: f64) -> Self {
        SolveParams {
            degree,
            beta: Some(beta),
            alpha: None,
            gamma: None,
            epsilon_scale: 1.0,
            rescale: true,
            composition_cap: DEFAULT_COMPOSITION_CAP,
            moment_samples: None,
        }
    }

    pub fn discrete(degree: u32, alpha: f64, gamma: f64) -> Self {
        SolveParams { beta: None, alpha: Some(alpha), gamma: Some(gamma), ..Self::continuous(degree, 0.0) }
    }

    pub fn with_epsilon_scale(mut self, s: f64) -> Self {
        self.epsilon_scale = s;
        self
    }

    pub fn with_rescale(mut self, on: bool) -> Self {
        self.rescale = on;
        self
    }

    pub fn validate(&self, kind: SystemKind) -> Result<(), AttractorError> {
        let bad = |m: String| Err(AttractorError::InvalidParams(m));
        if self.degree < 2 {
            return bad(format!("degree must be at least 2, got {}", self.degree));
        }
        if !(self.epsilon_scale > 0.0 && self.epsilon_scale.is_finite()) {
            return bad(format!("epsilon_scale must be positive, got {}", self.epsilon_scale));
        }
        match kind {
            SystemKind::Continuous => {
                if self.alpha.is_some() || self.gamma.is_some() {
                    return bad("alpha and gamma apply to discrete systems only".into());
                }
                match self.beta {
                    Some(b) if b > 0.0 && b.is_finite() => {}
                    Some(b) => return bad(format!("beta must be positive, got {}", b)),
                    None => return bad("beta is required for continuous systems".into()),
                }
            }
            SystemKind::Discrete => {
                if self.beta.is_some() {
                    return bad("beta applies to continuous systems only".into());
                }
                for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma)] {
                    match v {
                        Some(x) if x > 0.0 && x < 1.0 => {}
                        Some(x) => return bad(format!("{} must lie in (0, 1), got {}", name, x)),
                        None => return bad(format!("{} is required for discrete systems", name)),
                    }
                }
            }
        }
        Ok(())
    }
}

fn even_at_least(d: u32) -> u32 {
    d + d % 2
}

pub const CONSTRAINT_NAMES_CONTINUOUS: [&str; 5] =
    ["w + J - v - 1", "w", "J", "eps - grad J . f - J - v", "beta v - grad v . f"];
pub const CONSTRAINT_NAMES_DISCRETE: [&str; 5] =
    ["w + J - v - 1", "w", "J", "eps - gamma J(f) + J - v", "v - alpha v(f)"];

pub fn constraint_names(kind: SystemKind) -> [&'static str; 5] {
    match kind {
        SystemKind::Continuous => CONSTRAINT_NAMES_CONTINUOUS,
        SystemKind::Discrete => CONSTRAINT_NAMES_DISCRETE,
    }
}

/// Compiled program plus the data needed to map a solution back.
#[derive(Clone, Debug)]
pub struct AttractorProgram {
    pub program: SosProgram,
    /// `y = (x - center) / scale`; identity when rescaling is off.
    pub center: Vec<f64>,
    pub scale: f64,
    /// `X` in solver coordinates.
    pub working_set: SemialgebraicSet,
    pub budgets: [u32; 5],
    /// Moments of the working set up to degree `k`.
    pub moments: Vec<f64>,
}

pub fn build_continuous(
    sys: &DynamicalSystem,
    set: &SemialgebraicSet,
    params: &SolveParams,
) -> Result<AttractorProgram, AttractorError> {
    if sys.kind() != SystemKind::Continuous {
        return Err(AttractorError::WrongKind { expected: SystemKind::Continuous, found: sys.kind() });
    }
    build(sys, set, params)
}

pub fn build_discrete(
    sys: &DynamicalSystem,
    set: &SemialgebraicSet,
    params: &SolveParams,
) -> Result<AttractorProgram, AttractorError> {
    if sys.kind() != SystemKind::Discrete {
        return Err(AttractorError::WrongKind { expected: SystemKind::Discrete, found: sys.kind() });
    }
    build(sys, set, params)
}

fn build(sys: &DynamicalSystem, set: &SemialgebraicSet, params: &SolveParams) -> Result<AttractorProgram, AttractorError> {
    params.validate(sys.kind())?;
    let n = sys.nvars();
    if set.nvars() != n {
        return Err(AttractorError::Dimension { expected: n, found: set.nvars() });
    }
    let k = params.degree;
    let fdeg = sys.f().degree();
    if sys.kind() == SystemKind::Discrete {
        let d = k * fdeg;
        if d > params.composition_cap {
            return Err(AttractorError::CompositionTooLarge { degree: d, cap: params.composition_cap });
        }
    }
    let (center, scale) = if params.rescale { set.unit_box_transform() } else { (vec![0.0; n], 1.0) };
    let (work_sys, work_set) = if params.rescale {
        (sys.rescaled(&center, scale)?, set.affine_image(&center, scale)?)
    } else {
        (sys.clone(), set.clone())
    };
    let f = work_sys.f();

    let mut prog = SosProgram::new(n)?;
    let w = prog.add_poly_var("w", k)?.expr();
    let j = prog.add_poly_var("J", k)?.expr();
    let v = prog.add_poly_var("v", k)?.expr();
    let eps = prog.add_scalar_var("eps", true)?.expr();
    let one = Polynomial::constant(n, 1.0);

    let c0 = w.add(&j)?.sub(&v)?.add_known(&one.scale(-1.0))?;
    let (c3, c4, dyn_degree) = match sys.kind() {
        SystemKind::Continuous => {
            let beta = params.beta.expect("validated");
            let c3 = eps.sub(&j.lie_derivative(f)?)?.sub(&j)?.sub(&v)?;
            let c4 = v.scale(beta).sub(&v.lie_derivative(f)?)?;
            (c3, c4, (k + fdeg).saturating_sub(1))
        }
        SystemKind::Discrete => {
            let alpha = params.alpha.expect("validated");
            let gamma = params.gamma.expect("validated");
            let c3 = eps.sub(&j.compose(f)?.scale(gamma))?.add(&j)?.sub(&v)?;
            let c4 = v.sub(&v.compose(f)?.scale(alpha))?;
            (c3, c4, k * fdeg)
        }
    };
    let base = even_at_least(k);
    let dynb = even_at_least(dyn_degree.max(k));
    if dynb > 20 {
        log::warn!("dynamic constraints need degree budget {}; the SDP may be large and poorly conditioned", dynb);
    }
    let budgets = [base, base, base, dynb, dynb];
    for (expr, &b) in [&c0, &w, &j, &c3, &c4].into_iter().zip(&budgets) {
        prog.add_putinar_constraint(expr, &work_set, b)?;
    }

    let samples = params.moment_samples.unwrap_or(DEFAULT_MOMENT_SAMPLES);
    let mom = moments(&work_set, k, Some(samples), Some(0))?;
    prog.set_objective(&[("w", mom.values.clone()), ("eps", vec![mom.volume()])])?;
    Ok(AttractorProgram { program: prog, center, scale, working_set: work_set, budgets, moments: mom.values })
}

/// Size and convergence figures of one solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    pub num_rows: usize,
    pub num_cols: usize,
    pub psd_sides: Vec<usize>,
    pub budgets: [u32; 5],
    /// `cᵀx` of the conic solve, in original coordinates.
    pub solver_objective: f64,
    /// `ε` as returned by the solver, before the residual correction.
    pub raw_epsilon: f64,
    /// Per-constraint lower bounds `-δ_i` implied by the solver residuals.
    pub residual_bounds: [f64; 5],
}

pub fn solve_attractor(
    sys: &DynamicalSystem,
    set: &SemialgebraicSet,
    params: &SolveParams,
    settings: &SolverSettings,
) -> Result<Certificate, AttractorError> {
    solve_attractor_with_info(sys, set, params, settings).map(|(c, _)| c)
}

pub fn solve_attractor_with_info(
    sys: &DynamicalSystem,
    set: &SemialgebraicSet,
    params: &SolveParams,
    settings: &SolverSettings,
) -> Result<(Certificate, SolveInfo), AttractorError> {
    let built = build(sys, set, params)?;
    let problem = built.program.to_conic()?;
    let sol = conic::solve(&problem, settings);
    if !sol.status.has_solution() {
        return Err(AttractorError::SolverFailed { status: sol.status, iterations: sol.iterations });
    }
    extract(sys, set, params, &built, &problem, &sol)
}

/// Reads `(w, J, v, ε)` from the solution and shifts constants so that the
/// five constraints hold exactly despite the solver's residuals:
///
/// ```text
/// v += δ_4 / β        (or δ_4 / (1 - α))
/// J += δ_2
/// w += max(δ_1, δ_0 + shift_v)
/// ε += δ_3 + δ_2 + shift_v
/// ```
///
/// where each constraint is known to be `≥ -δ_i` on `X`.
fn extract(
    sys: &DynamicalSystem,
    set: &SemialgebraicSet,
    params: &SolveParams,
    built: &AttractorProgram,
    problem: &conic::ConicProblem,
    sol: &ConicSolution,
) -> Result<(Certificate, SolveInfo), AttractorError> {
    let prog = &built.program;
    let n = sys.nvars();
    let rho = if params.rescale { 1.0 } else { set.ball_radius() };
    let mut delta = [0.0; 5];
    for (id, d) in delta.iter_mut().enumerate() {
        *d = prog.residual_bound(id, problem, &built.working_set, &sol.x, rho)?;
    }
    let shift_v = match sys.kind() {
        SystemKind::Continuous => delta[4] / params.beta.expect("validated"),
        SystemKind::Discrete => delta[4] / (1.0 - params.alpha.expect("validated")),
    };
    let shift_w = delta[1].max(delta[0] + shift_v);
    let raw_epsilon = prog.scalar_value(&sol.x, "eps")?;
    let epsilon = raw_epsilon.max(0.0) + delta[3] + delta[2] + shift_v;
    let bump = |p: Polynomial, c: f64| &p + &Polynomial::constant(n, c);
    let w = bump(prog.poly_value(&sol.x, "w")?, shift_w);
    let j = bump(prog.poly_value(&sol.x, "J")?, delta[2]);
    let v = bump(prog.poly_value(&sol.x, "v")?, shift_v);

    let volume_factor = built.scale.powi(n as i32);
    let integral: f64 = w.basis_coefficients(params.degree)?.iter().zip(&built.moments).map(|(a, b)| a * b).sum();
    let d_k = volume_factor * (integral + epsilon * built.moments[0]);

    // back to x coordinates: p(x) = p̃((x - c)/s)
    let inverse = affine_map(&built.center.iter().map(|c| -c / built.scale).collect::<Vec<_>>(), 1.0 / built.scale);
    let back = |p: Polynomial| -> Result<Polynomial, AttractorError> {
        Ok(if params.rescale { p.compose(&inverse)? } else { p })
    };
    let cert = Certificate {
        kind: sys.kind(),
        dynamics: sys.expressions(),
        w: back(w)?,
        j: back(j)?,
        v: back(v)?,
        epsilon,
        d_k,
        params: params.clone(),
        set: set.clone(),
        solver_status: sol.status,
    };
    let info = SolveInfo {
        status: sol.status,
        iterations: sol.iterations,
        residuals: sol.residuals,
        num_rows: problem.num_constraints(),
        num_cols: problem.num_vars(),
        psd_sides: problem.psd_sides(),
        budgets: built.budgets,
        solver_objective: volume_factor * sol.objective_value,
        raw_epsilon,
        residual_bounds: delta.map(|d| -d),
    };
    Ok((cert, info))
}

/// A feasible `(w, J, v, ε)` and the data it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub kind: SystemKind,
    /// Components of `f`, as parseable strings.
    pub dynamics: Vec<String>,
    pub w: Polynomial,
    pub j: Polynomial,
    pub v: Polynomial,
    pub epsilon: f64,
    /// Solver objective `∫_X w dx + ε λ(X)`.
    pub d_k: f64,
    pub params: SolveParams,
    pub set: SemialgebraicSet,
    pub solver_status: SolveStatus,
}

impl Certificate {
    /// Certificate from given polynomials, with `d_k` recomputed from moments.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        sys: &DynamicalSystem,
        set: &SemialgebraicSet,
        params: SolveParams,
        w: Polynomial,
        j: Polynomial,
        v: Polynomial,
        epsilon: f64,
    ) -> Result<Self, AttractorError> {
        params.validate(sys.kind())?;
        if !(epsilon >= 0.0) {
            return Err(AttractorError::InvalidParams(format!("epsilon must be nonnegative, got {}", epsilon)));
        }
        let mut cert = Certificate {
            kind: sys.kind(),
            dynamics: sys.expressions(),
            w,
            j,
            v,
            epsilon,
            d_k: 0.0,
            params,
            set: set.clone(),
            solver_status: SolveStatus::Optimal,
        };
        cert.d_k = cert.recomputed_objective()?;
        Ok(cert)
    }

    pub fn nvars(&self) -> usize {
        self.set.nvars()
    }

    pub fn system(&self) -> Result<DynamicalSystem, AttractorError> {
        DynamicalSystem::parse(self.kind, &self.dynamics)
    }

    /// `∫_X w dx + ε λ(X)` from moments of `X`.
    pub fn recomputed_objective(&self) -> Result<f64, AttractorError> {
        let deg = self.w.degree().max(self.params.degree);
        let samples = self.params.moment_samples.unwrap_or(DEFAULT_MOMENT_SAMPLES);
        let m = moments(&self.set, deg, Some(samples), Some(0))?;
        Ok(m.integrate(&self.w)? + self.epsilon * m.volume())
    }

    fn scale_or_default(&self, scale: Option<f64>) -> f64 {
        scale.unwrap_or(self.params.epsilon_scale)
    }

    /// Membership slack `τ = 1e-9 (1 + |ε|)`.
    pub fn tau(&self) -> f64 {
        1e-9 * (1.0 + self.epsilon.abs())
    }

    /// Sublevel threshold `scale · ε + τ`.
    pub fn threshold(&self, scale: Option<f64>) -> f64 {
        self.scale_or_default(scale) * self.epsilon + self.tau()
    }

    fn check_point(&self, x: &[f64]) -> Result<(), AttractorError> {
        if x.len() != self.nvars() {
            return Err(AttractorError::Dimension { expected: self.nvars(), found: x.len() });
        }
        Ok(())
    }

    /// `x ∈ K = {J ≤ scale·ε} ∩ {v ≥ 0} ∩ X`, up to the slack `τ`.
    pub fn member(&self, x: &[f64], scale: Option<f64>) -> Result<bool, AttractorError> {
        self.check_point(x)?;
        Ok(self.member_unchecked(x, scale))
    }

    pub(crate) fn member_unchecked(&self, x: &[f64], scale: Option<f64>) -> bool {
        self.j.eval(x) <= self.threshold(scale) && self.v.eval(x) >= -self.tau() && self.set.contains_unchecked(x)
    }

    /// `J(x) ≤ scale·ε + τ` only; valid when `{J ≤ ε}` lies inside `X`.
    pub fn member_interior_variant(&self, x: &[f64], scale: Option<f64>) -> Result<bool, AttractorError> {
        self.check_point(x)?;
        Ok(self.j.eval(x) <= self.threshold(scale))
    }

    /// The five constraint polynomials evaluated with this certificate, in
    /// the order of [`constraint_names`].
    pub fn constraint_polynomials(&self, sys: &DynamicalSystem) -> Result<[Polynomial; 5], AttractorError> {
        if sys.kind() != self.kind {
            return Err(AttractorError::WrongKind { expected: self.kind, found: sys.kind() });
        }
        let n = self.nvars();
        if sys.nvars() != n {
            return Err(AttractorError::Dimension { expected: n, found: sys.nvars() });
        }
        let eps = Polynomial::constant(n, self.epsilon);
        let one = Polynomial::constant(n, 1.0);
        let f = sys.f();
        let c0 = &(&(&self.w + &self.j) - &self.v) - &one;
        let (c3, c4) = match self.kind {
            SystemKind::Continuous => {
                let beta = self.params.beta.unwrap_or(DEFAULT_BETA);
                (
                    &(&(&eps - &self.j.lie_derivative(f)?) - &self.j) - &self.v,
                    &self.v.scale(beta) - &self.v.lie_derivative(f)?,
                )
            }
            SystemKind::Discrete => {
                let alpha = self.params.alpha.unwrap_or(DEFAULT_ALPHA);
                let gamma = self.params.gamma.unwrap_or(DEFAULT_GAMMA);
                (
                    &(&(&eps - &self.j.compose(f)?.scale(gamma)) + &self.j) - &self.v,
                    &self.v - &self.v.compose(f)?.scale(alpha),
                )
            }
        };
        Ok([c0, self.w.clone(), self.j.clone(), c3, c4])
    }

    pub fn to_json(&self) -> Result<String, AttractorError> {
        Ok(serde_json::to_string_pretty(&CertificateDocument::from_certificate(self)?)?)
    }

    pub fn from_json(text: &str) -> Result<Self, AttractorError> {
        serde_json::from_str::<CertificateDocument>(text)?.into_certificate()
    }

    pub fn write(&self, path: &Path) -> Result<(), AttractorError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, AttractorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Conjunction of `member` over several certificates sharing `X`.
pub fn intersect_members(certs: &[Certificate], x: &[f64]) -> Result<bool, AttractorError> {
    if let Some(first) = certs.first() {
        if certs.iter().any(|c| c.set != first.set) {
            return Err(AttractorError::MismatchedSets);
        }
    }
    for c in certs {
        if !c.member(x, None)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Serialized form of a [`SemialgebraicSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetDocument {
    pub nvars: usize,
    #[serde(flatten)]
    pub shape: Shape,
    pub inequalities: Vec<String>,
    pub ball_radius: f64,
}

impl SetDocument {
    pub fn from_set(set: &SemialgebraicSet) -> Self {
        SetDocument {
            nvars: set.nvars(),
            shape: set.shape().clone(),
            inequalities: set.inequalities().iter().map(|g| g.to_string()).collect(),
            ball_radius: set.ball_radius(),
        }
    }

    pub fn into_set(self) -> Result<SemialgebraicSet, AttractorError> {
        let gs = self
            .inequalities
            .iter()
            .map(|s| parse_polynomial(s, self.nvars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SemialgebraicSet::from_parts(self.nvars, self.shape, gs, self.ball_radius)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateDocument {
    format: String,
    version: u32,
    nvars: usize,
    kind: SystemKind,
    monomial_order: String,
    /// Coefficient arrays follow `basis(nvars, degree)`.
    degree: u32,
    dynamics: Vec<String>,
    params: SolveParams,
    set: SetDocument,
    w: Vec<f64>,
    #[serde(rename = "J")]
    j: Vec<f64>,
    v: Vec<f64>,
    epsilon: f64,
    d_k: f64,
    solver_status: SolveStatus,
}

impl CertificateDocument {
    fn from_certificate(c: &Certificate) -> Result<Self, AttractorError> {
        let degree = c.w.degree().max(c.j.degree()).max(c.v.degree()).max(c.params.degree);
        Ok(CertificateDocument {
            format: CERTIFICATE_FORMAT.into(),
            version: CERTIFICATE_VERSION,
            nvars: c.nvars(),
            kind: c.kind,
            monomial_order: "grlex".into(),
            degree,
            dynamics: c.dynamics.clone(),
            params: c.params.clone(),
            set: SetDocument::from_set(&c.set),
            w: c.w.basis_coefficients(degree)?,
            j: c.j.basis_coefficients(degree)?,
            v: c.v.basis_coefficients(degree)?,
            epsilon: c.epsilon,
            d_k: c.d_k,
            solver_status: c.solver_status,
        })
    }

    fn into_certificate(self) -> Result<Certificate, AttractorError> {
        let bad = |m: String| Err(AttractorError::Format(m));
        if self.format != CERTIFICATE_FORMAT {
            return bad(format!("unknown format {:?}", self.format));
        }
        if self.version != CERTIFICATE_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.monomial_order != "grlex" {
            return bad(format!("unsupported monomial order {:?}", self.monomial_order));
        }
        if self.set.nvars != self.nvars || self.dynamics.len() != self.nvars {
            return bad("nvars disagrees with set or dynamics".into());
        }
        let len = basis_len(self.nvars, self.degree);
        for (name, arr) in [("w", &self.w), ("J", &self.j), ("v", &self.v)] {
            if arr.len() != len {
                return bad(format!("{} has {} coefficients, expected {}", name, arr.len(), len));
            }
        }
        // validates the dynamics strings
        DynamicalSystem::parse(self.kind, &self.dynamics)?;
        let n = self.nvars;
        Ok(Certificate {
            kind: self.kind,
            dynamics: self.dynamics,
            w: Polynomial::from_basis_coefficients(n, self.degree, &self.w)?,
            j: Polynomial::from_basis_coefficients(n, self.degree, &self.j)?,
            v: Polynomial::from_basis_coefficients(n, self.degree, &self.v)?,
            epsilon: self.epsilon,
            d_k: self.d_k,
            params: self.params,
            set: self.set.into_set()?,
            solver_status: self.solver_status,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> DynamicalSystem {
        DynamicalSystem::parse(SystemKind::Continuous, &["-x1", "-x2"]).unwrap()
    }

    fn p(s: &str) -> Polynomial {
        parse_polynomial(s, 2).unwrap()
    }

    fn toy_cert() -> Certificate {
        let set = SemialgebraicSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0], 2f64.sqrt()).unwrap();
        Certificate::from_parts(&decay(), &set, SolveParams::continuous(2, 0.2), p("1"), p("x1^2 + x2^2"), p("1"), 0.25)
            .unwrap()
    }

    #[test]
    fn van_der_pol_program_sizes() {
        let sys = DynamicalSystem::parse(SystemKind::Continuous, &["2*x2", "-0.8*x1 - 10*(x1^2 - 0.21)*x2"]).unwrap();
        let set = SemialgebraicSet::annulus(2, 0.4, 2.0, 2.0).unwrap();
        let b = build_continuous(&sys, &set, &SolveParams::continuous(12, 0.2)).unwrap();
        let prog = &b.program;
        assert_eq!(prog.poly_vars().len(), 3);
        assert!(prog.poly_vars().iter().all(|v| v.len == 91));
        assert_eq!(prog.scalar_vars().len(), 1);
        assert_eq!(prog.num_constraints(), 5);
        for id in 0..5 {
            assert_eq!(prog.constraint_blocks(id).len(), 4);
        }
        assert!(matches!(build_discrete(&sys, &set, &SolveParams::discrete(4, 0.1, 0.1)), Err(AttractorError::WrongKind { .. })));
    }

    #[test]
    fn henon_program_compiles() {
        let sys = DynamicalSystem::parse(SystemKind::Discrete, &["2/3*(1 + x2) - 2.1*x1^2", "0.45*x1"]);
        assert!(sys.is_err());
        let sys = DynamicalSystem::parse(SystemKind::Discrete, &["0.6666666666666666*(1 + x2) - 2.1*x1^2", "0.45*x1"]).unwrap();
        let set = SemialgebraicSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0], 2f64.sqrt()).unwrap();
        let b = build_discrete(&sys, &set, &SolveParams::discrete(6, DEFAULT_ALPHA, DEFAULT_GAMMA)).unwrap();
        assert_eq!(b.budgets[3], 12);
        let too_big = SolveParams { composition_cap: 10, ..SolveParams::discrete(6, 0.5, 0.5) };
        assert!(matches!(build_discrete(&sys, &set, &too_big), Err(AttractorError::CompositionTooLarge { degree: 12, .. })));
        let bad = SolveParams::discrete(6, 0.5, 1.0);
        assert!(matches!(build_discrete(&sys, &set, &bad), Err(AttractorError::InvalidParams(_))));
    }

    #[test]
    fn identity_map_substitution() {
        let sys = DynamicalSystem::parse(SystemKind::Discrete, &["x1", "x2"]).unwrap();
        let set = SemialgebraicSet::ball(2, 1.0).unwrap();
        let params = SolveParams::discrete(2, 0.5, 0.5);
        let cert = Certificate::from_parts(&sys, &set, params, p("1"), p("x1^2 + 3*x2"), p("x1"), 0.3).unwrap();
        let cs = cert.constraint_polynomials(&sys).unwrap();
        // ε - 0.5 J + J - v
        let expect = p("0.3 + 0.5*x1^2 + 1.5*x2 - x1");
        assert!(cs[3].try_sub(&expect).unwrap().max_abs_coefficient() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(SolveParams::continuous(1, 0.2).validate(SystemKind::Continuous).is_err());
        assert!(SolveParams::continuous(4, -1.0).validate(SystemKind::Continuous).is_err());
        assert!(SolveParams::continuous(4, 0.2).validate(SystemKind::Discrete).is_err());
        assert!(SolveParams::discrete(4, 0.2, 0.3).validate(SystemKind::Continuous).is_err());
        assert!(SolveParams::discrete(4, 0.0, 0.3).validate(SystemKind::Discrete).is_err());
        assert!(SolveParams::continuous(4, 0.2).with_epsilon_scale(0.0).validate(SystemKind::Continuous).is_err());
    }

    #[test]
    fn membership_examples() {
        let c = toy_cert();
        assert!(c.member(&[0.0, 0.0], None).unwrap());
        assert!(!c.member(&[1.0, 1.0], None).unwrap());
        assert!(c.member(&[0.5, 0.0], None).unwrap());
        assert!(c.member_interior_variant(&[0.4, 0.0], None).unwrap());
        assert!(!c.member_interior_variant(&[2.0, 2.0], None).unwrap());
        assert!(!c.member(&[2.0, 0.0], Some(100.0)).unwrap());
        assert!(c.member_interior_variant(&[2.0, 0.0], Some(100.0)).unwrap());
        assert!(c.member(&[0.0], None).is_err());
        assert_eq!(intersect_members(std::slice::from_ref(&c), &[0.3, 0.1]).unwrap(), c.member(&[0.3, 0.1], None).unwrap());
        let mut empty = c.clone();
        empty.v = p("-1");
        assert!(!intersect_members(&[c.clone(), empty], &[0.0, 0.0]).unwrap());
        let mut other = c.clone();
        other.set = SemialgebraicSet::ball(2, 1.0).unwrap();
        assert!(matches!(intersect_members(&[c, other], &[0.0, 0.0]), Err(AttractorError::MismatchedSets)));
    }

    #[test]
    fn certificate_json_round_trip_is_exact() {
        let mut c = toy_cert();
        c.w = p("0.1 + 0.30000000000000004*x1^2 - 1e-17*x2");
        c.d_k = 1.0 / 3.0;
        let text = c.to_json().unwrap();
        let back = Certificate::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(text.contains("\"monomial_order\": \"grlex\""));
        assert!(Certificate::from_json(&text.replace("grlex", "lex")).is_err());
    }

    #[test]
    fn rescaled_dynamics() {
        let sys = DynamicalSystem::parse(SystemKind::Discrete, &["x1^2", "x2 + 1"]).unwrap();
        let r = sys.rescaled(&[1.0, 2.0], 0.5).unwrap();
        // f̃(y) = (f(c + s y) - c) / s
        let y = [0.3, -0.7];
        let x = [1.0 + 0.5 * y[0], 2.0 + 0.5 * y[1]];
        let fx = sys.f().eval(&x);
        let fy = r.f().eval(&y);
        assert!((fy[0] - (fx[0] - 1.0) / 0.5).abs() < 1e-14);
        assert!((fy[1] - (fx[1] - 2.0) / 0.5).abs() < 1e-14);
    }

    #[test]
    fn decay_system_solves() {
        let set = SemialgebraicSet::ball(2, 1.0).unwrap();
        let cert = solve_attractor(&decay(), &set, &SolveParams::continuous(4, 0.5), &SolverSettings::default()).unwrap();
        assert_eq!(cert.solver_status, SolveStatus::Optimal);
        assert!(cert.epsilon >= 0.0);
        assert!(cert.member(&[0.0, 0.0], None).unwrap());
        let rel = (cert.recomputed_objective().unwrap() - cert.d_k).abs() / cert.d_k.abs().max(1e-12);
        assert!(rel < 1e-8, "relative objective mismatch {}", rel);
    }
}
