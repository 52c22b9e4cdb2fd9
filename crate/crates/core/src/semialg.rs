//! Compact basic semialgebraic constraint sets `X = {x : g_i(x) >= 0}`.
//!
//! Every set carries the bounding-ball inequality `R^2 - |x|^2 >= 0`. Boxes,
//! balls and annuli additionally remember their shape so that Lebesgue moments
//! can be computed in closed form; anything else falls back to Monte Carlo.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{basis, Monomial, PolyError, Polynomial, PolynomialMap};

#[derive(Debug, Error)]
pub enum SetError {
    #[error("invalid set description: {0}")]
    Invalid(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("monte carlo moments requested for a generic set but no sample count was given")]
    MissingSampleCount,
    #[error("set appears empty: volume estimate {estimate} is within 3 standard errors ({stderr}) of zero")]
    EmptySet { estimate: f64, stderr: f64 },
    #[error("rejection sampling gave up after {proposals} proposals with {accepted} accepted")]
    LowAcceptance { proposals: u64, accepted: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    Generic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemialgebraicSet {
    nvars: usize,
    inequalities: Vec<Polynomial>,
    ball_radius: f64,
    shape: Shape,
}

/// `r^2 - |x|^2`
fn ball_poly(nvars: usize, r: f64) -> Polynomial {
    let mut p = Polynomial::constant(nvars, r * r);
    for i in 0..nvars {
        let mut e = vec![0; nvars];
        e[i] = 2;
        p.add_term(Monomial::new(e), -1.0);
    }
    p
}

impl SemialgebraicSet {
    /// Axis-aligned box `[lower, upper]`; `ball_radius` must enclose every corner.
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>, ball_radius: f64) -> Result<Self, SetError> {
        let n = lower.len();
        if n == 0 || upper.len() != n {
            return Err(SetError::Invalid("box bounds must be nonempty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(SetError::Invalid("box requires lower < upper in every coordinate".into()));
        }
        let corner = lower
            .iter()
            .zip(&upper)
            .map(|(a, b)| a.abs().max(b.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        if !(ball_radius > 0.0) || ball_radius < corner {
            return Err(SetError::Invalid(format!(
                "ball_radius {} does not enclose the box (needs >= {})",
                ball_radius, corner
            )));
        }
        let shape = Shape::Box { lower, upper };
        Ok(SemialgebraicSet { nvars: n, inequalities: Self::shape_inequalities(n, &shape, ball_radius), ball_radius, shape })
    }

    /// Origin-centred ball; its single inequality is the bounding-ball one.
    pub fn ball(nvars: usize, radius: f64) -> Result<Self, SetError> {
        if nvars == 0 || !(radius > 0.0) {
            return Err(SetError::Invalid("ball needs nvars >= 1 and radius > 0".into()));
        }
        let shape = Shape::Ball { radius };
        Ok(SemialgebraicSet { nvars, inequalities: Self::shape_inequalities(nvars, &shape, radius), ball_radius: radius, shape })
    }

    /// Origin-centred annulus `inner <= |x| <= outer`.
    pub fn annulus(nvars: usize, inner: f64, outer: f64, ball_radius: f64) -> Result<Self, SetError> {
        if nvars == 0 || !(inner >= 0.0) || !(inner < outer) {
            return Err(SetError::Invalid("annulus needs nvars >= 1 and 0 <= inner < outer".into()));
        }
        if ball_radius < outer {
            return Err(SetError::Invalid(format!(
                "ball_radius {} must be at least the outer radius {}",
                ball_radius, outer
            )));
        }
        let shape = Shape::Annulus { inner, outer };
        Ok(SemialgebraicSet { nvars, inequalities: Self::shape_inequalities(nvars, &shape, ball_radius), ball_radius, shape })
    }

    /// Arbitrary inequalities. The bounding-ball inequality is appended unless
    /// one of the given polynomials already equals it coefficient-for-coefficient.
    pub fn generic(nvars: usize, inequalities: Vec<Polynomial>, ball_radius: f64) -> Result<Self, SetError> {
        if nvars == 0 || !(ball_radius > 0.0) {
            return Err(SetError::Invalid("generic set needs nvars >= 1 and ball_radius > 0".into()));
        }
        if let Some(g) = inequalities.iter().find(|g| g.nvars() != nvars) {
            return Err(PolyError::DimensionMismatch { expected: nvars, found: g.nvars() }.into());
        }
        let mut inequalities = inequalities;
        let bp = ball_poly(nvars, ball_radius);
        if !inequalities.contains(&bp) {
            inequalities.push(bp);
        }
        Ok(SemialgebraicSet { nvars, inequalities, ball_radius, shape: Shape::Generic })
    }

    /// Rebuilds a set from its serialized parts, checking the invariants.
    pub fn from_parts(nvars: usize, shape: Shape, inequalities: Vec<Polynomial>, ball_radius: f64) -> Result<Self, SetError> {
        let set = match &shape {
            Shape::Box { lower, upper } => Self::boxed(lower.clone(), upper.clone(), ball_radius)?,
            Shape::Ball { radius } => {
                if *radius != ball_radius {
                    return Err(SetError::Invalid("ball radius must equal ball_radius".into()));
                }
                Self::ball(nvars, *radius)?
            }
            Shape::Annulus { inner, outer } => Self::annulus(nvars, *inner, *outer, ball_radius)?,
            Shape::Generic => {
                let s = Self::generic(nvars, inequalities.clone(), ball_radius)?;
                if s.inequalities != inequalities {
                    return Err(SetError::Invalid("generic set is missing its bounding-ball inequality".into()));
                }
                s
            }
        };
        if set.nvars != nvars || set.inequalities != inequalities {
            return Err(SetError::Invalid("inequalities do not match the declared shape".into()));
        }
        Ok(set)
    }

    fn shape_inequalities(n: usize, shape: &Shape, ball_radius: f64) -> Vec<Polynomial> {
        match shape {
            Shape::Box { lower, upper } => {
                let mut gs: Vec<Polynomial> = (0..n)
                    .map(|i| {
                        let xi = Polynomial::var(n, i);
                        let lo = &xi - &Polynomial::constant(n, lower[i]);
                        let hi = &Polynomial::constant(n, upper[i]) - &xi;
                        &lo * &hi
                    })
                    .collect();
                gs.push(ball_poly(n, ball_radius));
                gs
            }
            Shape::Ball { radius } => vec![ball_poly(n, *radius)],
            Shape::Annulus { inner, outer } => {
                vec![-&ball_poly(n, *inner), ball_poly(n, *outer), ball_poly(n, ball_radius)]
            }
            Shape::Generic => unreachable!("generic sets carry explicit inequalities"),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn inequalities(&self) -> &[Polynomial] {
        &self.inequalities
    }

    pub fn ball_radius(&self) -> f64 {
        self.ball_radius
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// `true` iff every `g_i(x) >= 0` (boundary inclusive, no tolerance).
    pub fn contains(&self, x: &[f64]) -> Result<bool, SetError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: x.len() }.into());
        }
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        self.inequalities.iter().all(|g| g.eval(x) >= 0.0)
    }

    /// `min_i g_i(x)`.
    pub fn min_inequality(&self, x: &[f64]) -> f64 {
        self.inequalities.iter().map(|g| g.eval(x)).fold(f64::INFINITY, f64::min)
    }

    /// Box used for proposals and plotting grids: the box itself for box
    /// shapes, the cube `[-R, R]^n` otherwise.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Box { lower, upper } => (lower.clone(), upper.clone()),
            _ => (vec![-self.ball_radius; self.nvars], vec![self.ball_radius; self.nvars]),
        }
    }

    /// Exact Lebesgue volume for box, ball and annulus shapes.
    pub fn analytic_volume(&self) -> Option<f64> {
        self.closed_form_moment(&Monomial::one(self.nvars))
    }

    fn closed_form_moment(&self, m: &Monomial) -> Option<f64> {
        let a = m.exponents();
        match &self.shape {
            Shape::Box { lower, upper } => Some(
                a.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(&e, (&lo, &hi))| {
                        let k = e as i32 + 1;
                        (hi.powi(k) - lo.powi(k)) / k as f64
                    })
                    .product(),
            ),
            Shape::Ball { radius } => Some(ball_moment(a, *radius)),
            Shape::Annulus { inner, outer } => Some(ball_moment(a, *outer) - ball_moment(a, *inner)),
            Shape::Generic => None,
        }
    }

    /// Affine change of coordinates `y = (x - center) / scale` that maps the
    /// bounding box of the set into `[-1, 1]^n`.
    pub fn unit_box_transform(&self) -> (Vec<f64>, f64) {
        match &self.shape {
            Shape::Box { lower, upper } => {
                let center = lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect();
                let scale = lower.iter().zip(upper).map(|(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);
                (center, scale)
            }
            Shape::Ball { radius } => (vec![0.0; self.nvars], *radius),
            Shape::Annulus { outer, .. } => (vec![0.0; self.nvars], *outer),
            Shape::Generic => (vec![0.0; self.nvars], self.ball_radius),
        }
    }

    /// The set `{y : center + scale * y ∈ X}`, described in the same shape family.
    pub fn affine_image(&self, center: &[f64], scale: f64) -> Result<Self, SetError> {
        if center.len() != self.nvars || !(scale > 0.0) {
            return Err(SetError::Invalid("affine image needs matching center and positive scale".into()));
        }
        let centered = center.iter().all(|&c| c == 0.0);
        match &self.shape {
            Shape::Box { lower, upper } => {
                let lo: Vec<f64> = lower.iter().zip(center).map(|(a, c)| (a - c) / scale).collect();
                let hi: Vec<f64> = upper.iter().zip(center).map(|(b, c)| (b - c) / scale).collect();
                let r = if centered {
                    self.ball_radius / scale
                } else {
                    lo.iter().zip(&hi).map(|(a, b)| a.abs().max(b.abs()).powi(2)).sum::<f64>().sqrt()
                };
                Self::boxed(lo, hi, r)
            }
            Shape::Ball { radius } if centered => Self::ball(self.nvars, radius / scale),
            Shape::Annulus { inner, outer } if centered => {
                Self::annulus(self.nvars, inner / scale, outer / scale, self.ball_radius / scale)
            }
            _ => {
                let map = affine_map(center, scale);
                let gs = self
                    .inequalities
                    .iter()
                    .map(|g| g.compose(&map))
                    .collect::<Result<Vec<_>, _>>()?;
                let norm_c = center.iter().map(|c| c * c).sum::<f64>().sqrt();
                Self::generic(self.nvars, gs, (self.ball_radius + norm_c) / scale)
            }
        }
    }
}

/// The map `y ↦ center + scale * y`.
pub(crate) fn affine_map(center: &[f64], scale: f64) -> PolynomialMap {
    let n = center.len();
    let comps = (0..n)
        .map(|i| &Polynomial::constant(n, center[i]) + &Polynomial::var(n, i).scale(scale))
        .collect();
    PolynomialMap::new(comps).expect("components share nvars")
}

/// `Γ(k / 2)` for a positive integer `k`.
fn gamma_half(k: u32) -> f64 {
    debug_assert!(k > 0);
    let (mut z, mut acc) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (0.5, std::f64::consts::PI.sqrt()) };
    let target = k as f64 / 2.0;
    while z < target {
        acc *= z;
        z += 1.0;
    }
    acc
}

/// `∫_{|x| <= r} x^a dx`: zero unless every exponent is even, otherwise
/// `2 Π Γ((a_i+1)/2) / Γ((|a|+n)/2) · r^(|a|+n) / (|a|+n)`.
fn ball_moment(a: &[u32], r: f64) -> f64 {
    if r == 0.0 || a.iter().any(|e| e % 2 == 1) {
        return 0.0;
    }
    let n = a.len() as u32;
    let total: u32 = a.iter().sum::<u32>() + n;
    let num: f64 = a.iter().map(|&e| gamma_half(e + 1)).product();
    2.0 * num / gamma_half(total) * r.powi(total as i32) / total as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    ClosedForm,
    MonteCarlo,
}

/// Lebesgue moments `∫_X x^α dx` over `basis(nvars, max_degree)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    pub nvars: usize,
    pub max_degree: u32,
    pub values: Vec<f64>,
    pub method: MomentMethod,
    pub stderr: Option<Vec<f64>>,
}

impl MomentVector {
    /// `λ(X)`, the moment of the constant monomial.
    pub fn volume(&self) -> f64 {
        self.values[0]
    }

    /// `∫_X p dx` for a polynomial of degree at most `max_degree`.
    pub fn integrate(&self, p: &Polynomial) -> Result<f64, PolyError> {
        let c = p.basis_coefficients(self.max_degree)?;
        Ok(c.iter().zip(&self.values).map(|(a, b)| a * b).sum())
    }
}

/// Closed-form moments for box, ball and annulus shapes; Monte Carlo with
/// per-entry standard errors otherwise.
pub fn moments(
    set: &SemialgebraicSet,
    max_degree: u32,
    mc_samples: Option<usize>,
    seed: Option<u64>,
) -> Result<MomentVector, SetError> {
    if let Shape::Generic = set.shape {
        let n = mc_samples.ok_or(SetError::MissingSampleCount)?;
        return monte_carlo_moments(set, max_degree, n, seed.unwrap_or(0));
    }
    let values = basis(set.nvars, max_degree)
        .iter()
        .map(|m| set.closed_form_moment(m).expect("shape has closed form"))
        .collect();
    Ok(MomentVector { nvars: set.nvars, max_degree, values, method: MomentMethod::ClosedForm, stderr: None })
}

const MC_CHUNK: usize = 1 << 16;

/// Hit-or-miss Monte Carlo moments from uniform proposals in the bounding box,
/// regardless of shape.
pub fn monte_carlo_moments(
    set: &SemialgebraicSet,
    max_degree: u32,
    samples: usize,
    seed: u64,
) -> Result<MomentVector, SetError> {
    if samples < 2 {
        return Err(SetError::Invalid("monte carlo moments need at least two samples".into()));
    }
    let monos = basis(set.nvars, max_degree);
    let nm = monos.len();
    let (lo, hi) = set.bounding_box();
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let nchunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut sum = vec![0.0; nm];
            let mut sq = vec![0.0; nm];
            let mut x = vec![0.0; set.nvars];
            let mut vals = vec![0.0; nm];
            for _ in 0..count {
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = rng.random_range(lo[i]..hi[i]);
                }
                if !set.contains_unchecked(&x) {
                    continue;
                }
                monomial_values(&monos, &x, max_degree, &mut vals);
                for k in 0..nm {
                    sum[k] += vals[k];
                    sq[k] += vals[k] * vals[k];
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; nm];
    let mut sq = vec![0.0; nm];
    for (s, q) in partial {
        for k in 0..nm {
            sum[k] += s[k];
            sq[k] += q[k];
        }
    }
    let nf = samples as f64;
    let mut values = Vec::with_capacity(nm);
    let mut stderr = Vec::with_capacity(nm);
    for k in 0..nm {
        let mean = sum[k] / nf;
        let var = ((sq[k] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        values.push(box_vol * mean);
        stderr.push(box_vol * (var / nf).sqrt());
    }
    if values[0] <= 3.0 * stderr[0] {
        return Err(SetError::EmptySet { estimate: values[0], stderr: stderr[0] });
    }
    Ok(MomentVector { nvars: set.nvars, max_degree, values, method: MomentMethod::MonteCarlo, stderr: Some(stderr) })
}

/// Values of every monomial in `monos` (all of degree <= `max_degree`) at `x`.
pub(crate) fn monomial_values(monos: &[Monomial], x: &[f64], max_degree: u32, out: &mut [f64]) {
    let stride = max_degree as usize + 1;
    let mut pows = vec![1.0; x.len() * stride];
    for (i, &xi) in x.iter().enumerate() {
        for e in 1..stride {
            pows[i * stride + e] = pows[i * stride + e - 1] * xi;
        }
    }
    for (o, m) in out.iter_mut().zip(monos) {
        *o = m
            .exponents()
            .iter()
            .enumerate()
            .fold(1.0, |acc, (i, &e)| acc * pows[i * stride + e as usize]);
    }
}

/// Independent random stream for chunk `chunk` of a seeded computation.
///
/// Work split into fixed-size chunks draws the same numbers no matter how
/// many threads process the chunks.
pub(crate) fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

const SAMPLE_CHUNK: usize = 1024;

/// Limits for [`rejection_sample`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct RejectionLimits {
    /// Hard cap on proposals per chunk.
    pub max_proposals_per_chunk: u64,
    /// Give up once at least 10^6 proposals were made and the acceptance
    /// rate is below this value.
    pub min_rate: f64,
}

/// Uniform proposals in `[lo, hi]` filtered by `accept`, chunked for
/// deterministic parallel generation.
pub(crate) fn rejection_sample<F>(
    lo: &[f64],
    hi: &[f64],
    count: usize,
    seed: u64,
    limits: RejectionLimits,
    accept: F,
) -> Result<Vec<Vec<f64>>, SetError>
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let nchunks = count.div_ceil(SAMPLE_CHUNK);
    let chunks: Vec<Result<Vec<Vec<f64>>, SetError>> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let want = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
            let mut rng = chunk_rng(seed, c as u64);
            let mut out = Vec::with_capacity(want);
            let mut proposals: u64 = 0;
            let mut x = vec![0.0; lo.len()];
            while out.len() < want {
                if proposals >= limits.max_proposals_per_chunk
                    || (proposals >= 1_000_000 && (out.len() as f64) < limits.min_rate * proposals as f64)
                {
                    return Err(SetError::LowAcceptance { proposals, accepted: out.len() as u64 });
                }
                proposals += 1;
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = rng.random_range(lo[i]..hi[i]);
                }
                if accept(&x) {
                    out.push(x.clone());
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(count);
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// `count` i.i.d. uniform points of `X`, reproducible for a fixed seed.
pub fn sample(set: &SemialgebraicSet, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, SetError> {
    if count == 0 {
        return Err(SetError::Invalid("sample count must be at least 1".into()));
    }
    let (lo, hi) = set.bounding_box();
    let limits = RejectionLimits { max_proposals_per_chunk: u64::MAX, min_rate: 1e-6 };
    rejection_sample(&lo, &hi, count, seed, limits, |x| set.contains_unchecked(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_polynomial;

    fn unit_box() -> SemialgebraicSet {
        SemialgebraicSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0], 2f64.sqrt()).unwrap()
    }

    fn vdp_annulus() -> SemialgebraicSet {
        SemialgebraicSet::annulus(2, 0.4, 2.0, 2.0).unwrap()
    }

    fn moment_of(mv: &MomentVector, e: &[u32]) -> f64 {
        let b = basis(mv.nvars, mv.max_degree);
        let i = b.iter().position(|m| m.exponents() == e).unwrap();
        mv.values[i]
    }

    #[test]
    fn box_moments() {
        let mv = moments(&unit_box(), 2, None, None).unwrap();
        assert_eq!(mv.method, MomentMethod::ClosedForm);
        assert!((moment_of(&mv, &[1, 1]) - 0.25).abs() < 1e-15);
        let sym = SemialgebraicSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0], 2f64.sqrt()).unwrap();
        let mv = moments(&sym, 3, None, None).unwrap();
        assert_eq!(moment_of(&mv, &[1, 0]), 0.0);
        assert_eq!(mv.volume(), 4.0);
    }

    #[test]
    fn annulus_moments() {
        let mv = moments(&vdp_annulus(), 4, None, None).unwrap();
        let area = std::f64::consts::PI * (4.0 - 0.16);
        assert!((mv.volume() - area).abs() < 1e-12 * area);
        assert!((mv.volume() - 12.0637).abs() < 1e-4);
        assert_eq!(moment_of(&mv, &[1, 0]), 0.0);
        // ∫ x^2 over the annulus = π/4 (R^4 - r^4)
        let want = std::f64::consts::PI / 4.0 * (16.0 - 0.4f64.powi(4));
        assert!((moment_of(&mv, &[2, 0]) - want).abs() < 1e-12 * want);
    }

    #[test]
    fn ball_volume_in_three_dimensions() {
        let b = SemialgebraicSet::ball(3, 1.5).unwrap();
        let want = 4.0 / 3.0 * std::f64::consts::PI * 1.5f64.powi(3);
        assert!((b.analytic_volume().unwrap() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn generic_requires_samples_and_detects_empty() {
        let g = parse_polynomial("1 - x1^2 - x2^2", 2).unwrap();
        let set = SemialgebraicSet::generic(2, vec![g], 1.0).unwrap();
        assert_eq!(set.inequalities().len(), 1);
        assert!(matches!(moments(&set, 2, None, None), Err(SetError::MissingSampleCount)));
        let empty = SemialgebraicSet::generic(2, vec![parse_polynomial("-1 - x1^2", 2).unwrap()], 1.0).unwrap();
        assert!(matches!(moments(&empty, 2, Some(10_000), Some(1)), Err(SetError::EmptySet { .. })));
    }

    #[test]
    fn shape_inequality_counts() {
        assert_eq!(unit_box().inequalities().len(), 3);
        assert_eq!(vdp_annulus().inequalities().len(), 3);
        assert_eq!(SemialgebraicSet::ball(2, 1.0).unwrap().inequalities().len(), 1);
        assert!(SemialgebraicSet::boxed(vec![0.0], vec![2.0], 1.0).is_err());
    }

    #[test]
    fn containment() {
        let b = unit_box();
        assert!(b.contains(&[0.5, 0.5]).unwrap());
        assert!(!b.contains(&[1.1, 0.0]).unwrap());
        assert!(b.contains(&[1.0, 0.0]).unwrap());
        assert!(!vdp_annulus().contains(&[0.0, 0.0]).unwrap());
        assert!(b.contains(&[0.5]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_inside() {
        let b = unit_box();
        let pts = sample(&b, 3, 7).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| b.contains(p).unwrap()));
        assert_eq!(pts, sample(&b, 3, 7).unwrap());
        assert_ne!(pts, sample(&b, 3, 8).unwrap());
    }

    #[test]
    fn annulus_mean_radius() {
        let pts = sample(&vdp_annulus(), 10_000, 3).unwrap();
        let radii: Vec<f64> = pts.iter().map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).collect();
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        assert!((1.0..=1.6).contains(&mean));
        // uniform annulus: E|x| = (2/3)(R^3 - r^3)/(R^2 - r^2)
        let want = 2.0 / 3.0 * (8.0 - 0.064) / (4.0 - 0.16);
        let var = radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (radii.len() - 1) as f64;
        assert!((mean - want).abs() < 3.0 * (var / radii.len() as f64).sqrt());
    }

    #[test]
    fn affine_image_keeps_shape() {
        let (c, s) = unit_box().unit_box_transform();
        assert_eq!(c, vec![0.5, 0.5]);
        assert_eq!(s, 0.5);
        let img = unit_box().affine_image(&c, s).unwrap();
        assert_eq!(img.shape(), &Shape::Box { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] });
        let (c, s) = vdp_annulus().unit_box_transform();
        let img = vdp_annulus().affine_image(&c, s).unwrap();
        assert_eq!(img.shape(), &Shape::Annulus { inner: 0.2, outer: 1.0 });
        assert!(img.contains(&[0.5, 0.0]).unwrap());
    }

    #[test]
    fn from_parts_round_trip() {
        for set in [unit_box(), vdp_annulus(), SemialgebraicSet::ball(2, 1.0).unwrap()] {
            let back = SemialgebraicSet::from_parts(
                set.nvars(),
                set.shape().clone(),
                set.inequalities().to_vec(),
                set.ball_radius(),
            )
            .unwrap();
            assert_eq!(back, set);
        }
    }
}
