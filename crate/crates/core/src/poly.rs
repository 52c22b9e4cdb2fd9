//! Sparse multivariate polynomials with real coefficients.
//!
//! Terms are kept in a [`BTreeMap`] keyed by [`Monomial`], whose ordering is
//! graded lexicographic with the constant monomial first. Iterating a
//! polynomial therefore walks its terms in the same order as [`basis`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// Exponent vector of a monomial `x1^a1 * ... * xn^an`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    /// The monomial `x_var` (0-based variable index).
    pub fn var(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            // within a degree, larger leading exponents come first: x1^2 < x1*x2 < x2^2
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

/// All monomials in `nvars` variables of total degree at most `max_degree`,
/// in graded lexicographic order with the constant monomial first.
///
/// The length is `C(nvars + max_degree, nvars)`.
pub fn basis(nvars: usize, max_degree: u32) -> Vec<Monomial> {
    let mut out = Vec::with_capacity(basis_len(nvars, max_degree));
    let mut buf = vec![0u32; nvars];
    for d in 0..=max_degree {
        homogeneous(nvars, d, 0, &mut buf, &mut out);
    }
    out
}

fn homogeneous(nvars: usize, remaining: u32, pos: usize, buf: &mut [u32], out: &mut Vec<Monomial>) {
    if pos + 1 == nvars {
        buf[pos] = remaining;
        out.push(Monomial(buf.to_vec()));
        return;
    }
    if nvars == 0 {
        out.push(Monomial(Vec::new()));
        return;
    }
    for e in (0..=remaining).rev() {
        buf[pos] = e;
        homogeneous(nvars, remaining - e, pos + 1, buf, out);
    }
    buf[pos] = 0;
}

/// `C(nvars + max_degree, nvars)`.
pub fn basis_len(nvars: usize, max_degree: u32) -> usize {
    let (n, d) = (nvars as u128, max_degree as u128);
    let k = n.min(d);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n + d - i) / (i + 1);
    }
    acc as usize
}

/// Lookup from monomial to its position in a [`basis`].
#[derive(Clone, Debug)]
pub struct BasisIndex {
    monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl BasisIndex {
    pub fn new(nvars: usize, max_degree: u32) -> Self {
        let monomials = basis(nvars, max_degree);
        let index = monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        BasisIndex { monomials, index }
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    /// The coordinate polynomial `x_var` (0-based).
    pub fn var(nvars: usize, var: usize) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(Monomial::var(nvars, var), 1.0);
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, summing repeats.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in terms {
            if m.nvars() != nvars {
                return Err(PolyError::DimensionMismatch { expected: nvars, found: m.nvars() });
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    /// Polynomial with coefficients `coeffs[i]` on `basis(nvars, degree)[i]`.
    pub fn from_basis_coefficients(nvars: usize, degree: u32, coeffs: &[f64]) -> Result<Self, PolyError> {
        let b = basis(nvars, degree);
        if b.len() != coeffs.len() {
            return Err(PolyError::DimensionMismatch { expected: b.len(), found: coeffs.len() });
        }
        Polynomial::from_terms(nvars, b.into_iter().zip(coeffs.iter().copied()))
    }

    /// Coefficients on `basis(nvars, degree)`; terms above `degree` are an error.
    pub fn basis_coefficients(&self, degree: u32) -> Result<Vec<f64>, PolyError> {
        let idx = BasisIndex::new(self.nvars, degree);
        let mut out = vec![0.0; idx.len()];
        for (m, &c) in &self.terms {
            match idx.position(m) {
                Some(i) => out[i] = c,
                None => {
                    return Err(PolyError::DimensionMismatch {
                        expected: degree as usize,
                        found: m.degree() as usize,
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    /// Adds `c * m`, dropping the term if the coefficient cancels to exactly zero.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.nvars(), self.nvars);
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = *e.get() + c;
                if v == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    fn check_dim(&self, other: usize) -> Result<(), PolyError> {
        if self.nvars != other {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: other });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, PolyError> {
        self.check_dim(x.len())?;
        Ok(self.eval(x))
    }

    /// Unchecked evaluation; `x.len()` must equal `nvars`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let maxdeg = self.degree() as usize;
        if maxdeg <= 1 {
            return self.terms.iter().map(|(m, &c)| c * m.eval(x)).sum();
        }
        // power table: pows[i * (maxdeg+1) + e] = x_i^e
        let stride = maxdeg + 1;
        let mut pows = vec![1.0; self.nvars * stride];
        for (i, &xi) in x.iter().enumerate() {
            for e in 1..stride {
                pows[i * stride + e] = pows[i * stride + e - 1] * xi;
            }
        }
        self.terms
            .iter()
            .map(|(m, &c)| {
                m.0.iter()
                    .enumerate()
                    .fold(c, |acc, (i, &e)| acc * pows[i * stride + e as usize])
            })
            .sum()
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.nvars);
        }
        let mut p = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            p.add_term(m.clone(), c * s);
        }
        p
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other.nvars)?;
        let mut p = self.clone();
        for (m, &c) in &other.terms {
            p.add_term(m.clone(), c);
        }
        Ok(p)
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other.nvars)?;
        let mut p = self.clone();
        for (m, &c) in &other.terms {
            p.add_term(m.clone(), -c);
        }
        Ok(p)
    }

    pub fn multiply(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other.nvars)?;
        let mut p = Polynomial::zero(self.nvars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                p.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(p)
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Partial derivative with respect to `x_var` (0-based index).
    pub fn differentiate(&self, var: usize) -> Result<Polynomial, PolyError> {
        if var >= self.nvars {
            return Err(PolyError::VariableOutOfRange { index: var, nvars: self.nvars });
        }
        let mut p = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut dm = m.clone();
            dm.0[var] -= 1;
            p.add_term(dm, c * e as f64);
        }
        Ok(p)
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.nvars)
            .map(|i| self.differentiate(i).expect("index in range"))
            .collect()
    }

    /// `∇p · f`, the derivative of `p` along the vector field `f`.
    pub fn lie_derivative(&self, f: &PolynomialMap) -> Result<Polynomial, PolyError> {
        self.check_dim(f.nvars())?;
        if f.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: f.len() });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (i, fi) in f.components().iter().enumerate() {
            let di = self.differentiate(i)?;
            if di.is_zero() {
                continue;
            }
            out += &(&di * fi);
        }
        Ok(out)
    }

    /// `p ∘ f`, where `f` has one component per variable of `p`.
    pub fn compose(&self, f: &PolynomialMap) -> Result<Polynomial, PolyError> {
        if f.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: f.len() });
        }
        let mut powers = PowerCache::new(f);
        let mut out = Polynomial::zero(f.nvars());
        for (m, &c) in &self.terms {
            let t = powers.monomial(m);
            for (mm, &cc) in &t.terms {
                out.add_term(mm.clone(), c * cc);
            }
        }
        Ok(out)
    }
}

/// Memoized powers `f_i^e` used when substituting many monomials into one map.
pub(crate) struct PowerCache<'a> {
    f: &'a PolynomialMap,
    powers: Vec<Vec<Polynomial>>,
}

impl<'a> PowerCache<'a> {
    pub(crate) fn new(f: &'a PolynomialMap) -> Self {
        let powers = f
            .components()
            .iter()
            .map(|_| vec![Polynomial::constant(f.nvars(), 1.0)])
            .collect();
        PowerCache { f, powers }
    }

    fn power(&mut self, i: usize, e: u32) -> &Polynomial {
        while self.powers[i].len() <= e as usize {
            let next = self.powers[i].last().unwrap() * &self.f.components()[i];
            self.powers[i].push(next);
        }
        &self.powers[i][e as usize]
    }

    pub(crate) fn monomial(&mut self, m: &Monomial) -> Polynomial {
        let mut acc = Polynomial::constant(self.f.nvars(), 1.0);
        for (i, &e) in m.exponents().iter().enumerate() {
            if e > 0 {
                acc = &acc * self.power(i, e);
            }
        }
        acc
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.multiply(rhs).expect("polynomial dimension mismatch")
    }
}

impl Mul<f64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl AddAssign<&Polynomial> for Polynomial {
    fn add_assign(&mut self, rhs: &Polynomial) {
        assert_eq!(self.nvars, rhs.nvars, "polynomial dimension mismatch");
        for (m, &c) in &rhs.terms {
            self.add_term(m.clone(), c);
        }
    }
}

impl fmt::Display for Polynomial {
    /// Prints in a form accepted by [`parse_polynomial`]; coefficients use the
    /// shortest representation that round-trips.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, &c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if k == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_constant() {
                write!(f, "{:?}", mag)?;
            } else if mag == 1.0 {
                write!(f, "{}", m)?;
            } else {
                write!(f, "{:?}*{}", mag, m)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct PolynomialMap {
    nvars: usize,
    components: Vec<Polynomial>,
}

impl PolynomialMap {
    pub fn new(components: Vec<Polynomial>) -> Result<Self, PolyError> {
        let nvars = components.first().map(Polynomial::nvars).unwrap_or(0);
        for c in &components {
            if c.nvars() != nvars {
                return Err(PolyError::DimensionMismatch { expected: nvars, found: c.nvars() });
            }
        }
        Ok(PolynomialMap { nvars, components })
    }

    /// Parses one expression per output coordinate.
    pub fn parse<S: AsRef<str>>(exprs: &[S], nvars: usize) -> Result<Self, PolyError> {
        let comps = exprs
            .iter()
            .map(|e| parse_polynomial(e.as_ref(), nvars))
            .collect::<Result<Vec<_>, _>>()?;
        let mut map = PolynomialMap::new(comps)?;
        map.nvars = nvars;
        Ok(map)
    }

    pub fn identity(nvars: usize) -> Self {
        PolynomialMap { nvars, components: (0..nvars).map(|i| Polynomial::var(nvars, i)).collect() }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_square(&self) -> bool {
        self.components.len() == self.nvars
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: x.len() });
        }
        Ok(self.eval(x))
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    /// Component-wise composition `self ∘ inner`.
    pub fn compose(&self, inner: &PolynomialMap) -> Result<PolynomialMap, PolyError> {
        let comps = self
            .components
            .iter()
            .map(|c| c.compose(inner))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolynomialMap { nvars: inner.nvars, components: comps })
    }
}

/// Parses an expression over `x1..x{nvars}` into canonical expanded form.
///
/// Grammar (whitespace insignificant):
///
/// ```text
/// expr   := ['-'] term (('+'|'-') term)*
/// term   := factor ('*' factor)*
/// factor := base ('^' uint)?
/// base   := real | 'x' uint | '(' expr ')'
/// ```
pub fn parse_polynomial(text: &str, nvars: usize) -> Result<Polynomial, PolyError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, nvars };
    p.skip_ws();
    let out = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nvars: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> PolyError {
        PolyError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let negate = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut acc = self.term()?;
        if negate {
            acc = -&acc;
        }
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc += &t;
                }
                Some(b'-') => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc += &(-&t);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let f = self.factor()?;
            acc = &acc * &f;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            let digits = self.digits();
            if digits.is_empty() {
                return Err(self.error("exponent must be a nonnegative integer literal"));
            }
            // reject things like x1^2.5 or x1^2e3
            if matches!(self.src.get(self.pos), Some(b'.') | Some(b'e') | Some(b'E')) {
                self.pos = start;
                return Err(self.error("exponent must be a nonnegative integer literal"));
            }
            let e: u32 = digits.parse().map_err(|_| {
                PolyError::Parse { pos: start, msg: "exponent too large".into() }
            })?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn digits(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn base(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'x') => {
                let at = self.pos;
                self.pos += 1;
                let digits = self.digits();
                if digits.is_empty() {
                    return Err(self.error("expected variable index after 'x'"));
                }
                let idx: usize = digits
                    .parse()
                    .map_err(|_| PolyError::Parse { pos: at, msg: "bad variable index".into() })?;
                if idx == 0 || idx > self.nvars {
                    return Err(PolyError::Parse {
                        pos: at,
                        msg: format!("variable x{} out of range for {} variables", idx, self.nvars),
                    });
                }
                Ok(Polynomial::var(self.nvars, idx - 1))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                self.digits();
                if self.src.get(self.pos) == Some(&b'.') {
                    self.pos += 1;
                    self.digits();
                }
                if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
                    let save = self.pos;
                    self.pos += 1;
                    if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                        self.pos += 1;
                    }
                    if self.digits().is_empty() {
                        self.pos = save;
                    }
                }
                let lit = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = lit.parse().map_err(|_| PolyError::Parse {
                    pos: start,
                    msg: format!("invalid number literal '{}'", lit),
                })?;
                Ok(Polynomial::constant(self.nvars, v))
            }
            Some(_) => Err(self.error("expected number, variable or '('")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}
