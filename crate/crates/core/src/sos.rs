//! Sum-of-squares programs: polynomial unknowns, Putinar constraints on a
//! semialgebraic set, and compilation to a standard-form conic problem.
//!
//! A constraint `p ≥ 0 on X = {g_i ≥ 0}` is replaced by the identity
//! `p = σ_0 + Σ σ_i g_i` with every `σ` parameterized by a PSD Gram matrix,
//! one equality row per monomial of degree at most the constraint's budget.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::conic::{svec_index, svec_to_mat, Cone, ConicError, ConicProblem, SparseMatrix};
use crate::poly::{basis, basis_len, BasisIndex, Monomial, PolyError, Polynomial, PolynomialMap, PowerCache};
use crate::semialg::SemialgebraicSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SosError {
    #[error("a program needs at least one variable")]
    NoVariables,
    #[error("variable name {0:?} is already registered")]
    DuplicateName(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("objective for {name:?} has {found} entries, expected {expected}")]
    ObjectiveLength { name: String, expected: usize, found: usize },
    #[error("degree budget {0} is odd")]
    OddBudget(u32),
    #[error("expression degree {degree} exceeds the budget {budget}")]
    DegreeExceedsBudget { degree: u32, budget: u32 },
    #[error("set has {found} variables, program has {expected}")]
    SetDimension { expected: usize, found: usize },
    #[error("objective not set")]
    ObjectiveNotSet,
    #[error("Gram matrix side {found} does not match basis length {expected}")]
    GramSize { expected: usize, found: usize },
    #[error("solution vector has length {found}, expected {expected}")]
    SolutionLength { expected: usize, found: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

/// A scalar unknown that polynomial expressions can depend on linearly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    /// Global coefficient index across all polynomial variables.
    Coef(usize),
    Scalar(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyVariable {
    pub name: String,
    pub degree: u32,
    nvars: usize,
    /// First global coefficient index; the slice follows `basis(n, degree)`.
    pub offset: usize,
    pub len: usize,
}

impl PolyVariable {
    pub fn coefficient_indices(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    /// The variable as a symbolic polynomial `Σ c_α x^α` with unknown `c_α`.
    pub fn expr(&self) -> AffinePoly {
        let mut out = AffinePoly::zero(self.nvars);
        for (k, m) in basis(self.nvars, self.degree).into_iter().enumerate() {
            out.terms.entry(m).or_default().atoms.insert(Atom::Coef(self.offset + k), 1.0);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVariable {
    pub name: String,
    pub nonneg: bool,
    pub index: usize,
    nvars: usize,
}

impl ScalarVariable {
    /// The scalar as a constant-in-`x` expression.
    pub fn expr(&self) -> AffinePoly {
        let mut out = AffinePoly::zero(self.nvars);
        out.terms.entry(Monomial::one(self.nvars)).or_default().atoms.insert(Atom::Scalar(self.index), 1.0);
        out
    }
}

/// Coefficient of one monomial in an [`AffinePoly`]: `constant + Σ a_k atom_k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineCoef {
    pub constant: f64,
    pub atoms: BTreeMap<Atom, f64>,
}

impl AffineCoef {
    fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.atoms.values().all(|&v| v == 0.0)
    }

    fn add_scaled(&mut self, other: &AffineCoef, s: f64) {
        self.constant += s * other.constant;
        for (&a, &v) in &other.atoms {
            *self.atoms.entry(a).or_insert(0.0) += s * v;
        }
    }

    fn value(&self, atom_value: &impl Fn(Atom) -> f64) -> f64 {
        self.constant + self.atoms.iter().map(|(&a, &v)| v * atom_value(a)).sum::<f64>()
    }
}

/// Polynomial in `x` whose coefficients are affine in the program's unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePoly {
    nvars: usize,
    terms: BTreeMap<Monomial, AffineCoef>,
}

impl AffinePoly {
    pub fn zero(nvars: usize) -> Self {
        AffinePoly { nvars, terms: BTreeMap::new() }
    }

    pub fn known(p: &Polynomial) -> Self {
        let mut out = AffinePoly::zero(p.nvars());
        for (m, c) in p.terms() {
            out.terms.entry(m.clone()).or_default().constant += c;
        }
        out
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineCoef)> {
        self.terms.iter()
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, c| {
            c.atoms.retain(|_, v| *v != 0.0);
            !c.is_zero()
        });
        self
    }

    /// Highest degree with a nonzero coefficient; 0 for the zero expression.
    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|(_, c)| !c.is_zero()).map(|(m, _)| m.degree()).max().unwrap_or(0)
    }

    fn check(&self, other_nvars: usize) -> Result<(), PolyError> {
        if self.nvars != other_nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: other_nvars });
        }
        Ok(())
    }

    pub fn add(&self, other: &AffinePoly) -> Result<AffinePoly, PolyError> {
        self.check(other.nvars)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.terms.entry(m.clone()).or_default().add_scaled(c, 1.0);
        }
        Ok(out.prune())
    }

    pub fn sub(&self, other: &AffinePoly) -> Result<AffinePoly, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn add_known(&self, p: &Polynomial) -> Result<AffinePoly, PolyError> {
        self.add(&AffinePoly::known(p))
    }

    pub fn scale(&self, s: f64) -> AffinePoly {
        let mut out = AffinePoly::zero(self.nvars);
        for (m, c) in &self.terms {
            out.terms.entry(m.clone()).or_default().add_scaled(c, s);
        }
        out.prune()
    }

    /// Product with a known polynomial.
    pub fn mul_known(&self, p: &Polynomial) -> Result<AffinePoly, PolyError> {
        self.check(p.nvars())?;
        let mut out = AffinePoly::zero(self.nvars);
        for (m, c) in &self.terms {
            for (pm, pc) in p.terms() {
                out.terms.entry(m.mul(pm)).or_default().add_scaled(c, pc);
            }
        }
        Ok(out.prune())
    }

    pub fn differentiate(&self, var: usize) -> Result<AffinePoly, PolyError> {
        if var >= self.nvars {
            return Err(PolyError::VariableOutOfRange { index: var, nvars: self.nvars });
        }
        let mut out = AffinePoly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.exponents()[var];
            if e == 0 {
                continue;
            }
            let mut ex = m.exponents().to_vec();
            ex[var] -= 1;
            out.terms.entry(Monomial::new(ex)).or_default().add_scaled(c, e as f64);
        }
        Ok(out.prune())
    }

    /// `∇p · f`
    pub fn lie_derivative(&self, f: &PolynomialMap) -> Result<AffinePoly, PolyError> {
        self.check(f.nvars())?;
        if f.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: f.len() });
        }
        let mut out = AffinePoly::zero(self.nvars);
        for (i, fi) in f.components().iter().enumerate() {
            out = out.add(&self.differentiate(i)?.mul_known(fi)?)?;
        }
        Ok(out)
    }

    /// `p ∘ f`
    pub fn compose(&self, f: &PolynomialMap) -> Result<AffinePoly, PolyError> {
        if f.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, found: f.len() });
        }
        let mut powers = PowerCache::new(f);
        let mut out = AffinePoly::zero(f.nvars());
        for (m, c) in &self.terms {
            let t = powers.monomial(m);
            for (tm, tc) in t.terms() {
                out.terms.entry(tm.clone()).or_default().add_scaled(c, tc);
            }
        }
        Ok(out.prune())
    }

    /// Substitutes values for every atom.
    pub fn substitute(&self, atom_value: impl Fn(Atom) -> f64) -> Polynomial {
        let mut p = Polynomial::zero(self.nvars);
        for (m, c) in &self.terms {
            p.add_term(m.clone(), c.value(&atom_value));
        }
        p
    }
}

/// One Gram-parameterized SOS multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct GramBlock {
    pub constraint: usize,
    /// `None` for `σ_0`, otherwise the index of the multiplied `g_i`.
    pub multiplier: Option<usize>,
    pub half_degree: u32,
    pub side: usize,
}

#[derive(Clone, Debug)]
struct ConstraintInfo {
    budget: u32,
    first_row: usize,
    rows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Column {
    Atom(Atom),
    Gram { block: usize, entry: usize },
}

#[derive(Clone, Debug, Default)]
struct Row {
    entries: Vec<(Column, f64)>,
    rhs: f64,
}

#[derive(Clone, Debug)]
pub struct SosProgram {
    nvars: usize,
    poly_vars: Vec<PolyVariable>,
    scalar_vars: Vec<ScalarVariable>,
    num_coefs: usize,
    gram_blocks: Vec<GramBlock>,
    constraints: Vec<ConstraintInfo>,
    rows: Vec<Row>,
    objective: Option<BTreeMap<Atom, f64>>,
}

/// Column positions of every unknown in the compiled conic problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    coef_col: Vec<usize>,
    scalar_col: Vec<usize>,
    /// `(offset, side)` per Gram block.
    gram_col: Vec<(usize, usize)>,
    pub num_cols: usize,
}

impl Layout {
    pub fn coefficient_column(&self, global: usize) -> usize {
        self.coef_col[global]
    }

    pub fn scalar_column(&self, index: usize) -> usize {
        self.scalar_col[index]
    }

    pub fn gram_range(&self, block: usize) -> std::ops::Range<usize> {
        let (off, side) = self.gram_col[block];
        off..off + side * (side + 1) / 2
    }

    fn column(&self, c: Column) -> usize {
        match c {
            Column::Atom(Atom::Coef(k)) => self.coef_col[k],
            Column::Atom(Atom::Scalar(k)) => self.scalar_col[k],
            Column::Gram { block, entry } => self.gram_col[block].0 + entry,
        }
    }
}

impl SosProgram {
    pub fn new(nvars: usize) -> Result<Self, SosError> {
        if nvars == 0 {
            return Err(SosError::NoVariables);
        }
        Ok(SosProgram {
            nvars,
            poly_vars: Vec::new(),
            scalar_vars: Vec::new(),
            num_coefs: 0,
            gram_blocks: Vec::new(),
            constraints: Vec::new(),
            rows: Vec::new(),
            objective: None,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn poly_vars(&self) -> &[PolyVariable] {
        &self.poly_vars
    }

    pub fn scalar_vars(&self) -> &[ScalarVariable] {
        &self.scalar_vars
    }

    pub fn gram_blocks(&self) -> &[GramBlock] {
        &self.gram_blocks
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.rows.len()
    }

    /// Equality rows belonging to one constraint.
    pub fn constraint_rows(&self, id: usize) -> std::ops::Range<usize> {
        let c = &self.constraints[id];
        c.first_row..c.first_row + c.rows
    }

    pub fn constraint_budget(&self, id: usize) -> u32 {
        self.constraints[id].budget
    }

    /// Gram blocks belonging to one constraint, in multiplier order.
    pub fn constraint_blocks(&self, id: usize) -> Vec<usize> {
        (0..self.gram_blocks.len()).filter(|&b| self.gram_blocks[b].constraint == id).collect()
    }

    fn name_taken(&self, name: &str) -> bool {
        self.poly_vars.iter().any(|v| v.name == name) || self.scalar_vars.iter().any(|v| v.name == name)
    }

    pub fn add_poly_var(&mut self, name: &str, degree: u32) -> Result<PolyVariable, SosError> {
        if self.name_taken(name) {
            return Err(SosError::DuplicateName(name.to_string()));
        }
        let len = basis_len(self.nvars, degree);
        let var = PolyVariable { name: name.to_string(), degree, nvars: self.nvars, offset: self.num_coefs, len };
        self.num_coefs += len;
        self.poly_vars.push(var.clone());
        Ok(var)
    }

    pub fn add_scalar_var(&mut self, name: &str, nonneg: bool) -> Result<ScalarVariable, SosError> {
        if self.name_taken(name) {
            return Err(SosError::DuplicateName(name.to_string()));
        }
        let var = ScalarVariable { name: name.to_string(), nonneg, index: self.scalar_vars.len(), nvars: self.nvars };
        self.scalar_vars.push(var.clone());
        Ok(var)
    }

    /// Enforces `expr ≥ 0` on `set`; returns the constraint id.
    pub fn add_putinar_constraint(
        &mut self,
        expr: &AffinePoly,
        set: &SemialgebraicSet,
        degree_budget: u32,
    ) -> Result<usize, SosError> {
        if degree_budget % 2 == 1 {
            return Err(SosError::OddBudget(degree_budget));
        }
        if set.nvars() != self.nvars {
            return Err(SosError::SetDimension { expected: self.nvars, found: set.nvars() });
        }
        if expr.nvars != self.nvars {
            return Err(SosError::Poly(PolyError::DimensionMismatch { expected: self.nvars, found: expr.nvars }));
        }
        let degree = expr.degree();
        if degree > degree_budget {
            return Err(SosError::DegreeExceedsBudget { degree, budget: degree_budget });
        }
        let id = self.constraints.len();
        let index = BasisIndex::new(self.nvars, degree_budget);
        let first_row = self.rows.len();
        let mut rows = vec![Row::default(); index.len()];
        for (m, c) in &expr.terms {
            let r = index.position(m).expect("degree checked");
            rows[r].rhs -= c.constant;
            for (&a, &v) in &c.atoms {
                if v != 0.0 {
                    rows[r].entries.push((Column::Atom(a), v));
                }
            }
        }
        let one = Polynomial::constant(self.nvars, 1.0);
        let mut multipliers: Vec<(Option<usize>, &Polynomial)> = vec![(None, &one)];
        multipliers.extend(set.inequalities().iter().enumerate().map(|(i, g)| (Some(i), g)));
        for (mult, g) in multipliers {
            let gdeg = g.degree();
            if gdeg > degree_budget {
                continue;
            }
            let half = (degree_budget - gdeg) / 2;
            let z = basis(self.nvars, half);
            let block = self.gram_blocks.len();
            self.gram_blocks.push(GramBlock { constraint: id, multiplier: mult, half_degree: half, side: z.len() });
            for i in 0..z.len() {
                for j in 0..=i {
                    let zz = z[i].mul(&z[j]);
                    let w = if i == j { 1.0 } else { SQRT_2 };
                    let entry = svec_index(i, j);
                    for (gm, gc) in g.terms() {
                        let r = index.position(&zz.mul(gm)).expect("degree within budget");
                        rows[r].entries.push((Column::Gram { block, entry }, -w * gc));
                    }
                }
            }
        }
        let nrows = rows.len();
        self.rows.extend(rows);
        self.constraints.push(ConstraintInfo { budget: degree_budget, first_row, rows: nrows });
        Ok(id)
    }

    /// Sets `minimize Σ ⟨coeffs, var⟩` over named variables; an empty list
    /// gives a feasibility problem.
    pub fn set_objective(&mut self, terms: &[(&str, Vec<f64>)]) -> Result<(), SosError> {
        let mut obj = BTreeMap::new();
        for (name, coeffs) in terms {
            if let Some(v) = self.poly_vars.iter().find(|v| v.name == *name) {
                if coeffs.len() != v.len {
                    return Err(SosError::ObjectiveLength { name: name.to_string(), expected: v.len, found: coeffs.len() });
                }
                for (k, &c) in coeffs.iter().enumerate() {
                    *obj.entry(Atom::Coef(v.offset + k)).or_insert(0.0) += c;
                }
            } else if let Some(v) = self.scalar_vars.iter().find(|v| v.name == *name) {
                if coeffs.len() != 1 {
                    return Err(SosError::ObjectiveLength { name: name.to_string(), expected: 1, found: coeffs.len() });
                }
                *obj.entry(Atom::Scalar(v.index)).or_insert(0.0) += coeffs[0];
            } else {
                return Err(SosError::UnknownVariable(name.to_string()));
            }
        }
        self.objective = Some(obj);
        Ok(())
    }

    /// Free columns (polynomial coefficients, then free scalars), then
    /// nonnegative scalars, then one PSD block per Gram matrix.
    pub fn layout(&self) -> Layout {
        let mut col = 0;
        let coef_col: Vec<usize> = (0..self.num_coefs).collect();
        col += self.num_coefs;
        let mut scalar_col = vec![0; self.scalar_vars.len()];
        for v in self.scalar_vars.iter().filter(|v| !v.nonneg) {
            scalar_col[v.index] = col;
            col += 1;
        }
        for v in self.scalar_vars.iter().filter(|v| v.nonneg) {
            scalar_col[v.index] = col;
            col += 1;
        }
        let mut gram_col = Vec::with_capacity(self.gram_blocks.len());
        for b in &self.gram_blocks {
            gram_col.push((col, b.side));
            col += b.side * (b.side + 1) / 2;
        }
        Layout { coef_col, scalar_col, gram_col, num_cols: col }
    }

    pub fn decision_dimension(&self) -> usize {
        self.layout().num_cols
    }

    pub fn to_conic(&self) -> Result<ConicProblem, SosError> {
        let objective = self.objective.as_ref().ok_or(SosError::ObjectiveNotSet)?;
        let layout = self.layout();
        let n = layout.num_cols;
        let mut c = vec![0.0; n];
        for (&a, &v) in objective {
            c[layout.column(Column::Atom(a))] += v;
        }
        let mut trip = Vec::new();
        let mut b = Vec::with_capacity(self.rows.len());
        for (r, row) in self.rows.iter().enumerate() {
            for &(col, v) in &row.entries {
                trip.push((r, layout.column(col), v));
            }
            b.push(row.rhs);
        }
        let a = SparseMatrix::from_triplets(self.rows.len(), n, &trip)?;
        let nfree = self.num_coefs + self.scalar_vars.iter().filter(|v| !v.nonneg).count();
        let nnon = self.scalar_vars.len() + self.num_coefs - nfree;
        let mut cones = Vec::new();
        if nfree > 0 {
            cones.push(Cone::Free(nfree));
        }
        if nnon > 0 {
            cones.push(Cone::Nonneg(nnon));
        }
        cones.extend(self.gram_blocks.iter().map(|g| Cone::Psd(g.side)));
        Ok(ConicProblem::new(c, a, b, cones)?)
    }

    fn check_solution(&self, x: &[f64]) -> Result<Layout, SosError> {
        let layout = self.layout();
        if x.len() != layout.num_cols {
            return Err(SosError::SolutionLength { expected: layout.num_cols, found: x.len() });
        }
        Ok(layout)
    }

    /// Value of a polynomial variable read from a conic primal vector.
    pub fn poly_value(&self, x: &[f64], name: &str) -> Result<Polynomial, SosError> {
        let layout = self.check_solution(x)?;
        let v = self
            .poly_vars
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| SosError::UnknownVariable(name.to_string()))?;
        let coeffs: Vec<f64> = v.coefficient_indices().map(|k| x[layout.coefficient_column(k)]).collect();
        Ok(Polynomial::from_basis_coefficients(self.nvars, v.degree, &coeffs)?)
    }

    pub fn scalar_value(&self, x: &[f64], name: &str) -> Result<f64, SosError> {
        let layout = self.check_solution(x)?;
        let v = self
            .scalar_vars
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| SosError::UnknownVariable(name.to_string()))?;
        Ok(x[layout.scalar_column(v.index)])
    }

    pub fn gram_value(&self, x: &[f64], block: usize) -> Result<DMatrix<f64>, SosError> {
        let layout = self.check_solution(x)?;
        Ok(svec_to_mat(&x[layout.gram_range(block)], self.gram_blocks[block].side))
    }

    /// Value of an atom read from a conic primal vector.
    pub fn atom_value(&self, x: &[f64], atom: Atom) -> Result<f64, SosError> {
        let layout = self.check_solution(x)?;
        Ok(x[layout.column(Column::Atom(atom))])
    }

    /// Monomial vector `z` of a Gram block.
    pub fn gram_basis(&self, block: usize) -> Vec<Monomial> {
        basis(self.nvars, self.gram_blocks[block].half_degree)
    }

    /// A `δ ≥ 0` with `expr ≥ -δ` on every point of `set` whose coordinates
    /// satisfy `|x_i| ≤ rho`, given an approximate conic solution `x`.
    ///
    /// Accounts for the mismatch in the coefficient identity and for any
    /// negative Gram eigenvalues, bounding `|x^α|` by `rho^|α|`.
    pub fn residual_bound(
        &self,
        id: usize,
        problem: &ConicProblem,
        set: &SemialgebraicSet,
        x: &[f64],
        rho: f64,
    ) -> Result<f64, SosError> {
        let layout = self.check_solution(x)?;
        let rho = rho.max(1.0);
        let budget = self.constraints[id].budget;
        let monos = basis(self.nvars, budget);
        let ax = problem.a.mul_vec(x);
        let mut delta = 0.0;
        for (k, r) in self.constraint_rows(id).enumerate() {
            let resid = ax[r] - problem.b[r];
            delta += resid.abs() * rho.powi(monos[k].degree() as i32);
        }
        for b in self.constraint_blocks(id) {
            let blk = &self.gram_blocks[b];
            let q = svec_to_mat(&x[layout.gram_range(b)], blk.side);
            let lmin = q.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            if lmin < 0.0 {
                let zmax: f64 = self.gram_basis(b).iter().map(|m| rho.powi(2 * m.degree() as i32)).sum();
                let gmax = match blk.multiplier {
                    None => 1.0,
                    Some(i) => set.inequalities()[i].terms().map(|(m, c)| c.abs() * rho.powi(m.degree() as i32)).sum(),
                };
                delta += -lmin * zmax * gmax;
            }
        }
        Ok(delta)
    }
}

/// Expands `zᵀ Q z`.
pub fn reconstruct(q: &DMatrix<f64>, z: &[Monomial]) -> Result<Polynomial, SosError> {
    if q.nrows() != z.len() || q.ncols() != z.len() {
        return Err(SosError::GramSize { expected: z.len(), found: q.nrows() });
    }
    let nvars = z.first().map(Monomial::nvars).unwrap_or(1);
    let mut acc: HashMap<Monomial, f64> = HashMap::new();
    for i in 0..z.len() {
        for j in 0..z.len() {
            if q[(i, j)] != 0.0 {
                *acc.entry(z[i].mul(&z[j])).or_insert(0.0) += q[(i, j)];
            }
        }
    }
    Ok(Polynomial::from_terms(nvars, acc)?)
}
