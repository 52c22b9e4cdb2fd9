//! Standard-form conic programs and an interior-point solver for them.
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x = b,   x ∈ K = K_1 × ... × K_p
//! ```
//!
//! Each `K_i` is a free block, a nonnegative orthant or a PSD cone. PSD blocks
//! are stored as `svec`: the lower triangle in row-major order
//! `(0,0), (1,0), (1,1), (2,0), ...` with off-diagonal entries scaled by `√2`,
//! so that `svec(X)ᵀ svec(Y) = tr(XY)`.
//!
//! The solver runs a primal-dual path-following method on the homogeneous
//! self-dual embedding with Nesterov-Todd scaling and Mehrotra
//! predictor-corrector steps. Infeasibility is detected from the embedding's
//! certificates. Linear systems are dense, which is adequate for the
//! few-hundred-row SDPs produced by low-dimensional SOS programs.

use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    Free(usize),
    Nonneg(usize),
    /// Symmetric PSD matrices of the given side length.
    Psd(usize),
}

impl Cone {
    /// Number of decision entries the cone occupies.
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Free(n) | Cone::Nonneg(n) => n,
            Cone::Psd(s) => s * (s + 1) / 2,
        }
    }
}

/// Position of `(i, j)` (either order) in the `svec` of a symmetric matrix.
pub fn svec_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

pub fn svec_to_mat(v: &[f64], side: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(side, side);
    for i in 0..side {
        for j in 0..=i {
            let val = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = val;
            } else {
                m[(i, j)] = val / std::f64::consts::SQRT_2;
                m[(j, i)] = m[(i, j)];
            }
        }
    }
    m
}

pub fn mat_to_svec(m: &DMatrix<f64>, out: &mut [f64]) {
    let side = m.nrows();
    for i in 0..side {
        for j in 0..=i {
            out[svec_index(i, j)] = if i == j {
                m[(i, i)]
            } else {
                0.5 * (m[(i, j)] + m[(j, i)]) * std::f64::consts::SQRT_2
            };
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed; entries that sum to zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, ConicError> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= nrows {
                return Err(ConicError::DimensionMismatch { what: "triplet row", expected: nrows, found: r });
            }
            if c >= ncols {
                return Err(ConicError::DimensionMismatch { what: "triplet column", expected: ncols, found: c });
            }
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows_of = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                rows_of.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_c = Vec::with_capacity(col_idx.len());
        let mut keep_v = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows_of.into_iter().zip(col_idx).zip(vals) {
            if v != 0.0 {
                row_ptr[r + 1] += 1;
                keep_c.push(c);
                keep_v.push(v);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix { nrows, ncols, row_ptr, col_idx: keep_c, vals: keep_v })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), vals: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `Aᵀ y`
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += v * yr;
            }
        }
        out
    }

    /// Column-major view: for each column, its `(row, value)` entries.
    fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.ncols];
        for (r, c, v) in self.triplets() {
            cols[c].push((r, v));
        }
        cols
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProblem {
    pub fn new(c: Vec<f64>, a: SparseMatrix, b: Vec<f64>, cones: Vec<Cone>) -> Result<Self, ConicError> {
        let n: usize = cones.iter().map(Cone::dim).sum();
        if c.len() != n {
            return Err(ConicError::DimensionMismatch { what: "objective length", expected: n, found: c.len() });
        }
        if a.ncols() != n {
            return Err(ConicError::DimensionMismatch { what: "constraint columns", expected: n, found: a.ncols() });
        }
        if a.nrows() != b.len() {
            return Err(ConicError::DimensionMismatch { what: "right-hand side", expected: a.nrows(), found: b.len() });
        }
        Ok(ConicProblem { c, a, b, cones })
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    /// `(offset, cone)` for every cone block.
    pub fn cone_offsets(&self) -> Vec<(usize, Cone)> {
        let mut off = 0;
        self.cones
            .iter()
            .map(|&k| {
                let o = off;
                off += k.dim();
                (o, k)
            })
            .collect()
    }

    pub fn psd_sides(&self) -> Vec<usize> {
        self.cones
            .iter()
            .filter_map(|k| if let Cone::Psd(s) = k { Some(*s) } else { None })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub feas_tol: f64,
    pub gap_tol: f64,
    /// 0 silent, 1 per-iteration log on stderr.
    pub verbosity: u8,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { max_iterations: 200, feas_tol: 1e-8, gap_tol: 1e-8, verbosity: 0 }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), ConicError> {
        for (name, v) in [("feas_tol", self.feas_tol), ("gap_tol", self.gap_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ConicError::InvalidSettings(format!("{} must lie in (0, 1), got {}", name, v)));
            }
        }
        if self.max_iterations == 0 {
            return Err(ConicError::InvalidSettings("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Factor by which the tolerances are relaxed for a `NearOptimal` report.
pub const NEAR_OPTIMAL_FACTOR: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
    NumericalError,
}

impl SolveStatus {
    /// Whether the primal point is usable as an (approximate) optimum.
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NearOptimal => "near_optimal",
            SolveStatus::PrimalInfeasible => "primal_infeasible",
            SolveStatus::DualInfeasible => "dual_infeasible",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::NumericalError => "numerical_error",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖Ax - b‖ / (1 + ‖b‖)`
    pub primal: f64,
    /// `‖Aᵀy + s - c‖ / (1 + ‖c‖)`
    pub dual: f64,
    /// `|cᵀx - bᵀy| / (1 + |cᵀx| + |bᵀy|)`
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub objective_value: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

/// Residuals recomputed from scratch, independently of the solver's report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub equality: f64,
    pub dual: f64,
    pub gap: f64,
    /// Smallest eigenvalue (PSD) or entry (nonnegative) per constrained cone block.
    pub cone_minimum: Vec<f64>,
    /// `max(0, -min(cone_minimum))`
    pub cone_violation: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn verify_solution(problem: &ConicProblem, sol: &ConicSolution) -> Result<ResidualReport, ConicError> {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    if sol.x.len() != n {
        return Err(ConicError::DimensionMismatch { what: "primal vector", expected: n, found: sol.x.len() });
    }
    if sol.y.len() != m {
        return Err(ConicError::DimensionMismatch { what: "dual vector", expected: m, found: sol.y.len() });
    }
    if sol.s.len() != n {
        return Err(ConicError::DimensionMismatch { what: "dual slack", expected: n, found: sol.s.len() });
    }
    let ax = problem.a.mul_vec(&sol.x);
    let rp: Vec<f64> = ax.iter().zip(&problem.b).map(|(a, b)| a - b).collect();
    let equality = norm(&rp) / (1.0 + norm(&problem.b));
    let aty = problem.a.tmul_vec(&sol.y);
    let rd: Vec<f64> = (0..n).map(|i| aty[i] + sol.s[i] - problem.c[i]).collect();
    let dual = norm(&rd) / (1.0 + norm(&problem.c));
    let pobj = dot(&problem.c, &sol.x);
    let dobj = dot(&problem.b, &sol.y);
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    let mut cone_minimum = Vec::new();
    for (off, k) in problem.cone_offsets() {
        match k {
            Cone::Free(_) => {}
            Cone::Nonneg(d) => {
                cone_minimum.push(sol.x[off..off + d].iter().copied().fold(f64::INFINITY, f64::min));
            }
            Cone::Psd(side) => {
                let mat = svec_to_mat(&sol.x[off..off + k.dim()], side);
                let eig = mat.symmetric_eigen();
                cone_minimum.push(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min));
            }
        }
    }
    let worst = cone_minimum.iter().copied().fold(f64::INFINITY, f64::min);
    let cone_violation = if worst.is_finite() { (-worst).max(0.0) } else { 0.0 };
    Ok(ResidualReport { equality, dual, gap, cone_minimum, cone_violation })
}

pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> ConicSolution {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    let failed = |status| ConicSolution {
        status,
        x: vec![0.0; n],
        y: vec![0.0; m],
        s: vec![0.0; n],
        objective_value: f64::NAN,
        residuals: Residuals { primal: f64::NAN, dual: f64::NAN, gap: f64::NAN },
        iterations: 0,
    };
    if settings.validate().is_err() {
        return failed(SolveStatus::NumericalError);
    }
    if problem.a.ncols() != n || problem.a.nrows() != m {
        return failed(SolveStatus::NumericalError);
    }
    let run = || {
        if m > 0 && problem.cones.iter().any(|k| matches!(k, Cone::Free(d) if *d > 0)) {
            if let Some((elim, reduced)) = FreeElimination::new(problem) {
                let sol = Ipm::new(&reduced, settings).run();
                return elim.restore(problem, settings, &sol);
            }
        }
        Ipm::new(problem, settings).run()
    };
    match catch_unwind(AssertUnwindSafe(run)) {
        Ok(sol) => sol,
        Err(_) => failed(SolveStatus::NumericalError),
    }
}

/// Removes the free variables of a problem through a QR factorization of
/// their columns, `A_f = Q [R; 0]`:
///
/// ```text
/// x_f = R⁻¹ (Q₁ᵀ b - Q₁ᵀ A_c x_c),   Q₂ᵀ A_c x_c = Q₂ᵀ b,
/// y   = Q₁ R⁻ᵀ c_f + Q₂ z
/// ```
///
/// which leaves a problem over the constrained cones only, whose normal
/// equations are positive definite.
struct FreeElimination {
    free: Vec<usize>,
    cone_cols: Vec<usize>,
    qt: DMatrix<f64>,
    r: DMatrix<f64>,
    /// `Q₁ᵀ A_c`
    top: DMatrix<f64>,
    /// `Q₁ᵀ b`
    top_b: DVector<f64>,
    /// `R⁻ᵀ c_f`
    rt_cf: DVector<f64>,
}

impl FreeElimination {
    fn new(p: &ConicProblem) -> Option<(Self, ConicProblem)> {
        let m = p.num_constraints();
        let mut free = Vec::new();
        let mut cone_cols = Vec::new();
        let mut cones = Vec::new();
        for (off, k) in p.cone_offsets() {
            match k {
                Cone::Free(d) => free.extend(off..off + d),
                _ => {
                    cone_cols.extend(off..off + k.dim());
                    cones.push(k);
                }
            }
        }
        let nf = free.len();
        if nf > m {
            return None;
        }
        let cols = p.a.columns();
        let mut af = DMatrix::<f64>::zeros(m, nf);
        for (k, &c) in free.iter().enumerate() {
            for &(r, v) in &cols[c] {
                af[(r, k)] = v;
            }
        }
        let qr = af.qr();
        let r = qr.r();
        let rmax = (0..nf).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        if (0..nf).any(|i| !(r[(i, i)].abs() > 1e-10 * rmax)) {
            return None;
        }
        let mut qt = DMatrix::<f64>::identity(m, m);
        qr.q_tr_mul(&mut qt);
        let nc = cone_cols.len();
        // Qᵀ A_c, column by column from the sparse columns
        let mut qta = DMatrix::<f64>::zeros(m, nc);
        for (j, &c) in cone_cols.iter().enumerate() {
            for &(r, v) in &cols[c] {
                for i in 0..m {
                    qta[(i, j)] += qt[(i, r)] * v;
                }
            }
        }
        let qtb = &qt * DVector::from_column_slice(&p.b);
        let cf = DVector::from_iterator(nf, free.iter().map(|&i| p.c[i]));
        let rt_cf = r.transpose().solve_lower_triangular(&cf)?;
        let top = qta.rows(0, nf).into_owned();
        // c̃ = c_c - (Q₁ᵀ A_c)ᵀ R⁻ᵀ c_f
        let shift = top.transpose() * &rt_cf;
        let c: Vec<f64> = cone_cols.iter().enumerate().map(|(j, &i)| p.c[i] - shift[j]).collect();
        let mut trip = Vec::new();
        for i in nf..m {
            for j in 0..nc {
                let v = qta[(i, j)];
                if v != 0.0 {
                    trip.push((i - nf, j, v));
                }
            }
        }
        let a = SparseMatrix::from_triplets(m - nf, nc, &trip).ok()?;
        let b = qtb.rows(nf, m - nf).iter().copied().collect();
        let reduced = ConicProblem::new(c, a, b, cones).ok()?;
        let top_b = qtb.rows(0, nf).into_owned();
        Some((FreeElimination { free, cone_cols, qt, r, top, top_b, rt_cf }, reduced))
    }

    fn restore(&self, p: &ConicProblem, settings: &SolverSettings, red: &ConicSolution) -> ConicSolution {
        let n = p.num_vars();
        let m = p.num_constraints();
        let nf = self.free.len();
        // certificates of infeasibility are homogeneous
        let h = match red.status {
            SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible => 0.0,
            _ => 1.0,
        };
        let xc = DVector::from_column_slice(&red.x);
        let rhs = &self.top_b * h - &self.top * &xc;
        let xf = self.r.clone().solve_upper_triangular(&rhs).unwrap_or_else(|| DVector::from_element(nf, f64::NAN));
        let mut x = vec![0.0; n];
        let mut s = vec![0.0; n];
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = xf[k];
        }
        for (j, &i) in self.cone_cols.iter().enumerate() {
            x[i] = red.x[j];
            s[i] = red.s[j];
        }
        let mut yq = DVector::zeros(m);
        for k in 0..nf {
            yq[k] = h * self.rt_cf[k];
        }
        for (k, &z) in red.y.iter().enumerate() {
            yq[nf + k] = z;
        }
        let y: Vec<f64> = (self.qt.transpose() * yq).iter().copied().collect();
        if h == 1.0 && xf.iter().all(|v| v.is_finite()) {
            // refine x_f against the original rows: Δx_f = R⁻¹ Q₁ᵀ (b - A x)
            for _ in 0..2 {
                let ax = p.a.mul_vec(&x);
                let r = DVector::from_iterator(m, (0..m).map(|i| p.b[i] - ax[i]));
                let top = self.qt.rows(0, nf) * r;
                let Some(dxf) = self.r.clone().solve_upper_triangular(&top) else { break };
                for (k, &i) in self.free.iter().enumerate() {
                    x[i] += dxf[k];
                }
            }
        }
        let mut sol = ConicSolution { status: red.status, x, y, s, ..red.clone() };
        if h == 1.0 {
            sol.objective_value = dot(&p.c, &sol.x);
            let ax = p.a.mul_vec(&sol.x);
            let rp: Vec<f64> = ax.iter().zip(&p.b).map(|(a, b)| a - b).collect();
            let aty = p.a.tmul_vec(&sol.y);
            let rd: Vec<f64> = (0..n).map(|i| aty[i] + sol.s[i] - p.c[i]).collect();
            let dobj = dot(&p.b, &sol.y);
            sol.residuals = Residuals {
                primal: norm(&rp) / (1.0 + norm(&p.b)),
                dual: norm(&rd) / (1.0 + norm(&p.c)),
                gap: (sol.objective_value - dobj).abs() / (1.0 + sol.objective_value.abs() + dobj.abs()),
            };
            // the status must describe the returned point, not the reduced one
            let r = &sol.residuals;
            let within = |f: f64| r.primal <= f * settings.feas_tol && r.dual <= f * settings.feas_tol && r.gap <= f * settings.gap_tol;
            if sol.status == SolveStatus::Optimal && !within(1.0) {
                sol.status = if within(NEAR_OPTIMAL_FACTOR) { SolveStatus::NearOptimal } else { SolveStatus::NumericalError };
            }
        }
        sol
    }
}

/// Nesterov-Todd scaling of one PSD block: `λ = R⁻¹ X R⁻ᵀ = Rᵀ S R = diag(lambda)`.
struct PsdScaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl PsdScaling {
    fn new(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Self> {
        let lx = x.clone().cholesky()?.l();
        let ls = s.clone().cholesky()?.l();
        let prod = ls.transpose() * &lx;
        let svd = prod.svd(false, true);
        let v = svd.v_t?.transpose();
        let lambda = svd.singular_values;
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return None;
        }
        let side = x.nrows();
        let mut r = &lx * &v;
        let mut r_inv_left = v.transpose();
        for j in 0..side {
            let sq = lambda[j].sqrt();
            r.column_mut(j).scale_mut(1.0 / sq);
            r_inv_left.row_mut(j).scale_mut(sq);
        }
        let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(side, side))?;
        let r_inv = r_inv_left * lx_inv;
        Some(PsdScaling { r, r_inv, lambda })
    }
}

#[derive(Clone, Copy)]
enum BlockKind {
    Nonneg { offset: usize, dim: usize },
    Psd { offset: usize, side: usize },
}

struct Ipm<'a> {
    p: &'a ConicProblem,
    settings: &'a SolverSettings,
    n: usize,
    m: usize,
    free: Vec<usize>,
    blocks: Vec<BlockKind>,
    /// Barrier degree of the cone (excluding the τκ pair).
    nu: f64,
    cols: Vec<Vec<(usize, f64)>>,
    x: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    tau: f64,
    kappa: f64,
}

/// Per-iteration scaling and factorized reduced KKT system.
struct Scaled {
    psd: Vec<PsdScaling>,
    /// Nonnegative cones: `W = sqrt(s/x)` entry-wise, `λ = sqrt(x s)`.
    nn_w: Vec<Vec<f64>>,
    nn_lambda: Vec<Vec<f64>>,
    ghat: Vec<ScaledRows>,
    /// Thin QR of the stacked `Ĝᵀ`, used when there are no free columns.
    qr: Option<(DMatrix<f64>, DMatrix<f64>)>,
    kkt: DMatrix<f64>,
    factor: Option<Factor>,
}

enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Factor::Cholesky(c) => Some(c.solve(b)),
            Factor::Lu(l) => l.solve(b),
        }
    }
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dy: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a ConicProblem, settings: &'a SolverSettings) -> Self {
        let n = p.num_vars();
        let m = p.num_constraints();
        let mut free = Vec::new();
        let mut blocks = Vec::new();
        let mut nu = 0.0;
        let mut x = vec![0.0; n];
        let mut s = vec![0.0; n];
        for (off, k) in p.cone_offsets() {
            match k {
                Cone::Free(d) => free.extend(off..off + d),
                Cone::Nonneg(d) => {
                    if d > 0 {
                        blocks.push(BlockKind::Nonneg { offset: off, dim: d });
                        nu += d as f64;
                        for i in off..off + d {
                            x[i] = 1.0;
                            s[i] = 1.0;
                        }
                    }
                }
                Cone::Psd(side) => {
                    if side > 0 {
                        blocks.push(BlockKind::Psd { offset: off, side });
                        nu += side as f64;
                        for i in 0..side {
                            x[off + svec_index(i, i)] = 1.0;
                            s[off + svec_index(i, i)] = 1.0;
                        }
                    }
                }
            }
        }
        Ipm {
            p,
            settings,
            n,
            m,
            free,
            blocks,
            nu,
            cols: p.a.columns(),
            x,
            s,
            y: vec![0.0; m],
            tau: 1.0,
            kappa: 1.0,
        }
    }

    fn mu(&self) -> f64 {
        (dot(&self.x, &self.s) + self.tau * self.kappa) / (self.nu + 1.0)
    }

    /// Residuals of the normalized iterate `(x, y, s) / τ`.
    fn normalized_residuals(&self) -> (Residuals, f64, f64) {
        let t = self.tau;
        let xh: Vec<f64> = self.x.iter().map(|v| v / t).collect();
        let yh: Vec<f64> = self.y.iter().map(|v| v / t).collect();
        let ax = self.p.a.mul_vec(&xh);
        let rp: Vec<f64> = ax.iter().zip(&self.p.b).map(|(a, b)| a - b).collect();
        let aty = self.p.a.tmul_vec(&yh);
        let rd: Vec<f64> = (0..self.n).map(|i| aty[i] + self.s[i] / t - self.p.c[i]).collect();
        let pobj = dot(&self.p.c, &xh);
        let dobj = dot(&self.p.b, &yh);
        let res = Residuals {
            primal: norm(&rp) / (1.0 + norm(&self.p.b)),
            dual: norm(&rd) / (1.0 + norm(&self.p.c)),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        };
        (res, pobj, dobj)
    }

    fn solution(&self, status: SolveStatus, iterations: usize) -> ConicSolution {
        let (residuals, pobj, _) = self.normalized_residuals();
        let (x, y, s) = if status.has_solution() || matches!(status, SolveStatus::IterationLimit | SolveStatus::NumericalError) {
            let t = self.tau;
            (
                self.x.iter().map(|v| v / t).collect(),
                self.y.iter().map(|v| v / t).collect(),
                self.s.iter().map(|v| v / t).collect(),
            )
        } else {
            // certificates are returned unnormalized
            (self.x.clone(), self.y.clone(), self.s.clone())
        };
        let objective_value = if status.has_solution() { dot(&self.p.c, &x) } else { pobj };
        ConicSolution { status, x, y, s, objective_value, residuals, iterations }
    }

    fn is_near_optimal(&self, r: &Residuals) -> bool {
        let f = NEAR_OPTIMAL_FACTOR;
        r.primal <= f * self.settings.feas_tol && r.dual <= f * self.settings.feas_tol && r.gap <= f * self.settings.gap_tol
    }

    fn infeasibility(&self) -> Option<SolveStatus> {
        let tol = self.settings.feas_tol;
        let bty = dot(&self.p.b, &self.y);
        if bty > 0.0 {
            let aty = self.p.a.tmul_vec(&self.y);
            let r: Vec<f64> = (0..self.n).map(|i| aty[i] + self.s[i]).collect();
            if norm(&r) <= tol * bty {
                return Some(SolveStatus::PrimalInfeasible);
            }
        }
        let ctx = dot(&self.p.c, &self.x);
        if ctx < 0.0 {
            let ax = self.p.a.mul_vec(&self.x);
            if norm(&ax) <= tol * -ctx {
                return Some(SolveStatus::DualInfeasible);
            }
        }
        None
    }

    fn run(mut self) -> ConicSolution {
        let verbose = self.settings.verbosity > 0;
        if verbose {
            eprintln!(
                "conic ipm: {} vars, {} rows, {} free, barrier degree {}",
                self.n,
                self.m,
                self.free.len(),
                self.nu
            );
            eprintln!("{:>4} {:>13} {:>13} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}", "it", "pobj", "dobj", "pres", "dres", "gap", "mu", "tau", "step");
        }
        let mut last_step = 0.0;
        let mut stalls = 0;
        for it in 0..self.settings.max_iterations {
            let (res, pobj, dobj) = self.normalized_residuals();
            if verbose {
                eprintln!(
                    "{:>4} {:>13.6e} {:>13.6e} {:>9.2e} {:>9.2e} {:>9.2e} {:>9.2e} {:>9.2e} {:>8.4}",
                    it,
                    pobj,
                    dobj,
                    res.primal,
                    res.dual,
                    res.gap,
                    self.mu(),
                    self.tau,
                    last_step
                );
            }
            if !(res.primal.is_finite() && res.dual.is_finite() && res.gap.is_finite()) {
                return self.solution(SolveStatus::NumericalError, it);
            }
            if res.primal <= self.settings.feas_tol && res.dual <= self.settings.feas_tol && res.gap <= self.settings.gap_tol {
                return self.solution(SolveStatus::Optimal, it);
            }
            if let Some(st) = self.infeasibility() {
                return self.solution(st, it);
            }
            let Some(scaled) = self.scale_and_factor() else {
                return self.stalled(it);
            };
            let Some(step) = self.step(&scaled) else {
                return self.stalled(it);
            };
            last_step = step;
            if step < 1e-8 {
                stalls += 1;
                if stalls >= 3 {
                    return self.stalled(it);
                }
            } else {
                stalls = 0;
            }
            // keep the embedding bounded
            let scale = self.tau.max(self.kappa);
            if !(1e-8..=1e8).contains(&scale) {
                let f = 1.0 / scale;
                self.x.iter_mut().for_each(|v| *v *= f);
                self.s.iter_mut().for_each(|v| *v *= f);
                self.y.iter_mut().for_each(|v| *v *= f);
                self.tau *= f;
                self.kappa *= f;
            }
        }
        let (res, _, _) = self.normalized_residuals();
        let status = if self.is_near_optimal(&res) { SolveStatus::NearOptimal } else { SolveStatus::IterationLimit };
        self.solution(status, self.settings.max_iterations)
    }

    fn stalled(&self, it: usize) -> ConicSolution {
        let (res, _, _) = self.normalized_residuals();
        if self.settings.verbosity > 0 {
            eprintln!("stalled: |x|/tau {:.3e} |y|/tau {:.3e} |s|/tau {:.3e} kappa {:.3e}", norm(&self.x) / self.tau, norm(&self.y) / self.tau, norm(&self.s) / self.tau, self.kappa);
        }
        let status = if self.is_near_optimal(&res) { SolveStatus::NearOptimal } else { SolveStatus::NumericalError };
        self.solution(status, it)
    }

    fn scale_and_factor(&self) -> Option<Scaled> {
        let m = self.m;
        let nf = self.free.len();
        let dim = m + nf;
        let mut psd = Vec::new();
        let mut nn_w = Vec::new();
        let mut nn_lambda = Vec::new();
        for blk in &self.blocks {
            match *blk {
                BlockKind::Nonneg { offset, dim } => {
                    let mut w = Vec::with_capacity(dim);
                    let mut lam = Vec::with_capacity(dim);
                    for i in offset..offset + dim {
                        let (xi, si) = (self.x[i], self.s[i]);
                        if !(xi > 0.0 && si > 0.0) {
                            return None;
                        }
                        w.push((si / xi).sqrt());
                        lam.push((xi * si).sqrt());
                    }
                    nn_w.push(w);
                    nn_lambda.push(lam);
                }
                BlockKind::Psd { offset, side } => {
                    let nsv = side * (side + 1) / 2;
                    let xm = svec_to_mat(&self.x[offset..offset + nsv], side);
                    let sm = svec_to_mat(&self.s[offset..offset + nsv], side);
                    psd.push(PsdScaling::new(&xm, &sm)?);
                }
            }
        }
        let ghat: Vec<ScaledRows> = {
            let (mut ip, mut inn) = (0, 0);
            let jobs: Vec<(BlockKind, usize)> = self
                .blocks
                .iter()
                .map(|b| match *b {
                    BlockKind::Nonneg { .. } => {
                        inn += 1;
                        (*b, inn - 1)
                    }
                    BlockKind::Psd { .. } => {
                        ip += 1;
                        (*b, ip - 1)
                    }
                })
                .collect();
            jobs.par_iter()
                .map(|&(b, k)| match b {
                    BlockKind::Nonneg { offset, dim } => {
                        let inv_w: Vec<f64> = nn_w[k].iter().map(|w| 1.0 / w).collect();
                        scaled_rows(&self.cols[offset..offset + dim], |q, v, out| out[q] += v * inv_w[q])
                    }
                    BlockKind::Psd { offset, side } => psd_scaled_rows(&self.cols[offset..offset + side * (side + 1) / 2], &psd[k].r),
                })
                .collect()
        };
        if nf == 0 && m > 0 {
            if let Some(qr) = stacked_qr(&ghat, m) {
                return Some(Scaled { psd, nn_w, nn_lambda, ghat, qr: Some(qr), kkt: DMatrix::zeros(0, 0), factor: None });
            }
        }
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        for g in &ghat {
            if g.rows.is_empty() {
                continue;
            }
            let gg = &g.g * g.g.transpose();
            for (a, &ra) in g.rows.iter().enumerate() {
                for (b, &rb) in g.rows.iter().enumerate() {
                    kkt[(ra, rb)] += gg[(a, b)];
                }
            }
        }
        for (k, &col) in self.free.iter().enumerate() {
            for &(r, v) in &self.cols[col] {
                kkt[(r, m + k)] += v;
                kkt[(m + k, r)] += v;
            }
        }
        let maxdiag = (0..m).map(|i| kkt[(i, i)].abs()).fold(1.0, f64::max);
        let delta = 1e-13 * maxdiag;
        let mut reg = kkt.clone();
        for i in 0..m {
            reg[(i, i)] += delta;
        }
        for i in m..dim {
            reg[(i, i)] -= delta;
        }
        let factor = if dim == 0 {
            None
        } else if nf == 0 {
            match reg.clone().cholesky() {
                Some(ch) => Some(Factor::Cholesky(ch)),
                None => Some(Factor::Lu(reg.lu())),
            }
        } else {
            Some(Factor::Lu(reg.lu()))
        };
        Some(Scaled { psd, nn_w, nn_lambda, ghat, qr: None, kkt, factor })
    }

    /// Solves `A_fᵀ dy = rx_f`, `A_cᵀ dy - H dx_c = rx_c`, `A dx = ry`,
    /// refining the primal rows and the free columns against the unreduced
    /// equations. The cone rows of the dual equation hold by construction.
    fn solve_kkt(&self, sc: &Scaled, rx: &[f64], ry: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (mut dx, mut dy) = self.solve_reduced(sc, rx, ry)?;
        let scale = norm(rx).max(norm(ry)).max(1e-300);
        let mut prev = f64::INFINITY;
        for _ in 0..5 {
            let aty = self.p.a.tmul_vec(&dy);
            let mut ex = vec![0.0; self.n];
            for &i in &self.free {
                ex[i] = rx[i] - aty[i];
            }
            let ax = self.p.a.mul_vec(&dx);
            let ey: Vec<f64> = (0..self.m).map(|i| ry[i] - ax[i]).collect();
            let err = norm(&ex).max(norm(&ey));
            if self.settings.verbosity > 1 {
                eprintln!("      kkt refinement error {:.2e} (rhs {:.2e})", err, scale);
            }
            if err <= 1e-15 * scale || err >= 0.5 * prev {
                break;
            }
            prev = err;
            let (cx, cy) = self.solve_reduced(sc, &ex, &ey)?;
            dx.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
            dy.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
        }
        Some((dx, dy))
    }

    fn solve_reduced(&self, sc: &Scaled, rx: &[f64], ry: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = self.m;
        let nf = self.free.len();
        let rx_hat = self.to_scaled(sc, rx);
        let mut rhs = DVector::zeros(m + nf);
        rhs.rows_mut(0, m).copy_from_slice(ry);
        for (g, rh) in sc.ghat.iter().zip(&rx_hat) {
            let t = &g.g * rh;
            for (a, &r) in g.rows.iter().enumerate() {
                rhs[r] += t[a];
            }
        }
        for (k, &col) in self.free.iter().enumerate() {
            rhs[m + k] = rx[col];
        }
        if let Some((q, r)) = &sc.qr {
            // Ĝᵀ = Q R: dy = R⁻¹ (R⁻ᵀ ry + Qᵀ r̂x), d̂x = Q (R dy) - r̂x
            let rx_all = DVector::from_iterator(q.nrows(), rx_hat.iter().flat_map(|v| v.iter().copied()));
            let mut u = DVector::from_column_slice(ry);
            if !r.tr_solve_upper_triangular_mut(&mut u) {
                return None;
            }
            u += q.tr_mul(&rx_all);
            let mut dy = u.clone();
            if !r.solve_upper_triangular_mut(&mut dy) {
                return None;
            }
            let dx_all = q * &u - rx_all;
            if dy.iter().chain(dx_all.iter()).any(|v| !v.is_finite()) {
                return None;
            }
            let mut start = 0;
            let dx_hat: Vec<DVector<f64>> = sc
                .ghat
                .iter()
                .map(|g| {
                    let len = g.g.ncols();
                    start += len;
                    DVector::from_column_slice(&dx_all.as_slice()[start - len..start])
                })
                .collect();
            return Some((self.unscale(sc, &dx_hat), dy.as_slice().to_vec()));
        }
        let sol = match &sc.factor {
            Some(f) if nf == 0 => pcg(&sc.kkt, f, &rhs)?,
            Some(f) => {
                let mut sol = f.solve(&rhs)?;
                // iterative refinement against the unregularized matrix
                for _ in 0..3 {
                    let r = &rhs - &sc.kkt * &sol;
                    sol += f.solve(&r)?;
                }
                sol
            }
            None => DVector::zeros(0),
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dy: Vec<f64> = sol.rows(0, m).iter().copied().collect();
        // scaled dx_c = Ĝᵀ dy - r̂x
        let dx_hat: Vec<DVector<f64>> = sc
            .ghat
            .iter()
            .zip(rx_hat)
            .map(|(g, rh)| {
                let local = DVector::from_iterator(g.rows.len(), g.rows.iter().map(|&r| dy[r]));
                g.g.tr_mul(&local) - rh
            })
            .collect();
        let mut dx = self.unscale(sc, &dx_hat);
        for (k, &col) in self.free.iter().enumerate() {
            dx[col] = sol[m + k];
        }
        Some((dx, dy))
    }

    /// Per-block `v ↦ Rᵀ v R` (PSD) or `v / w` (nonnegative), the map under
    /// which `H⁻¹` becomes the identity.
    fn to_scaled(&self, sc: &Scaled, v: &[f64]) -> Vec<DVector<f64>> {
        let (mut ip, mut inn) = (0, 0);
        self.blocks
            .iter()
            .map(|blk| match *blk {
                BlockKind::Nonneg { offset, dim } => {
                    let w = &sc.nn_w[inn];
                    inn += 1;
                    DVector::from_iterator(dim, (0..dim).map(|k| v[offset + k] / w[k]))
                }
                BlockKind::Psd { offset, side } => {
                    let nsv = side * (side + 1) / 2;
                    let r = &sc.psd[ip].r;
                    ip += 1;
                    let d = svec_to_mat(&v[offset..offset + nsv], side);
                    let mut out = DVector::zeros(nsv);
                    mat_to_svec(&(r.transpose() * d * r), out.as_mut_slice());
                    out
                }
            })
            .collect()
    }

    /// Inverse-transpose of [`Self::to_scaled`]: `v̂ ↦ R v̂ Rᵀ` or `v̂ / w`.
    fn unscale(&self, sc: &Scaled, vh: &[DVector<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let (mut ip, mut inn) = (0, 0);
        for (blk, v) in self.blocks.iter().zip(vh) {
            match *blk {
                BlockKind::Nonneg { offset, dim } => {
                    let w = &sc.nn_w[inn];
                    inn += 1;
                    for k in 0..dim {
                        out[offset + k] = v[k] / w[k];
                    }
                }
                BlockKind::Psd { offset, side } => {
                    let nsv = side * (side + 1) / 2;
                    let r = &sc.psd[ip].r;
                    ip += 1;
                    let d = svec_to_mat(v.as_slice(), side);
                    mat_to_svec(&(r * d * r.transpose()), &mut out[offset..offset + nsv]);
                }
            }
        }
        out
    }

    /// Newton direction for centering `sigma`; `corr` holds the previous
    /// affine direction for the Mehrotra second-order term.
    fn direction(&self, sc: &Scaled, sigma: f64, mu: f64, corr: Option<&Direction>) -> Option<Direction> {
        let n = self.n;
        // residuals of the embedding
        let ax = self.p.a.mul_vec(&self.x);
        let rp: Vec<f64> = (0..self.m).map(|i| ax[i] - self.p.b[i] * self.tau).collect();
        let aty = self.p.a.tmul_vec(&self.y);
        let rd: Vec<f64> = (0..n).map(|i| aty[i] + self.s[i] - self.p.c[i] * self.tau).collect();
        let rg = dot(&self.p.b, &self.y) - dot(&self.p.c, &self.x) - self.kappa;
        let eta = 1.0 - sigma;

        // WᵀΔ with Δ = λ \ (-λ∘λ + σμe - corr), and Δ itself per block
        let mut wt_delta = vec![0.0; n];
        let mut deltas: Vec<DMatrix<f64>> = Vec::new();
        let mut nn_deltas: Vec<Vec<f64>> = Vec::new();
        let (mut ip, mut inn) = (0, 0);
        for blk in &self.blocks {
            match *blk {
                BlockKind::Nonneg { offset, dim } => {
                    let w = &sc.nn_w[inn];
                    let lam = &sc.nn_lambda[inn];
                    inn += 1;
                    let mut dl = Vec::with_capacity(dim);
                    for k in 0..dim {
                        let mut r = -lam[k] * lam[k] + sigma * mu;
                        if let Some(d) = corr {
                            r -= d.ds[offset + k] * d.dx[offset + k];
                        }
                        let delta = r / lam[k];
                        dl.push(delta);
                        wt_delta[offset + k] = w[k] * delta;
                    }
                    nn_deltas.push(dl);
                }
                BlockKind::Psd { offset, side } => {
                    let nsv = side * (side + 1) / 2;
                    let ps = &sc.psd[ip];
                    ip += 1;
                    let mut r = DMatrix::<f64>::zeros(side, side);
                    for i in 0..side {
                        r[(i, i)] = -ps.lambda[i] * ps.lambda[i] + sigma * mu;
                    }
                    if let Some(d) = corr {
                        let dsm = svec_to_mat(&d.ds[offset..offset + nsv], side);
                        let dxm = svec_to_mat(&d.dx[offset..offset + nsv], side);
                        let a = ps.r.transpose() * dsm * &ps.r;
                        let b = &ps.r_inv * dxm * ps.r_inv.transpose();
                        let ab = &a * &b;
                        r -= (&ab + ab.transpose()) * 0.5;
                    }
                    let mut u = DMatrix::<f64>::zeros(side, side);
                    for i in 0..side {
                        for j in 0..side {
                            u[(i, j)] = 2.0 * r[(i, j)] / (ps.lambda[i] + ps.lambda[j]);
                        }
                    }
                    let wt = ps.r_inv.transpose() * &u * &ps.r_inv;
                    mat_to_svec(&wt, &mut wt_delta[offset..offset + nsv]);
                    deltas.push(u);
                }
            }
        }

        // first system: rx1 = -η rd - WᵀΔ, ry1 = -η rp
        let rx1: Vec<f64> = (0..n).map(|i| -eta * rd[i] - wt_delta[i]).collect();
        let ry1: Vec<f64> = rp.iter().map(|v| -eta * v).collect();
        let (dx1, dy1) = self.solve_kkt(sc, &rx1, &ry1)?;
        let (dx2, dy2) = self.solve_kkt(sc, &self.p.c, &self.p.b)?;

        let mut r_tk = sigma * mu - self.tau * self.kappa;
        if let Some(d) = corr {
            r_tk -= d.dtau * d.dkappa;
        }
        let num = -eta * rg - dot(&self.p.b, &dy1) + dot(&self.p.c, &dx1) + r_tk / self.tau;
        let den = dot(&self.p.b, &dy2) - dot(&self.p.c, &dx2) + self.kappa / self.tau;
        if !(den.is_finite() && den.abs() > 0.0) {
            return None;
        }
        let dtau = num / den;
        let dx: Vec<f64> = (0..n).map(|i| dx1[i] + dtau * dx2[i]).collect();
        let dy: Vec<f64> = (0..self.m).map(|i| dy1[i] + dtau * dy2[i]).collect();
        let dkappa = (r_tk - self.kappa * dtau) / self.tau;

        // ds from the linearized dual equation, exact up to rounding
        let aty_d = self.p.a.tmul_vec(&dy);
        let mut ds = vec![0.0; n];
        for blk in &self.blocks {
            let range = match *blk {
                BlockKind::Nonneg { offset, dim } => offset..offset + dim,
                BlockKind::Psd { offset, side } => offset..offset + side * (side + 1) / 2,
            };
            for i in range {
                ds[i] = -eta * rd[i] + self.p.c[i] * dtau - aty_d[i];
            }
        }
        if dx.iter().chain(&ds).chain(&dy).any(|v| !v.is_finite()) || !dtau.is_finite() || !dkappa.is_finite() {
            return None;
        }
        Some(Direction { dx, ds, dy, dtau, dkappa })
    }

    /// Largest `α` keeping `x + α dx` and `s + α ds` in their cones (capped at 1e10).
    fn max_step(&self, sc: &Scaled, d: &Direction) -> f64 {
        let mut alpha: f64 = 1e10;
        let ratio = |v: f64, dv: f64, a: &mut f64| {
            if dv < 0.0 {
                *a = a.min(-v / dv);
            }
        };
        ratio(self.tau, d.dtau, &mut alpha);
        ratio(self.kappa, d.dkappa, &mut alpha);
        let mut ip = 0;
        for blk in &self.blocks {
            match *blk {
                BlockKind::Nonneg { offset, dim } => {
                    for i in offset..offset + dim {
                        ratio(self.x[i], d.dx[i], &mut alpha);
                        ratio(self.s[i], d.ds[i], &mut alpha);
                    }
                }
                BlockKind::Psd { offset, side } => {
                    let nsv = side * (side + 1) / 2;
                    let ps = &sc.psd[ip];
                    ip += 1;
                    let dxm = svec_to_mat(&d.dx[offset..offset + nsv], side);
                    let dsm = svec_to_mat(&d.ds[offset..offset + nsv], side);
                    // in the scaled space the iterate is diag(λ) for both x and s
                    let bx = &ps.r_inv * dxm * ps.r_inv.transpose();
                    let bs = ps.r.transpose() * dsm * &ps.r;
                    for b in [bx, bs] {
                        let mut c = b;
                        for i in 0..side {
                            for j in 0..side {
                                c[(i, j)] /= (ps.lambda[i] * ps.lambda[j]).sqrt();
                            }
                        }
                        let c = (&c + c.transpose()) * 0.5;
                        let emin = c.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
                        if emin < 0.0 {
                            alpha = alpha.min(-1.0 / emin);
                        }
                    }
                }
            }
        }
        alpha
    }

    /// One predictor-corrector step; returns the step length taken.
    fn step(&mut self, sc: &Scaled) -> Option<f64> {
        let mu = self.mu();
        let aff = self.direction(sc, 0.0, mu, None)?;
        let alpha_aff = self.max_step(sc, &aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);
        let dir = self.direction(sc, sigma, mu, Some(&aff))?;
        let alpha = (0.99 * self.max_step(sc, &dir)).min(1.0);
        for i in 0..self.n {
            self.x[i] += alpha * dir.dx[i];
            self.s[i] += alpha * dir.ds[i];
        }
        for i in 0..self.m {
            self.y[i] += alpha * dir.dy[i];
        }
        self.tau += alpha * dir.dtau;
        self.kappa += alpha * dir.dkappa;
        Some(alpha)
    }
}

/// Thin QR of `Ĝᵀ` stacked over all blocks (`N × m`); `None` when `Ĝ` is
/// short or numerically rank deficient.
fn stacked_qr(ghat: &[ScaledRows], m: usize) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let total: usize = ghat.iter().map(|g| g.g.ncols()).sum();
    if total < m {
        return None;
    }
    let mut gt = DMatrix::<f64>::zeros(total, m);
    let mut start = 0;
    for g in ghat {
        for (a, &r) in g.rows.iter().enumerate() {
            for q in 0..g.g.ncols() {
                gt[(start + q, r)] = g.g[(a, q)];
            }
        }
        start += g.g.ncols();
    }
    let qr = gt.qr();
    let r = qr.r();
    let dmax = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(dmax > 0.0) || r.diagonal().iter().any(|v| !(v.abs() > 1e-14 * dmax)) {
        return None;
    }
    Some((qr.q(), r))
}

/// Conjugate gradients on `M u = rhs` preconditioned by the regularized
/// factor of `M`; recovers the accuracy lost to regularization when `M` is
/// nearly singular.
fn pcg(m: &DMatrix<f64>, f: &Factor, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let mut u = f.solve(rhs)?;
    let mut r = rhs - m * &u;
    let mut z = f.solve(&r)?;
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let target = 1e-16 * rhs.norm();
    for _ in 0..50 {
        if r.norm() <= target || !(rz > 0.0) {
            break;
        }
        let mp = m * &p;
        let pmp = p.dot(&mp);
        if !(pmp > 0.0) {
            break;
        }
        let a = rz / pmp;
        u.axpy(a, &p, 1.0);
        r.axpy(-a, &mp, 1.0);
        z = f.solve(&r)?;
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Some(u)
}

/// Rows of `A` touching one cone block, mapped to the scaled space.
struct ScaledRows {
    rows: Vec<usize>,
    /// `rows.len() × block dim`; row `p` is the scaled image of `A_p`.
    g: DMatrix<f64>,
}

/// Groups the block columns by the rows they touch.
fn group_rows(cols: &[Vec<(usize, f64)>]) -> (Vec<usize>, Vec<Vec<(usize, f64)>>) {
    let mut rows: Vec<usize> = cols.iter().flat_map(|c| c.iter().map(|&(r, _)| r)).collect();
    rows.sort_unstable();
    rows.dedup();
    let local: std::collections::HashMap<usize, usize> = rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut entries = vec![Vec::new(); rows.len()];
    for (q, col) in cols.iter().enumerate() {
        for &(r, v) in col {
            entries[local[&r]].push((q, v));
        }
    }
    (rows, entries)
}

fn scaled_rows<F: Fn(usize, f64, &mut [f64])>(cols: &[Vec<(usize, f64)>], add: F) -> ScaledRows {
    let (rows, entries) = group_rows(cols);
    let mut g = DMatrix::<f64>::zeros(rows.len(), cols.len());
    let mut buf = vec![0.0; cols.len()];
    for (p, row) in entries.iter().enumerate() {
        buf.iter_mut().for_each(|v| *v = 0.0);
        for &(q, v) in row {
            add(q, v, &mut buf);
        }
        for (q, &v) in buf.iter().enumerate() {
            g[(p, q)] = v;
        }
    }
    ScaledRows { rows, g }
}

/// Scaled rows `svec(Rᵀ smat(A_p) R)` of one PSD block, built from the
/// sparse entries of each row.
fn psd_scaled_rows(cols: &[Vec<(usize, f64)>], r: &DMatrix<f64>) -> ScaledRows {
    let side = r.nrows();
    let nsv = cols.len();
    let (rows, entries) = group_rows(cols);
    let pairs: Vec<(usize, usize)> = (0..side).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let mut g = DMatrix::<f64>::zeros(rows.len(), nsv);
    let mut acc = DMatrix::<f64>::zeros(side, side);
    for (p, row) in entries.iter().enumerate() {
        acc.fill(0.0);
        for &(q, v) in row {
            let (i, j) = pairs[q];
            let ri = r.row(i);
            let rj = r.row(j);
            if i == j {
                acc.ger(v, &ri.transpose(), &ri.transpose(), 1.0);
            } else {
                let a = v * std::f64::consts::FRAC_1_SQRT_2;
                acc.ger(a, &ri.transpose(), &rj.transpose(), 1.0);
                acc.ger(a, &rj.transpose(), &ri.transpose(), 1.0);
            }
        }
        for (q, &(i, j)) in pairs.iter().enumerate() {
            g[(p, q)] = if i == j { acc[(i, i)] } else { acc[(i, j)] * std::f64::consts::SQRT_2 };
        }
    }
    ScaledRows { rows, g }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t_example() -> ConicProblem {
        // columns: t (free), X = [[x00, x10], [x10, x11]] as svec (x00, √2 x10, x11)
        let a = SparseMatrix::from_triplets(
            3,
            4,
            &[(0, 1, 1.0), (0, 0, -1.0), (1, 3, 1.0), (1, 0, -1.0), (2, 2, std::f64::consts::FRAC_1_SQRT_2)],
        )
        .unwrap();
        ConicProblem::new(vec![1.0, 0.0, 0.0, 0.0], a, vec![0.0, 0.0, 1.0], vec![Cone::Free(1), Cone::Psd(2)]).unwrap()
    }

    #[test]
    fn svec_round_trip_and_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, -0.5, 1.0, 3.0, 0.25, -0.5, 0.25, 1.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.0, -2.0, 0.5, 4.0, 0.0, 4.0, -1.0]);
        let mut va = vec![0.0; 6];
        let mut vb = vec![0.0; 6];
        mat_to_svec(&a, &mut va);
        mat_to_svec(&b, &mut vb);
        assert!((dot(&va, &vb) - (&a * &b).trace()).abs() < 1e-12);
        assert!((svec_to_mat(&va, 3) - a).abs().max() < 1e-15);
        assert_eq!(svec_index(2, 0), 3);
        assert_eq!(svec_index(0, 2), 3);
    }

    #[test]
    fn nonneg_minimum_without_constraints() {
        let p = ConicProblem::new(vec![1.0], SparseMatrix::zeros(0, 1), vec![], vec![Cone::Nonneg(1)]).unwrap();
        let sol = solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.x[0].abs() < 1e-7);
        assert!(sol.objective_value.abs() < 1e-7);
    }

    #[test]
    fn psd_two_by_two() {
        let p = t_example();
        let settings = SolverSettings::default();
        let sol = solve(&p, &settings);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6, "t = {}", sol.x[0]);
        let rep = verify_solution(&p, &sol).unwrap();
        assert!(rep.equality <= 1e-8);
        assert!(rep.cone_minimum[0] >= -1e-8);
        assert!(rep.equality <= 10.0 * settings.feas_tol);
        assert!(rep.dual <= 10.0 * settings.feas_tol);
        assert!(rep.gap <= 10.0 * settings.gap_tol);
        let cx = dot(&p.c, &sol.x);
        assert!((sol.objective_value - cx).abs() <= 1e-10 * cx.abs().max(1.0));

        let mut bad = sol.clone();
        bad.x[0] += 1.0;
        assert!(verify_solution(&p, &bad).unwrap().equality >= 0.5);
    }

    #[test]
    fn detects_primal_infeasibility() {
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]).unwrap();
        let p = ConicProblem::new(vec![0.0], a, vec![-1.0], vec![Cone::Nonneg(1)]).unwrap();
        assert_eq!(solve(&p, &SolverSettings::default()).status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn detects_dual_infeasibility() {
        // min -x, x >= 0, unbounded
        let p = ConicProblem::new(vec![-1.0], SparseMatrix::zeros(0, 1), vec![], vec![Cone::Nonneg(1)]).unwrap();
        assert_eq!(solve(&p, &SolverSettings::default()).status, SolveStatus::DualInfeasible);
    }

    #[test]
    fn small_lp_with_free_variable() {
        // min x1 + 2 x2 + z  s.t. x1 + x2 = 1, z - x1 = 0.5, x >= 0, z free -> x1 = 1? no: z = x1 + 0.5
        // objective = 2 x1 + 2 x2 + 0.5 = 2.5 for any split
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 0, 1.0), (1, 1, -1.0)]).unwrap();
        let p = ConicProblem::new(vec![1.0, 1.0, 2.0], a, vec![1.0, 0.5], vec![Cone::Free(1), Cone::Nonneg(2)]).unwrap();
        let sol = solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 2.5).abs() < 1e-6);
    }

    #[test]
    fn empty_problem() {
        let p = ConicProblem::new(vec![], SparseMatrix::zeros(0, 0), vec![], vec![]).unwrap();
        let sol = solve(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.objective_value, 0.0);
        let rep = verify_solution(&p, &sol).unwrap();
        assert_eq!((rep.equality, rep.dual, rep.gap, rep.cone_violation), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn dimension_checks() {
        assert!(ConicProblem::new(vec![0.0], SparseMatrix::zeros(0, 2), vec![], vec![Cone::Free(2)]).is_err());
        let p = t_example();
        let mut sol = solve(&p, &SolverSettings::default());
        sol.x.pop();
        assert!(verify_solution(&p, &sol).is_err());
        assert!(SolverSettings { feas_tol: 1.5, ..Default::default() }.validate().is_err());
    }
}
