//! A small semidefinite program solved directly: the largest eigenvalue of a
//! symmetric matrix `C` is `min t` subject to `tI - C ⪰ 0`, written in the
//! standard form `min cᵀx, Ax = b, x ∈ K` with `x = (t, svec(S))`.
//!
//! cargo run --release --example conic_solver

use attractor_sos::conic::{solve, svec_index, Cone, ConicProblem, SolverSettings, SparseMatrix};
use nalgebra::DMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c_mat = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
    let side = 3;
    let dim = side * (side + 1) / 2;
    // Rows: S_ij - t δ_ij = -C_ij in svec coordinates.
    let mut triplets = Vec::new();
    let mut b = vec![0.0; dim];
    for i in 0..side {
        for j in 0..=i {
            let r = svec_index(i, j);
            let w = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            triplets.push((r, 1 + r, 1.0));
            if i == j {
                triplets.push((r, 0, -1.0));
            }
            b[r] = -w * c_mat[(i, j)];
        }
    }
    let a = SparseMatrix::from_triplets(dim, 1 + dim, &triplets)?;
    let mut c = vec![0.0; 1 + dim];
    c[0] = 1.0;
    let problem = ConicProblem::new(c, a, b, vec![Cone::Free(1), Cone::Psd(side)])?;
    let sol = solve(&problem, &SolverSettings::default());
    let exact = c_mat.symmetric_eigenvalues().max();
    println!("status {}, iterations {}", sol.status, sol.iterations);
    println!("t* = {:.10}, largest eigenvalue = {:.10}", sol.x[0], exact);
    println!("residuals: primal {:.1e} dual {:.1e} gap {:.1e}", sol.residuals.primal, sol.residuals.dual, sol.residuals.gap);
    Ok(())
}
