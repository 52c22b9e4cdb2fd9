//! A Putinar certificate that `1 - x1 x2 ≥ 0` on the unit disk, solved
//! with the interior-point method and read back as a polynomial identity.
//!
//! cargo run --release --example sos_certificate

use attractor_sos::conic::{solve, verify_solution, SolverSettings};
use attractor_sos::poly::parse_polynomial;
use attractor_sos::semialg::SemialgebraicSet;
use attractor_sos::sos::{reconstruct, AffinePoly, SosProgram};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let disk = SemialgebraicSet::ball(2, 1.0)?;
    let p = parse_polynomial("1 - x1*x2", 2)?;

    let mut prog = SosProgram::new(2)?;
    let id = prog.add_putinar_constraint(&AffinePoly::known(&p), &disk, 2)?;
    prog.set_objective(&[])?;
    let problem = prog.to_conic()?;
    let sol = solve(&problem, &SolverSettings::default());
    let check = verify_solution(&problem, &sol)?;
    println!("status {} after {} iterations", sol.status, sol.iterations);
    println!("equality residual {:.2e}, cone violation {:.2e}", check.equality, check.cone_violation);

    // p = σ0 + σ1 (1 - |x|^2) with σi = z(x)ᵀ Qi z(x).
    let mut sum = parse_polynomial("0", 2)?;
    for block in prog.constraint_blocks(id) {
        let q = prog.gram_value(&sol.x, block)?;
        let sigma = reconstruct(&q, &prog.gram_basis(block))?;
        let multiplier = match prog.gram_blocks()[block].multiplier {
            None => parse_polynomial("1", 2)?,
            Some(i) => disk.inequalities()[i].clone(),
        };
        println!("block {block}: min eigenvalue {:.3e}", q.symmetric_eigenvalues().min());
        sum = &sum + &(&sigma * &multiplier);
    }
    let diff = &sum - &p;
    println!("max |coefficient| of the identity error: {:.2e}", diff.max_abs_coefficient());
    Ok(())
}
