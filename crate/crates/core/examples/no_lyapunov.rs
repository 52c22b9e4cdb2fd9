//! A flow whose origin is globally attracting although no polynomial
//! Lyapunov function exists. The sublevel set `{J ≤ ε}` may miss the
//! origin at the solver's `ε`; scaling `ε` by 8 recovers it.
//!
//! cargo run --release --example no_lyapunov [degree]

use attractor_sos::attractor::solve_attractor_with_info;
use attractor_sos::conic::SolverSettings;
use attractor_sos::systems;
use attractor_sos::verify::{entry_time, simulate, DEFAULT_STEP};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let degree = std::env::args().nth(1).map_or(Ok(8), |s| s.parse())?;
    let b = systems::no_lyapunov(degree);
    let (cert, info) = solve_attractor_with_info(&b.system, &b.set, &b.params, &SolverSettings::default())?;
    println!("k = {degree}: {}, d_k = {:.5}, epsilon = {:.4e}", info.status, cert.d_k, cert.epsilon);
    for scale in [1.0, 8.0] {
        println!("scale {scale}: origin in K = {}, J(0) = {:.4e}", cert.member(&[0.0, 0.0], Some(scale))?, cert.j.eval(&[0.0, 0.0]));
        for corner in [[1.0, 1.0], [-1.0, 1.0]] {
            let traj = simulate(&b.system, &corner, 30.0, DEFAULT_STEP)?;
            match entry_time(&cert, &traj, Some(scale)) {
                Some(t) => println!("  from {corner:?}: enters K for good at t = {t:.2}"),
                None => println!("  from {corner:?}: not inside K at the end of the horizon"),
            }
        }
    }
    Ok(())
}
