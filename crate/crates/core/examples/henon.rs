//! The Hénon map on `[0, 1]²` with `α = 0.002`, `γ = 0.05` and degree 6.
//!
//! The discrete program admits `J = 1, v = w = ε = 0` for every map, so the
//! optimum is zero and the certified set `K = {J ≤ ε}` comes out empty. The
//! example prints the solve, the fraction of orbit points in `K` and the
//! values of `J` along the attractor to make this visible.
//!
//! cargo run --release --example henon

use attractor_sos::attractor::solve_attractor_with_info;
use attractor_sos::conic::SolverSettings;
use attractor_sos::systems;
use attractor_sos::verify::{attractor_samples, check_containment, iterate_map, SampleSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = systems::henon(6);
    let orbit = iterate_map(b.system.f(), &[0.0, 0.0], 3)?;
    println!("orbit of the origin: {:?}", orbit.states);

    let (cert, info) = solve_attractor_with_info(&b.system, &b.set, &b.params, &SolverSettings::default())?;
    println!("{} in {} iterations, d_k = {:.3e}, epsilon = {:.3e}", info.status, info.iterations, cert.d_k, cert.epsilon);

    let samples = attractor_samples(&b.system, &b.set, &SampleSpec::discrete(200, 10_000), 1)?;
    let c = check_containment(&cert, &samples, None)?;
    let j_min = samples.iter().map(|x| cert.j.eval(x)).fold(f64::INFINITY, f64::min);
    println!("orbit points in K: {}/{}; smallest J on the orbit {:.4}", c.inside, c.samples, j_min);
    Ok(())
}
