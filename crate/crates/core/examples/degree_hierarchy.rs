//! The bound `d_k` and the volume of `K` along the hierarchy k = 4, 6, 8 for
//! the Van der Pol oscillator. Both shrink as the degree grows.
//!
//! cargo run --release --example degree_hierarchy

use attractor_sos::attractor::solve_attractor_with_info;
use attractor_sos::conic::SolverSettings;
use attractor_sos::systems;
use attractor_sos::verify::estimate_volume;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>3} {:>12} {:>10} {:>8} {:>10}", "k", "d_k", "vol(K)", "stderr", "status");
    for k in [4, 6, 8] {
        let b = systems::van_der_pol(k);
        let (cert, info) = solve_attractor_with_info(&b.system, &b.set, &b.params, &SolverSettings::default())?;
        let vol = estimate_volume(&cert, &b.set, 200_000, 7, None)?;
        println!("{k:>3} {:>12.6} {:>10.4} {:>8.4} {:>10}", cert.d_k, vol.volume, vol.stderr, info.status.to_string());
    }
    Ok(())
}
