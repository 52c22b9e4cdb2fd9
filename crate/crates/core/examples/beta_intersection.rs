//! Certificates for several discount factors β. Each is an outer
//! approximation on its own, so their intersection is one too and is never
//! larger than any member.
//!
//! cargo run --release --example beta_intersection

use attractor_sos::attractor::{intersect_members, solve_attractor};
use attractor_sos::attractor::SolveParams;
use attractor_sos::conic::SolverSettings;
use attractor_sos::systems;
use attractor_sos::verify::{estimate_volume, estimate_volume_with};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = systems::van_der_pol(6);
    let mut certs = Vec::new();
    for beta in [0.05, 0.2, 1.0] {
        let cert = solve_attractor(&b.system, &b.set, &SolveParams::continuous(6, beta), &SolverSettings::default())?;
        let vol = estimate_volume(&cert, &b.set, 100_000, 3, None)?;
        println!("beta {beta:<5} d_k {:.5}  vol(K) {:.4} ± {:.4}", cert.d_k, vol.volume, vol.stderr);
        certs.push(cert);
    }
    let both = estimate_volume_with(&b.set, 100_000, 3, |x| intersect_members(&certs, x).unwrap_or(false))?;
    println!("intersection      vol(K) {:.4} ± {:.4}", both.volume, both.stderr);
    Ok(())
}
