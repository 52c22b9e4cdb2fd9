//! A hand-made certificate for x' = -x on the unit disk, written to JSON,
//! read back and checked with the sampling-based verifiers.
//!
//! cargo run --release --example certificate_io

use attractor_sos::attractor::Certificate;
use attractor_sos::poly::{parse_polynomial, Polynomial};
use attractor_sos::systems;
use attractor_sos::verify::{check_invariance, check_residuals, DEFAULT_STEP};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = systems::linear_decay(2, 2, 0.5);
    let cert = Certificate::from_parts(
        &b.system,
        &b.set,
        b.params.clone(),
        Polynomial::constant(2, 1.0),
        parse_polynomial("x1^2 + x2^2", 2)?,
        Polynomial::zero(2),
        0.0,
    )?;
    let dir = std::env::temp_dir().join("attractor_certificate_io");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("certificate.json");
    cert.write(&path)?;
    let back = Certificate::read(&path)?;
    println!("wrote and read {}: identical = {}", path.display(), back == cert);

    let r = check_residuals(&back, &b.set, 20_000, 1)?;
    for (name, m) in r.names.iter().zip(&r.minima) {
        println!("  min {name:<28} {m:.3e}");
    }
    let inv = check_invariance(&back, &b.system, 200, 20.0, DEFAULT_STEP, 2, None)?;
    println!("invariance: {} violations over {} points", inv.violations, inv.points);
    println!("origin in K: {}, (0.5, 0) in K: {}", back.member(&[0.0, 0.0], None)?, back.member(&[0.5, 0.0], None)?);
    Ok(())
}
