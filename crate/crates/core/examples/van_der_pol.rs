//! Outer approximation of the Van der Pol limit cycle on the annulus
//! `0.4 ≤ |x| ≤ 2` with degree-8 polynomials, then containment of simulated
//! limit-cycle samples and an ASCII picture of `K`.
//!
//! cargo run --release --example van_der_pol [degree]

use attractor_sos::attractor::solve_attractor_with_info;
use attractor_sos::conic::SolverSettings;
use attractor_sos::systems;
use attractor_sos::verify::{attractor_samples, check_containment, estimate_volume, SampleSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let degree = std::env::args().nth(1).map_or(Ok(8), |s| s.parse())?;
    let b = systems::van_der_pol(degree);
    let (cert, info) = solve_attractor_with_info(&b.system, &b.set, &b.params, &SolverSettings::default())?;
    println!("k = {degree}: {} in {} iterations, {} rows", info.status, info.iterations, info.num_rows);
    println!("d_k = {:.6}, epsilon = {:.4e}", cert.d_k, cert.epsilon);

    let samples = attractor_samples(&b.system, &b.set, &SampleSpec::continuous(200, 2000), 1)?;
    let c = check_containment(&cert, &samples, None)?;
    println!("limit-cycle samples in K: {}/{}", c.inside, c.samples);
    let vol = estimate_volume(&cert, &b.set, 200_000, 2, None)?;
    println!("volume of K {:.4} ± {:.4} (X has {:.4})", vol.volume, vol.stderr, vol.set_volume);

    for row in 0..25 {
        let y = 2.0 - 4.0 * row as f64 / 24.0;
        let line: String = (0..61)
            .map(|col| {
                let x = -2.0 + 4.0 * col as f64 / 60.0;
                if cert.member(&[x, y], None).unwrap_or(false) { '#' } else if b.set.contains(&[x, y]).unwrap_or(false) { '.' } else { ' ' }
            })
            .collect();
        println!("{line}");
    }
    Ok(())
}
