//! Lebesgue moments of the sets `X`: closed forms for boxes, balls and
//! annuli against hit-or-miss Monte Carlo.
//!
//! cargo run --release --example moments

use attractor_sos::poly::basis;
use attractor_sos::semialg::{moments, monte_carlo_moments, SemialgebraicSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sets = [
        ("box [-1,1]^2", SemialgebraicSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0], 2f64.sqrt())?),
        ("annulus 0.4..2", SemialgebraicSet::annulus(2, 0.4, 2.0, 2.0)?),
        ("unit ball", SemialgebraicSet::ball(2, 1.0)?),
    ];
    let z = basis(2, 4);
    for (name, set) in &sets {
        let exact = moments(set, 4, None, None)?;
        let mc = monte_carlo_moments(set, 4, 200_000, 1)?;
        let se = mc.stderr.as_ref().expect("Monte Carlo reports errors");
        println!("{name}: volume {:.6}", exact.volume());
        for (i, m) in z.iter().enumerate().filter(|(_, m)| m.degree() <= 2) {
            println!("  {:<8} exact {:>10.6}  mc {:>10.6} ± {:.4}", m.to_string(), exact.values[i], mc.values[i], se[i]);
        }
    }
    Ok(())
}
