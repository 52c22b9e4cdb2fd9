//! RK4 integration, map iteration and attractor sampling used as ground
//! truth by the verification checks.
//!
//! cargo run --release --example simulation

use attractor_sos::poly::PolynomialMap;
use attractor_sos::systems;
use attractor_sos::verify::{attractor_samples, iterate_map, simulate_ode, SampleSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Fourth-order convergence on x' = -x.
    let decay = PolynomialMap::parse(&["-x1"], 1)?;
    let exact = (-1.0f64).exp();
    for h in [0.1, 0.05, 0.025] {
        let traj = simulate_ode(&decay, &[1.0], 1.0, h)?;
        println!("h = {h:<6} error {:.3e}", (traj.last()[0] - exact).abs());
    }

    // One period of the harmonic oscillator.
    let rot = PolynomialMap::parse(&["x2", "-x1"], 2)?;
    let traj = simulate_ode(&rot, &[1.0, 0.0], 2.0 * std::f64::consts::PI, 0.01)?;
    println!("harmonic oscillator after 2π: {:?} ({} states)", traj.last(), traj.len());

    let h = systems::henon(6);
    let orbit = iterate_map(h.system.f(), &[0.1, 0.1], 5)?;
    println!("Hénon orbit: {:?}", orbit.states);

    let vdp = systems::van_der_pol(8);
    let pts = attractor_samples(&vdp.system, &vdp.set, &SampleSpec::continuous(50, 500), 11)?;
    let radii: Vec<f64> = pts.iter().map(|x| x[0].hypot(x[1])).collect();
    let (lo, hi) = radii.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    println!("Van der Pol limit-cycle samples: {}, radius in [{lo:.3}, {hi:.3}]", pts.len());
    Ok(())
}
