//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use attractor_sos::attractor::{solve_attractor_with_info, Certificate, SolveInfo};
use attractor_sos::conic::{SolveStatus, SolverSettings};
use attractor_sos::poly::{basis, parse_polynomial, Polynomial, PolynomialMap};
use attractor_sos::semialg::{moments, monte_carlo_moments, SemialgebraicSet};
use attractor_sos::sos::{reconstruct, AffinePoly, SosProgram};
use attractor_sos::systems::{self, Benchmark};
use attractor_sos::verify::{
    attractor_samples, check_containment, check_invariance, check_residuals, entry_time, estimate_volume, simulate,
    simulate_ode, SampleSpec, DEFAULT_STEP,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Solved = Result<(Certificate, SolveInfo, Duration), String>;

fn solve(b: &Benchmark) -> Solved {
    let t = Instant::now();
    solve_attractor_with_info(&b.system, &b.set, &b.params, &SolverSettings::default())
        .map(|(c, i)| (c, i, t.elapsed()))
        .map_err(|e| format!("{} k={}: {e}", b.name, b.params.degree))
}

/// Fraction of a 400×400 grid over the bounding box of `X` (restricted to
/// `X`) that lies in `K`.
fn grid_fraction(cert: &Certificate, set: &SemialgebraicSet) -> f64 {
    let (lo, hi) = set.bounding_box();
    let n = 400;
    let (mut in_x, mut in_k) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            let x = [
                lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / n as f64,
                lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / n as f64,
            ];
            if set.contains(&x).unwrap() {
                in_x += 1;
                in_k += cert.member(&x, None).unwrap() as usize;
            }
        }
    }
    in_k as f64 / in_x as f64
}

struct VdpRuns {
    certs: Vec<(u32, Solved)>,
}

impl VdpRuns {
    fn get(&self, k: u32) -> &Solved {
        &self.certs.iter().find(|(d, _)| *d == k).expect("degree solved").1
    }
}

fn criterion_1(vdp: &VdpRuns) -> Outcome {
    let b = systems::van_der_pol(8);
    let (cert, info, elapsed) = match vdp.get(8) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.clone()),
    };
    let t = Instant::now();
    let spec = SampleSpec::continuous(400, 2000);
    let samples = match attractor_samples(&b.system, &b.set, &spec, SEED) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("sampling failed: {e}")),
    };
    let c = check_containment(cert, &samples, None).unwrap();
    let frac = grid_fraction(cert, &b.set);
    let runtime = *elapsed + t.elapsed();
    let pass = info.status == SolveStatus::Optimal
        && samples.len() == 2000
        && c.fraction == 1.0
        && frac < 0.95
        && runtime < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "status {}, {}/{} limit-cycle samples in K, grid fraction {:.4}, runtime {:.1}s",
            info.status,
            c.inside,
            samples.len(),
            frac,
            runtime.as_secs_f64()
        ),
    )
}

fn criterion_2(henon: &Solved) -> Outcome {
    let b = systems::henon(6);
    let (cert, info, _) = match henon {
        Ok(r) => r,
        Err(e) => return outcome(false, e.clone()),
    };
    let samples = match attractor_samples(&b.system, &b.set, &SampleSpec::discrete(200, 10_000), SEED) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("sampling failed: {e}")),
    };
    let c = check_containment(cert, &samples, None).unwrap();
    let vol = estimate_volume(cert, &b.set, 100_000, SEED, None).unwrap();
    let pass = info.status == SolveStatus::Optimal
        && samples.len() == 10_000
        && c.fraction == 1.0
        && vol.volume < vol.set_volume - 3.0 * vol.stderr;
    outcome(
        pass,
        format!(
            "status {}, eps {:.3e}, d_k {:.3e}, {}/{} orbit points in K (worst J excess {:.3e}), volume {:.4} ± {:.4} of {}",
            info.status,
            cert.epsilon,
            cert.d_k,
            c.inside,
            samples.len(),
            c.worst_excess,
            vol.volume,
            vol.stderr,
            vol.set_volume
        ),
    )
}

/// Checks origin membership, entry of the corner trajectories and invariance
/// for one certificate at the given ε scale.
fn no_lyapunov_checks(b: &Benchmark, cert: &Certificate, scale: f64) -> (bool, String) {
    let origin = cert.member(&[0.0, 0.0], Some(scale)).unwrap();
    let mut entries = Vec::new();
    for c in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
        let t = simulate(&b.system, &c, 30.0, DEFAULT_STEP).ok().and_then(|tr| entry_time(cert, &tr, Some(scale)));
        entries.push(t);
    }
    let inv = check_invariance(cert, &b.system, 500, 20.0, DEFAULT_STEP, SEED, Some(scale));
    let inv_ok = inv.as_ref().is_ok_and(|r| r.passed());
    let ok = origin && entries.iter().all(Option::is_some) && inv_ok;
    let inv_text = match inv {
        Ok(r) => format!("{} violations (worst {:.2e})", r.violations, r.worst_excess),
        Err(e) => format!("failed: {e}"),
    };
    (
        ok,
        format!(
            "scale {scale}: origin in K {origin}, corner entry times {:?}, invariance {inv_text}",
            entries.iter().map(|t| t.map(|v| (v * 100.0).round() / 100.0)).collect::<Vec<_>>()
        ),
    )
}

fn criterion_3(runs: &[(u32, Solved)]) -> Outcome {
    let mut notes = Vec::new();
    for (k, run) in runs {
        let b = systems::no_lyapunov(*k);
        let (cert, info, _) = match run {
            Ok(r) => r,
            Err(e) => {
                notes.push(e.clone());
                continue;
            }
        };
        if !matches!(info.status, SolveStatus::Optimal | SolveStatus::NearOptimal) {
            notes.push(format!("k={k}: status {}", info.status));
            continue;
        }
        for scale in [1.0, 8.0] {
            let (ok, text) = no_lyapunov_checks(&b, cert, scale);
            notes.push(format!("k={k} status {} eps {:.3e}, {text}", info.status, cert.epsilon));
            if ok {
                return outcome(true, notes.join("; "));
            }
        }
    }
    outcome(false, notes.join("; "))
}

fn criterion_4(vdp: &VdpRuns) -> Outcome {
    let b = systems::van_der_pol(4);
    let mut rows = Vec::new();
    for k in [4, 6, 8] {
        match vdp.get(k) {
            Ok((c, _, _)) => rows.push((k, c.d_k, estimate_volume(c, &b.set, 200_000, SEED, None).unwrap())),
            Err(e) => return outcome(false, e.clone()),
        }
    }
    let mut pass = true;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        pass &= b.1 <= a.1 * (1.0 + 1e-5);
        pass &= b.2.volume <= a.2.volume + 3.0 * a.2.stderr.hypot(b.2.stderr);
    }
    let text = rows
        .iter()
        .map(|(k, d, v)| format!("k={k}: d_k {d:.6}, vol {:.4} ± {:.4}", v.volume, v.stderr))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, text)
}

fn criterion_5() -> Outcome {
    let b = systems::linear_decay(2, 2, 0.5);
    let cert = Certificate::from_parts(
        &b.system,
        &b.set,
        b.params.clone(),
        Polynomial::constant(2, 1.0),
        parse_polynomial("x1^2 + x2^2", 2).unwrap(),
        Polynomial::zero(2),
        0.0,
    )
    .unwrap();
    let r = check_residuals(&cert, &b.set, 100_000, SEED).unwrap();
    let inv = check_invariance(&cert, &b.system, 500, 20.0, DEFAULT_STEP, SEED, None);
    let (inv_ok, inv_text) = match &inv {
        Ok(i) => (i.violations == 0 && i.points == 500, format!("{} violations over {} points", i.violations, i.points)),
        Err(e) => (false, e.to_string()),
    };
    let minima_ok = r.minima.iter().all(|&m| m >= 0.0);
    outcome(minima_ok && inv_ok, format!("residual minima {:?}; invariance {inv_text}", r.minima))
}

fn criterion_6(vdp: &VdpRuns) -> Outcome {
    let b = systems::van_der_pol(8);
    let (cert, _, _) = match vdp.get(8) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.clone()),
    };
    match check_invariance(cert, &b.system, 500, 20.0, DEFAULT_STEP, SEED, None) {
        Ok(i) => outcome(
            i.violations == 0 && i.points == 500,
            format!("{} violations over {} points, worst excess {:.3e} (tolerance {:.2e})", i.violations, i.points, i.worst_excess, i.tolerance),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn criterion_7() -> Outcome {
    let sets = [
        ("box", SemialgebraicSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0], 2f64.sqrt()).unwrap()),
        ("annulus", SemialgebraicSet::annulus(2, 0.4, 2.0, 2.0).unwrap()),
    ];
    let mut pass = true;
    let mut text = Vec::new();
    for (name, set) in &sets {
        let exact = moments(set, 8, None, None).unwrap();
        let mc = monte_carlo_moments(set, 8, 1_000_000, SEED).unwrap();
        let se = mc.stderr.as_ref().unwrap();
        let worst = exact
            .values
            .iter()
            .zip(&mc.values)
            .zip(se)
            .map(|((e, m), s)| if *s > 0.0 { (e - m).abs() / s } else if e == m { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max);
        pass &= worst <= 3.0;
        text.push(format!("{name}: worst deviation {worst:.2} stderr over {} moments", exact.values.len()));
    }
    outcome(pass, text.join("; "))
}

fn criterion_8(all: &[(&str, &Solved)]) -> Outcome {
    let mut pass = true;
    let mut count = 0;
    let mut text = Vec::new();
    for (name, run) in all {
        let Ok((cert, info, _)) = run else { continue };
        if info.status != SolveStatus::Optimal {
            continue;
        }
        count += 1;
        let r = check_residuals(cert, &cert.set, 100_000, SEED).unwrap();
        pass &= r.passed();
        let worst = r.minima.iter().zip(&r.thresholds).map(|(m, t)| m / t.abs()).fold(f64::INFINITY, f64::min);
        text.push(format!("{name}: {}", if r.passed() { format!("ok (min/threshold {worst:.2e})") } else { format!("flagged {:?}", r.minima) }));
    }
    outcome(pass && count > 0, format!("{count} optimal certificates; {}", text.join("; ")))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (nvars, half) in [(1, 5), (2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (4, 1)] {
        for _ in 0..5 {
            let z = basis(nvars, half);
            let side = z.len();
            assert!(side <= 15);
            let g = DMatrix::from_fn(side, side, |_, _| rng.random_range(-1.0..1.0));
            let q = &g * g.transpose();
            let p = reconstruct(&q, &z).unwrap();
            let mut prog = SosProgram::new(nvars).unwrap();
            let set = SemialgebraicSet::ball(nvars, 1.0).unwrap();
            let id = prog.add_putinar_constraint(&AffinePoly::known(&p), &set, 2 * half).unwrap();
            prog.set_objective(&[]).unwrap();
            let conic = prog.to_conic().unwrap();
            let layout = prog.layout();
            let mut x = vec![0.0; layout.num_cols];
            let block = prog.constraint_blocks(id)[0];
            attractor_sos::conic::mat_to_svec(&q, &mut x[layout.gram_range(block)]);
            let ax = conic.a.mul_vec(&x);
            let err = ax.iter().zip(&conic.b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
            pass &= err <= 1e-12;
        }
    }
    outcome(pass, format!("40 random Gram matrices, worst equality residual {worst:.2e}"))
}

fn criterion_10() -> Outcome {
    let f = PolynomialMap::parse(&["-x1"], 1).unwrap();
    let exact = (-1.0f64).exp();
    let err = |h| (simulate_ode(&f, &[1.0], 1.0, h).unwrap().last()[0] - exact).abs();
    let (e1, e2) = (err(0.02), err(0.01));
    outcome(e1 / e2 >= 12.0, format!("error {e1:.3e} at h=0.02, {e2:.3e} at h=0.01, ratio {:.2}", e1 / e2))
}

fn main() {
    let start = Instant::now();
    let vdp = VdpRuns { certs: [4, 6, 8].into_iter().map(|k| (k, solve(&systems::van_der_pol(k)))).collect() };
    let henon = solve(&systems::henon(6));
    let mut nolyap: Vec<(u32, Solved)> = vec![(8, solve(&systems::no_lyapunov(8)))];

    let mut results: Vec<(u32, Outcome)> = Vec::new();
    results.push((1, criterion_1(&vdp)));
    results.push((2, criterion_2(&henon)));
    let mut c3 = criterion_3(&nolyap);
    if !c3.pass {
        nolyap.push((10, solve(&systems::no_lyapunov(10))));
        c3 = criterion_3(&nolyap);
    }
    results.push((3, c3));
    results.push((4, criterion_4(&vdp)));
    results.push((5, criterion_5()));
    results.push((6, criterion_6(&vdp)));
    results.push((7, criterion_7()));
    let mut all: Vec<(&str, &Solved)> = vec![("van_der_pol k=4", vdp.get(4)), ("van_der_pol k=6", vdp.get(6)), ("van_der_pol k=8", vdp.get(8))];
    all.push(("henon k=6", &henon));
    for (k, r) in &nolyap {
        all.push((if *k == 8 { "no_lyapunov k=8" } else { "no_lyapunov k=10" }, r));
    }
    results.push((8, criterion_8(&all)));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));

    let mut failed = 0;
    for (n, o) in &results {
        println!("criterion {n:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {} passed, {} failed in {:.1}s", results.len() - failed, failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
