//! Solves of the bundled benchmark systems and checks of their certificates.

use std::path::Path;
use std::sync::OnceLock;

use attractor_sos::attractor::{solve_attractor, AttractorError, Certificate, SolveParams};
use attractor_sos::cli::{self, RunConfig, CERTIFICATE_FILE, GRID_FILE, REPORT_JSON_FILE, REPORT_TEXT_FILE, SUMMARY_FILE};
use attractor_sos::conic::{SolveStatus, SolverSettings};
use attractor_sos::systems;
use attractor_sos::verify::{attractor_samples, check_containment, check_invariance, estimate_volume, SampleSpec, DEFAULT_STEP};

fn van_der_pol(k: u32) -> &'static Certificate {
    static K6: OnceLock<Certificate> = OnceLock::new();
    static K8: OnceLock<Certificate> = OnceLock::new();
    let cell = match k {
        6 => &K6,
        8 => &K8,
        _ => unreachable!(),
    };
    cell.get_or_init(|| {
        let b = systems::van_der_pol(k);
        solve_attractor(&b.system, &b.set, &b.params, &SolverSettings::default()).unwrap()
    })
}

fn bundled(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap()
}

#[test]
fn van_der_pol_limit_cycle_lies_in_k() {
    let b = systems::van_der_pol(8);
    let cert = van_der_pol(8);
    assert_eq!(cert.solver_status, SolveStatus::Optimal);
    let pts = attractor_samples(&b.system, &b.set, &SampleSpec::continuous(100, 1000), 17).unwrap();
    let c = check_containment(cert, &pts, None).unwrap();
    assert_eq!(c.inside, c.samples, "worst excess {}", c.worst_excess);
}

#[test]
fn van_der_pol_k_is_invariant_and_shrunken_k_is_not() {
    let b = systems::van_der_pol(8);
    let cert = van_der_pol(8);
    let ok = check_invariance(cert, &b.system, 500, 20.0, DEFAULT_STEP, 1, None).unwrap();
    assert_eq!(ok.violations, 0, "{ok:?}");
    let shrunk = check_invariance(cert, &b.system, 200, 20.0, DEFAULT_STEP, 1, Some(0.01)).unwrap();
    assert!(shrunk.violations > 0, "{shrunk:?}");
}

#[test]
fn van_der_pol_volume_shrinks_with_degree() {
    let b = systems::van_der_pol(8);
    let v6 = estimate_volume(van_der_pol(6), &b.set, 100_000, 5, None).unwrap();
    let v8 = estimate_volume(van_der_pol(8), &b.set, 100_000, 5, None).unwrap();
    assert!(v8.volume <= v6.volume + 3.0 * v6.stderr.hypot(v8.stderr), "{v6:?} {v8:?}");
    assert!(van_der_pol(8).d_k <= van_der_pol(6).d_k);
}

#[test]
fn iteration_limit_yields_no_certificate() {
    let b = systems::van_der_pol(4);
    let settings = SolverSettings { max_iterations: 3, ..Default::default() };
    let err = solve_attractor(&b.system, &b.set, &SolveParams::continuous(4, 0.2), &settings).unwrap_err();
    assert!(matches!(err, AttractorError::SolverFailed { status: SolveStatus::IterationLimit, .. }), "{err}");
}

#[test]
fn bundled_van_der_pol_config_gives_an_annular_band() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = bundled("van_der_pol.json");
    cfg.grid.resolution = 81;
    cfg.verification.residual_samples = 20_000;
    cfg.verification.volume_samples = 50_000;
    let outcome = cli::run(&cfg, dir.path()).unwrap();
    assert!(outcome.success(), "{}", outcome.report.to_text());
    for f in [CERTIFICATE_FILE, GRID_FILE, REPORT_TEXT_FILE, REPORT_JSON_FILE, SUMMARY_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let cert = outcome.certificate.unwrap();
    // A band around the limit cycle: a small part of X that winds around the hole.
    let grid = cli::grid_points(&cert.set, 81);
    let in_x = grid.iter().filter(|x| cert.set.contains(x).unwrap()).count();
    let in_k = grid.iter().filter(|x| cert.member(x, None).unwrap()).count();
    assert!(in_k > 0 && (in_k as f64) < 0.3 * in_x as f64, "{in_k} of {in_x}");
    let angles_covered = (0..8).all(|s| {
        let a = s as f64 * std::f64::consts::FRAC_PI_4;
        (0..200).any(|i| cert.member(&[(0.5 + i as f64 * 0.005) * a.cos(), (0.5 + i as f64 * 0.005) * a.sin()], None).unwrap())
    });
    assert!(angles_covered, "K should wind around the origin");
}

#[test]
fn bundled_henon_config_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = bundled("henon.json");
    cfg.grid.resolution = 50;
    cfg.verification.residual_samples = 10_000;
    cfg.verification.volume_samples = 20_000;
    cfg.verification.attractor_keep = Some(1000);
    let outcome = cli::run(&cfg, dir.path()).unwrap();
    assert_eq!(outcome.info.as_ref().map(|i| i.status), Some(SolveStatus::Optimal));
    for f in [CERTIFICATE_FILE, GRID_FILE, REPORT_TEXT_FILE, REPORT_JSON_FILE, SUMMARY_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
