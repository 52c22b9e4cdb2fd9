use attractor_sos::attractor::{intersect_members, Certificate};
use attractor_sos::conic::{mat_to_svec, svec_to_mat};
use attractor_sos::poly::{basis, parse_polynomial, Monomial, Polynomial, PolynomialMap};
use attractor_sos::semialg::{moments, sample, SemialgebraicSet};
use attractor_sos::sos::reconstruct;
use attractor_sos::systems;
use attractor_sos::verify::{attractor_samples, check_residuals, estimate_volume, simulate_ode, SampleSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn coefficient() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), -3.0..3.0f64, (-4i32..5).prop_map(f64::from)]
}

/// Random polynomial in two variables of degree at most `deg`.
fn poly2(deg: u32) -> impl Strategy<Value = Polynomial> {
    let n = basis(2, deg).len();
    prop::collection::vec(coefficient(), n).prop_map(move |c| Polynomial::from_basis_coefficients(2, deg, &c).unwrap())
}

fn point2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5..1.5f64, 2)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_operations_evaluate_pointwise(p in poly2(3), q in poly2(3), x in point2()) {
        let (pv, qv) = (p.eval(&x), q.eval(&x));
        prop_assert!(close((&p + &q).eval(&x), pv + qv, 1e-12));
        prop_assert!(close((&p - &q).eval(&x), pv - qv, 1e-12));
        prop_assert!(close((&p * &q).eval(&x), pv * qv, 1e-11));
        prop_assert!(close(p.pow(2).eval(&x), pv * pv, 1e-11));
    }

    #[test]
    fn composition_evaluates_through_the_map(p in poly2(3), f1 in poly2(2), f2 in poly2(2), x in point2()) {
        let f = PolynomialMap::new(vec![f1, f2]).unwrap();
        let y = f.eval(&x);
        prop_assert!(close(p.compose(&f).unwrap().eval(&x), p.eval(&y), 1e-10));
    }

    #[test]
    fn lie_derivative_matches_finite_differences(p in poly2(4), f1 in poly2(2), f2 in poly2(2), x in point2()) {
        let f = PolynomialMap::new(vec![f1, f2]).unwrap();
        let fx = f.eval(&x);
        let h = 1e-6;
        let plus: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a - h * b).collect();
        let fd = (p.eval(&plus) - p.eval(&minus)) / (2.0 * h);
        let exact = p.lie_derivative(&f).unwrap().eval(&x);
        prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "fd {} exact {}", fd, exact);
    }

    #[test]
    fn display_parses_back(p in poly2(4), x in point2()) {
        let q = parse_polynomial(&p.to_string(), 2).unwrap();
        prop_assert!(close(q.eval(&x), p.eval(&x), 1e-12));
    }

    #[test]
    fn basis_coefficients_round_trip(p in poly2(5)) {
        let c = p.basis_coefficients(5).unwrap();
        prop_assert_eq!(Polynomial::from_basis_coefficients(2, 5, &c).unwrap(), p);
    }

    #[test]
    fn svec_round_trip(entries in prop::collection::vec(-5.0..5.0f64, 36)) {
        let g = DMatrix::from_column_slice(6, 6, &entries);
        let m = &g + g.transpose();
        let mut v = vec![0.0; 21];
        mat_to_svec(&m, &mut v);
        prop_assert!((svec_to_mat(&v, 6) - &m).amax() < 1e-12);
        // svec preserves the trace inner product.
        let frob: f64 = m.iter().map(|a| a * a).sum();
        let dot: f64 = v.iter().map(|a| a * a).sum();
        prop_assert!(close(frob, dot, 1e-12));
    }

    #[test]
    fn gram_reconstruction_is_the_quadratic_form(entries in prop::collection::vec(-1.0..1.0f64, 36), x in point2()) {
        let z = basis(2, 2);
        let g = DMatrix::from_column_slice(6, 6, &entries);
        let q = &g * g.transpose();
        let zx = DMatrix::from_iterator(6, 1, z.iter().map(|m: &Monomial| m.eval(&x)));
        let form = (zx.transpose() * &q * &zx)[(0, 0)];
        let p = reconstruct(&q, &z).unwrap();
        prop_assert!(close(p.eval(&x), form, 1e-12));
        prop_assert!(p.eval(&x) >= -1e-12);
    }

    #[test]
    fn box_moments_factor_into_one_dimensional_integrals(
        lo in prop::collection::vec(-2.0..0.0f64, 2),
        width in prop::collection::vec(0.1..2.0f64, 2),
    ) {
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(a, w)| a + w).collect();
        let set = SemialgebraicSet::boxed(lo.clone(), hi.clone(), 4.0).unwrap();
        let m = moments(&set, 4, None, None).unwrap();
        for (i, mono) in basis(2, 4).iter().enumerate() {
            let expected: f64 = (0..2)
                .map(|d| {
                    let a = mono.exponents()[d] as i32 + 1;
                    (hi[d].powi(a) - lo[d].powi(a)) / a as f64
                })
                .product();
            prop_assert!(close(m.values[i], expected, 1e-12), "{} {} {}", mono, m.values[i], expected);
        }
    }

    #[test]
    fn samples_lie_in_the_set(seed in any::<u64>(), inner in 0.1..0.9f64) {
        let set = SemialgebraicSet::annulus(2, inner, 1.0, 1.0).unwrap();
        for x in sample(&set, 200, seed).unwrap() {
            prop_assert!(set.contains(&x).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn membership_needs_every_condition(j in poly2(2), v in poly2(2), eps in 0.0..2.0f64, x in point2()) {
        let b = systems::linear_decay(2, 2, 0.5);
        let cert = Certificate::from_parts(&b.system, &b.set, b.params.clone(), Polynomial::constant(2, 1.0), j.clone(), v.clone(), eps).unwrap();
        let inside = cert.member(&x, None).unwrap();
        let expected = j.eval(&x) <= cert.threshold(None) && v.eval(&x) >= -cert.tau() && b.set.contains(&x).unwrap();
        prop_assert_eq!(inside, expected);
        // A larger ε scale only enlarges K.
        if inside {
            prop_assert!(cert.member(&x, Some(4.0)).unwrap());
        }
        let other = Certificate::from_parts(&b.system, &b.set, b.params.clone(), Polynomial::constant(2, 1.0), v, j, eps).unwrap();
        let both = intersect_members(&[cert.clone(), other.clone()], &x).unwrap();
        prop_assert_eq!(both, inside && other.member(&x, None).unwrap());
    }

    #[test]
    fn rk4_is_fourth_order(rate in 0.2..2.0f64, x0 in 0.1..2.0f64) {
        let f = PolynomialMap::new(vec![Polynomial::var(1, 0).scale(-rate)]).unwrap();
        let exact = x0 * (-rate).exp();
        let err = |h: f64| (simulate_ode(&f, &[x0], 1.0, h).unwrap().last()[0] - exact).abs();
        let ratio = err(0.02) / err(0.01);
        prop_assert!(ratio >= 12.0, "ratio {}", ratio);
    }

    #[test]
    fn residual_minima_do_not_increase_with_more_samples(seed in any::<u64>()) {
        let b = systems::linear_decay(2, 2, 0.5);
        let cert = Certificate::from_parts(
            &b.system, &b.set, b.params.clone(),
            parse_polynomial("1 - x1", 2).unwrap(),
            parse_polynomial("x1^2 + 2*x2^2", 2).unwrap(),
            parse_polynomial("0.1 - x1^2", 2).unwrap(),
            0.05,
        ).unwrap();
        let few = check_residuals(&cert, &b.set, 500, seed).unwrap();
        let many = check_residuals(&cert, &b.set, 5000, seed).unwrap();
        for (a, b) in few.minima.iter().zip(&many.minima) {
            prop_assert!(b <= a);
        }
    }
}

#[test]
fn attractor_samples_ignore_worker_count() {
    let b = systems::van_der_pol(4);
    let spec = SampleSpec::continuous(24, 240);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| attractor_samples(&b.system, &b.set, &spec, 5).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one.len(), 240);
}

#[test]
fn full_set_volume_matches_the_zeroth_moment() {
    let b = systems::van_der_pol(4);
    let cert = Certificate::from_parts(
        &b.system,
        &b.set,
        b.params.clone(),
        Polynomial::constant(2, 1.0),
        Polynomial::zero(2),
        Polynomial::zero(2),
        1.0,
    )
    .unwrap();
    let vol = estimate_volume(&cert, &b.set, 50_000, 3, None).unwrap();
    let exact = moments(&b.set, 0, None, None).unwrap().volume();
    assert!((vol.volume - exact).abs() <= 3.0 * vol.stderr + 1e-12 * exact, "{} vs {}", vol.volume, exact);
}
