//! Ready-made benchmark systems with their constraint sets and default
//! parameters.

use crate::attractor::{DynamicalSystem, SolveParams, SystemKind, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_GAMMA};
use crate::semialg::SemialgebraicSet;

/// A system, the set `X` it is studied on, and default solve parameters.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub name: &'static str,
    pub system: DynamicalSystem,
    pub set: SemialgebraicSet,
    pub params: SolveParams,
}

pub const VAN_DER_POL: [&str; 2] = ["2*x2", "-0.8*x1 - 10*(x1^2 - 0.21)*x2"];

pub const HENON: [&str; 2] = ["0.6666666666666666*(1 + x2) - 2.1*x1^2", "0.45*x1"];

/// A planar flow with a globally attracting origin but no polynomial
/// Lyapunov function.
pub const NO_LYAPUNOV: [&str; 2] = [
    "-2*x2*(-x1^4 + 2*x1^2*x2^2 + x2^4) - 2*x1*(x1^2 + x2^2)*(x1^4 + 2*x1^2*x2^2 - x2^2)",
    "2*x1*(x1^4 + 2*x1^2*x2^2 - x2^4) - 2*x2*(x1^2 + x2^2)*(-x1^4 + 2*x1^2*x2^2 + x2^4)",
];

/// Van der Pol oscillator on the annulus `0.4 ≤ |x| ≤ 2`, `β = 0.2`.
pub fn van_der_pol(degree: u32) -> Benchmark {
    Benchmark {
        name: "van_der_pol",
        system: DynamicalSystem::parse(SystemKind::Continuous, &VAN_DER_POL).expect("valid dynamics"),
        set: SemialgebraicSet::annulus(2, 0.4, 2.0, 2.0).expect("valid set"),
        params: SolveParams::continuous(degree, DEFAULT_BETA),
    }
}

/// Hénon map on `[0, 1]²`, `α = 0.002`, `γ = 0.05`.
pub fn henon(degree: u32) -> Benchmark {
    Benchmark {
        name: "henon",
        system: DynamicalSystem::parse(SystemKind::Discrete, &HENON).expect("valid dynamics"),
        set: SemialgebraicSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0], 2f64.sqrt()).expect("valid set"),
        params: SolveParams::discrete(degree, DEFAULT_ALPHA, DEFAULT_GAMMA),
    }
}

/// The no-polynomial-Lyapunov flow on `[-1, 1]²`, `β = 0.2`.
pub fn no_lyapunov(degree: u32) -> Benchmark {
    Benchmark {
        name: "no_lyapunov",
        system: DynamicalSystem::parse(SystemKind::Continuous, &NO_LYAPUNOV).expect("valid dynamics"),
        set: SemialgebraicSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0], 2f64.sqrt()).expect("valid set"),
        params: SolveParams::continuous(degree, DEFAULT_BETA),
    }
}

/// `ẋ = -x` on the unit ball, whose attractor is the origin.
pub fn linear_decay(nvars: usize, degree: u32, beta: f64) -> Benchmark {
    let exprs: Vec<String> = (1..=nvars).map(|i| format!("-x{i}")).collect();
    Benchmark {
        name: "linear_decay",
        system: DynamicalSystem::parse(SystemKind::Continuous, &exprs).expect("valid dynamics"),
        set: SemialgebraicSet::ball(nvars, 1.0).expect("valid set"),
        params: SolveParams::continuous(degree, beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmarks_validate() {
        for b in [van_der_pol(8), henon(6), no_lyapunov(8), linear_decay(2, 4, 0.5)] {
            b.params.validate(b.system.kind()).unwrap();
            assert_eq!(b.system.nvars(), b.set.nvars(), "{}", b.name);
        }
        assert_eq!(henon(6).system.f().eval(&[0.0, 0.0]), vec![0.6666666666666666, 0.0]);
    }
}
