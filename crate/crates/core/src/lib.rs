//! Certified outer approximations of global attractors of polynomial
//! dynamical systems.
//!
//! For a flow `ẋ = f(x)` or a map `x⁺ = f(x)` on a compact semialgebraic set
//! `X`, a sum-of-squares program of degree `k` yields polynomials `w, J, v`
//! and a level `ε` such that `K = {J ≤ ε} ∩ {v ≥ 0} ∩ X` contains the global
//! attractor and `{J ≤ ε}` is positively invariant.
//!
//! - [`poly`]: sparse polynomials, parsing, composition, Lie derivatives
//! - [`semialg`]: constraint sets, moments, uniform sampling
//! - [`sos`]: Putinar constraints compiled to conic form
//! - [`conic`]: the interior-point solver
//! - [`attractor`]: program assembly, solving, certificates
//! - [`verify`]: simulation and sampling checks of a certificate
//! - [`cli`]: JSON configs and the run / sweep / verify drivers
//! - [`systems`]: bundled benchmark systems
//!
//! ```no_run
//! use attractor_sos::{attractor::solve_attractor, conic::SolverSettings, systems};
//!
//! let b = systems::van_der_pol(8);
//! let cert = solve_attractor(&b.system, &b.set, &b.params, &SolverSettings::default()).unwrap();
//! println!("d_k = {}, origin in K: {}", cert.d_k, cert.member(&[0.0, 0.0], None).unwrap());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attractor;
pub mod cli;
pub mod conic;
pub mod poly;
pub mod semialg;
pub mod sos;
pub mod systems;
pub mod verify;
