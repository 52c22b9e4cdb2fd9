//! Parsing, arithmetic, derivatives and composition of sparse polynomials.
//!
//! cargo run --example polynomials

use attractor_sos::poly::{basis, parse_polynomial, PolynomialMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = parse_polynomial("x1^2*x2 - 3*x2 + 0.5", 2)?;
    let q = parse_polynomial("x1 + x2", 2)?;
    println!("p      = {p}");
    println!("p + q  = {}", &p + &q);
    println!("p * q  = {}", &p * &q);
    println!("q^3    = {}", q.pow(3));
    println!("dp/dx1 = {}", p.differentiate(0)?);
    println!("p(1,2) = {}", p.eval(&[1.0, 2.0]));

    // Lie derivative along the Van der Pol field and composition with the Hénon map.
    let vdp = PolynomialMap::parse(&["2*x2", "-0.8*x1 - 10*(x1^2 - 0.21)*x2"], 2)?;
    let energy = parse_polynomial("x1^2 + x2^2", 2)?;
    println!("grad(|x|^2) . f_vdp = {}", energy.lie_derivative(&vdp)?);
    let henon = PolynomialMap::parse(&["0.6666666666666666*(1 + x2) - 2.1*x1^2", "0.45*x1"], 2)?;
    let x1 = parse_polynomial("x1", 2)?;
    println!("x1 o henon = {}", x1.compose(&henon)?);

    // Coefficients in the graded basis used by certificates.
    let z = basis(2, 2);
    let names: Vec<String> = z.iter().map(|m| m.to_string()).collect();
    println!("basis(2, 2) = [{}]", names.join(", "));
    println!("coefficients of q^2 = {:?}", q.pow(2).basis_coefficients(2)?);
    Ok(())
}
