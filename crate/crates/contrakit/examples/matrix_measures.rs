//! Matrix measures of constant matrices under the three standard norms and
//! a weighted norm, checked against the limit quotient (||I + hA|| - 1)/h.

use contrakit::norms::{matrix_measure, matrix_measure_limit, NormKind, NormSpec};
use nalgebra::DMatrix;

fn main() -> contrakit::Result<()> {
    let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.5, -3.0]);
    println!("A =\n{a}");

    for spec in [NormSpec::l1(), NormSpec::l2(), NormSpec::linf()] {
        let mu = matrix_measure(&spec, &a)?;
        let limit = matrix_measure_limit(&spec, &a, &[1e-4, 5e-5, 2.5e-5])?;
        println!(
            "mu_{}(A) = {mu:.6}   limit quotient -> {:.6}",
            spec.kind, limit.value
        );
    }

    // A matrix whose L2 measure is positive even though both eigenvalues
    // are -1. A diagonal change of coordinates exposes the contraction.
    let b = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -1.0]);
    let plain = matrix_measure(&NormSpec::l2(), &b)?;
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
    let weighted = NormSpec::weighted(NormKind::Linf, p)?;
    let better = matrix_measure(&weighted, &b)?;
    println!("\nB =\n{b}");
    println!("mu_2(B)            = {plain:.6}  (not negative, misses the contraction)");
    println!("mu_inf,P(B), P=diag(1,4) = {better:.6}  (negative, certifies it)");
    Ok(())
}
