//! Logarithmic Lipschitz constants of drift fields over a box, compared
//! with the supremum of the Jacobian measure, plus the ODE contraction
//! verdict that follows from its sign.

use contrakit::detlip::{
    lipschitz_estimate, ode_contraction_check, sup_jacobian_measure, LipschitzMode,
    PairSamplingConfig, DEFAULT_PAIR_LADDER,
};
use contrakit::models::{builtin, BuiltinParams, DomainBox};
use contrakit::norms::NormSpec;

fn main() -> contrakit::Result<()> {
    let norm = NormSpec::l2();

    // A linear field with spectrum {-1, -3}: the constant equals mu(A).
    let stable = builtin(
        "linear",
        &BuiltinParams {
            a_matrix: Some(vec![vec![-1.0, 0.0], vec![0.0, -3.0]]),
            ..Default::default()
        },
    )?;
    let domain = DomainBox::cube(2, -2.0, 2.0)?;
    let field = stable.drift_field();
    let pairs = PairSamplingConfig::default_for(&domain, 7);
    let est = lipschitz_estimate(
        &field,
        &domain,
        &norm,
        &pairs,
        &DEFAULT_PAIR_LADDER,
        LipschitzMode::SupThenLimit,
    )?;
    let sup = sup_jacobian_measure(&field, &domain, &norm, 21)?;
    println!("linear, spectrum {{-1, -3}}:");
    println!("  M+ estimate       = {:.6}  ({})", est.point_estimate, est.label);
    println!("  sup_x mu(J(x))    = {:.6}", sup.value);
    let verdict = ode_contraction_check(&field, &domain, &norm, 21, None)?;
    println!("  verdict           = {:?}, rate {:.3}", verdict.verdict, verdict.rate);

    // The Van der Pol field is expanding near the x-axis, so no norm of
    // this family certifies contraction on the box.
    let vdp = builtin("vanderpol-deterministic", &BuiltinParams::default())?;
    let domain = vdp.suggested_domain.clone().unwrap();
    let field = vdp.drift_field();
    let pairs = PairSamplingConfig::default_for(&domain, 7);
    let est = lipschitz_estimate(
        &field,
        &domain,
        &norm,
        &pairs,
        &DEFAULT_PAIR_LADDER,
        LipschitzMode::SupThenLimit,
    )?;
    let sup = sup_jacobian_measure(&field, &domain, &norm, 21)?;
    println!("\nvan der Pol on {:?} x {:?}:", (-2.0, 2.0), (-2.0, 2.0));
    println!("  M+ estimate       = {:.6}", est.point_estimate);
    println!("  sup_x mu(J(x))    = {:.6}", sup.value);
    let verdict = ode_contraction_check(&field, &domain, &norm, 21, None)?;
    println!("  verdict           = {:?}", verdict.verdict);
    Ok(())
}
