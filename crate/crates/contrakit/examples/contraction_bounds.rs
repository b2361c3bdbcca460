//! The two closed-form upper bounds for the stochastic logarithmic
//! Lipschitz constant, and the audit that compares them with the sampled
//! estimate. The scalar linear SDE shows why the audit exists: its exact
//! constant 2a + sigma^2 sits strictly above both bounds, which carry
//! 2a - sigma^2 instead.

use contrakit::models::{builtin, BuiltinParams};
use contrakit::stochlip::{bound_audit, prop5_bound_llc, prop5_bound_measure, SllcConfig};

fn main() -> contrakit::Result<()> {
    // Van der Pol with multiplicative noise: both bounds agree and flip
    // sign as sigma grows, at sigma = sqrt(1/8) for the squared norm.
    println!("van der Pol multiplicative, l = 2:");
    println!("  sigma     bound (Lipschitz form)   bound (measure form)");
    for sigma in [0.1, 0.25, 0.3536, 0.5] {
        let model = builtin("vanderpol-multiplicative", &BuiltinParams::sigma(sigma))?;
        let domain = model.suggested_domain.clone().unwrap();
        let mut cfg = SllcConfig::new(2, domain, contrakit::norms::NormSpec::l2(), 3);
        cfg.pairs.num_pairs = 256;
        let b13 = prop5_bound_llc(&model, &cfg)?;
        let b14 = prop5_bound_measure(&model, &cfg, 41)?;
        println!("  {sigma:<7}   {b13:>20.6}   {b14:>19.6}");
    }

    let (a, sigma) = (-1.0, 0.5);
    let model = builtin("scalar-linear", &BuiltinParams::scalar_linear(a, sigma))?;
    let domain = model.suggested_domain.clone().unwrap();
    let mut cfg = SllcConfig::new(2, domain, contrakit::norms::NormSpec::l2(), 3);
    cfg.pairs.num_pairs = 32;
    cfg.mc_samples = 20_000;
    let audit = bound_audit(&model, &cfg, 41)?;
    println!("\nscalar linear, a = {a}, sigma = {sigma}, l = 2:");
    println!("  estimate   = {:.4}  ci95 [{:.4}, {:.4}]", audit.estimate.point_estimate, audit.estimate.ci95.0, audit.estimate.ci95.1);
    println!("  exact      = {:.4}  (2a + sigma^2)", 2.0 * a + sigma * sigma);
    println!("  bounds     = {:.4}, {:.4}  (both carry 2a - sigma^2)", audit.bound13, audit.bound14);
    println!("  relation   = {}", audit.relation);
    println!("  The noise enters the bounds only through the Lipschitz constants of");
    println!("  +/-G, which cancel for linear G; the second moment still feels the");
    println!("  +sigma^2 Ito term. The audit surfaces the gap instead of hiding it.");
    Ok(())
}
