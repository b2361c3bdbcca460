//! Stochastic logarithmic Lipschitz constants and their deterministic
//! upper bounds.
//!
//! The central quantity is the one-step moment growth of the separation of
//! two solutions driven by the same noise,
//!
//! ```text
//! q_l(u, v, h) = ( E ||u - v + M(u) - M(v)||^l / ||u - v||^l - 1 ) / h ,
//! ```
//!
//! with `M` the Milstein operator. Extrapolating `q_l` to `h = 0` per pair
//! and maximizing over sampled pairs gives the sup-then-limit constant; the
//! lub variant maximizes per rung first. Both are lower estimates of a sup,
//! like their deterministic counterparts.
//!
//! Two deterministic upper-bound formulas accompany the estimator, one
//! built from pair estimates of the drift and diffusion constants, one from
//! Jacobian measures on a grid, plus a sharper bound for diffusions of the
//! form `G_j(x) = sigma_j x`. [`bound_audit`] runs estimator and bounds side
//! by side and reports how they relate; it deliberately never asserts that
//! the bounds hold. For linear multiplicative noise with `l = 2` they do
//! not: the estimator converges to the Ito moment rate `2a + sigma^2` while
//! both formulas evaluate to `2a - sigma^2`, and the audit's job is to say
//! so rather than paper over it.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detlip::{self, mplus_estimate, sup_jacobian_measure, LipschitzMode, PairSamplingConfig};
use crate::error::{Error, Result};
use crate::fit::weighted_linear_fit;
use crate::models::{DomainBox, SystemModel};
use crate::norms::{vector_norm, NormSpec};
use crate::report::{EstimateReport, HTraceRow, LOWER_ESTIMATE_LABEL};
use crate::rng;
use crate::sde::{levy_mode_for, levy_terms, MilsteinOperator, MilsteinTerms};

/// Default step ladder for the `h -> 0` extrapolation. Consecutive rungs
/// halve, which keeps the three smallest well separated for the fit.
pub const DEFAULT_SLLC_LADDER: [f64; 5] = [1.6e-3, 8e-4, 4e-4, 2e-4, 1e-4];

/// Fewest Monte Carlo samples per (pair, h) cell for a reported estimate.
pub const MIN_MC_SAMPLES: usize = 1000;

/// Relative margin used when the audit compares estimate and bounds, wide
/// enough to absorb extrapolation curvature, narrow enough to flag a real
/// excess.
pub const AUDIT_MARGIN_FRAC: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SllcConfig {
    /// Moment order `l >= 1`.
    pub l: u32,
    pub pairs: PairSamplingConfig,
    /// Monte Carlo samples per (pair, h) cell; drawn as antithetic halves,
    /// so odd counts are rounded up.
    pub mc_samples: usize,
    pub h_ladder: Vec<f64>,
    pub domain: DomainBox,
    pub norm: NormSpec,
    pub mode: LipschitzMode,
}

impl SllcConfig {
    pub fn new(l: u32, domain: DomainBox, norm: NormSpec, seed: u64) -> Self {
        let mut pairs = PairSamplingConfig::default_for(&domain, seed);
        pairs.num_pairs = 512;
        SllcConfig {
            l,
            pairs,
            mc_samples: 2000,
            h_ladder: DEFAULT_SLLC_LADDER.to_vec(),
            domain,
            norm,
            mode: LipschitzMode::SupThenLimit,
        }
    }

    fn validate(&self) -> Result<Vec<f64>> {
        if self.l == 0 {
            return Err(Error::InvalidConfig("moment order l must be >= 1".into()));
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::InvalidConfig(format!(
                "mc_samples = {} is below the reporting floor {MIN_MC_SAMPLES}",
                self.mc_samples
            )));
        }
        let rungs = detlip::validate_ladder(&self.h_ladder)?;
        for w in rungs.windows(2) {
            if w[1] > 0.5 * w[0] * (1.0 + 1e-9) {
                return Err(Error::InvalidConfig(format!(
                    "ladder rungs must at least halve, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(rungs)
    }
}

/// Everything about one sampled pair that does not depend on the noise
/// draw: the separation and the differences of the frozen step operators.
struct PairCell {
    delta: DVector<f64>,
    d0: f64,
    diff_op: MilsteinOperator,
    /// True when the operator difference has no noise-dependent part, so
    /// one evaluation per rung is the whole expectation.
    deterministic: bool,
}

impl PairCell {
    fn build(
        model: &SystemModel,
        norm: &NormSpec,
        u: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<Self> {
        let op_u = MilsteinOperator::at(model, u)?;
        let op_v = MilsteinOperator::at(model, v)?;
        let delta = u - v;
        let d0 = vector_norm(norm, &delta);
        let g = &op_u.g - &op_v.g;
        let lk: Vec<_> = op_u
            .lk
            .iter()
            .zip(&op_v.lk)
            .map(|(a, b)| a - b)
            .collect();
        let deterministic =
            g.iter().all(|&x| x == 0.0) && lk.iter().all(|m| m.iter().all(|&x| x == 0.0));
        Ok(PairCell {
            delta,
            d0,
            diff_op: MilsteinOperator {
                f: &op_u.f - &op_v.f,
                g,
                lk,
            },
            deterministic,
        })
    }

    /// `||delta + M(u) - M(v)||^l / ||delta||^l` for one noise draw.
    fn ratio(&self, h: f64, terms: &MilsteinTerms, norm: &NormSpec, l: i32) -> f64 {
        let moved = &self.delta + self.diff_op.increment(h, terms);
        (vector_norm(norm, &moved) / self.d0).powi(l)
    }
}

struct PairTrace {
    /// `(quotient, stderr)` per rung, rung order matching the ladder.
    rows: Vec<(f64, f64)>,
}

/// Per-pair quotient trace across the ladder.
///
/// The same standard normal draws are reused for every rung (increments
/// scale as `sqrt(h) xi`), and each draw is paired with its negation.
/// Common draws make differences across the ladder smooth in `h`, which is
/// what the extrapolation needs; the antithetic halves cancel the odd term
/// of the ratio, which otherwise dominates the Monte Carlo error as
/// `h -> 0`.
fn pair_trace(
    model: &SystemModel,
    cfg: &SllcConfig,
    rungs: &[f64],
    pair_index: usize,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<PairTrace> {
    let cell = PairCell::build(model, &cfg.norm, u, v)?;
    let l = cfg.l as i32;
    let mode = levy_mode_for(model)?;
    let d = model.d.max(1);

    if cell.deterministic {
        let zero = MilsteinTerms {
            dw: DVector::zeros(d),
            dw2: nalgebra::DMatrix::zeros(d, d),
        };
        let rows = rungs
            .iter()
            .map(|&h| {
                let mut terms = zero.clone();
                // dW = 0 still leaves the -h/2 diagonal in dW2.
                terms.dw2 = levy_terms(&terms.dw, h, mode)?;
                Ok(((cell.ratio(h, &terms, &cfg.norm, l) - 1.0) / h, 0.0))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(PairTrace { rows });
    }

    let half = cfg.mc_samples.div_ceil(2);
    let mut xi = vec![0.0f64; d];
    let mut draws: Vec<DVector<f64>> = Vec::with_capacity(half);
    for s in 0..half {
        rng::standard_normals(
            cfg.pairs.rng_seed,
            rng::purpose::SLLC,
            pair_index as u64,
            s as u64,
            &mut xi,
        );
        draws.push(DVector::from_column_slice(&xi));
    }

    let mut rows = Vec::with_capacity(rungs.len());
    for &h in rungs {
        let sqrt_h = h.sqrt();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for xi in &draws {
            let mut item = 0.0;
            for sign in [1.0f64, -1.0] {
                let dw = xi * (sign * sqrt_h);
                let dw2 = levy_terms(&dw, h, mode)?;
                item += cell.ratio(h, &MilsteinTerms { dw, dw2 }, &cfg.norm, l);
            }
            item *= 0.5;
            sum += item;
            sumsq += item * item;
        }
        let nf = half as f64;
        let mean = sum / nf;
        let se = if half < 2 {
            0.0
        } else {
            let var = (sumsq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
            (var / nf).sqrt()
        };
        rows.push(((mean - 1.0) / h, se / h));
    }
    Ok(PairTrace { rows })
}

/// Weighted extrapolation to `h = 0` over the three smallest rungs.
/// `rungs` is sorted descending. Returns `(intercept, se)`.
fn extrapolate_weighted(rungs: &[f64], rows: &[(f64, f64)]) -> (f64, f64) {
    let k = rungs.len();
    let hs = &rungs[k - 3..];
    let qs: Vec<f64> = rows[k - 3..].iter().map(|r| r.0).collect();
    let ses: Vec<f64> = rows[k - 3..].iter().map(|r| r.1).collect();
    let (a, _, se_a) = weighted_linear_fit(hs, &qs, &ses);
    (a, se_a)
}

/// Monte Carlo estimate of the stochastic logarithmic Lipschitz constant.
///
/// Sup-then-limit mode extrapolates each pair's quotient trace to `h = 0`
/// and takes the maximum over pairs; limit-then-sup takes the per-rung
/// maximum first and extrapolates the envelope. The result is a lower
/// estimate of the underlying sup either way, so it carries the same label
/// as the deterministic estimators.
pub fn sllc_estimate(model: &SystemModel, cfg: &SllcConfig) -> Result<EstimateReport> {
    let rungs = cfg.validate()?;
    if model.n != cfg.domain.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model dimension {} vs domain dimension {}",
            model.n,
            cfg.domain.dim()
        )));
    }
    levy_mode_for(model)?;
    let pairs = detlip::sample_pairs(&cfg.pairs, &cfg.domain)?;
    let traces: Vec<PairTrace> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, (u, v))| pair_trace(model, cfg, &rungs, p, u, v))
        .collect::<Result<Vec<_>>>()?;

    let report = match cfg.mode {
        LipschitzMode::SupThenLimit => {
            let mut best: Option<(usize, f64, f64)> = None;
            for (p, t) in traces.iter().enumerate() {
                let (a, se) = extrapolate_weighted(&rungs, &t.rows);
                if best.map_or(true, |(_, v, _)| a > v) {
                    best = Some((p, a, se));
                }
            }
            let (p, value, se) = best.expect("sample_pairs yields at least one pair");
            let per_h = rungs
                .iter()
                .zip(&traces[p].rows)
                .map(|(&h, &(q, s))| HTraceRow {
                    h,
                    estimate: q,
                    stderr: s,
                })
                .collect();
            EstimateReport {
                point_estimate: value,
                ci95: (value - 1.96 * se, value + 1.96 * se),
                per_h,
                argmax_pair: Some((
                    pairs[p].0.as_slice().to_vec(),
                    pairs[p].1.as_slice().to_vec(),
                )),
                pairs_used: pairs.len(),
                mc_samples: cfg.mc_samples,
                label: LOWER_ESTIMATE_LABEL.into(),
            }
        }
        LipschitzMode::LimitThenSup => {
            let mut envelope = Vec::with_capacity(rungs.len());
            let mut argmax_smallest = 0usize;
            for (k, _) in rungs.iter().enumerate() {
                let (p, &(q, se)) = traces
                    .iter()
                    .enumerate()
                    .map(|(p, t)| (p, &t.rows[k]))
                    .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap())
                    .unwrap();
                if k + 1 == rungs.len() {
                    argmax_smallest = p;
                }
                envelope.push((q, se));
            }
            let (value, se) = extrapolate_weighted(&rungs, &envelope);
            let per_h = rungs
                .iter()
                .zip(&envelope)
                .map(|(&h, &(q, s))| HTraceRow {
                    h,
                    estimate: q,
                    stderr: s,
                })
                .collect();
            EstimateReport {
                point_estimate: value,
                ci95: (value - 1.96 * se, value + 1.96 * se),
                per_h,
                argmax_pair: Some((
                    pairs[argmax_smallest].0.as_slice().to_vec(),
                    pairs[argmax_smallest].1.as_slice().to_vec(),
                )),
                pairs_used: pairs.len(),
                mc_samples: cfg.mc_samples,
                label: LOWER_ESTIMATE_LABEL.into(),
            }
        }
    };
    Ok(report)
}

/// Noise-term coefficient `1 / sqrt(2 pi)`, i.e. `E|xi| / 2` for standard
/// normal `xi`.
fn half_mean_coeff() -> f64 {
    0.5 * (2.0 / std::f64::consts::PI).sqrt()
}

/// Upper-bound formula built from pair estimates:
/// `l M+[F - (1/2) sum_j J_{G_j} G_j] + (l / sqrt(2 pi)) sum_j (M+[G_j] + M+[-G_j])`.
pub fn prop5_bound_llc(model: &SystemModel, cfg: &SllcConfig) -> Result<f64> {
    cfg.validate()?;
    let l = cfg.l as f64;
    let corrected = model.corrected_drift_field();
    let drift = mplus_estimate(&corrected, &cfg.domain, &cfg.norm, &cfg.pairs, &cfg.h_ladder)?;
    let mut noise = 0.0;
    for j in 0..model.d {
        let g = model.diffusion_column_field(j)?;
        let plus = mplus_estimate(&g, &cfg.domain, &cfg.norm, &cfg.pairs, &cfg.h_ladder)?;
        let minus =
            mplus_estimate(&g.negated(), &cfg.domain, &cfg.norm, &cfg.pairs, &cfg.h_ladder)?;
        noise += plus.point_estimate + minus.point_estimate;
    }
    Ok(l * drift.point_estimate + l * half_mean_coeff() * noise)
}

/// Same formula with Jacobian measures on a grid in place of pair
/// estimates:
/// `l sup_x mu[J_{F_c}(x)] + (l / sqrt(2 pi)) sum_j (sup_x mu[J_{G_j}] + sup_x mu[-J_{G_j}])`.
pub fn prop5_bound_measure(model: &SystemModel, cfg: &SllcConfig, grid: usize) -> Result<f64> {
    cfg.validate()?;
    let l = cfg.l as f64;
    let corrected = model.corrected_drift_field();
    let drift = sup_jacobian_measure(&corrected, &cfg.domain, &cfg.norm, grid)?;
    let mut noise = 0.0;
    for j in 0..model.d {
        let g = model.diffusion_column_field(j)?;
        let plus = sup_jacobian_measure(&g, &cfg.domain, &cfg.norm, grid)?;
        let minus = sup_jacobian_measure(&g.negated(), &cfg.domain, &cfg.norm, grid)?;
        noise += plus.value + minus.value;
    }
    Ok(l * drift.value + l * half_mean_coeff() * noise)
}

/// Sharper bound for diffusions of the form `G_j(x) = sigma_j x`:
/// `sup_x mu[J_F(x)] - (1/2) sum_j sigma_j^2` (a rate per unit of `l`).
pub fn linear_diffusion_bound(
    drift: &crate::models::VectorField,
    sigmas: &[f64],
    norm: &NormSpec,
    domain: &DomainBox,
    grid: usize,
) -> Result<f64> {
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidConfig(
            "diffusion coefficients must be finite and nonnegative".into(),
        ));
    }
    let sup = sup_jacobian_measure(drift, domain, norm, grid)?;
    Ok(sup.value - 0.5 * sigmas.iter().map(|s| s * s).sum::<f64>())
}

/// [`linear_diffusion_bound`] for a model, refusing any diffusion that is
/// not `sigma_j x`.
pub fn linear_diffusion_bound_for(
    model: &SystemModel,
    norm: &NormSpec,
    domain: &DomainBox,
    grid: usize,
) -> Result<f64> {
    use crate::models::DiffusionKind::*;
    let sigmas: Vec<f64> = match model.diffusion_kind() {
        Zero => vec![],
        ScalarLinear { sigmas } => sigmas.clone(),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "model '{}' does not have diffusion of the form sigma_j * x",
                model.name
            )))
        }
    };
    linear_diffusion_bound(&model.drift_field(), &sigmas, norm, domain, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundRelation {
    /// Estimate CI upper edge sits below both bounds.
    Consistent,
    /// Estimate CI lower edge exceeds a bound by more than the CI width.
    EstimateExceedsBound,
    Inconclusive,
}

impl std::fmt::Display for BoundRelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundRelation::Consistent => "consistent",
            BoundRelation::EstimateExceedsBound => "estimate-exceeds-bound",
            BoundRelation::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundAudit {
    pub estimate: EstimateReport,
    pub bound13: f64,
    pub bound14: f64,
    pub relation: BoundRelation,
}

fn classify(estimate: &EstimateReport, bounds: &[f64]) -> BoundRelation {
    let (lo, hi) = estimate.ci95;
    let width = hi - lo;
    let scale = bounds
        .iter()
        .fold(estimate.point_estimate.abs(), |m, b| m.max(b.abs()))
        .max(1.0);
    let margin = AUDIT_MARGIN_FRAC * scale;
    if bounds.iter().any(|&b| lo - b > width.max(margin)) {
        BoundRelation::EstimateExceedsBound
    } else if bounds.iter().all(|&b| hi <= b + margin) {
        BoundRelation::Consistent
    } else {
        BoundRelation::Inconclusive
    }
}

/// Runs the estimator and both bound formulas, then reports how they
/// relate. The margin keeps extrapolation round-off from flipping the
/// verdict when estimate and bound coincide analytically; the relation is
/// an empirical description, not an assertion that the bounds are valid.
pub fn bound_audit(model: &SystemModel, cfg: &SllcConfig, grid: usize) -> Result<BoundAudit> {
    let estimate = sllc_estimate(model, cfg)?;
    let bound13 = prop5_bound_llc(model, cfg)?;
    let bound14 = prop5_bound_measure(model, cfg, grid)?;
    let relation = classify(&estimate, &[bound13, bound14]);
    Ok(BoundAudit {
        estimate,
        bound13,
        bound14,
        relation,
    })
}
