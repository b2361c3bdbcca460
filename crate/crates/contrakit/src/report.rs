//! Shared report type for the Lipschitz-constant estimators.

use serde::{Deserialize, Serialize};

/// One rung of an `h`-ladder: the quotient estimate at that `h` and its
/// Monte Carlo standard error (zero when the quotient is deterministic).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HTraceRow {
    pub h: f64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Point estimate of a logarithmic Lipschitz constant with its provenance.
///
/// Every estimate produced by sampling pairs is a lower estimate of a
/// supremum: more pairs can only push it up. `label` carries that caveat
/// into serialized reports so downstream consumers cannot mistake the
/// number for a certified bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub point_estimate: f64,
    /// 95% confidence interval from the extrapolation fit. Degenerates to
    /// the point itself for deterministic quotients.
    pub ci95: (f64, f64),
    /// Quotients at every ladder rung for the pair that attained the max.
    pub per_h: Vec<HTraceRow>,
    /// The pair `(u, v)` that attained the reported maximum.
    pub argmax_pair: Option<(Vec<f64>, Vec<f64>)>,
    /// Number of pairs inspected.
    pub pairs_used: usize,
    /// Monte Carlo samples per (pair, h) cell; 1 when deterministic.
    pub mc_samples: usize,
    /// Always "lower-estimate-of-sup" for sampled estimators.
    pub label: String,
}

impl EstimateReport {
    /// Half-width of the confidence interval.
    pub fn ci_halfwidth(&self) -> f64 {
        (self.ci95.1 - self.ci95.0) * 0.5
    }

    /// True when the interval is wider than the estimate's own magnitude,
    /// i.e. the number should not be trusted for sign decisions.
    pub fn is_inconclusive(&self) -> bool {
        self.ci_halfwidth() > self.point_estimate.abs()
    }
}

pub const LOWER_ESTIMATE_LABEL: &str = "lower-estimate-of-sup";
