//! End-to-end experiment drivers: moment-contraction runs on coupled pairs,
//! noise-amplitude scans, and common-noise synchronization of uncoupled
//! ensembles.
//!
//! All drivers share one engine: `N` realizations, each advancing every
//! initial condition through the same Wiener path, accumulated in
//! realization order in fixed-size batches. Parallelism happens inside a
//! batch and results are folded sequentially, so reports are bit-identical
//! regardless of thread count.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::models::SystemModel;
use crate::norms::{vector_norm, NormSpec};
use crate::sde::{simulate_shared, steps_for, DivergenceSeries, SimOptions, Trajectory};
use crate::stochlip::{prop5_bound_measure, sllc_estimate, SllcConfig};

/// Realizations per scheduling batch. Fixed (not thread-derived) so the
/// accumulation order never depends on the machine.
pub const ENSEMBLE_BATCH: usize = 256;

/// A pairwise separation counts as converged when it ends below this
/// fraction of its initial value; also the default synchronization
/// threshold on moment series.
pub const CONVERGENCE_RATIO: f64 = 1e-2;

/// Experiments are flagged invalid above this blow-up fraction.
pub const MAX_BLOWUP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Moment order for the divergence series.
    pub l: u32,
    pub norm: NormSpec,
    pub t_final: f64,
    pub h: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Recording stride in steps; 0 picks one that yields ~500 points.
    pub record_stride: usize,
    /// Window for rate fits, defaulting to `[0.1 T, 0.6 T]`: late enough to
    /// skip transients, early enough to stay above the Monte Carlo floor.
    pub rate_window: Option<(f64, f64)>,
    /// Grid resolution per axis for the measure bound.
    pub bound_grid: usize,
    /// Threshold fraction for the synchronization verdict.
    pub sync_threshold: f64,
    /// Also run the one-step moment estimator and check the divergence
    /// series against its exponential envelope.
    pub estimate_envelope: bool,
}

impl ExperimentConfig {
    pub fn new(l: u32, norm: NormSpec, t_final: f64, h: f64, realizations: usize, seed: u64) -> Self {
        ExperimentConfig {
            l,
            norm,
            t_final,
            h,
            realizations,
            seed,
            record_stride: 0,
            rate_window: None,
            bound_grid: 41,
            sync_threshold: CONVERGENCE_RATIO,
            estimate_envelope: true,
        }
    }

    fn window(&self) -> (f64, f64) {
        self.rate_window
            .unwrap_or((0.1 * self.t_final, 0.6 * self.t_final))
    }

    fn stride(&self, num_steps: usize) -> usize {
        if self.record_stride > 0 {
            self.record_stride
        } else {
            (num_steps / 500).max(1)
        }
    }

    fn validate(&self) -> Result<usize> {
        if self.l == 0 {
            return Err(Error::InvalidConfig("moment order l must be >= 1".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidConfig("need at least one realization".into()));
        }
        if self.sync_threshold <= 0.0 {
            return Err(Error::InvalidConfig("sync threshold must be positive".into()));
        }
        let steps = steps_for(self.t_final, self.h)?;
        let (lo, hi) = self.window();
        if !(0.0 <= lo && lo < hi && hi <= self.t_final) {
            return Err(Error::InvalidConfig(format!(
                "rate window [{lo}, {hi}] must sit inside [0, {}]",
                self.t_final
            )));
        }
        Ok(steps)
    }
}

/// Least-squares slope of `log(value)` against `t` on a window.
///
/// If the series touches zero inside the window, the window shrinks to the
/// positive prefix (the rest is noise floor); fewer than 10 surviving
/// points is an error rather than a garbage slope.
pub fn decay_rate_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if v <= 0.0 {
            break;
        }
        ts.push(t);
        logs.push(v.ln());
    }
    if ts.len() < 10 {
        return Err(Error::NonpositiveSeries(format!(
            "only {} positive points in the fit window [{}, {}]",
            ts.len(),
            window.0,
            window.1
        )));
    }
    Ok(linear_fit(&ts, &logs).1)
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = xs.len() / 2;
    Some(if xs.len() % 2 == 1 {
        xs[k]
    } else {
        0.5 * (xs[k - 1] + xs[k])
    })
}

/// One pairwise divergence record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSeries {
    pub i: usize,
    pub j: usize,
    pub series: DivergenceSeries,
    /// Log-moment slope on the fit window.
    pub fitted_rate: Option<f64>,
    /// Median over realizations of the per-path slope of `log ||delta||`.
    pub pathwise_rate: Option<f64>,
    /// Fraction of realizations whose terminal separation fell below
    /// [`CONVERGENCE_RATIO`] times the initial separation.
    pub fraction_converged: f64,
    /// Median terminal-to-initial separation ratio.
    pub median_terminal_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub pairs: Vec<PairSeries>,
    /// Rates of the first pair, the primary observable.
    pub fitted_rate: Option<f64>,
    pub pathwise_rate: Option<f64>,
    /// Measure-based upper-bound formula for the same `l`.
    pub bound_rate: f64,
    /// One-step moment estimate, when the envelope check ran.
    pub estimate_rate: Option<f64>,
    pub checks: Vec<CheckOutcome>,
    pub blowup_fraction: f64,
    /// False when the blow-up fraction exceeds [`MAX_BLOWUP_FRACTION`].
    pub valid: bool,
    pub realizations_used: usize,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct PairAccumulator {
    i: usize,
    j: usize,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    path_slopes: Vec<f64>,
    terminal_ratios: Vec<f64>,
}

struct EnsembleData {
    times: Vec<f64>,
    pairs: Vec<PairAccumulator>,
    used: usize,
    blowups: usize,
}

/// Runs the common-noise ensemble and accumulates every `i < j` pairwise
/// separation. Realizations with any blow-up are counted and excluded as a
/// whole.
fn run_ensemble(
    model: &SystemModel,
    initials: &[DVector<f64>],
    cfg: &ExperimentConfig,
) -> Result<EnsembleData> {
    let num_steps = cfg.validate()?;
    if initials.len() < 2 {
        return Err(Error::InvalidConfig(
            "ensembles compare at least two initial conditions".into(),
        ));
    }
    let opts = SimOptions {
        record_stride: cfg.stride(num_steps),
        ..Default::default()
    };
    let window = cfg.window();
    let mut pairs: Vec<PairAccumulator> = Vec::new();
    for i in 0..initials.len() {
        for j in (i + 1)..initials.len() {
            pairs.push(PairAccumulator {
                i,
                j,
                sum: Vec::new(),
                sumsq: Vec::new(),
                path_slopes: Vec::new(),
                terminal_ratios: Vec::new(),
            });
        }
    }
    let mut times: Vec<f64> = Vec::new();
    let mut used = 0usize;
    let mut blowups = 0usize;

    let mut start = 0usize;
    while start < cfg.realizations {
        let end = (start + ENSEMBLE_BATCH).min(cfg.realizations);
        let batch: Vec<Result<Vec<Trajectory>>> = (start..end)
            .into_par_iter()
            .map(|r| simulate_shared(model, initials, cfg.t_final, cfg.h, cfg.seed, r as u64, &opts))
            .collect();
        for res in batch {
            let trajs = res?;
            if trajs.iter().any(|t| t.blew_up()) {
                blowups += 1;
                continue;
            }
            if times.is_empty() {
                times = trajs[0].times.clone();
                for p in &mut pairs {
                    p.sum = vec![0.0; times.len()];
                    p.sumsq = vec![0.0; times.len()];
                }
            }
            for p in &mut pairs {
                let (ti, tj) = (&trajs[p.i], &trajs[p.j]);
                let mut seps = Vec::with_capacity(times.len());
                for (a, b) in ti.states.iter().zip(&tj.states) {
                    seps.push(vector_norm(&cfg.norm, &(a - b)));
                }
                for (k, &s) in seps.iter().enumerate() {
                    let v = s.powi(cfg.l as i32);
                    p.sum[k] += v;
                    p.sumsq[k] += v * v;
                }
                let init = seps[0];
                let term = *seps.last().unwrap();
                p.terminal_ratios.push(if init == 0.0 { 0.0 } else { term / init });
                if let Ok(slope) = decay_rate_fit(&times, &seps, window) {
                    p.path_slopes.push(slope);
                }
            }
            used += 1;
        }
        start = end;
    }
    if used == 0 {
        return Err(Error::InvalidConfig(
            "every realization blew up; nothing to report".into(),
        ));
    }
    Ok(EnsembleData {
        times,
        pairs,
        used,
        blowups,
    })
}

fn pair_series(acc: PairAccumulator, times: &[f64], used: usize, cfg: &ExperimentConfig) -> PairSeries {
    let nf = used as f64;
    let moment: Vec<f64> = acc.sum.iter().map(|s| s / nf).collect();
    let stderr: Vec<f64> = acc
        .sumsq
        .iter()
        .zip(&moment)
        .map(|(&sq, &m)| {
            if used < 2 {
                0.0
            } else {
                let var = (sq / nf - m * m).max(0.0) * nf / (nf - 1.0);
                (var / nf).sqrt()
            }
        })
        .collect();
    let fitted = decay_rate_fit(times, &moment, cfg.window()).ok();
    let converged = acc
        .terminal_ratios
        .iter()
        .filter(|&&r| r < CONVERGENCE_RATIO)
        .count();
    PairSeries {
        i: acc.i,
        j: acc.j,
        series: DivergenceSeries {
            times: times.to_vec(),
            moment,
            stderr,
            n_realizations: used,
        },
        fitted_rate: fitted,
        pathwise_rate: median(acc.path_slopes),
        fraction_converged: converged as f64 / used as f64,
        median_terminal_ratio: median(acc.terminal_ratios),
    }
}

/// Non-increasing trend of a moment series at evenly spaced checkpoints,
/// with a slack of `slack_se` standard errors per comparison.
pub fn decreasing_at_checkpoints(
    series: &DivergenceSeries,
    window: (f64, f64),
    checkpoints: usize,
    slack_se: f64,
) -> bool {
    let idx_at = |t: f64| -> usize {
        series
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).unwrap()
            })
            .map(|(k, _)| k)
            .unwrap()
    };
    let mut prev: Option<usize> = None;
    for c in 0..=checkpoints {
        let t = window.0 + (window.1 - window.0) * c as f64 / checkpoints as f64;
        let k = idx_at(t);
        if let Some(p) = prev {
            let slack = slack_se * (series.stderr[p] + series.stderr[k]);
            if series.moment[k] > series.moment[p] + slack {
                return false;
            }
        }
        prev = Some(k);
    }
    true
}

fn envelope_check(series: &DivergenceSeries, rate: f64) -> CheckOutcome {
    let m0 = series.moment[0];
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    let mut pass = true;
    for ((&t, &m), &se) in series
        .times
        .iter()
        .zip(&series.moment)
        .zip(&series.stderr)
    {
        let envelope = m0 * (rate * t).exp() + 2.0 * se;
        let excess = m - envelope;
        if excess > worst {
            worst = excess;
            worst_t = t;
        }
        if excess > 0.0 {
            pass = false;
        }
    }
    CheckOutcome {
        name: "below-estimate-envelope".into(),
        pass,
        detail: format!("worst excess {worst:.3e} at t = {worst_t}"),
    }
}

fn blowup_check(fraction: f64) -> CheckOutcome {
    CheckOutcome {
        name: "blowup-fraction".into(),
        pass: fraction <= MAX_BLOWUP_FRACTION,
        detail: format!("{:.4} of realizations blew up", fraction),
    }
}

fn sllc_config_for(model: &SystemModel, cfg: &ExperimentConfig) -> SllcConfig {
    let domain = model
        .suggested_domain
        .clone()
        .expect("builtin models carry a domain");
    SllcConfig::new(cfg.l, domain, cfg.norm.clone(), cfg.seed)
}

/// Two solutions under common noise: divergence series, fitted and
/// pathwise rates, the measure bound, and the Thm.-style checks.
///
/// Checks: the blow-up fraction stays under [`MAX_BLOWUP_FRACTION`]; the
/// log-moment trend is non-increasing whenever the bound predicts decay;
/// and, when enabled, the series stays below the exponential envelope of
/// the independently estimated one-step rate (within two standard errors).
pub fn contraction_experiment(
    model: &SystemModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let data = run_ensemble(model, &[x0.clone(), y0.clone()], cfg)?;
    let blowup_fraction = data.blowups as f64 / cfg.realizations as f64;
    let sllc_cfg = sllc_config_for(model, cfg);
    let bound_rate = prop5_bound_measure(model, &sllc_cfg, cfg.bound_grid)?;
    let times = data.times;
    let mut pairs: Vec<PairSeries> = data
        .pairs
        .into_iter()
        .map(|p| pair_series(p, &times, data.used, cfg))
        .collect();
    let main = &mut pairs[0];

    let mut checks = vec![blowup_check(blowup_fraction)];
    if bound_rate < 0.0 {
        let pass = decreasing_at_checkpoints(
            &main.series,
            (0.0, cfg.t_final),
            10,
            2.0,
        );
        checks.push(CheckOutcome {
            name: "monotone-decay-when-predicted".into(),
            pass,
            detail: format!("bound rate {bound_rate:.4} predicts decay"),
        });
    } else {
        checks.push(CheckOutcome {
            name: "monotone-decay-when-predicted".into(),
            pass: true,
            detail: format!("bound rate {bound_rate:.4} predicts no decay; nothing to check"),
        });
    }

    let mut estimate_rate = None;
    if cfg.estimate_envelope {
        let est = sllc_estimate(model, &sllc_cfg)?;
        estimate_rate = Some(est.point_estimate);
        checks.push(envelope_check(&pairs[0].series, est.point_estimate));
    }

    Ok(ExperimentReport {
        fitted_rate: pairs[0].fitted_rate,
        pathwise_rate: pairs[0].pathwise_rate,
        bound_rate,
        estimate_rate,
        checks,
        blowup_fraction,
        valid: blowup_fraction <= MAX_BLOWUP_FRACTION,
        realizations_used: data.used,
        seed: cfg.seed,
        pairs,
    })
}

/// `n >= 2` uncoupled copies of one system driven by a shared Wiener
/// stream per realization, with every pairwise divergence reported. The
/// synchronization verdict requires each pairwise moment series to end
/// below `sync_threshold` times its initial value.
pub fn sync_experiment(
    model: &SystemModel,
    initials: &[DVector<f64>],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let data = run_ensemble(model, initials, cfg)?;
    let blowup_fraction = data.blowups as f64 / cfg.realizations as f64;
    let sllc_cfg = sllc_config_for(model, cfg);
    let bound_rate = prop5_bound_measure(model, &sllc_cfg, cfg.bound_grid)?;
    let times = data.times;
    let pairs: Vec<PairSeries> = data
        .pairs
        .into_iter()
        .map(|p| pair_series(p, &times, data.used, cfg))
        .collect();

    let mut synced = true;
    let mut detail = String::new();
    for p in &pairs {
        let init = p.series.moment[0];
        let term = *p.series.moment.last().unwrap();
        if term > cfg.sync_threshold * init {
            synced = false;
            detail = format!(
                "pair ({}, {}) ended at {term:.3e} vs initial {init:.3e}",
                p.i, p.j
            );
            break;
        }
    }
    let checks = vec![
        blowup_check(blowup_fraction),
        CheckOutcome {
            name: "synchronization".into(),
            pass: synced,
            detail: if synced {
                format!(
                    "all {} pairwise series fell below {:.0e} of their initial value",
                    pairs.len(),
                    cfg.sync_threshold
                )
            } else {
                detail
            },
        },
    ];

    Ok(ExperimentReport {
        fitted_rate: pairs[0].fitted_rate,
        pathwise_rate: pairs[0].pathwise_rate,
        bound_rate,
        estimate_rate: None,
        checks,
        blowup_fraction,
        valid: blowup_fraction <= MAX_BLOWUP_FRACTION,
        realizations_used: data.used,
        seed: cfg.seed,
        pairs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub sigma: f64,
    pub bound14: f64,
    pub fitted_rate: Option<f64>,
    pub pathwise_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Adjacent amplitudes bracketing the bound's sign change, if the scan
    /// crossed one.
    pub bound_sign_change: Option<(f64, f64)>,
    pub seed: u64,
}

/// Sweeps the multiplicative-noise amplitude of a model family, reporting
/// the measure bound next to the empirically fitted and pathwise rates.
/// `family` maps an amplitude to a model.
pub fn sigma_threshold_scan(
    family: impl Fn(f64) -> Result<SystemModel>,
    sigmas: &[f64],
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    cfg: &ExperimentConfig,
) -> Result<ScanReport> {
    if sigmas.is_empty() {
        return Err(Error::InvalidConfig("empty amplitude list".into()));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidConfig(
            "noise amplitudes must be finite and nonnegative".into(),
        ));
    }
    let mut sorted = sigmas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rows = Vec::with_capacity(sorted.len());
    for &sigma in &sorted {
        let model = family(sigma)?;
        let mut run_cfg = cfg.clone();
        run_cfg.estimate_envelope = false;
        let report = contraction_experiment(&model, x0, y0, &run_cfg)?;
        rows.push(ScanRow {
            sigma,
            bound14: report.bound_rate,
            fitted_rate: report.fitted_rate,
            pathwise_rate: report.pathwise_rate,
        });
    }
    let bound_sign_change = rows
        .windows(2)
        .find(|w| w[0].bound14.signum() != w[1].bound14.signum())
        .map(|w| (w[0].sigma, w[1].sigma));
    Ok(ScanReport {
        rows,
        bound_sign_change,
        seed: cfg.seed,
    })
}
