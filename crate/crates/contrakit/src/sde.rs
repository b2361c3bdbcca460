//! Milstein stepping and common-noise ensemble simulation.
//!
//! One step of the Milstein scheme applies the operator
//!
//! ```text
//! M(x) = h F(x) + G(x) dW + sum_{j,k} (L_k G)(x)_:j dW2_{jk} ,
//! dW2_{jk} approximates the iterated integral int int dW_j dW_k ,
//! ```
//!
//! to the current state. For `d = 1` the iterated integral is exact:
//! `dW2 = (dW^2 - h) / 2`. For `d > 1` it requires Levy areas, which are
//! not simulated here; models declaring commutative noise
//! (`L_k G_j = L_j G_k`) may use the symmetric approximation instead, and
//! everything else is rejected loudly.
//!
//! Increments are indexed `(master seed, realization, step, component)`
//! through the counter generator, so a realization's noise path is
//! independent of how many trajectories consume it. That is what makes
//! "two solutions under the same noise" meaningful: [`simulate_shared`]
//! advances any number of initial conditions through one shared increment
//! stream, and each trajectory hashes the terms it consumed so tests can
//! prove the coupling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{milstein_tensors, SystemModel};
use crate::norms::{vector_norm, NormSpec};
use crate::rng;

/// Default blow-up threshold on the Euclidean norm of the state.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Addressing for one realization's increment stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WienerPlan {
    pub master_seed: u64,
    pub realization_index: u64,
    /// Number of Wiener components per step.
    pub d: usize,
    /// Step size.
    pub h: f64,
    pub num_steps: usize,
}

impl WienerPlan {
    pub fn new(master_seed: u64, realization_index: u64, d: usize, h: f64, num_steps: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("WienerPlan needs d >= 1".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidConfig(format!("step size must be positive, got {h}")));
        }
        if num_steps == 0 {
            return Err(Error::InvalidConfig("num_steps must be positive".into()));
        }
        Ok(WienerPlan {
            master_seed,
            realization_index,
            d,
            h,
            num_steps,
        })
    }

    /// `dW` for one step: `sqrt(h) xi` with `xi` standard normal per
    /// component, a pure function of `(seed, realization, step, component)`.
    pub fn increment_at(&self, step: usize) -> DVector<f64> {
        let mut xi = DVector::<f64>::zeros(self.d);
        rng::standard_normals(
            self.master_seed,
            rng::purpose::WIENER,
            self.realization_index,
            step as u64,
            xi.as_mut_slice(),
        );
        xi * self.h.sqrt()
    }

    /// The full increment stream in step order.
    pub fn increments(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.num_steps).map(|s| self.increment_at(s))
    }
}

/// How the iterated-integral term is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevyMode {
    /// `d = 1`: exact, `dW2 = (dW^2 - h) / 2`.
    Exact1d,
    /// `d > 1` with commutative noise: `dW2_{jj} = (dW_j^2 - h) / 2`,
    /// `dW2_{jk} = dW_j dW_k / 2` off the diagonal. Only the symmetric sums
    /// `dW2_{jk} + dW2_{kj}` enter a commutative scheme, and those are exact.
    Commutative,
    /// Refuse anything that would need Levy areas.
    Reject,
}

/// Noise terms consumed by one Milstein step.
#[derive(Debug, Clone)]
pub struct MilsteinTerms {
    pub dw: DVector<f64>,
    pub dw2: DMatrix<f64>,
}

/// Picks the strictest usable mode for a model.
pub fn levy_mode_for(model: &SystemModel) -> Result<LevyMode> {
    if model.d <= 1 {
        Ok(LevyMode::Exact1d)
    } else if model.noise_commutes() {
        Ok(LevyMode::Commutative)
    } else {
        Err(Error::NonCommutativeNoise { d: model.d })
    }
}

/// Builds the `d x d` iterated-integral matrix from an increment.
pub fn levy_terms(dw: &DVector<f64>, h: f64, mode: LevyMode) -> Result<DMatrix<f64>> {
    let d = dw.len();
    match mode {
        LevyMode::Exact1d => {
            if d != 1 {
                return Err(Error::InvalidConfig(format!(
                    "exact-1d Levy terms require d = 1, got d = {d}"
                )));
            }
            Ok(DMatrix::from_element(1, 1, 0.5 * (dw[0] * dw[0] - h)))
        }
        LevyMode::Commutative => {
            let mut m = DMatrix::<f64>::zeros(d, d);
            for j in 0..d {
                for k in 0..d {
                    m[(j, k)] = if j == k {
                        0.5 * (dw[j] * dw[j] - h)
                    } else {
                        0.5 * dw[j] * dw[k]
                    };
                }
            }
            Ok(m)
        }
        LevyMode::Reject => {
            if d == 1 {
                Ok(DMatrix::from_element(1, 1, 0.5 * (dw[0] * dw[0] - h)))
            } else {
                Err(Error::NonCommutativeNoise { d })
            }
        }
    }
}

/// Full terms for one step of a plan.
pub fn terms_at(plan: &WienerPlan, step: usize, mode: LevyMode) -> Result<MilsteinTerms> {
    let dw = plan.increment_at(step);
    let dw2 = levy_terms(&dw, plan.h, mode)?;
    Ok(MilsteinTerms { dw, dw2 })
}

/// The one-step operator `M` frozen at a state: drift value, diffusion
/// value, and the `L_k G` tensors. Freezing it once per state is what the
/// stochastic Lipschitz estimator leans on, since only the noise terms vary
/// across its Monte Carlo samples.
#[derive(Debug, Clone)]
pub struct MilsteinOperator {
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
    pub lk: Vec<DMatrix<f64>>,
}

impl MilsteinOperator {
    pub fn at(model: &SystemModel, x: &DVector<f64>) -> Result<Self> {
        if x.len() != model.n {
            return Err(Error::DimensionMismatch(format!(
                "state has dimension {} but model expects {}",
                x.len(),
                model.n
            )));
        }
        let f = model.drift(x);
        let (g, lk) = milstein_tensors(model, x)?;
        Ok(MilsteinOperator { f, g, lk })
    }

    /// `h F + G dW + sum_{j,k} (L_k G)_:j dW2_{jk}`.
    pub fn increment(&self, h: f64, terms: &MilsteinTerms) -> DVector<f64> {
        let d = self.g.ncols();
        let mut inc = &self.f * h;
        inc += &self.g * &terms.dw;
        for k in 0..d {
            let lk = &self.lk[k];
            for j in 0..d {
                let w2 = terms.dw2[(j, k)];
                if w2 != 0.0 {
                    for i in 0..inc.len() {
                        inc[i] += lk[(i, j)] * w2;
                    }
                }
            }
        }
        inc
    }
}

/// One Milstein step.
pub fn milstein_step(
    model: &SystemModel,
    x: &DVector<f64>,
    h: f64,
    terms: &MilsteinTerms,
) -> Result<DVector<f64>> {
    if terms.dw.len() != model.d {
        return Err(Error::DimensionMismatch(format!(
            "terms carry d = {} but model has d = {}",
            terms.dw.len(),
            model.d
        )));
    }
    let op = MilsteinOperator::at(model, x)?;
    Ok(x + op.increment(h, terms))
}

/// A recorded path. With a record stride, `times` holds every stride-th
/// step plus the final one; states stop early if the path blew up.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Step index at which the blow-up guard tripped, if it did. The last
    /// recorded state is the last finite one.
    pub blowup_step: Option<usize>,
    /// FNV-1a hash over every `(step, dW, dW2)` this trajectory consumed,
    /// proving which noise it saw.
    pub increments_hash: u64,
}

impl Trajectory {
    pub fn blew_up(&self) -> bool {
        self.blowup_step.is_some()
    }

    pub fn terminal_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectories record at least t = 0")
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Record every `record_stride`-th step (the final step is always
    /// recorded). 1 records everything.
    pub record_stride: usize,
    pub blowup_threshold: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            record_stride: 1,
            blowup_threshold: BLOWUP_THRESHOLD,
        }
    }
}

/// Number of steps for an integer subdivision of `[0, t_final]`.
pub fn steps_for(t_final: f64, h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0) || !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need positive horizon and step, got T = {t_final}, h = {h}"
        )));
    }
    let steps = (t_final / h).round();
    if steps < 1.0 || ((steps * h - t_final).abs() > 1e-9 * t_final.max(1.0)) {
        return Err(Error::InvalidConfig(format!(
            "horizon T = {t_final} is not an integer multiple of h = {h}"
        )));
    }
    Ok(steps as usize)
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a_fold(hash: u64, bytes: &[u8]) -> u64 {
    let mut h = hash;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn hash_terms(hash: u64, step: usize, terms: &MilsteinTerms) -> u64 {
    let mut h = fnv1a_fold(hash, &(step as u64).to_le_bytes());
    for v in terms.dw.iter() {
        h = fnv1a_fold(h, &v.to_bits().to_le_bytes());
    }
    for v in terms.dw2.iter() {
        h = fnv1a_fold(h, &v.to_bits().to_le_bytes());
    }
    h
}

/// Advances every initial condition through the *same* increment stream.
///
/// All trajectories of one call see identical `(dW, dW2)` at every step;
/// this is the common-noise coupling the contraction experiments measure.
/// A trajectory that leaves `||x|| <= blowup_threshold` (or goes non-finite)
/// is frozen at its last finite state and flagged; the others continue.
pub fn simulate_shared(
    model: &SystemModel,
    initials: &[DVector<f64>],
    t_final: f64,
    h: f64,
    master_seed: u64,
    realization_index: u64,
    opts: &SimOptions,
) -> Result<Vec<Trajectory>> {
    if initials.is_empty() {
        return Err(Error::InvalidConfig("no initial conditions given".into()));
    }
    for x0 in initials {
        if x0.len() != model.n {
            return Err(Error::DimensionMismatch(format!(
                "initial condition has dimension {} but model expects {}",
                x0.len(),
                model.n
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial condition".into()));
        }
    }
    if opts.record_stride == 0 {
        return Err(Error::InvalidConfig("record_stride must be >= 1".into()));
    }
    let num_steps = steps_for(t_final, h)?;
    let mode = levy_mode_for(model)?;
    let plan = WienerPlan::new(master_seed, realization_index, model.d.max(1), h, num_steps)?;

    struct Lane {
        x: DVector<f64>,
        traj: Trajectory,
    }
    let mut lanes: Vec<Lane> = initials
        .iter()
        .map(|x0| Lane {
            x: x0.clone(),
            traj: Trajectory {
                times: vec![0.0],
                states: vec![x0.clone()],
                blowup_step: None,
                increments_hash: FNV_OFFSET,
            },
        })
        .collect();

    for step in 0..num_steps {
        let terms = terms_at(&plan, step, mode)?;
        let record = (step + 1) % opts.record_stride == 0 || step + 1 == num_steps;
        for lane in &mut lanes {
            if lane.traj.blew_up() {
                continue;
            }
            lane.traj.increments_hash = hash_terms(lane.traj.increments_hash, step, &terms);
            let op = MilsteinOperator::at(model, &lane.x)?;
            let next = &lane.x + op.increment(h, &terms);
            if next.iter().any(|v| !v.is_finite()) || next.norm() > opts.blowup_threshold {
                lane.traj.blowup_step = Some(step);
                continue;
            }
            lane.x = next;
            if record {
                lane.traj.times.push((step + 1) as f64 * h);
                lane.traj.states.push(lane.x.clone());
            }
        }
    }
    Ok(lanes.into_iter().map(|l| l.traj).collect())
}

/// `E ||X(t) - Y(t)||^l` over paired trajectories, with standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceSeries {
    pub times: Vec<f64>,
    pub moment: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_realizations: usize,
}

/// Pointwise `l`-th moment of the separation of paired ensembles.
///
/// `xs[r]` and `ys[r]` must come from the same realization (same noise) and
/// share the same recording grid; blown-up realizations do not, and are
/// rejected here rather than silently mixed in.
pub fn moment_divergence(
    xs: &[Trajectory],
    ys: &[Trajectory],
    l: u32,
    norm: &NormSpec,
) -> Result<DivergenceSeries> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired ensembles have sizes {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if l == 0 {
        return Err(Error::InvalidConfig("moment order l must be >= 1".into()));
    }
    let times = &xs[0].times;
    for t in xs.iter().chain(ys.iter()) {
        if t.blew_up() {
            return Err(Error::BlowUp {
                step: t.blowup_step.unwrap(),
                threshold: BLOWUP_THRESHOLD,
            });
        }
        if t.times != *times {
            return Err(Error::DimensionMismatch(
                "trajectories do not share a recording grid".into(),
            ));
        }
    }
    let n = xs.len();
    let mut sum = vec![0.0f64; times.len()];
    let mut sumsq = vec![0.0f64; times.len()];
    for (x, y) in xs.iter().zip(ys) {
        for (k, (xs_k, ys_k)) in x.states.iter().zip(&y.states).enumerate() {
            let v = vector_norm(norm, &(xs_k - ys_k)).powi(l as i32);
            sum[k] += v;
            sumsq[k] += v * v;
        }
    }
    let nf = n as f64;
    let moment: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let stderr: Vec<f64> = sumsq
        .iter()
        .zip(&moment)
        .map(|(&sq, &m)| {
            if n < 2 {
                0.0
            } else {
                let var = (sq / nf - m * m).max(0.0) * nf / (nf - 1.0);
                (var / nf).sqrt()
            }
        })
        .collect();
    Ok(DivergenceSeries {
        times: times.clone(),
        moment,
        stderr,
        n_realizations: n,
    })
}
