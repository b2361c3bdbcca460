//! System models `dX = F(X) dt + G(X) dW` and their derivatives.
//!
//! A [`SystemModel`] bundles the drift `F: R^n -> R^n`, the diffusion
//! `G: R^n -> R^(n x d)`, optional analytic Jacobians, and declared
//! structure (zero, additive, scalar-linear, or general diffusion;
//! commutativity of multi-dimensional noise). Everything downstream, from
//! the Milstein stepper to the closed-form bounds, works through this type.
//!
//! Two derived quantities recur throughout the crate:
//!
//! ```text
//! corrected drift   F(x) - 1/2 sum_j J_{G_j}(x) G_j(x)
//! (L_k G)(x)_ij   = sum_l G_lk(x) dG_ij/dx_l (x) = ( J_{G_j}(x) G_k(x) )_i
//! ```
//!
//! The corrected drift is the Ito-to-Stratonovich style shift that appears
//! in the contraction bounds; `L_k G` supplies the second-order Milstein
//! term. Jacobians fall back to central finite differences with step
//! `eps^(1/3) * max(1, |x_i|)` per coordinate when no analytic form is
//! attached.
//!
//! Evaluators are expected to be pure; the builtins are smooth on all of
//! `R^n` and no attempt is made to verify smoothness of user-supplied
//! fields beyond the diagnostics in [`jacobian_consistency`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

type EvalFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ColJacFn = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;

/// Central finite-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, n_out: usize) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let eps = f64::EPSILON.powf(1.0 / 3.0);
    let n = x.len();
    let mut jac = DMatrix::<f64>::zeros(n_out, n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..n {
        let dx = eps * x[j].abs().max(1.0);
        xp[j] = x[j] + dx;
        xm[j] = x[j] - dx;
        let fp = f(&xp);
        let fm = f(&xm);
        for i in 0..n_out {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * dx);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    jac
}

/// How to obtain a Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianScheme {
    /// Use the attached analytic form when present, else central FD.
    AnalyticIfAvailable,
    /// Force central finite differences (used to cross-check analytic forms).
    FdCentral,
}

/// Which Jacobian of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianTarget {
    Drift,
    DiffusionColumn(usize),
}

/// A map `R^n -> R^n` with an optional analytic Jacobian. The deterministic
/// Lipschitz estimators operate on these, so drifts, diffusion columns, and
/// corrected drifts all funnel into this one shape.
#[derive(Clone)]
pub struct VectorField {
    pub n: usize,
    pub name: String,
    eval: EvalFn,
    jac: Option<MatFn>,
}

impl VectorField {
    pub fn new<F>(n: usize, name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        VectorField {
            n,
            name: name.into(),
            eval: Arc::new(eval),
            jac: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(x)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn jacobian_at(&self, x: &DVector<f64>, scheme: JacobianScheme) -> DMatrix<f64> {
        match (&self.jac, scheme) {
            (Some(j), JacobianScheme::AnalyticIfAvailable) => j(x),
            _ => {
                let f = self.eval.clone();
                fd_jacobian(move |y| f(y), x, self.n)
            }
        }
    }

    /// The field `x -> -f(x)`, with the Jacobian negated alongside.
    pub fn negated(&self) -> VectorField {
        let f = self.eval.clone();
        let mut out = VectorField {
            n: self.n,
            name: format!("-({})", self.name),
            eval: Arc::new(move |x| -f(x)),
            jac: None,
        };
        if let Some(j) = &self.jac {
            let j = j.clone();
            out.jac = Some(Arc::new(move |x| -j(x)));
        }
        out
    }
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorField")
            .field("n", &self.n)
            .field("name", &self.name)
            .field("analytic_jacobian", &self.jac.is_some())
            .finish()
    }
}

/// Declared diffusion structure, used to pick fast paths and to gate the
/// linear-diffusion bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DiffusionKind {
    /// `G == 0`: the model is an ODE.
    Zero,
    /// `G` constant in `x`.
    Additive,
    /// `G_j(x) = sigma_j * x` (diagonal linear noise).
    ScalarLinear { sigmas: Vec<f64> },
    /// Anything else.
    General,
}

/// Axis-aligned box, the domain for sampling, grids, and suprema.
#[derive(Debug, Clone)]
pub struct DomainBox {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l >= h {
                return Err(Error::InvalidConfig(format!(
                    "box axis {i} needs finite lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(DomainBox {
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        })
    }

    /// The cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        (&self.hi - &self.lo).norm()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    /// Uniform sample from the box.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            self.lo[i] + (self.hi[i] - self.lo[i]) * rng::uniform_unit(rng)
        })
    }

    /// Largest `t >= 0` such that `x + t * dir` stays inside the box.
    pub fn exit_time(&self, x: &DVector<f64>, dir: &DVector<f64>) -> f64 {
        let mut t = f64::INFINITY;
        for i in 0..self.dim() {
            let d = dir[i];
            if d > 0.0 {
                t = t.min((self.hi[i] - x[i]) / d);
            } else if d < 0.0 {
                t = t.min((self.lo[i] - x[i]) / d);
            }
        }
        t.max(0.0)
    }

    /// Row-major lattice with `resolution` points per axis (endpoints
    /// included). `resolution >= 2`.
    pub fn grid(&self, resolution: usize) -> GridIter {
        GridIter {
            domain: self.clone(),
            resolution: resolution.max(2),
            idx: 0,
            total: (resolution.max(2)).pow(self.dim() as u32),
        }
    }
}

pub struct GridIter {
    domain: DomainBox,
    resolution: usize,
    idx: usize,
    total: usize,
}

impl Iterator for GridIter {
    type Item = DVector<f64>;

    fn next(&mut self) -> Option<DVector<f64>> {
        if self.idx >= self.total {
            return None;
        }
        let n = self.domain.dim();
        let m = self.resolution;
        let mut rem = self.idx;
        let mut x = DVector::zeros(n);
        for axis in (0..n).rev() {
            let k = rem % m;
            rem /= m;
            let t = k as f64 / (m - 1) as f64;
            x[axis] = self.domain.lo[axis] + (self.domain.hi[axis] - self.domain.lo[axis]) * t;
        }
        self.idx += 1;
        Some(x)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.idx;
        (left, Some(left))
    }
}

/// The system `dX = F(X) dt + G(X) dW`.
#[derive(Clone)]
pub struct SystemModel {
    pub name: String,
    /// State dimension.
    pub n: usize,
    /// Number of Wiener components (columns of `G`).
    pub d: usize,
    drift: EvalFn,
    diffusion: MatFn,
    drift_jac: Option<MatFn>,
    diffusion_col_jac: Option<ColJacFn>,
    diffusion_kind: DiffusionKind,
    commutative: bool,
    /// Domain the model is normally studied on, if it has a natural one.
    pub suggested_domain: Option<DomainBox>,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("d", &self.d)
            .field("diffusion_kind", &self.diffusion_kind)
            .field("commutative", &self.commutative)
            .finish()
    }
}

impl SystemModel {
    pub fn new<F, G>(name: impl Into<String>, n: usize, d: usize, drift: F, diffusion: G) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        SystemModel {
            name: name.into(),
            n,
            d,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            drift_jac: None,
            diffusion_col_jac: None,
            diffusion_kind: DiffusionKind::General,
            commutative: d <= 1,
            suggested_domain: None,
        }
    }

    pub fn with_drift_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.drift_jac = Some(Arc::new(jac));
        self
    }

    /// Analytic Jacobian of diffusion column `j`.
    pub fn with_diffusion_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.diffusion_col_jac = Some(Arc::new(jac));
        self
    }

    pub fn with_diffusion_kind(mut self, kind: DiffusionKind) -> Self {
        self.diffusion_kind = kind;
        self
    }

    /// Declares `L_k G_j = L_j G_k` for all pairs. Only meaningful for
    /// `d > 1`; the simulator trusts this declaration.
    pub fn with_commutative_noise(mut self, commutative: bool) -> Self {
        self.commutative = commutative || self.d <= 1;
        self
    }

    pub fn with_suggested_domain(mut self, domain: DomainBox) -> Self {
        self.suggested_domain = Some(domain);
        self
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    /// `G(x)`, an `n x d` matrix.
    pub fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.diffusion)(x)
    }

    pub fn diffusion_kind(&self) -> &DiffusionKind {
        &self.diffusion_kind
    }

    pub fn noise_commutes(&self) -> bool {
        self.commutative
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.drift_jac.is_some() && (self.diffusion_col_jac.is_some() || self.d == 0)
    }

    /// Jacobian of the drift or of one diffusion column.
    pub fn jacobian(
        &self,
        target: JacobianTarget,
        x: &DVector<f64>,
        scheme: JacobianScheme,
    ) -> Result<DMatrix<f64>> {
        match target {
            JacobianTarget::Drift => match (&self.drift_jac, scheme) {
                (Some(j), JacobianScheme::AnalyticIfAvailable) => Ok(j(x)),
                _ => {
                    let f = self.drift.clone();
                    Ok(fd_jacobian(move |y| f(y), x, self.n))
                }
            },
            JacobianTarget::DiffusionColumn(j) => {
                if j >= self.d {
                    return Err(Error::DimensionMismatch(format!(
                        "diffusion column {j} out of range (d = {})",
                        self.d
                    )));
                }
                match (&self.diffusion_col_jac, scheme) {
                    (Some(jac), JacobianScheme::AnalyticIfAvailable) => Ok(jac(x, j)),
                    _ => {
                        let g = self.diffusion.clone();
                        Ok(fd_jacobian(
                            move |y| DVector::from(g(y).column(j).clone_owned()),
                            x,
                            self.n,
                        ))
                    }
                }
            }
        }
    }

    /// The drift as a standalone field.
    pub fn drift_field(&self) -> VectorField {
        let f = self.drift.clone();
        let mut field = VectorField {
            n: self.n,
            name: format!("{}/drift", self.name),
            eval: Arc::new(move |x| f(x)),
            jac: None,
        };
        if let Some(j) = &self.drift_jac {
            let j = j.clone();
            field.jac = Some(Arc::new(move |x| j(x)));
        }
        field
    }

    /// Diffusion column `j` as a standalone field.
    pub fn diffusion_column_field(&self, j: usize) -> Result<VectorField> {
        if j >= self.d {
            return Err(Error::DimensionMismatch(format!(
                "diffusion column {j} out of range (d = {})",
                self.d
            )));
        }
        let g = self.diffusion.clone();
        let mut field = VectorField {
            n: self.n,
            name: format!("{}/g{}", self.name, j),
            eval: Arc::new(move |x| DVector::from(g(x).column(j).clone_owned())),
            jac: None,
        };
        if let Some(jac) = &self.diffusion_col_jac {
            let jac = jac.clone();
            field.jac = Some(Arc::new(move |x| jac(x, j)));
        }
        Ok(field)
    }

    /// The Milstein-corrected drift as a standalone field. When the
    /// correction vanishes (no noise, or additive noise) this is the drift
    /// itself, analytic Jacobian included; otherwise the Jacobian falls
    /// back to FD, since the correction involves second derivatives of `G`
    /// that models do not carry analytically.
    pub fn corrected_drift_field(&self) -> VectorField {
        if matches!(self.diffusion_kind, DiffusionKind::Zero | DiffusionKind::Additive) {
            return self.drift_field();
        }
        let m = self.clone();
        VectorField {
            n: self.n,
            name: format!("{}/corrected-drift", self.name),
            eval: Arc::new(move |x| corrected_drift(&m, x)),
            jac: None,
        }
    }

    /// The same system with drift scaled by `alpha` and diffusion by
    /// `sqrt(alpha)`, the scaling under which stochastic logarithmic
    /// Lipschitz constants are exactly homogeneous.
    pub fn scaled(&self, alpha: f64) -> SystemModel {
        assert!(alpha > 0.0, "scaling must be positive");
        let sa = alpha.sqrt();
        let f = self.drift.clone();
        let g = self.diffusion.clone();
        let mut out = SystemModel {
            name: format!("{}-scaled-{alpha}", self.name),
            n: self.n,
            d: self.d,
            drift: Arc::new(move |x| f(x) * alpha),
            diffusion: Arc::new(move |x| g(x) * sa),
            drift_jac: None,
            diffusion_col_jac: None,
            diffusion_kind: match &self.diffusion_kind {
                DiffusionKind::ScalarLinear { sigmas } => DiffusionKind::ScalarLinear {
                    sigmas: sigmas.iter().map(|s| s * sa).collect(),
                },
                other => other.clone(),
            },
            commutative: self.commutative,
            suggested_domain: self.suggested_domain.clone(),
        };
        if let Some(j) = &self.drift_jac {
            let j = j.clone();
            out.drift_jac = Some(Arc::new(move |x| j(x) * alpha));
        }
        if let Some(j) = &self.diffusion_col_jac {
            let j = j.clone();
            out.diffusion_col_jac = Some(Arc::new(move |x, k| j(x, k) * sa));
        }
        out
    }
}

/// `F(x) - 1/2 sum_j J_{G_j}(x) G_j(x)`.
///
/// For zero or additive noise the correction vanishes and the drift is
/// returned as-is.
pub fn corrected_drift(model: &SystemModel, x: &DVector<f64>) -> DVector<f64> {
    let mut f = model.drift(x);
    match model.diffusion_kind() {
        DiffusionKind::Zero | DiffusionKind::Additive => f,
        _ => {
            let g = model.diffusion(x);
            for j in 0..model.d {
                let jac = model
                    .jacobian(
                        JacobianTarget::DiffusionColumn(j),
                        x,
                        JacobianScheme::AnalyticIfAvailable,
                    )
                    .expect("column index in range");
                let gj = DVector::from(g.column(j).clone_owned());
                f -= jac * gj * 0.5;
            }
            f
        }
    }
}

/// `(L_k G)(x)`: the `n x d` matrix with entry `(i, j)` equal to
/// `sum_l G_lk dG_ij/dx_l`, i.e. column `j` is `J_{G_j}(x) G_k(x)`.
pub fn lk_apply(model: &SystemModel, x: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
    if k >= model.d {
        return Err(Error::DimensionMismatch(format!(
            "noise index {k} out of range (d = {})",
            model.d
        )));
    }
    let g = model.diffusion(x);
    let gk = DVector::from(g.column(k).clone_owned());
    let mut out = DMatrix::<f64>::zeros(model.n, model.d);
    for j in 0..model.d {
        let jac = model.jacobian(
            JacobianTarget::DiffusionColumn(j),
            x,
            JacobianScheme::AnalyticIfAvailable,
        )?;
        out.set_column(j, &(jac * &gk));
    }
    Ok(out)
}

/// All `L_k G` tensors at `x` with each `J_{G_j}` evaluated once, plus
/// `G(x)` itself. This is the per-state work of one Milstein step.
pub fn milstein_tensors(model: &SystemModel, x: &DVector<f64>) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let g = model.diffusion(x);
    if matches!(
        model.diffusion_kind(),
        DiffusionKind::Zero | DiffusionKind::Additive
    ) {
        let zeros = vec![DMatrix::<f64>::zeros(model.n, model.d); model.d];
        return Ok((g, zeros));
    }
    let jacs: Vec<DMatrix<f64>> = (0..model.d)
        .map(|j| {
            model.jacobian(
                JacobianTarget::DiffusionColumn(j),
                x,
                JacobianScheme::AnalyticIfAvailable,
            )
        })
        .collect::<Result<_>>()?;
    let mut lk = Vec::with_capacity(model.d);
    for k in 0..model.d {
        let gk = DVector::from(g.column(k).clone_owned());
        let mut m = DMatrix::<f64>::zeros(model.n, model.d);
        for j in 0..model.d {
            m.set_column(j, &(&jacs[j] * &gk));
        }
        lk.push(m);
    }
    Ok((g, lk))
}

/// Parameters accepted by [`builtin`]. Which fields are required depends on
/// the model; unknown JSON keys are rejected by the CLI layer.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    /// Noise amplitude (Van der Pol variants, scalar-linear).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Drift coefficient for scalar-linear.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Drift matrix for the linear model, row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_matrix: Option<Vec<Vec<f64>>>,
    /// Diffusion matrices `B_j` for the linear model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_matrices: Option<Vec<Vec<Vec<f64>>>>,
}

impl BuiltinParams {
    pub fn sigma(sigma: f64) -> Self {
        BuiltinParams {
            sigma: Some(sigma),
            ..Default::default()
        }
    }

    pub fn scalar_linear(a: f64, sigma: f64) -> Self {
        BuiltinParams {
            a: Some(a),
            sigma: Some(sigma),
            ..Default::default()
        }
    }
}

pub const BUILTIN_NAMES: [&str; 5] = [
    "vanderpol-multiplicative",
    "vanderpol-additive",
    "vanderpol-deterministic",
    "linear",
    "scalar-linear",
];

fn require(model: &str, param: &str, value: Option<f64>) -> Result<f64> {
    value.ok_or_else(|| Error::MissingParam {
        model: model.into(),
        param: param.into(),
    })
}

fn finite(model: &str, param: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidConfig(format!(
            "{model}: parameter '{param}' must be finite"
        )))
    }
}

fn vdp_drift(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![x[0] - x[0] * x[0] * x[0] / 3.0 - x[1], x[0]])
}

fn vdp_drift_jac(x: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0 - x[0] * x[0], -1.0, 1.0, 0.0])
}

fn matrix_from_rows(model: &str, param: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidConfig(format!(
            "{model}: parameter '{param}' must be a nonempty square matrix"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "{model}: parameter '{param}' has non-finite entries"
        )));
    }
    Ok(DMatrix::from_row_slice(n, n, &flat))
}

fn matrices_commute(mats: &[DMatrix<f64>]) -> bool {
    let scale = mats
        .iter()
        .flat_map(|m| m.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-12 * (1.0 + scale * scale);
    for i in 0..mats.len() {
        for j in (i + 1)..mats.len() {
            let diff = &mats[i] * &mats[j] - &mats[j] * &mats[i];
            if diff.iter().any(|v| v.abs() > tol) {
                return false;
            }
        }
    }
    true
}

fn is_scalar_multiple_of_identity(m: &DMatrix<f64>) -> Option<f64> {
    let n = m.nrows();
    let s = m[(0, 0)];
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { s } else { 0.0 };
            if m[(i, j)] != expect {
                return None;
            }
        }
    }
    Some(s)
}

/// Constructs a builtin model by name.
///
/// | name                        | system                                              | params              |
/// |-----------------------------|-----------------------------------------------------|---------------------|
/// | `vanderpol-multiplicative`  | Van der Pol drift, `G = sigma (1+4x, 1+4y)^T`       | `sigma`             |
/// | `vanderpol-additive`        | Van der Pol drift, `G = sigma (1, 1)^T`             | `sigma`             |
/// | `vanderpol-deterministic`   | Van der Pol drift, `G = 0`                          | none                |
/// | `linear`                    | `F = A x`, `G_j = B_j x`                            | `a_matrix`, `b_matrices` (optional) |
/// | `scalar-linear`             | `dx = a x dt + sigma x dW` on `R`                   | `a`, `sigma`        |
///
/// The Van der Pol drift is `F(x, y) = (x - x^3/3 - y, x)`.
pub fn builtin(name: &str, params: &BuiltinParams) -> Result<SystemModel> {
    match name {
        "vanderpol-multiplicative" => {
            let sigma = finite(name, "sigma", require(name, "sigma", params.sigma)?)?;
            Ok(SystemModel::new(
                name,
                2,
                1,
                vdp_drift,
                move |x: &DVector<f64>| {
                    DMatrix::from_column_slice(
                        2,
                        1,
                        &[sigma * (1.0 + 4.0 * x[0]), sigma * (1.0 + 4.0 * x[1])],
                    )
                },
            )
            .with_drift_jacobian(vdp_drift_jac)
            .with_diffusion_jacobian(move |_x, _j| DMatrix::identity(2, 2) * (4.0 * sigma))
            .with_suggested_domain(DomainBox::cube(2, -2.0, 2.0).expect("valid box")))
        }
        "vanderpol-additive" => {
            let sigma = finite(name, "sigma", require(name, "sigma", params.sigma)?)?;
            Ok(SystemModel::new(
                name,
                2,
                1,
                vdp_drift,
                move |_x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[sigma, sigma]),
            )
            .with_drift_jacobian(vdp_drift_jac)
            .with_diffusion_jacobian(|_x, _j| DMatrix::zeros(2, 2))
            .with_diffusion_kind(DiffusionKind::Additive)
            .with_suggested_domain(DomainBox::cube(2, -2.0, 2.0).expect("valid box")))
        }
        "vanderpol-deterministic" => Ok(SystemModel::new(
            name,
            2,
            1,
            vdp_drift,
            |_x: &DVector<f64>| DMatrix::zeros(2, 1),
        )
        .with_drift_jacobian(vdp_drift_jac)
        .with_diffusion_jacobian(|_x, _j| DMatrix::zeros(2, 2))
        .with_diffusion_kind(DiffusionKind::Zero)
        .with_suggested_domain(DomainBox::cube(2, -2.0, 2.0).expect("valid box"))),
        "linear" => {
            let rows = params.a_matrix.as_ref().ok_or_else(|| Error::MissingParam {
                model: name.into(),
                param: "a_matrix".into(),
            })?;
            let a = matrix_from_rows(name, "a_matrix", rows)?;
            let n = a.nrows();
            let bs: Vec<DMatrix<f64>> = match &params.b_matrices {
                Some(list) => list
                    .iter()
                    .map(|rows| {
                        let b = matrix_from_rows(name, "b_matrices", rows)?;
                        if b.nrows() != n {
                            return Err(Error::DimensionMismatch(format!(
                                "linear: B is {}x{} but A is {n}x{n}",
                                b.nrows(),
                                b.ncols()
                            )));
                        }
                        Ok(b)
                    })
                    .collect::<Result<_>>()?,
                None => Vec::new(),
            };
            let kind = if bs.is_empty() {
                DiffusionKind::Zero
            } else {
                match bs.iter().map(is_scalar_multiple_of_identity).collect::<Option<Vec<f64>>>() {
                    Some(sigmas) => DiffusionKind::ScalarLinear { sigmas },
                    None => DiffusionKind::General,
                }
            };
            let commutative = bs.len() <= 1 || matrices_commute(&bs);
            let d = bs.len().max(1);
            let has_noise = !bs.is_empty();
            let a_drift = a.clone();
            let a_jac = a.clone();
            let bs_g = bs.clone();
            let bs_jac = bs;
            Ok(SystemModel::new(
                name,
                n,
                d,
                move |x: &DVector<f64>| &a_drift * x,
                move |x: &DVector<f64>| {
                    let mut g = DMatrix::<f64>::zeros(x.len(), bs_g.len().max(1));
                    for (j, b) in bs_g.iter().enumerate() {
                        g.set_column(j, &(b * x));
                    }
                    g
                },
            )
            .with_drift_jacobian(move |_x| a_jac.clone())
            .with_diffusion_jacobian(move |x: &DVector<f64>, j| match bs_jac.get(j) {
                Some(b) => b.clone(),
                None => DMatrix::zeros(x.len(), x.len()),
            })
            .with_diffusion_kind(if has_noise { kind } else { DiffusionKind::Zero })
            .with_commutative_noise(commutative)
            .with_suggested_domain(DomainBox::cube(n, -2.0, 2.0).expect("valid box")))
        }
        "scalar-linear" => {
            let a = finite(name, "a", require(name, "a", params.a)?)?;
            let sigma = finite(name, "sigma", require(name, "sigma", params.sigma)?)?;
            Ok(SystemModel::new(
                name,
                1,
                1,
                move |x: &DVector<f64>| DVector::from_vec(vec![a * x[0]]),
                move |x: &DVector<f64>| DMatrix::from_column_slice(1, 1, &[sigma * x[0]]),
            )
            .with_drift_jacobian(move |_x| DMatrix::from_element(1, 1, a))
            .with_diffusion_jacobian(move |_x, _j| DMatrix::from_element(1, 1, sigma))
            .with_diffusion_kind(DiffusionKind::ScalarLinear { sigmas: vec![sigma] })
            .with_suggested_domain(DomainBox::cube(1, -2.0, 2.0).expect("valid box")))
        }
        other => Err(Error::UnknownModel(other.into())),
    }
}

/// Worst relative disagreement between analytic and FD Jacobians over
/// `samples` uniform points, across the drift and every diffusion column.
/// Returns 0 for models without analytic Jacobians.
pub fn jacobian_consistency(
    model: &SystemModel,
    domain: &DomainBox,
    samples: usize,
    seed: u64,
) -> f64 {
    if !model.has_analytic_jacobians() {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for s in 0..samples {
        let mut rng = rng::counter_rng(seed, rng::purpose::CHECK, s as u64, 1);
        let x = domain.sample(&mut rng);
        let targets = std::iter::once(JacobianTarget::Drift)
            .chain((0..model.d).map(JacobianTarget::DiffusionColumn));
        for target in targets {
            let analytic = model
                .jacobian(target, &x, JacobianScheme::AnalyticIfAvailable)
                .expect("target in range");
            let fd = model
                .jacobian(target, &x, JacobianScheme::FdCentral)
                .expect("target in range");
            let scale = analytic.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let err = (&analytic - &fd).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(err / scale);
        }
    }
    worst
}
