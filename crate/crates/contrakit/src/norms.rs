//! Vector norms, induced operator norms, and matrix measures.
//!
//! The matrix measure (logarithmic norm) of a square matrix `A` under a
//! vector norm `||.||` is the one-sided derivative
//!
//! ```text
//! mu[A] = lim_{h -> 0+} ( ||I + h A|| - 1 ) / h ,
//! ```
//!
//! where `||.||` on matrices is the induced operator norm. Unlike a norm it
//! can be negative, and `mu[A] < 0` certifies exponential contraction of
//! `x' = A x`. Closed forms under the three supported kinds:
//!
//! ```text
//! mu_1[A]   = max_j ( a_jj + sum_{i != j} |a_ij| )      (column-based)
//! mu_2[A]   = lambda_max( (A + A^T) / 2 )
//! mu_inf[A] = max_i ( a_ii + sum_{j != i} |a_ij| )      (row-based)
//! ```
//!
//! A weighted norm `||x|| = ||P x||_kind` with invertible `P` shifts every
//! operator quantity to `P A P^-1`. Ill-conditioned weights silently destroy
//! precision, so construction rejects condition numbers above a cap instead
//! of letting garbage propagate.
//!
//! [`matrix_measure_limit`] evaluates the defining quotient on a ladder of
//! small `h` and extrapolates to zero. It exists as an independent check on
//! the closed forms (and they are tested against each other), not as the
//! fast path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;

pub type SquareMatrix = DMatrix<f64>;

/// Ladder used by [`matrix_measure_limit`] when the caller has no opinion.
/// Small enough that the quadratic term of the quotient is negligible after
/// the linear fit, large enough to stay clear of rounding noise.
pub const DEFAULT_MEASURE_LADDER: [f64; 5] = [8e-5, 4e-5, 2e-5, 1e-5, 5e-6];

/// Smallest ladder rung accepted, as a multiple of machine epsilon.
pub const MIN_LADDER_RUNG: f64 = 1e3 * f64::EPSILON;

const DEFAULT_COND_CAP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormKind::L1 => write!(f, "l1"),
            NormKind::L2 => write!(f, "l2"),
            NormKind::Linf => write!(f, "linf"),
        }
    }
}

/// Validated weight matrix together with its inverse and condition number.
#[derive(Debug, Clone)]
pub struct Weight {
    p: DMatrix<f64>,
    p_inv: DMatrix<f64>,
    cond: f64,
}

impl Weight {
    fn new(p: DMatrix<f64>, cond_cap: f64) -> Result<Self> {
        check_square_finite(&p)?;
        let sv = p.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if smin <= 0.0 {
            return Err(Error::SingularWeight);
        }
        let cond = smax / smin;
        if cond > cond_cap {
            return Err(Error::IllConditionedWeight { cond, cap: cond_cap });
        }
        let p_inv = p.clone().try_inverse().ok_or(Error::SingularWeight)?;
        Ok(Weight { p, p_inv, cond })
    }

    pub fn condition_number(&self) -> f64 {
        self.cond
    }
}

/// A norm on `R^n`: one of the three base kinds, optionally weighted.
#[derive(Debug, Clone)]
pub struct NormSpec {
    pub kind: NormKind,
    weight: Option<Weight>,
}

impl NormSpec {
    pub fn new(kind: NormKind) -> Self {
        NormSpec { kind, weight: None }
    }

    pub fn l1() -> Self {
        Self::new(NormKind::L1)
    }

    pub fn l2() -> Self {
        Self::new(NormKind::L2)
    }

    pub fn linf() -> Self {
        Self::new(NormKind::Linf)
    }

    /// Weighted norm `||x|| = ||P x||_kind`. Rejects singular `P` and
    /// condition numbers above `1e8`.
    pub fn weighted(kind: NormKind, p: DMatrix<f64>) -> Result<Self> {
        Self::weighted_with_cap(kind, p, DEFAULT_COND_CAP)
    }

    pub fn weighted_with_cap(kind: NormKind, p: DMatrix<f64>, cond_cap: f64) -> Result<Self> {
        Ok(NormSpec {
            kind,
            weight: Some(Weight::new(p, cond_cap)?),
        })
    }

    pub fn weight(&self) -> Option<&Weight> {
        self.weight.as_ref()
    }

    pub fn is_weighted(&self) -> bool {
        self.weight.is_some()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if let Some(w) = &self.weight {
            if w.p.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "weight is {}x{} but operand has dimension {}",
                    w.p.nrows(),
                    w.p.ncols(),
                    n
                )));
            }
        }
        Ok(())
    }

    /// `P A P^-1` for weighted specs, `A` itself otherwise.
    fn transformed(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.weight {
            Some(w) => &w.p * a * &w.p_inv,
            None => a.clone(),
        }
    }
}

fn check_square_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    Ok(())
}

fn base_vector_norm(kind: NormKind, x: &DVector<f64>) -> f64 {
    match kind {
        NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
        NormKind::L2 => x.norm(),
        NormKind::Linf => x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }
}

fn base_operator_norm(kind: NormKind, a: &DMatrix<f64>) -> f64 {
    match kind {
        NormKind::L1 => (0..a.ncols())
            .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max),
        NormKind::L2 => a.singular_values().max(),
        NormKind::Linf => (0..a.nrows())
            .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max),
    }
}

fn base_matrix_measure(kind: NormKind, a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    match kind {
        NormKind::L1 => (0..n)
            .map(|j| {
                a[(j, j)]
                    + (0..n)
                        .filter(|&i| i != j)
                        .map(|i| a[(i, j)].abs())
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max),
        NormKind::L2 => {
            let sym = (a + a.transpose()) * 0.5;
            sym.symmetric_eigen().eigenvalues.max()
        }
        NormKind::Linf => (0..n)
            .map(|i| {
                a[(i, i)]
                    + (0..n)
                        .filter(|&j| j != i)
                        .map(|j| a[(i, j)].abs())
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `||x||` under `spec`.
pub fn vector_norm(spec: &NormSpec, x: &DVector<f64>) -> f64 {
    match spec.weight() {
        Some(w) => base_vector_norm(spec.kind, &(&w.p * x)),
        None => base_vector_norm(spec.kind, x),
    }
}

/// Induced operator norm of `A` under `spec`.
pub fn operator_norm(spec: &NormSpec, a: &SquareMatrix) -> Result<f64> {
    check_square_finite(a)?;
    spec.check_dim(a.nrows())?;
    Ok(base_operator_norm(spec.kind, &spec.transformed(a)))
}

/// Matrix measure of `A` under `spec`, by closed form.
///
/// # Examples
///
/// ```
/// use contrakit::norms::{matrix_measure, NormSpec, SquareMatrix};
///
/// let a = SquareMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -3.0]);
/// let mu = matrix_measure(&NormSpec::l1(), &a).unwrap();
/// assert_eq!(mu, -2.0);
/// ```
pub fn matrix_measure(spec: &NormSpec, a: &SquareMatrix) -> Result<f64> {
    check_square_finite(a)?;
    spec.check_dim(a.nrows())?;
    Ok(base_matrix_measure(spec.kind, &spec.transformed(a)))
}

/// Result of the defining-limit evaluation: the extrapolated measure and the
/// `(h, quotient)` rungs actually evaluated.
#[derive(Debug, Clone)]
pub struct MeasureLimit {
    pub value: f64,
    pub rungs: Vec<(f64, f64)>,
}

/// Evaluates `( ||I + h A|| - 1 ) / h` on `h_ladder` and extrapolates to
/// `h -> 0` with a linear fit over the three smallest rungs.
///
/// The ladder needs at least three rungs, all positive, finite, distinct,
/// and no smaller than `1e3` times machine epsilon; below that the quotient
/// is dominated by rounding in `||I + h A|| - 1`.
pub fn matrix_measure_limit(
    spec: &NormSpec,
    a: &SquareMatrix,
    h_ladder: &[f64],
) -> Result<MeasureLimit> {
    check_square_finite(a)?;
    spec.check_dim(a.nrows())?;
    if h_ladder.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "measure ladder needs at least 3 rungs, got {}",
            h_ladder.len()
        )));
    }
    for &h in h_ladder {
        if !h.is_finite() || h < MIN_LADDER_RUNG {
            return Err(Error::InvalidConfig(format!(
                "ladder rung {h:e} below the rounding floor {MIN_LADDER_RUNG:e}"
            )));
        }
    }
    let mut rungs: Vec<f64> = h_ladder.to_vec();
    rungs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    rungs.dedup();
    if rungs.len() < 3 {
        return Err(Error::InvalidConfig(
            "measure ladder needs at least 3 distinct rungs".into(),
        ));
    }

    let t = spec.transformed(a);
    let n = t.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let plain = NormSpec::new(spec.kind);
    let trace: Vec<(f64, f64)> = rungs
        .iter()
        .map(|&h| {
            let q = (base_operator_norm(plain.kind, &(&eye + &t * h)) - 1.0) / h;
            (h, q)
        })
        .collect();

    let tail = &trace[trace.len() - 3..];
    let hs: Vec<f64> = tail.iter().map(|r| r.0).collect();
    let qs: Vec<f64> = tail.iter().map(|r| r.1).collect();
    let (value, _slope) = linear_fit(&hs, &qs);
    if !value.is_finite() {
        return Err(Error::NonFinite("extrapolated measure".into()));
    }
    Ok(MeasureLimit { value, rungs: trace })
}
