//! Small least-squares helpers shared by the limit extrapolations and the
//! decay-rate fits.

/// Ordinary least squares fit of `y = a + b x`. Returns `(a, b)`.
///
/// Requires at least two distinct abscissae; with exactly one point the
/// intercept degenerates to that value and the slope to zero.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() == 1 {
        return (ys[0], 0.0);
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return (my, 0.0);
    }
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Weighted least squares fit of `y = a + b x` with known per-point standard
/// errors. Returns `(a, b, se_a)` where `se_a` is the standard error of the
/// intercept propagated from the supplied errors.
///
/// Points with zero or non-finite standard error are treated as exact; if
/// any point is exact the fit falls back to ordinary least squares with zero
/// reported intercept error, which is the honest limit of "no sampling
/// noise".
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], ses: &[f64]) -> (f64, f64, f64) {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert_eq!(xs.len(), ses.len());
    if ses.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        let (a, b) = linear_fit(xs, ys);
        return (a, b, 0.0);
    }
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for ((&x, &y), &se) in xs.iter().zip(ys).zip(ses) {
        let w = 1.0 / (se * se);
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if det <= 0.0 {
        let (a, b) = linear_fit(xs, ys);
        return (a, b, ses[0]);
    }
    let a = (swxx * swy - swx * swxy) / det;
    let b = (sw * swxy - swx * swy) / det;
    let var_a = swxx / det;
    (a, b, var_a.max(0.0).sqrt())
}
