//! Bracketed scalar root finding.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("non-finite function value at x = {0}")]
    NonFinite(f64),
}

/// Bisection on `[lo, hi]`; `f(lo)` and `f(hi)` must have opposite signs
/// (a zero at either end is returned directly).
///
/// Stops when the bracket is narrower than `x_tol` or the midpoint residual is
/// below `f_tol`, whichever happens first.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, x_tol: f64, f_tol: f64) -> Result<f64, RootError>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if !f_lo.is_finite() {
        return Err(RootError::NonFinite(lo));
    }
    if !f_hi.is_finite() {
        return Err(RootError::NonFinite(hi));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(RootError::NoBracket { lo, hi, f_lo, f_hi });
    }
    // 200 halvings exhaust any f64 bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if !f_mid.is_finite() {
            return Err(RootError::NonFinite(mid));
        }
        if f_mid == 0.0 || f_mid.abs() < f_tol || (hi - lo) < x_tol {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scans `n` equal sub-intervals of `[lo, hi]` and returns every sub-interval
/// on which `f` changes sign (strictly positive on one side, non-positive on
/// the other).
pub fn sign_changes<F>(f: F, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let n = n.max(1);
    let h = (hi - lo) / n as f64;
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    for k in 1..=n {
        let x1 = if k == n { hi } else { lo + k as f64 * h };
        let f1 = f(x1);
        if (f0 > 0.0) != (f1 > 0.0) {
            out.push((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// Connected components of `{f > 0}` on `[lo, hi]`: sign scan on `n` cells,
/// endpoints refined by bisection to `x_tol`. Components touching `lo` or `hi`
/// are clipped there.
pub fn positive_intervals<F>(f: F, lo: f64, hi: f64, n: usize, x_tol: f64) -> Vec<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let mut ends = Vec::new();
    for (a, b) in sign_changes(&f, lo, hi, n) {
        let root = bisect(&f, a, b, x_tol, 0.0).unwrap_or(0.5 * (a + b));
        ends.push((root, f(b) > 0.0));
    }
    let mut out = Vec::new();
    let mut start = (f(lo) > 0.0).then_some(lo);
    for (x, rising) in ends {
        if rising {
            start = Some(x);
        } else if let Some(s) = start.take() {
            out.push((s, x));
        }
    }
    if let Some(s) = start {
        out.push((s, hi));
    }
    out
}
