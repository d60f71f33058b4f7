//! Adaptive quadrature and scalar root finding on positive intervals.
//!
//! Integration is done in log-space (substituting v = e^t), which suits the
//! near-power-law integrands that show up in decay functionals and mixing
//! integrals: they are close to linear after the substitution.

use crate::error::{Result, SubgeoError};

/// Default relative tolerance for adaptive quadrature.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

const MAX_DEPTH: u32 = 52;

/// Integrate `f` over `[a, b]` with `0 < a < b`, adaptively in log-space.
pub fn integrate_log(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(SubgeoError::InvalidParameter(format!(
            "integration bounds must be positive and finite, got [{a}, {b}]"
        )));
    }
    if a >= b {
        return Ok(0.0);
    }
    // v = exp(t), dv = v dt
    let g = |t: f64| {
        let v = t.exp();
        f(v) * v
    };
    adaptive_simpson(&g, a.ln(), b.ln(), rel_tol)
}

/// Adaptive Simpson on a plain interval.
pub fn adaptive_simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let fa = g(a);
    let fb = g(b);
    let m = 0.5 * (a + b);
    let fm = g(m);
    for v in [fa, fm, fb] {
        if !v.is_finite() {
            return Err(SubgeoError::Numerical(format!(
                "integrand not finite on [{a}, {b}]"
            )));
        }
    }
    let whole = simpson(a, b, fa, fm, fb);
    // Coarse magnitude estimate used to turn the relative tolerance into an
    // absolute one; refined panels split the budget.
    let scale = whole.abs().max(1e-300);
    recurse(g, a, b, fa, fm, fb, whole, rel_tol * scale, 0)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    g: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = g(lm);
    let frm = g(rm);
    if !flm.is_finite() || !frm.is_finite() {
        return Err(SubgeoError::Numerical(format!(
            "integrand not finite near [{a}, {b}]"
        )));
    }
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    let l = recurse(g, a, m, fa, flm, fm, left, tol / 2.0, depth + 1)?;
    let r = recurse(g, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)?;
    Ok(l + r)
}

/// Bisection for a decreasing function: returns x with f(x) = target,
/// searching log-space in `[lo, hi]`.
pub fn bisect_decreasing(
    f: &dyn Fn(f64) -> f64,
    target: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (lo.ln(), hi.ln());
    let flo = f(lo.exp());
    let fhi = f(hi.exp());
    if target > flo || target < fhi {
        return Err(SubgeoError::Numerical(format!(
            "bisection target {target} outside range [{fhi}, {flo}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= rel_tol {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Least-squares slope of y against x.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    weighted_ls_slope(xs, ys, &vec![1.0; xs.len()])
}

/// Weighted least-squares slope of y against x.
pub fn weighted_ls_slope(xs: &[f64], ys: &[f64], ws: &[f64]) -> f64 {
    let wsum: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let ybar = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        num += w * (x - xbar) * (y - ybar);
        den += w * (x - xbar) * (x - xbar);
    }
    num / den
}

/// Geometric grid of `n` points spanning `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
