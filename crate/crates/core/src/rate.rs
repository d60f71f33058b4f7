//! Convex rate functions K* on [0, a) and the conjugation machinery that
//! moves between the beta and K* parametrizations.
//!
//! Piecewise-linear convex functions conjugate exactly: the Legendre
//! transform of a PL function is PL with breakpoints at the input's slopes,
//! so grid conversions carry no sampling error beyond the knot set itself.

use crate::error::{Result, SubgeoError};
use crate::monotone::{Direction, Form, MonotoneFn, Tail};
use serde::{Deserialize, Serialize};

/// Behaviour of a PL rate function beyond its last knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beyond {
    /// Extend the last segment's slope.
    Slope,
    /// +inf beyond the last knot (no function attains larger ratios).
    Infinite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RateForm {
    /// `coeff * v^exponent` with exponent >= 1.
    Power { coeff: f64, exponent: f64 },
    /// Piecewise linear in plain coordinates, knots from (0, 0), convex.
    PlGrid { knots: Vec<(f64, f64)>, beyond: Beyond },
}

/// A nonnegative, convex, increasing rate function with K*(0) = 0,
/// defined on [0, a_max).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFn {
    pub a_max: f64,
    pub form: RateForm,
}

impl RateFn {
    pub fn power(a_max: f64, coeff: f64, exponent: f64) -> Result<Self> {
        let f = RateFn {
            a_max,
            form: RateForm::Power { coeff, exponent },
        };
        f.validate()?;
        Ok(f)
    }

    pub fn pl_grid(a_max: f64, knots: Vec<(f64, f64)>, beyond: Beyond) -> Result<Self> {
        let f = RateFn {
            a_max,
            form: RateForm::PlGrid { knots, beyond },
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SubgeoError::InvalidFunction(msg));
        if !(self.a_max > 0.0) {
            return fail("rate function needs a_max > 0".into());
        }
        match &self.form {
            RateForm::Power { coeff, exponent } => {
                if !(*coeff > 0.0) || !(*exponent >= 1.0) {
                    return fail(format!(
                        "power rate needs coeff > 0 and exponent >= 1, got {coeff}, {exponent}"
                    ));
                }
            }
            RateForm::PlGrid { knots, .. } => {
                if knots.len() < 2 || knots[0] != (0.0, 0.0) {
                    return fail("PL rate grid must start at (0, 0)".into());
                }
                let mut prev_slope = f64::NEG_INFINITY;
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return fail("PL rate knots must have increasing v".into());
                    }
                    if w[1].1 < w[0].1 {
                        return fail("PL rate must be nondecreasing".into());
                    }
                    let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                    // midpoint convexity test, with float slack
                    if slope < prev_slope * (1.0 - 1e-9) - 1e-15 {
                        return fail(format!(
                            "PL rate not convex: slope {slope} after {prev_slope}"
                        ));
                    }
                    prev_slope = prev_slope.max(slope);
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, v: f64) -> f64 {
        match &self.form {
            RateForm::Power { coeff, exponent } => coeff * v.powf(*exponent),
            RateForm::PlGrid { knots, beyond } => {
                let n = knots.len();
                if v <= 0.0 {
                    return 0.0;
                }
                if v > knots[n - 1].0 {
                    return match beyond {
                        Beyond::Infinite => f64::INFINITY,
                        Beyond::Slope => {
                            let (a, b) = (knots[n - 2], knots[n - 1]);
                            let m = (b.1 - a.1) / (b.0 - a.0);
                            b.1 + m * (v - b.0)
                        }
                    };
                }
                let i = knots.partition_point(|k| k.0 < v);
                // i >= 1 since knots[0].0 = 0 < v
                let (a, b) = (knots[i - 1], knots[i]);
                a.1 + (b.1 - a.1) * (v - a.0) / (b.0 - a.0)
            }
        }
    }

    /// Largest v with K*(v) = 0: decay statements only reach down to this level.
    pub fn zero_until(&self) -> f64 {
        match &self.form {
            RateForm::Power { .. } => 0.0,
            RateForm::PlGrid { knots, .. } => knots
                .iter()
                .rev()
                .find(|k| k.1 == 0.0)
                .map(|k| k.0)
                .unwrap_or(0.0),
        }
    }

    /// Errors when K* vanishes on an interior interval of (0, a_max):
    /// no convergence statement is possible there.
    pub fn check_interior_positive(&self) -> Result<()> {
        if let RateForm::PlGrid { knots, .. } = &self.form {
            let mut seen_positive = false;
            for w in knots.windows(2) {
                if w[0].1 > 0.0 {
                    seen_positive = true;
                }
                if seen_positive && w[0].1 == 0.0 && w[1].1 == 0.0 {
                    return Err(SubgeoError::NonConvergent(format!(
                        "rate function vanishes on the interior interval [{}, {}]",
                        w[0].0, w[1].0
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Exact conjugate of a convex PL function given by `points` (sorted in u,
/// starting at (0, 0)): returns the PL knots of `sup_u { u v - K(u) }`.
///
/// The breakpoints of the conjugate are the slopes of the input; between
/// consecutive slopes the sup is attained at the shared knot.
pub fn conjugate_pl(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let hull = lower_hull(points);
    let mut out = vec![(0.0, 0.0)];
    for w in hull.windows(2) {
        let (u0, k0) = w[0];
        let (u1, k1) = w[1];
        let m = (k1 - k0) / (u1 - u0);
        if m <= out.last().unwrap().0 {
            continue;
        }
        // value at breakpoint v = m: u0 * m - k0 (= u1 * m - k1)
        out.push((m, (u0 * m - k0).max(0.0)));
    }
    out
}

/// Lower convex hull of points sorted by x.
pub(crate) fn lower_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.dedup_by(|a, b| a.0 == b.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // pop b if it lies above segment a-p
            let cross = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// K* from a beta parametrization: K(u) = u * beta(1/u) (with beta capped at
/// a_max, which leaves the conjugate unchanged on [0, a_max]), then the
/// convex conjugate.
pub fn beta_to_kstar(beta: &MonotoneFn, a_max: f64) -> Result<RateFn> {
    if beta.direction != Direction::Decreasing {
        return Err(SubgeoError::InvalidCertificate(
            "beta must be decreasing".into(),
        ));
    }
    if !beta.vanishes_at_infinity() {
        return Err(SubgeoError::InvalidCertificate(
            "beta does not tend to 0; the K* certificate would be vacuous".into(),
        ));
    }
    // closed form: beta = c0 s^{-c1}  =>  K* = C(c0,c1) v^{1+1/c1}
    if let Form::PowerLaw { coeff, exponent } = beta.form {
        let c0 = coeff;
        let c1 = -exponent;
        let big_c = (c1 / (1.0 + c1)) * (c0 * (1.0 + c1)).powf(-1.0 / c1);
        return RateFn::power(a_max, big_c, 1.0 + 1.0 / c1);
    }
    // grid route: knots of K at u = 1/s over the beta knots, extended by the
    // tails far enough to cover slopes up to a_max and down to ~0
    let mut svals: Vec<f64> = beta.knot_xs();
    if svals.is_empty() {
        // constant-free closed forms (exponential) get sampled
        let (lo, hi) = beta.domain;
        svals = crate::quad::log_grid(lo, hi, 256);
    }
    let s_lo = svals.first().copied().unwrap();
    let s_hi = svals.last().copied().unwrap();
    // extend until capped on the left and ~vanished on the right
    let mut extra_lo: Vec<f64> = Vec::new();
    let mut s = s_lo;
    for _ in 0..80 {
        if beta.eval(s) >= a_max {
            break;
        }
        s /= 2.0;
        extra_lo.push(s);
    }
    let mut extra_hi: Vec<f64> = Vec::new();
    let mut s = s_hi;
    for _ in 0..200 {
        if beta.eval(s) <= a_max * 1e-12 {
            break;
        }
        s *= 2.0;
        extra_hi.push(s);
    }
    let mut all: Vec<f64> = extra_lo.into_iter().rev().chain(svals).chain(extra_hi).collect();
    all.dedup();
    let mut kpoints: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for &s in all.iter().rev() {
        let u = 1.0 / s;
        let b = beta.eval(s).min(a_max);
        kpoints.push((u, u * b));
    }
    let mut knots = conjugate_pl(&kpoints);
    // complete the grid out to a_max with the finite-hull continuation
    // (slope u_max); without this the decay functional would treat K* as
    // infinite past the last breakpoint and under-integrate
    let last = *knots.last().unwrap();
    if last.0 < a_max {
        let (u_max, k_max) = *kpoints.last().unwrap();
        knots.push((a_max, (u_max * a_max - k_max).max(last.1)));
    }
    RateFn::pl_grid(a_max, knots, Beyond::Slope)
}

/// Beta from a K* parametrization: beta(s) = s * K(1/s) with K the convex
/// conjugate of K* over [0, a_max].
pub fn kstar_to_beta(kstar: &RateFn) -> Result<MonotoneFn> {
    let a = kstar.a_max;
    match &kstar.form {
        RateForm::Power { coeff, exponent } if *exponent == 1.0 => {
            // strong Poincare: K* = v/C with C = 1/coeff.
            // K(u) = a*max(0, u - coeff), beta(s) = a*max(0, 1 - coeff*s):
            // affine, stored as a dense grid with a zero tail.
            let c = *coeff;
            let cut = 1.0 / c;
            // log grid away from the cut, linear refinement near it (the
            // function is affine, which log-log interpolation handles poorly
            // close to its zero)
            let mut svals = crate::quad::log_grid(cut * 1e-6, cut * 0.5, 192);
            for i in 1..=512 {
                svals.push(cut * (0.5 + 0.5 * i as f64 / 513.0));
            }
            let mut knots: Vec<(f64, f64)> = Vec::new();
            for s in svals {
                let b = a * (1.0 - c * s);
                if b > 0.0 {
                    knots.push((s, b));
                }
            }
            MonotoneFn::grid(Direction::Decreasing, knots, Tail::Const, Tail::Zero)
        }
        RateForm::Power { coeff, exponent } => {
            // interior stationary point v* = (u/(C kappa))^{1/(kappa-1)}, clamped to a
            let (c, kap) = (*coeff, *exponent);
            let k_of_u = |u: f64| -> f64 {
                let vstar = (u / (c * kap)).powf(1.0 / (kap - 1.0)).min(a);
                (u * vstar - c * vstar.powf(kap)).max(0.0)
            };
            // beta(s) = s K(1/s): sample where beta runs from ~a down to ~0
            let u_at_a = c * kap * a.powf(kap - 1.0); // slope at v = a
            let s_lo = (1.0 / u_at_a) * 1e-3;
            let f = |s: f64| s * k_of_u(1.0 / s);
            let mut s_hi = 1.0 / u_at_a;
            for _ in 0..300 {
                if f(s_hi) <= a * 1e-12 {
                    break;
                }
                s_hi *= 2.0;
            }
            MonotoneFn::sample(
                &f,
                Direction::Decreasing,
                s_lo,
                s_hi,
                512,
                Tail::Const,
                Tail::Slope,
            )
        }
        RateForm::PlGrid { knots, .. } => {
            // conjugate over the bounded interval [0, a]: append the endpoint
            let mut pts = knots.clone();
            if pts.last().unwrap().0 < a {
                let n = pts.len();
                let (p, q) = (pts[n - 2], pts[n - 1]);
                let m = (q.1 - p.1) / (q.0 - p.0);
                pts.push((a, q.1 + m * (a - q.0)));
            } else {
                pts.retain(|k| k.0 <= a);
                if pts.last().map(|k| k.0 < a).unwrap_or(true) {
                    pts.push((a, kstar.eval(a)));
                }
            }
            let kk = conjugate_pl(&pts); // K(u), PL with final slope a
            // beta(s) = s K(1/s), exact at s = 1/u over K's breakpoints
            let mut out: Vec<(f64, f64)> = Vec::new();
            let eval_k = |u: f64| -> f64 {
                let n = kk.len();
                if u <= 0.0 {
                    return 0.0;
                }
                if u >= kk[n - 1].0 {
                    // beyond the last breakpoint the slope is a
                    return kk[n - 1].1 + a * (u - kk[n - 1].0);
                }
                let i = kk.partition_point(|k| k.0 < u).max(1);
                let (p, q) = (kk[i - 1], kk[i]);
                p.1 + (q.1 - p.1) * (u - p.0) / (q.0 - p.0)
            };
            let u_min = kk.iter().find(|k| k.0 > 0.0).map(|k| k.0).unwrap_or(1e-12);
            let u_max = kk.last().unwrap().0.max(u_min * 2.0) * 4.0;
            for u in crate::quad::log_grid(u_min * 0.25, u_max, 512) {
                let s = 1.0 / u;
                let b = s * eval_k(u);
                if b > 0.0 && b.is_finite() {
                    out.push((s, b));
                }
            }
            out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            out.dedup_by(|x, y| x.0 == y.0);
            // enforce monotone (guards float dust on flat stretches)
            let mut best = f64::INFINITY;
            for k in out.iter_mut() {
                best = best.min(k.1);
                k.1 = best;
            }
            out.dedup_by(|x, y| x.1 == y.1);
            MonotoneFn::grid(Direction::Decreasing, out, Tail::Const, Tail::Slope)
        }
    }
}
