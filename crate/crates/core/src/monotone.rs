//! Represented monotone functions on intervals of the positive reals.
//!
//! Rates in this domain are powers, log-powers, or exponentials, so the
//! sampled representation interpolates linearly in log-log coordinates and
//! extrapolates by explicit tail tags. Staircases (right-continuous, exact)
//! carry conductance profiles and generalized inverses of step functions.

use crate::error::{Result, SubgeoError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Extrapolation beyond the sampled range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Continue with the endpoint value.
    Const,
    /// Continue the last segment's log-log slope.
    Slope,
    /// Value 0 beyond the endpoint.
    Zero,
    /// Value +inf beyond the endpoint.
    Infinite,
}

/// Log-log piecewise-linear interpolant through strictly increasing knots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFn {
    /// `[[x, y], ...]` with strictly increasing `x` and positive `y`.
    pub knots: Vec<(f64, f64)>,
    pub left: Tail,
    pub right: Tail,
}

/// Right-continuous staircase: value `initial` on `(0, x_1)`, then `v_i` on
/// `[x_i, x_{i+1})`; the last value persists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StairFn {
    #[serde(with = "ext_f64")]
    pub initial: f64,
    pub steps: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Form {
    /// `coeff * x^exponent`
    PowerLaw { coeff: f64, exponent: f64 },
    /// `coeff * exp(rate * x)`
    Exponential { coeff: f64, rate: f64 },
    Constant { value: f64 },
    /// `coeff * x^exponent * ln(log_scale / x)^log_exponent`, for `x < log_scale`.
    PowerLog {
        coeff: f64,
        exponent: f64,
        log_exponent: f64,
        log_scale: f64,
    },
    Grid(GridFn),
    Staircase(StairFn),
}

/// A represented monotone function on an interval of the positive reals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneFn {
    pub direction: Direction,
    /// Advisory half-open domain `(lo, hi]`; evaluation outside extrapolates.
    #[serde(with = "ext_pair")]
    pub domain: (f64, f64),
    pub form: Form,
}

mod ext_pair {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Pair(#[serde(with = "super::ext_f64")] f64, #[serde(with = "super::ext_f64")] f64);

    pub fn serialize<S: Serializer>(v: &(f64, f64), s: S) -> Result<S::Ok, S::Error> {
        Pair(v.0, v.1).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(f64, f64), D::Error> {
        let p = Pair::deserialize(d)?;
        Ok((p.0, p.1))
    }
}

pub(crate) mod ext_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else {
            Repr::Tag("inf".to_string()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Tag(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!("bad f64 tag {t:?}"))),
        }
    }
}

impl MonotoneFn {
    pub fn power_law(direction: Direction, domain: (f64, f64), coeff: f64, exponent: f64) -> Self {
        MonotoneFn {
            direction,
            domain,
            form: Form::PowerLaw { coeff, exponent },
        }
    }

    pub fn constant(domain: (f64, f64), value: f64) -> Self {
        MonotoneFn {
            direction: Direction::Decreasing,
            domain,
            form: Form::Constant { value },
        }
    }

    pub fn exponential(direction: Direction, domain: (f64, f64), coeff: f64, rate: f64) -> Self {
        MonotoneFn {
            direction,
            domain,
            form: Form::Exponential { coeff, rate },
        }
    }

    pub fn staircase(
        direction: Direction,
        domain: (f64, f64),
        initial: f64,
        steps: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let f = MonotoneFn {
            direction,
            domain,
            form: Form::Staircase(StairFn { initial, steps }),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn grid(
        direction: Direction,
        knots: Vec<(f64, f64)>,
        left: Tail,
        right: Tail,
    ) -> Result<Self> {
        let domain = (
            knots.first().map(|k| k.0).unwrap_or(0.0),
            knots.last().map(|k| k.0).unwrap_or(0.0),
        );
        let f = MonotoneFn {
            direction,
            domain,
            form: Form::Grid(GridFn { knots, left, right }),
        };
        f.validate()?;
        Ok(f)
    }

    /// Sample `f` on a geometric grid over `[lo, hi]`. Values that violate
    /// monotonicity within relative 1e-9 (cancellation dust) are clamped;
    /// larger violations are an error.
    pub fn sample(
        f: &dyn Fn(f64) -> f64,
        direction: Direction,
        lo: f64,
        hi: f64,
        n: usize,
        left: Tail,
        right: Tail,
    ) -> Result<Self> {
        let mut knots: Vec<(f64, f64)> = crate::quad::log_grid(lo, hi, n)
            .into_iter()
            .map(|x| (x, f(x)))
            .filter(|&(_, y)| y.is_finite() && y > 0.0)
            .collect();
        if knots.len() < 2 {
            return Err(SubgeoError::InvalidFunction(
                "sampled function has fewer than 2 positive finite values".into(),
            ));
        }
        for i in 1..knots.len() {
            let prev = knots[i - 1].1;
            let cur = knots[i].1;
            let (bad, clamped) = match direction {
                Direction::Decreasing => (cur > prev * (1.0 + 1e-9), cur.min(prev)),
                Direction::Increasing => (cur < prev * (1.0 - 1e-9), cur.max(prev)),
            };
            if bad {
                return Err(SubgeoError::InvalidFunction(format!(
                    "sampled function not monotone near x = {}",
                    knots[i].0
                )));
            }
            knots[i].1 = clamped;
        }
        Self::grid(direction, knots, left, right)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |cond: bool, msg: &str| -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(SubgeoError::InvalidFunction(msg.into()))
            }
        };
        match &self.form {
            Form::PowerLaw { coeff, exponent } => {
                ok(*coeff > 0.0 && coeff.is_finite(), "power law needs coeff > 0")?;
                let incr = *exponent >= 0.0;
                ok(
                    incr == (self.direction == Direction::Increasing) || *exponent == 0.0,
                    "power-law exponent sign contradicts direction",
                )
            }
            Form::Exponential { coeff, rate } => {
                ok(*coeff > 0.0 && coeff.is_finite(), "exponential needs coeff > 0")?;
                let incr = *rate >= 0.0;
                ok(
                    incr == (self.direction == Direction::Increasing) || *rate == 0.0,
                    "exponential rate sign contradicts direction",
                )
            }
            Form::Constant { value } => ok(*value >= 0.0, "constant must be nonnegative"),
            Form::PowerLog { coeff, log_scale, .. } => {
                ok(*coeff > 0.0 && *log_scale > 0.0, "power-log needs coeff, log_scale > 0")?;
                // direction is checked empirically on the domain
                let (lo, hi) = self.domain;
                ok(hi > lo && hi > 0.0, "power-log needs a nonempty domain")?;
                let lo = if lo > 0.0 { lo } else { hi * 1e-9 };
                let xs = crate::quad::log_grid(lo, hi.min(*log_scale * 0.999_999), 16);
                let mut prev = self.eval(xs[0]);
                for &x in &xs[1..] {
                    let y = self.eval(x);
                    let good = match self.direction {
                        Direction::Increasing => y >= prev - prev.abs() * 1e-12,
                        Direction::Decreasing => y <= prev + prev.abs() * 1e-12,
                    };
                    ok(good, "power-log not monotone in stated direction on domain")?;
                    prev = y;
                }
                Ok(())
            }
            Form::Grid(g) => {
                ok(g.knots.len() >= 2, "grid needs at least 2 knots")?;
                for w in g.knots.windows(2) {
                    ok(w[0].0 < w[1].0, "grid abscissae must be strictly increasing")?;
                    let good = match self.direction {
                        Direction::Increasing => w[0].1 <= w[1].1,
                        Direction::Decreasing => w[0].1 >= w[1].1,
                    };
                    ok(good, "grid values must be monotone in stated direction")?;
                }
                for &(x, y) in &g.knots {
                    ok(x > 0.0 && y > 0.0 && y.is_finite(), "grid knots must be positive finite")?;
                }
                Ok(())
            }
            Form::Staircase(s) => {
                ok(!s.steps.is_empty(), "staircase needs at least one step")?;
                for w in s.steps.windows(2) {
                    ok(w[0].0 < w[1].0, "staircase abscissae must be strictly increasing")?;
                }
                let mut values = vec![s.initial];
                values.extend(s.steps.iter().map(|s| s.1));
                for w in values.windows(2) {
                    let good = match self.direction {
                        Direction::Increasing => w[0] <= w[1],
                        Direction::Decreasing => w[0] >= w[1],
                    };
                    ok(good, "staircase values must be monotone in stated direction")?;
                }
                for v in values {
                    ok(v >= 0.0, "staircase values must be nonnegative")?;
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.form {
            Form::PowerLaw { coeff, exponent } => coeff * x.powf(*exponent),
            Form::Exponential { coeff, rate } => coeff * (rate * x).exp(),
            Form::Constant { value } => *value,
            Form::PowerLog {
                coeff,
                exponent,
                log_exponent,
                log_scale,
            } => {
                let l = (log_scale / x).ln().max(0.0);
                if l == 0.0 && *log_exponent < 0.0 {
                    return f64::INFINITY;
                }
                coeff * x.powf(*exponent) * l.powf(*log_exponent)
            }
            Form::Grid(g) => eval_grid(g, x),
            Form::Staircase(s) => eval_stairs(s, x),
        }
    }

    /// Does the function tend to 0 as its argument grows?
    pub fn vanishes_at_infinity(&self) -> bool {
        if self.direction == Direction::Increasing {
            return false;
        }
        match &self.form {
            Form::PowerLaw { exponent, .. } => *exponent < 0.0,
            Form::Exponential { rate, .. } => *rate < 0.0,
            Form::Constant { value } => *value == 0.0,
            Form::PowerLog { .. } => false, // only defined left of log_scale
            Form::Grid(g) => match g.right {
                Tail::Zero => true,
                Tail::Slope => {
                    let n = g.knots.len();
                    let (a, b) = (g.knots[n - 2], g.knots[n - 1]);
                    b.1 < a.1
                }
                _ => false,
            },
            Form::Staircase(s) => s.steps.last().map(|s| s.1 == 0.0).unwrap_or(false),
        }
    }

    /// Abscissae at which the representation changes (grid knots, step points).
    pub fn knot_xs(&self) -> Vec<f64> {
        match &self.form {
            Form::Grid(g) => g.knots.iter().map(|k| k.0).collect(),
            Form::Staircase(s) => s.steps.iter().map(|s| s.0).collect(),
            _ => Vec::new(),
        }
    }

    /// Generalized inverse of a decreasing function:
    /// `inv(x) = inf { y > 0 : f(y) <= x }`.
    pub fn generalized_inverse(&self) -> Result<MonotoneFn> {
        if self.direction != Direction::Decreasing {
            return Err(SubgeoError::InvalidFunction(
                "generalized inverse is defined for decreasing functions".into(),
            ));
        }
        self.validate()?;
        match &self.form {
            Form::PowerLaw { coeff, exponent } => {
                // solve c y^q = x: y = (x/c)^{1/q}
                let q = *exponent;
                Ok(MonotoneFn::power_law(
                    Direction::Decreasing,
                    (self.eval(self.domain.1), self.eval(self.domain.0)),
                    (1.0 / coeff).powf(1.0 / q),
                    1.0 / q,
                ))
            }
            Form::Constant { value } => {
                // inf{y: v <= x} = 0 for x >= v, +inf below
                MonotoneFn::staircase(
                    Direction::Decreasing,
                    (0.0, f64::INFINITY),
                    f64::INFINITY,
                    vec![(*value, 0.0)],
                )
            }
            Form::Exponential { .. } | Form::PowerLog { .. } => {
                // no closed form kept; sample and invert the grid
                let (lo, hi) = self.domain;
                let sampled = MonotoneFn::sample(
                    &|x| self.eval(x),
                    Direction::Decreasing,
                    lo,
                    hi,
                    512,
                    Tail::Const,
                    Tail::Slope,
                )?;
                sampled.generalized_inverse()
            }
            Form::Grid(g) => invert_grid(g),
            Form::Staircase(s) => invert_stairs(s),
        }
    }
}

fn eval_grid(g: &GridFn, x: f64) -> f64 {
    let ks = &g.knots;
    let n = ks.len();
    if x < ks[0].0 {
        return match g.left {
            Tail::Const => ks[0].1,
            Tail::Zero => 0.0,
            Tail::Infinite => f64::INFINITY,
            Tail::Slope => extrapolate(ks[0], ks[1], x),
        };
    }
    if x > ks[n - 1].0 {
        return match g.right {
            Tail::Const => ks[n - 1].1,
            Tail::Zero => 0.0,
            Tail::Infinite => f64::INFINITY,
            Tail::Slope => extrapolate(ks[n - 2], ks[n - 1], x),
        };
    }
    let i = match ks.binary_search_by(|k| k.0.partial_cmp(&x).unwrap()) {
        Ok(i) => return ks[i].1,
        Err(i) => i - 1,
    };
    interp_loglog(ks[i], ks[i + 1], x)
}

fn interp_loglog(a: (f64, f64), b: (f64, f64), x: f64) -> f64 {
    let t = (x.ln() - a.0.ln()) / (b.0.ln() - a.0.ln());
    (a.1.ln() + t * (b.1.ln() - a.1.ln())).exp()
}

fn extrapolate(a: (f64, f64), b: (f64, f64), x: f64) -> f64 {
    interp_loglog(a, b, x)
}

fn eval_stairs(s: &StairFn, x: f64) -> f64 {
    match s
        .steps
        .binary_search_by(|k| k.0.partial_cmp(&x).unwrap())
    {
        Ok(i) => s.steps[i].1,
        Err(0) => s.initial,
        Err(i) => s.steps[i - 1].1,
    }
}

fn invert_grid(g: &GridFn) -> Result<MonotoneFn> {
    // flat runs collapse to their left endpoint (the inf in the definition)
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(g.knots.len());
    for &(x, y) in &g.knots {
        if let Some(&(_, py)) = pairs.last() {
            if y == py {
                continue; // keep the left endpoint of the flat run
            }
        }
        pairs.push((x, y));
    }
    let knots: Vec<(f64, f64)> = pairs.iter().rev().map(|&(x, y)| (y, x)).collect();
    let left = match g.right {
        // the inverse's small-argument side comes from the original's right tail
        Tail::Slope => Tail::Slope,
        Tail::Zero => Tail::Const,
        Tail::Const => Tail::Infinite,
        Tail::Infinite => Tail::Infinite,
    };
    let right = match g.left {
        // the inverse's large-argument side comes from the original's left tail
        Tail::Slope => Tail::Slope,
        Tail::Const => Tail::Zero,
        Tail::Infinite => Tail::Const,
        Tail::Zero => Tail::Zero,
    };
    MonotoneFn::grid(Direction::Decreasing, knots, left, right)
}

fn invert_stairs(s: &StairFn) -> Result<MonotoneFn> {
    // dedupe equal consecutive values, keeping the first (leftmost) abscissa
    let mut xs = vec![0.0];
    let mut vs = vec![s.initial];
    for &(x, v) in &s.steps {
        if v == *vs.last().unwrap() {
            continue;
        }
        xs.push(x);
        vs.push(v);
    }
    // f = vs[i] on [xs[i], xs[i+1}) with xs[0] = 0 (initial piece)
    let k = vs.len() - 1;
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(k + 1);
    for i in (0..=k).rev() {
        // value vs[i] is attained from xs[i]; f(y) <= x first at y = xs[i]
        if vs[i].is_finite() {
            steps.push((vs[i], xs[i]));
        }
    }
    let initial = f64::INFINITY; // below the smallest value the preimage is empty
    MonotoneFn::staircase(Direction::Decreasing, (0.0, f64::INFINITY), initial, steps)
}
