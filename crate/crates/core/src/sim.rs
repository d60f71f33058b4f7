//! Seeded Monte Carlo simulation of the chains the analytic bounds cover:
//! random-walk Metropolis on heavy-tailed targets, the one-dimensional
//! jump-hold chain, pseudo-marginal RWM with weight laws, IMH on power
//! pairs, and finite chains; with nested-MC decay estimation and batch-means
//! asymptotic variance.
//!
//! Reproducibility: every replica draws from its own ChaCha streams keyed by
//! (seed, replica, purpose). Identical configs produce identical outputs
//! under any scheduling, and paired algorithms (pseudo-marginal vs marginal)
//! share proposal and acceptance streams exactly.

use crate::chain::FiniteChain;
use crate::error::{Result, SubgeoError};
use crate::rwm::TargetSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TargetCfg {
    /// heavy-tailed family on R^d
    HeavyTail { spec: TargetSpec },
    /// jump-hold chain on [1, inf): P(x,.) = w(x) nu + (1 - w(x)) delta_x
    Jump { a: f64, b: f64 },
    /// IMH pair on [1, inf): target density ~ x^{-p}, proposal ~ x^{-q}
    PowerPair { p: f64, q: f64 },
    Finite { chain: FiniteChain },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightLaw {
    Degenerate,
    TwoPoint { lo: f64, hi: f64, p_lo: f64 },
    Pareto { alpha: f64 },
}

impl WeightLaw {
    pub fn mean(&self) -> f64 {
        match self {
            WeightLaw::Degenerate => 1.0,
            WeightLaw::TwoPoint { lo, hi, p_lo } => lo * p_lo + hi * (1.0 - p_lo),
            WeightLaw::Pareto { alpha } => (1.0 - 1.0 / alpha) * alpha / (alpha - 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightLaw::Pareto { alpha } if !(*alpha > 1.0) => {
                return Err(SubgeoError::InvalidConfig(
                    "pareto weights need alpha > 1".into(),
                ))
            }
            WeightLaw::TwoPoint { lo, hi, p_lo } => {
                if !(*lo >= 0.0 && hi > lo && (0.0..=1.0).contains(p_lo)) {
                    return Err(SubgeoError::InvalidConfig("bad two-point weights".into()));
                }
            }
            _ => {}
        }
        if (self.mean() - 1.0).abs() > 1e-10 {
            return Err(SubgeoError::InvalidConfig(format!(
                "weight law mean {} differs from 1",
                self.mean()
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            WeightLaw::Degenerate => 1.0,
            WeightLaw::TwoPoint { lo, hi, p_lo } => {
                if rng.gen::<f64>() < *p_lo {
                    *lo
                } else {
                    *hi
                }
            }
            WeightLaw::Pareto { alpha } => {
                let xm = 1.0 - 1.0 / alpha;
                let u: f64 = rng.gen();
                xm * (1.0 - u).powf(-1.0 / alpha)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelCfg {
    Rwm { sigma: f64 },
    PmRwm { sigma: f64, weights: WeightLaw },
    Imh,
    /// jump-hold dynamics of the Jump target
    Hold,
    /// transition by the finite chain's rows
    Finite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitCfg {
    /// from mu by direct or rejection sampling
    Warm,
    Point { x: Vec<f64> },
    /// warm draw shifted by a fixed vector
    Offset { x: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub target: TargetCfg,
    pub kernel: KernelCfg,
    pub n_steps: usize,
    pub n_replicas: usize,
    pub seed: u64,
    pub init: InitCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// one row per step (including the initial state)
    pub states: Vec<Vec<f64>>,
    pub accepts: Vec<bool>,
    /// pseudo-marginal weight path, when applicable
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub replicas: Vec<Trajectory>,
}

const PURPOSE_INIT: u64 = 0;
const PURPOSE_PROPOSAL: u64 = 1;
const PURPOSE_ACCEPT: u64 = 2;
const PURPOSE_WEIGHT: u64 = 3;

fn stream_rng(seed: u64, replica: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&0x73756267656f5f31u64.to_le_bytes());
    let mut r = ChaCha8Rng::from_seed(key);
    r.set_stream(replica.wrapping_mul(8) + purpose);
    r
}

/// Potential of a heavy-tailed family (up to an additive constant).
pub fn potential(spec: &TargetSpec, x: &[f64]) -> Result<f64> {
    let u = match spec {
        TargetSpec::StudentT { d, tau } => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            0.5 * (*d as f64 + tau) * (tau + r2).ln()
        }
        TargetSpec::ProductStudent { eta, .. } => x
            .iter()
            .map(|v| 0.5 * (1.0 + eta) * (1.0 + v * v).ln())
            .sum(),
        TargetSpec::SubexpProduct { eta, tau, .. } => x
            .iter()
            .map(|v| (tau + v * v).powf(eta / 2.0))
            .sum(),
        _ => {
            return Err(SubgeoError::InvalidConfig(
                "no evaluable potential for this family".into(),
            ))
        }
    };
    if !u.is_finite() {
        return Err(SubgeoError::Numerical(format!(
            "potential not finite at |x|^2 = {}",
            x.iter().map(|v| v * v).sum::<f64>()
        )));
    }
    Ok(u)
}

/// Exact draw from a heavy-tailed target (direct for the Student families,
/// rejection from the exp(-|y|^eta) envelope for the sub-exponential one).
pub fn sample_target(spec: &TargetSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match spec {
        TargetSpec::StudentT { d, tau } => {
            let chi = ChiSquared::new(*tau).map_err(|e| {
                SubgeoError::InvalidConfig(format!("chi-squared parameter: {e}"))
            })?;
            let g: f64 = chi.sample(rng);
            let scale = (*tau / g).sqrt();
            Ok((0..*d)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * scale
                })
                .collect())
        }
        TargetSpec::ProductStudent { d, eta } => {
            let chi = ChiSquared::new(*eta).map_err(|e| {
                SubgeoError::InvalidConfig(format!("chi-squared parameter: {e}"))
            })?;
            Ok((0..*d)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    let g: f64 = chi.sample(rng);
                    z / g.sqrt()
                })
                .collect())
        }
        TargetSpec::SubexpProduct { d, eta, tau } => {
            let gamma = Gamma::new(1.0 / eta, 1.0).map_err(|e| {
                SubgeoError::InvalidConfig(format!("gamma parameter: {e}"))
            })?;
            let mut out = Vec::with_capacity(*d as usize);
            for _ in 0..*d {
                loop {
                    let g: f64 = gamma.sample(rng);
                    let y = g.powf(1.0 / eta);
                    let log_acc = -((tau + y * y).powf(eta / 2.0) - y.powf(*eta));
                    if rng.gen::<f64>().ln() < log_acc {
                        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        out.push(sign * y);
                        break;
                    }
                }
            }
            Ok(out)
        }
        _ => Err(SubgeoError::InvalidConfig(
            "no exact sampler for this family".into(),
        )),
    }
}

// inverse-cdf draw on [1, inf) with P(X > t) = t^{-expo}
fn power_tail_draw(expo: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen();
    (-(1.0 - u).ln() / expo).exp()
}

fn init_state(target: &TargetCfg, init: &InitCfg, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match (target, init) {
        (_, InitCfg::Point { x }) => Ok(x.clone()),
        (TargetCfg::HeavyTail { spec }, InitCfg::Warm) => sample_target(spec, rng),
        (TargetCfg::HeavyTail { spec }, InitCfg::Offset { x }) => {
            let mut v = sample_target(spec, rng)?;
            for (a, b) in v.iter_mut().zip(x) {
                *a += b;
            }
            Ok(v)
        }
        (TargetCfg::Jump { a, b }, InitCfg::Warm) => {
            Ok(vec![power_tail_draw(a - b - 1.0, rng).ln()])
        }
        (TargetCfg::PowerPair { p, .. }, InitCfg::Warm) => {
            Ok(vec![power_tail_draw(p - 1.0, rng).ln()])
        }
        (TargetCfg::Finite { chain }, InitCfg::Warm) => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &m) in chain.mu.iter().enumerate() {
                acc += m;
                if u < acc {
                    return Ok(vec![i as f64]);
                }
            }
            Ok(vec![(chain.n() - 1) as f64])
        }
        _ => Err(SubgeoError::InvalidConfig(
            "unsupported target/init combination".into(),
        )),
    }
}

struct Step<'a> {
    target: &'a TargetCfg,
    kernel: &'a KernelCfg,
}

impl<'a> Step<'a> {
    /// One transition in place; returns whether the move was accepted.
    fn advance(
        &self,
        x: &mut Vec<f64>,
        w: &mut f64,
        rng_prop: &mut ChaCha8Rng,
        rng_acc: &mut ChaCha8Rng,
        rng_w: &mut ChaCha8Rng,
    ) -> Result<bool> {
        match (self.target, self.kernel) {
            (TargetCfg::HeavyTail { spec }, KernelCfg::Rwm { sigma }) => {
                let y: Vec<f64> = x
                    .iter()
                    .map(|&v| {
                        let z: f64 = rng_prop.sample(StandardNormal);
                        v + sigma * z
                    })
                    .collect();
                let log_a = potential(spec, x)? - potential(spec, &y)?;
                let u: f64 = rng_acc.gen();
                if u.ln() < log_a {
                    *x = y;
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
            (TargetCfg::HeavyTail { spec }, KernelCfg::PmRwm { sigma, weights }) => {
                let y: Vec<f64> = x
                    .iter()
                    .map(|&v| {
                        let z: f64 = rng_prop.sample(StandardNormal);
                        v + sigma * z
                    })
                    .collect();
                let u_new = weights.draw(rng_w);
                let log_a = potential(spec, x)? - potential(spec, &y)? + (u_new / *w).ln();
                let u: f64 = rng_acc.gen();
                if u.ln() < log_a {
                    *x = y;
                    *w = u_new;
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
            (TargetCfg::Jump { a, b }, KernelCfg::Hold) => {
                // state is log x; jump with probability w(x) = x^{-b}
                let u: f64 = rng_acc.gen();
                if u.ln() < -b * x[0] {
                    x[0] = power_tail_draw(a - 1.0, rng_prop).ln();
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
            (TargetCfg::PowerPair { p, q }, KernelCfg::Imh) => {
                // state is log x; w = d mu / d nu ~ x^{q - p}
                let ly = power_tail_draw(q - 1.0, rng_prop).ln();
                let log_a = (q - p) * (ly - x[0]);
                let u: f64 = rng_acc.gen();
                if u.ln() < log_a {
                    x[0] = ly;
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
            (TargetCfg::Finite { chain }, KernelCfg::Finite) => {
                let i = x[0] as usize;
                let u: f64 = rng_prop.gen();
                let mut acc = 0.0;
                let mut j = chain.n() - 1;
                for (k, &pk) in chain.p[i].iter().enumerate() {
                    acc += pk;
                    if u < acc {
                        j = k;
                        break;
                    }
                }
                let moved = j != i;
                x[0] = j as f64;
                Ok(moved)
            }
            _ => Err(SubgeoError::InvalidConfig(
                "unsupported target/kernel combination".into(),
            )),
        }
    }

    fn needs_weight(&self) -> bool {
        matches!(self.kernel, KernelCfg::PmRwm { .. })
    }
}

/// Run the configured ensemble; replicas are independent streams and run in
/// parallel with a deterministic collection order.
pub fn run(config: &SimConfig) -> Result<Ensemble> {
    validate_config(config)?;
    let step = Step {
        target: &config.target,
        kernel: &config.kernel,
    };
    let replicas: Result<Vec<Trajectory>> = (0..config.n_replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng_init = stream_rng(config.seed, rep, PURPOSE_INIT);
            let mut rng_prop = stream_rng(config.seed, rep, PURPOSE_PROPOSAL);
            let mut rng_acc = stream_rng(config.seed, rep, PURPOSE_ACCEPT);
            let mut rng_w = stream_rng(config.seed, rep, PURPOSE_WEIGHT);
            let mut x = init_state(&config.target, &config.init, &mut rng_init)?;
            let mut w = match &config.kernel {
                KernelCfg::PmRwm { weights, .. } => weights.draw(&mut rng_w),
                _ => 1.0,
            };
            let mut states = Vec::with_capacity(config.n_steps + 1);
            let mut accepts = Vec::with_capacity(config.n_steps);
            let mut weights = step.needs_weight().then(Vec::new);
            states.push(x.clone());
            if let Some(ws) = weights.as_mut() {
                ws.push(w);
            }
            for _ in 0..config.n_steps {
                let acc = step.advance(&mut x, &mut w, &mut rng_prop, &mut rng_acc, &mut rng_w)?;
                states.push(x.clone());
                accepts.push(acc);
                if let Some(ws) = weights.as_mut() {
                    ws.push(w);
                }
            }
            Ok(Trajectory {
                states,
                accepts,
                weights,
            })
        })
        .collect();
    Ok(Ensemble {
        replicas: replicas?,
    })
}

fn validate_config(config: &SimConfig) -> Result<()> {
    if config.n_replicas == 0 || config.n_steps == 0 {
        return Err(SubgeoError::InvalidConfig(
            "need at least one replica and one step".into(),
        ));
    }
    match &config.target {
        TargetCfg::Jump { a, b } => {
            if !(*a > 1.0 && *b > 0.0 && *b < a - 1.0) {
                return Err(SubgeoError::InvalidConfig(
                    "jump chain needs a > 1, 0 < b < a - 1".into(),
                ));
            }
        }
        TargetCfg::PowerPair { p, q } => {
            if !(*p > 1.0 && *q >= *p) {
                return Err(SubgeoError::InvalidConfig(
                    "power pair needs q >= p > 1 (proposal no heavier than target)".into(),
                ));
            }
        }
        TargetCfg::HeavyTail { spec } => spec.validate()?,
        TargetCfg::Finite { chain } => chain.validate()?,
    }
    if let KernelCfg::PmRwm { weights, .. } = &config.kernel {
        weights.validate()?;
    }
    Ok(())
}

/// Mean acceptance over an ensemble with a standard error: across-replica
/// spread when several replicas exist, batch means on the indicator sequence
/// for a single replica.
pub fn mean_acceptance(ens: &Ensemble) -> (f64, f64) {
    let mut means = Vec::new();
    let mut total = 0.0;
    let mut count = 0.0;
    for t in &ens.replicas {
        let s: f64 = t.accepts.iter().map(|&a| a as u64 as f64).sum();
        total += s;
        count += t.accepts.len() as f64;
        means.push(s / t.accepts.len() as f64);
    }
    let mean = total / count;
    let se = if ens.replicas.len() > 1 {
        let m = means.len() as f64;
        let mbar = means.iter().sum::<f64>() / m;
        let v = means.iter().map(|x| (x - mbar) * (x - mbar)).sum::<f64>() / (m - 1.0);
        (v / m).sqrt()
    } else {
        let f: Vec<f64> = ens.replicas[0]
            .accepts
            .iter()
            .map(|&a| a as u64 as f64)
            .collect();
        batch_means_asvar(&f)
            .map(|r| (r.asym_variance / f.len() as f64).sqrt())
            .unwrap_or(f64::NAN)
    };
    (mean, se)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub asym_variance: f64,
    pub batches: usize,
    pub batch_len: usize,
    /// Gaussian standard error of the asymptotic-variance estimate itself
    pub asvar_se: f64,
}

/// Batch-means estimator of the asymptotic variance with floor(sqrt(n))
/// batches; the trajectory must hold at least 100 batches of 10.
pub fn batch_means_asvar(f_path: &[f64]) -> Result<BatchMeans> {
    let n = f_path.len();
    if n < 1000 {
        return Err(SubgeoError::InvalidParameter(format!(
            "batch means needs at least 1000 points (100 batches of 10), got {n}"
        )));
    }
    let m = (n as f64).sqrt().floor() as usize;
    let b = n / m;
    let used = m * b;
    let mean: f64 = f_path[..used].iter().sum::<f64>() / used as f64;
    let mut var_batch = 0.0;
    for k in 0..m {
        let seg = &f_path[k * b..(k + 1) * b];
        let bm = seg.iter().sum::<f64>() / b as f64;
        var_batch += (bm - mean) * (bm - mean);
    }
    var_batch /= (m - 1) as f64;
    let asvar = b as f64 * var_batch;
    Ok(BatchMeans {
        mean,
        asym_variance: asvar,
        batches: m,
        batch_len: b,
        asvar_se: asvar * (2.0 / (m as f64 - 1.0)).sqrt(),
    })
}

/// Test functions evaluable on simulated states.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestFn {
    /// indicator of [lo, hi] on x (or e^x for log-coordinate chains)
    IndicatorInterval { lo: f64, hi: f64 },
    Coordinate { index: usize },
    /// per-state values for finite chains
    Vector { values: Vec<f64> },
}

impl TestFn {
    pub fn eval(&self, target: &TargetCfg, x: &[f64]) -> f64 {
        match self {
            TestFn::IndicatorInterval { lo, hi } => {
                let v = match target {
                    TargetCfg::Jump { .. } | TargetCfg::PowerPair { .. } => x[0].exp(),
                    _ => x[0],
                };
                ((v >= *lo) && (v <= *hi)) as u64 as f64
            }
            TestFn::Coordinate { index } => x[*index],
            TestFn::Vector { values } => values[x[0] as usize],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub n: Vec<usize>,
    /// bias-corrected nested-MC estimate of ||P^n f - mu(f)||_2^2
    pub value: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub outer: usize,
    pub inner: usize,
    /// the naive between-group variance overestimates by E[s^2_w]/inner;
    /// `value` subtracts that correction
    pub bias_note: String,
}

impl DecayEstimate {
    /// CI-weighted log-log decay exponent over entries with a positive lower
    /// confidence bound.
    pub fn fitted_exponent(&self) -> Option<f64> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for i in 0..self.n.len() {
            if self.n[i] == 0 || self.value[i] <= 0.0 || self.ci_lo[i] <= 0.0 {
                continue;
            }
            // floor the relative width so early high-precision points do
            // not drown the late ones that carry the asymptotic slope
            let rel = ((self.ci_hi[i] - self.ci_lo[i]) / self.value[i]).max(0.25);
            xs.push((self.n[i] as f64).ln());
            ys.push(self.value[i].ln());
            ws.push(1.0 / (rel * rel));
        }
        if xs.len() < 3 {
            return None;
        }
        Some(-crate::quad::weighted_ls_slope(&xs, &ys, &ws))
    }
}

/// Outer-sample design for the nested estimator. Stratified draws place the
/// outer warm starts at deterministic midpoint quantiles of mu (available
/// when the target has a closed inverse CDF), removing the Poisson jitter of
/// rare tail starts that otherwise dominates the variance estimate at large
/// horizons.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterDesign {
    IidWarm,
    StratifiedQuantiles,
}

/// Inner-value smoothing for the nested estimator: `Conditional { steps }`
/// replaces f(X_n) by the exact k-step conditional expectation
/// E[f(X_n) | X_{n-k}], which is unbiased for the same conditional mean and
/// strictly reduces the inner variance. Available where the kernel admits a
/// closed k-step conditional (the jump chain, finite chains).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InnerSmoothing {
    None,
    Conditional { steps: usize },
}

/// Exact k-step conditional expectations m_k(x) = E[f(X_k) | X_0 = x] for
/// the jump chain with f = 1_{[lo, hi]}:
/// m_k(x) = (1-w)^k f(x) + sum_t (1-w)^{t-1} w G_{k-t}, with the scalars
/// G_j = nu(m_j) from closed-form power integrals.
struct JumpConditional {
    a: f64,
    b: f64,
    lo: f64,
    hi: f64,
    g: Vec<f64>, // G_0..G_{k-1}
    k: usize,
}

impl JumpConditional {
    fn new(a: f64, b: f64, lo: f64, hi: f64, k: usize) -> Self {
        // nu((1-w)^m f) and nu((1-w)^m w) by binomial expansion:
        // nu(x^{-c}) = (a-1)/(a+c-1), restricted to [lo, hi] for the f term
        let lo = lo.max(1.0);
        let nu_pow_f = |c: f64| -> f64 {
            if hi <= lo {
                return 0.0;
            }
            (a - 1.0) / (a + c - 1.0)
                * (lo.powf(-(a + c - 1.0)) - hi.powf(-(a + c - 1.0)))
        };
        let nu_pow = |c: f64| -> f64 { (a - 1.0) / (a + c - 1.0) };
        let binom_sum = |m: usize, f_restricted: bool, extra_w: bool| -> f64 {
            let mut acc = 0.0;
            let mut coef = 1.0; // C(m, i) (-1)^i
            for i in 0..=m {
                let c = b * i as f64 + if extra_w { b } else { 0.0 };
                let term = if f_restricted { nu_pow_f(c) } else { nu_pow(c) };
                acc += coef * term;
                coef *= -((m - i) as f64) / (i as f64 + 1.0);
            }
            acc
        };
        let mut g = vec![0.0; k.max(1)];
        for j in 0..k.max(1) {
            // G_j = nu((1-w)^j f) + sum_{t=1}^{j} nu((1-w)^{t-1} w) G_{j-t}
            let mut v = binom_sum(j, true, false);
            for t in 1..=j {
                v += binom_sum(t - 1, false, true) * g[j - t];
            }
            g[j] = v;
        }
        JumpConditional { a, b, lo, hi, k, g }
    }

    /// m_j(x) for log-coordinate state lx, any j <= k.
    fn eval(&self, j: usize, lx: f64) -> f64 {
        let w = (-self.b * lx).exp();
        let x = lx.exp();
        let f = (x >= self.lo && x <= self.hi) as u64 as f64;
        if j == 0 {
            return f;
        }
        let s = 1.0 - w;
        let mut acc = s.powi(j as i32) * f;
        let mut pw = w;
        for t in 1..=j {
            acc += pw * self.g[j - t];
            pw *= s;
        }
        let _ = self.a;
        acc
    }
}

enum Smoother {
    Raw,
    Jump(JumpConditional),
    /// m_k = P^k f for finite chains
    Finite { powers: Vec<Vec<f64>> },
}

impl Smoother {
    /// value to record at grid time n given the stored path
    fn value(&self, target: &TargetCfg, f: &TestFn, path: &[Vec<f64>], n: usize, k: usize) -> f64 {
        match self {
            Smoother::Raw => f.eval(target, &path[n]),
            Smoother::Jump(jc) => {
                let j = k.min(n).min(jc.k);
                jc.eval(j, path[n - j][0])
            }
            Smoother::Finite { powers } => {
                let j = k.min(n).min(powers.len() - 1);
                powers[j][path[n - j][0] as usize]
            }
        }
    }
}

/// Nested Monte Carlo estimate of ||P^n f - mu(f)||_2^2 =
/// Var_{X0 ~ mu}( E[f(X_n) | X0] ): outer warm draws of X0, inner replicated
/// n-step runs, the standard inner-variance bias subtraction, and an outer
/// bootstrap for confidence intervals.
pub fn empirical_decay(
    target: &TargetCfg,
    kernel: &KernelCfg,
    f: &TestFn,
    n_grid: &[usize],
    outer: usize,
    inner: usize,
    seed: u64,
    smoothing: InnerSmoothing,
    design: OuterDesign,
) -> Result<DecayEstimate> {
    if outer < 8 || inner < 2 {
        return Err(SubgeoError::InvalidConfig(
            "nested MC needs outer >= 8 and inner >= 2 for the requested CIs".into(),
        ));
    }
    if matches!(design, OuterDesign::StratifiedQuantiles)
        && !matches!(target, TargetCfg::Jump { .. } | TargetCfg::PowerPair { .. })
    {
        return Err(SubgeoError::InvalidConfig(
            "stratified outer design needs a closed inverse CDF (jump or power-pair targets)"
                .into(),
        ));
    }
    let n_max = *n_grid.iter().max().unwrap_or(&0);
    let step = Step { target, kernel };
    let (smoother, k_cond) = match smoothing {
        InnerSmoothing::None => (Smoother::Raw, 0),
        InnerSmoothing::Conditional { steps } => match (target, f) {
            (TargetCfg::Jump { a, b }, TestFn::IndicatorInterval { lo, hi }) => (
                Smoother::Jump(JumpConditional::new(*a, *b, *lo, *hi, steps)),
                steps,
            ),
            (TargetCfg::Finite { chain }, TestFn::Vector { values }) => {
                let mut powers = vec![values.clone()];
                for j in 1..=steps {
                    powers.push(crate::chain::mat_vec(&chain.p, &powers[j - 1]));
                }
                (Smoother::Finite { powers }, steps)
            }
            _ => {
                return Err(SubgeoError::InvalidConfig(
                    "conditional smoothing needs a closed k-step conditional \
                     (jump chain with an interval indicator, or a finite chain)"
                        .into(),
                ))
            }
        },
    };
    let per_outer: Result<Vec<(Vec<f64>, Vec<f64>)>> = (0..outer as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng_init = stream_rng(seed, i + 1, PURPOSE_INIT);
            let x0 = match design {
                OuterDesign::IidWarm => init_state(target, &InitCfg::Warm, &mut rng_init)?,
                OuterDesign::StratifiedQuantiles => {
                    let u = (i as f64 + 0.5) / outer as f64;
                    let expo = match target {
                        TargetCfg::Jump { a, b } => a - b - 1.0,
                        TargetCfg::PowerPair { p, .. } => p - 1.0,
                        _ => unreachable!(),
                    };
                    vec![-(1.0 - u).ln() / expo]
                }
            };
            let mut sums = vec![0.0; n_grid.len()];
            let mut sqs = vec![0.0; n_grid.len()];
            for j in 0..inner as u64 {
                let rep = (i * inner as u64 + j) * 31 + 17;
                let mut rng_prop = stream_rng(seed, rep, PURPOSE_PROPOSAL);
                let mut rng_acc = stream_rng(seed, rep, PURPOSE_ACCEPT);
                let mut rng_w = stream_rng(seed, rep, PURPOSE_WEIGHT);
                let mut x = x0.clone();
                let mut w = 1.0;
                let mut path: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
                path.push(x.clone());
                for _ in 0..n_max {
                    step.advance(&mut x, &mut w, &mut rng_prop, &mut rng_acc, &mut rng_w)?;
                    path.push(x.clone());
                }
                for (gi, &n) in n_grid.iter().enumerate() {
                    let v = smoother.value(target, f, &path, n, k_cond);
                    sums[gi] += v;
                    sqs[gi] += v * v;
                }
            }
            let k = inner as f64;
            let means: Vec<f64> = sums.iter().map(|s| s / k).collect();
            let vars: Vec<f64> = sums
                .iter()
                .zip(&sqs)
                .map(|(s, q)| ((q - s * s / k) / (k - 1.0)).max(0.0))
                .collect();
            Ok((means, vars))
        })
        .collect();
    let per_outer = per_outer?;
    let estimate = |idx: &[usize]| -> Vec<f64> {
        let m = idx.len() as f64;
        let mut out = Vec::with_capacity(n_grid.len());
        for g in 0..n_grid.len() {
            let mean: f64 = idx.iter().map(|&i| per_outer[i].0[g]).sum::<f64>() / m;
            let var: f64 = idx
                .iter()
                .map(|&i| (per_outer[i].0[g] - mean).powi(2))
                .sum::<f64>()
                / (m - 1.0);
            let wbar: f64 = idx.iter().map(|&i| per_outer[i].1[g]).sum::<f64>() / m;
            out.push(var - wbar / inner as f64);
        }
        out
    };
    let all: Vec<usize> = (0..outer).collect();
    let value = estimate(&all);
    let bboot = 200;
    let mut boots: Vec<Vec<f64>> = Vec::with_capacity(bboot);
    let mut rng = stream_rng(seed, 0, 7);
    for _ in 0..bboot {
        let idx: Vec<usize> = (0..outer).map(|_| rng.gen_range(0..outer)).collect();
        boots.push(estimate(&idx));
    }
    let mut ci_lo = Vec::with_capacity(n_grid.len());
    let mut ci_hi = Vec::with_capacity(n_grid.len());
    for g in 0..n_grid.len() {
        let mut vals: Vec<f64> = boots.iter().map(|b| b[g]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ci_lo.push(vals[(bboot as f64 * 0.025) as usize]);
        ci_hi.push(vals[(bboot as f64 * 0.975) as usize]);
    }
    Ok(DecayEstimate {
        n: n_grid.to_vec(),
        value,
        ci_lo,
        ci_hi,
        outer,
        inner,
        bias_note: "naive Var of conditional means corrected by -mean(s^2)/inner".into(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TvProxy {
    pub n: Vec<usize>,
    /// fraction of replica pairs not yet coupled by step n
    pub uncoupled: Vec<f64>,
}

impl TvProxy {
    pub fn fitted_exponent(&self) -> Option<f64> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..self.n.len() {
            if self.n[i] > 0 && self.uncoupled[i] > 0.0 {
                xs.push((self.n[i] as f64).ln());
                ys.push(self.uncoupled[i].ln());
            }
        }
        if xs.len() < 3 {
            return None;
        }
        Some(-crate::quad::ls_slope(&xs, &ys))
    }
}

/// Coupling-based TV proxy for the jump chain: one chain from x0, one warm,
/// coupled on the shared jump event (same uniform, same nu draw). This is an
/// estimator of a TV upper bound, not a theorem.
pub fn jump_tv_proxy(
    a: f64,
    b: f64,
    x0: f64,
    n_grid: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<TvProxy> {
    if !(a > 1.0 && b > 0.0 && b < a - 1.0) {
        return Err(SubgeoError::InvalidConfig("bad jump parameters".into()));
    }
    let n_max = *n_grid.iter().max().unwrap_or(&0);
    let times: Vec<usize> = (0..replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng_init = stream_rng(seed, rep, PURPOSE_INIT);
            let mut rng_prop = stream_rng(seed, rep, PURPOSE_PROPOSAL);
            let mut rng_acc = stream_rng(seed, rep, PURPOSE_ACCEPT);
            let mut lx = x0.ln();
            let mut ly = power_tail_draw(a - b - 1.0, &mut rng_init).ln();
            for n in 1..=n_max {
                let u: f64 = rng_acc.gen::<f64>().ln();
                let jump_x = u < -b * lx;
                let jump_y = u < -b * ly;
                if jump_x || jump_y {
                    let fresh = power_tail_draw(a - 1.0, &mut rng_prop).ln();
                    if jump_x {
                        lx = fresh;
                    }
                    if jump_y {
                        ly = fresh;
                    }
                    if jump_x && jump_y {
                        return n;
                    }
                }
                if lx == ly {
                    return n;
                }
            }
            n_max + 1
        })
        .collect();
    let uncoupled: Vec<f64> = n_grid
        .iter()
        .map(|&n| times.iter().filter(|&&t| t > n).count() as f64 / replicas as f64)
        .collect();
    Ok(TvProxy {
        n: n_grid.to_vec(),
        uncoupled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let c = cdf(x);
            d = d.max((c - i as f64 / n).abs());
            d = d.max(((i + 1) as f64 / n - c).abs());
        }
        d
    }

    #[test]
    fn determinism_byte_identical() {
        let cfg = SimConfig {
            target: TargetCfg::HeavyTail {
                spec: TargetSpec::StudentT { d: 2, tau: 5.0 },
            },
            kernel: KernelCfg::Rwm { sigma: 0.5 },
            n_steps: 200,
            n_replicas: 4,
            seed: 11,
            init: InitCfg::Warm,
        };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
    }

    #[test]
    fn sigma_zero_is_constant_chain() {
        let cfg = SimConfig {
            target: TargetCfg::HeavyTail {
                spec: TargetSpec::StudentT { d: 2, tau: 5.0 },
            },
            kernel: KernelCfg::Rwm { sigma: 0.0 },
            n_steps: 50,
            n_replicas: 1,
            seed: 3,
            init: InitCfg::Warm,
        };
        let e = run(&cfg).unwrap();
        let t = &e.replicas[0];
        for s in &t.states {
            assert_eq!(s, &t.states[0]);
        }
    }

    #[test]
    fn rwm_matches_1d_student_t_marginal() {
        let tau = 5.0;
        let cfg = SimConfig {
            target: TargetCfg::HeavyTail {
                spec: TargetSpec::StudentT { d: 1, tau },
            },
            kernel: KernelCfg::Rwm { sigma: 1.5 },
            n_steps: 40_000,
            n_replicas: 1,
            seed: 5,
            init: InitCfg::Warm,
        };
        let e = run(&cfg).unwrap();
        let xs: Vec<f64> = e.replicas[0]
            .states
            .iter()
            .step_by(25)
            .map(|s| s[0])
            .collect();
        let t = StudentsT::new(0.0, 1.0, tau).unwrap();
        let d = ks_statistic(xs.clone(), |x| t.cdf(x));
        // thinned to ~1600 near-independent draws; 1% critical ~ 1.63/sqrt(n)
        let crit = 1.63 / (xs.len() as f64).sqrt();
        assert!(d < crit * 1.5, "KS = {d}, crit = {crit}");
    }

    #[test]
    fn jump_chain_marginal_and_holding() {
        let (a, b) = (4.0, 1.0);
        let cfg = SimConfig {
            target: TargetCfg::Jump { a, b },
            kernel: KernelCfg::Hold,
            n_steps: 20_000,
            n_replicas: 4,
            seed: 9,
            init: InitCfg::Warm,
        };
        let e = run(&cfg).unwrap();
        let xs: Vec<f64> = e
            .replicas
            .iter()
            .flat_map(|t| t.states.iter().step_by(40).map(|s| s[0].exp()))
            .collect();
        let d = ks_statistic(xs.clone(), |x| 1.0 - x.powf(-(a - b - 1.0)));
        let crit = 1.63 / (xs.len() as f64).sqrt();
        assert!(d < crit * 1.5, "KS = {d} crit = {crit}");
        // holding frequency near x matches 1 - w(x)
        let mut holds = 0.0;
        let mut tot = 0.0;
        for t in &e.replicas {
            for (k, win) in t.states.windows(2).enumerate() {
                let x = win[0][0].exp();
                if (2.0..2.5).contains(&x) {
                    tot += 1.0;
                    holds += (!t.accepts[k]) as u64 as f64;
                }
            }
        }
        let x_mid: f64 = 2.25;
        let expected = 1.0 - x_mid.powf(-b);
        assert!(
            (holds / tot - expected).abs() < 0.05,
            "holding {} vs {expected}",
            holds / tot
        );
        // empirical mu(A_eps) ~ eps^{(a-b-1)/b}
        let eps: f64 = 0.25;
        let t_eps = eps.powf(-1.0 / b);
        let frac = xs.iter().filter(|&&x| x >= t_eps).count() as f64 / xs.len() as f64;
        let want = eps.powf((a - b - 1.0) / b);
        assert!((frac - want).abs() < 0.3 * want, "{frac} vs {want}");
    }

    #[test]
    fn imh_power_pair_behaviour() {
        // q = p: the proposal equals the target, iid sampling, no rejections
        let cfg = SimConfig {
            target: TargetCfg::PowerPair { p: 3.0, q: 3.0 },
            kernel: KernelCfg::Imh,
            n_steps: 2000,
            n_replicas: 1,
            seed: 1,
            init: InitCfg::Warm,
        };
        let e = run(&cfg).unwrap();
        let rejects = e.replicas[0].accepts.iter().filter(|a| !**a).count();
        assert_eq!(rejects, 0);
        // mismatched pair: empirical holding in a far bucket dominates
        // 1 - w(x)^{-1} with w the true density ratio
        let (p, q) = (2.5, 4.0);
        let cfg = SimConfig {
            target: TargetCfg::PowerPair { p, q },
            kernel: KernelCfg::Imh,
            n_steps: 60_000,
            n_replicas: 1,
            seed: 2,
            init: InitCfg::Warm,
        };
        let e = run(&cfg).unwrap();
        let t = &e.replicas[0];
        let wf = |x: f64| ((p - 1.0) / (q - 1.0)) * x.powf(q - p);
        let mut holds = 0.0;
        let mut tot = 0.0;
        for (k, win) in t.states.windows(2).enumerate() {
            let x = win[0][0].exp();
            if x > 4.0 {
                tot += 1.0;
                holds += (!t.accepts[k]) as u64 as f64;
            }
        }
        let bound = 1.0 - 1.0 / wf(4.0);
        assert!(tot > 200.0, "not enough tail visits: {tot}");
        assert!(
            holds / tot >= bound - 3.0 * (0.25 / tot).sqrt(),
            "{} vs {bound}",
            holds / tot
        );
    }

    #[test]
    fn pm_pareto_weight_tail_slope() {
        // stationary mass of {w >= s} decays like s^{-(alpha-1)} (the
        // size-biased weight law tail)
        let alpha = 2.5;
        let cfg = SimConfig {
            target: TargetCfg::HeavyTail {
                spec: TargetSpec::StudentT { d: 1, tau: 5.0 },
            },
            kernel: KernelCfg::PmRwm {
                sigma: 1.0,
                weights: WeightLaw::Pareto { alpha },
            },
            n_steps: 60_000,
            n_replicas: 1,
            seed: 4,
            init: InitCfg::Warm,
        };
        let e = run(&cfg).unwrap();
        let ws = e.replicas[0].weights.as_ref().unwrap();
        let thresholds: Vec<f64> = (0..8).map(|i| 1.5f64 * 1.4f64.powi(i)).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &s in &thresholds {
            let frac = ws.iter().filter(|&&w| w >= s).count() as f64 / ws.len() as f64;
            if frac > 1e-3 {
                xs.push(s.ln());
                ys.push(frac.ln());
            }
        }
        let slope = crate::quad::ls_slope(&xs, &ys);
        assert!(
            (slope + (alpha - 1.0)).abs() < 0.25,
            "slope {slope} vs {}",
            -(alpha - 1.0)
        );
    }

    #[test]
    fn pm_acceptance_approaches_marginal_for_light_weights() {
        // paired runs share proposal and acceptance streams exactly
        let spec = TargetSpec::StudentT { d: 2, tau: 5.0 };
        let base = SimConfig {
            target: TargetCfg::HeavyTail { spec: spec.clone() },
            kernel: KernelCfg::Rwm { sigma: 0.8 },
            n_steps: 20_000,
            n_replicas: 2,
            seed: 21,
            init: InitCfg::Warm,
        };
        let marginal = run(&base).unwrap();
        let acc_m = mean_acceptance(&marginal).0;
        let mut diffs = Vec::new();
        for &alpha in &[5.0, 20.0, 100.0] {
            let cfg = SimConfig {
                kernel: KernelCfg::PmRwm {
                    sigma: 0.8,
                    weights: WeightLaw::Pareto { alpha },
                },
                ..base.clone()
            };
            let pm = run(&cfg).unwrap();
            diffs.push((mean_acceptance(&pm).0 - acc_m).abs());
        }
        assert!(diffs[2] < diffs[0], "{diffs:?}");
        assert!(diffs[2] < 0.02, "{diffs:?}");
    }

    #[test]
    fn batch_means_iid_and_two_state() {
        // iid uniforms: asymptotic variance = 1/12
        let mut rng = stream_rng(1, 0, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let bm = batch_means_asvar(&xs).unwrap();
        assert!((bm.asym_variance - 1.0 / 12.0).abs() < 4.0 * bm.asvar_se);
        // 2-state chain: var(P, f) = var(f) (1 + lam)/(1 - lam)
        let (p, q) = (0.2, 0.3);
        let chain = crate::chain::fixtures::two_state(p, q).unwrap();
        let cfg = SimConfig {
            target: TargetCfg::Finite { chain: chain.clone() },
            kernel: KernelCfg::Finite,
            n_steps: 200_000,
            n_replicas: 1,
            seed: 8,
            init: InitCfg::Warm,
        };
        let e = run(&cfg).unwrap();
        let f: Vec<f64> = e.replicas[0].states.iter().map(|s| s[0]).collect();
        let bm = batch_means_asvar(&f).unwrap();
        let lam = 1.0 - p - q;
        let varf = chain.mu[0] * chain.mu[1];
        let want = varf * (1.0 + lam) / (1.0 - lam);
        assert!(
            (bm.asym_variance - want).abs() < 5.0 * bm.asvar_se + 0.02 * want,
            "{} vs {want}",
            bm.asym_variance
        );
        assert!(batch_means_asvar(&f[..500]).is_err());
    }

    #[test]
    fn empirical_decay_independent_and_finite_oracle() {
        // independent kernel: estimate ~ 0 from n = 1 on
        let ind = crate::chain::fixtures::independent_kernel(&[0.3, 0.45, 0.25]).unwrap();
        let est = empirical_decay(
            &TargetCfg::Finite { chain: ind },
            &KernelCfg::Finite,
            &TestFn::Vector { values: vec![1.0, 0.0, 0.0] },
            &[0, 1, 2],
            64,
            64,
            12,
            InnerSmoothing::None,
            OuterDesign::IidWarm,
        )
        .unwrap();
        assert!(est.value[0] > 0.1);
        for g in 1..3 {
            assert!(est.ci_lo[g] <= 0.0 || est.value[g] < 5e-3, "n={g}");
        }
        // 5-state chain: matches exact decay within (padded) CI
        let c = crate::chain::fixtures::random_reversible_lazy(5, 3, 0.3).unwrap();
        let fvec = vec![1.0, 0.0, 0.0, 1.0, 0.0];
        let exact = crate::chain::exact_decay(&c, &fvec, 6);
        let est = empirical_decay(
            &TargetCfg::Finite { chain: c },
            &KernelCfg::Finite,
            &TestFn::Vector { values: fvec },
            &[0, 2, 4, 6],
            128,
            128,
            13,
            InnerSmoothing::Conditional { steps: 1 },
            OuterDesign::IidWarm,
        )
        .unwrap();
        for (g, &n) in est.n.iter().enumerate() {
            let want = exact.values[n];
            let pad = 0.3 * (est.ci_hi[g] - est.ci_lo[g]) + 2e-3;
            assert!(
                want >= est.ci_lo[g] - pad && want <= est.ci_hi[g] + pad,
                "n={n}: exact {want} vs CI [{}, {}]",
                est.ci_lo[g],
                est.ci_hi[g]
            );
        }
    }

    #[test]
    fn detailed_balance_smoke() {
        // empirical flow mu(A) P(A,B) vs mu(B) P(B,A) on a fixed partition
        let cfg = SimConfig {
            target: TargetCfg::Jump { a: 4.0, b: 1.0 },
            kernel: KernelCfg::Hold,
            n_steps: 100_000,
            n_replicas: 2,
            seed: 30,
            init: InitCfg::Warm,
        };
        let e = run(&cfg).unwrap();
        let cell = |x: f64| -> usize {
            if x < 2.0 {
                0
            } else if x < 4.0 {
                1
            } else {
                2
            }
        };
        let mut flow = [[0.0f64; 3]; 3];
        let mut tot = 0.0;
        for t in &e.replicas {
            for w in t.states.windows(2) {
                flow[cell(w[0][0].exp())][cell(w[1][0].exp())] += 1.0;
                tot += 1.0;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let a = flow[i][j] / tot;
                let b = flow[j][i] / tot;
                let se = ((a + b) / tot).sqrt();
                assert!((a - b).abs() <= 4.0 * se + 1e-4, "cells {i},{j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn log_space_acceptance_handles_huge_potentials() {
        // far in the tail |U| is enormous; log-space acceptance must not
        // overflow
        let spec = TargetSpec::SubexpProduct { d: 1, eta: 0.9, tau: 1.0 };
        let cfg = SimConfig {
            target: TargetCfg::HeavyTail { spec },
            kernel: KernelCfg::Rwm { sigma: 2.0 },
            n_steps: 500,
            n_replicas: 1,
            seed: 2,
            init: InitCfg::Point { x: vec![1e150] },
        };
        let e = run(&cfg).unwrap();
        assert!(e.replicas[0].states.iter().all(|s| s[0].is_finite()));
    }
}
