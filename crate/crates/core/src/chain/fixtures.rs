//! Named chains used across tests, the acceptance suite, and the CLI
//! fixture subcommand.

use super::{ChainFlags, FiniteChain};
use crate::error::{Result, SubgeoError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-state chain [[1-p, p], [q, 1-q]]; invariant law (q, p)/(p+q).
pub fn two_state(p: f64, q: f64) -> Result<FiniteChain> {
    if !(p > 0.0 && q > 0.0 && p <= 1.0 && q <= 1.0) {
        return Err(SubgeoError::InvalidParameter(
            "two_state needs p, q in (0, 1]".into(),
        ));
    }
    let z = p + q;
    FiniteChain::new(
        vec!["0".into(), "1".into()],
        vec![q / z, p / z],
        vec![vec![1.0 - p, p], vec![q, 1.0 - q]],
        ChainFlags { reversible: true, support_restricted: false },
    )
}

/// P(x, .) = mu for every x.
pub fn independent_kernel(mu: &[f64]) -> Result<FiniteChain> {
    let states = (0..mu.len()).map(|i| i.to_string()).collect();
    FiniteChain::new(
        states,
        mu.to_vec(),
        vec![mu.to_vec(); mu.len()],
        ChainFlags { reversible: true, support_restricted: false },
    )
}

pub fn identity_kernel(mu: &[f64]) -> Result<FiniteChain> {
    let n = mu.len();
    let p = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    FiniteChain::new(
        (0..n).map(|i| i.to_string()).collect(),
        mu.to_vec(),
        p,
        ChainFlags { reversible: true, support_restricted: false },
    )
}

/// Deterministic rotation on {1, ..., m}: P(x, x+1 mod m) = 1. Uniform
/// invariant law, not reversible; its additive reversibilization is the
/// symmetric +-1 walk.
pub fn circle_walk(m: usize) -> Result<FiniteChain> {
    if m < 2 {
        return Err(SubgeoError::InvalidParameter("circle walk needs m >= 2".into()));
    }
    let mut p = vec![vec![0.0; m]; m];
    for x in 0..m {
        p[x][(x + 1) % m] = 1.0;
    }
    FiniteChain::new(
        (1..=m).map(|i| i.to_string()).collect(),
        vec![1.0 / m as f64; m],
        p,
        ChainFlags::default(),
    )
}

/// Random walk on a complete weighted graph with symmetric Uniform(0,1)
/// weights (reversible by construction), then laziness eps Id + (1-eps) P.
pub fn random_reversible_lazy(n: usize, seed: u64, laziness: f64) -> Result<FiniteChain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.gen_range(0.05..1.0);
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    let row: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    let total: f64 = row.iter().sum();
    let mu: Vec<f64> = row.iter().map(|r| r / total).collect();
    let p: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| w[i][j] / row[i]).collect())
        .collect();
    let base = FiniteChain::new(
        (0..n).map(|i| i.to_string()).collect(),
        mu,
        p,
        ChainFlags { reversible: true, support_restricted: false },
    )?;
    if laziness > 0.0 {
        base.lazy(laziness)
    } else {
        Ok(base)
    }
}

/// The level chain on {(i, j) : 1 <= j <= i <= K}: move right along level i
/// until (i, i), then jump to (K', 1) with K' ~ nu. Convergent, but the
/// products (P*)^k P^k are reducible when nu charges every level.
pub fn counterexample_chain(nu: &[f64]) -> Result<FiniteChain> {
    let k_max = nu.len();
    if k_max < 2 || !(nu[0] > 0.0 && nu[0] < 1.0) {
        return Err(SubgeoError::InvalidParameter(
            "counterexample chain needs nu(1) in (0, 1) and K >= 2".into(),
        ));
    }
    let z: f64 = nu.iter().sum();
    if (z - 1.0).abs() > 1e-12 {
        return Err(SubgeoError::InvalidParameter("nu must sum to 1".into()));
    }
    let mut states: Vec<(usize, usize)> = Vec::new();
    for i in 1..=k_max {
        if nu[i - 1] > 0.0 {
            for j in 1..=i {
                states.push((i, j));
            }
        }
    }
    let idx = |i: usize, j: usize| -> usize {
        states.iter().position(|&s| s == (i, j)).unwrap()
    };
    let n = states.len();
    let norm: f64 = (1..=k_max).map(|i| nu[i - 1] * i as f64).sum();
    let mu: Vec<f64> = states.iter().map(|&(i, _)| nu[i - 1] / norm).collect();
    let mut p = vec![vec![0.0; n]; n];
    for (s, &(i, j)) in states.iter().enumerate() {
        if j < i {
            p[s][idx(i, j + 1)] = 1.0;
        } else {
            for (ii, &w) in nu.iter().enumerate() {
                if w > 0.0 {
                    p[s][idx(ii + 1, 1)] = w;
                }
            }
        }
    }
    FiniteChain::new(
        states.iter().map(|&(i, j)| format!("({i},{j})")).collect(),
        mu,
        p,
        ChainFlags::default(),
    )
}

/// Index of state (i, j) in the counterexample chain's ordering.
pub fn counterexample_index(nu: &[f64], i: usize, j: usize) -> Option<usize> {
    let mut pos = 0;
    for ii in 1..=nu.len() {
        if nu[ii - 1] > 0.0 {
            for jj in 1..=ii {
                if (ii, jj) == (i, j) {
                    return Some(pos);
                }
                pos += 1;
            }
        }
    }
    None
}

/// Verification record for the product kernels of the counterexample chain.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ProductReducibilityCheck {
    pub k: u32,
    /// (P*)^k P^k (i,i; i,i) for each level i > k, expected exactly 1
    pub diag: Vec<(usize, f64)>,
    pub all_absorbing: bool,
    /// E((P*)^k P^k, f_k) with f_k the centered indicator of {(i,i): i > k}
    pub dirichlet: f64,
    pub f_norm2: f64,
}

/// Check that (P*)^k P^k is reducible at every level i > k: the state (i, i)
/// is absorbing and the centered indicator of the high diagonal has zero
/// Dirichlet form.
pub fn check_product_reducibility(nu: &[f64], k: u32) -> Result<ProductReducibilityCheck> {
    let chain = counterexample_chain(nu)?;
    let t = chain.product_kernel(k)?;
    let mut diag = Vec::new();
    let mut all = true;
    for i in (k as usize + 1)..=nu.len() {
        if nu[i - 1] == 0.0 {
            continue;
        }
        let s = counterexample_index(nu, i, i).unwrap();
        let v = t.p[s][s];
        all &= v == 1.0;
        diag.push((i, v));
    }
    // f_k = 1_{A_k} - mu(A_k), A_k = {(i,i): i > k}
    let n = chain.n();
    let mut ind = vec![0.0; n];
    for i in (k as usize + 1)..=nu.len() {
        if nu[i - 1] > 0.0 {
            ind[counterexample_index(nu, i, i).unwrap()] = 1.0;
        }
    }
    let m = chain.mean(&ind);
    let f: Vec<f64> = ind.iter().map(|x| x - m).collect();
    let e = super::dirichlet_form(&t, &f, 2);
    let norm2: f64 = chain.mu.iter().zip(&f).map(|(w, x)| w * x * x).sum();
    Ok(ProductReducibilityCheck {
        k,
        diag,
        all_absorbing: all,
        dirichlet: e,
        f_norm2: norm2,
    })
}

/// Truncated geometric pmf nu(i) proportional to ratio^{i-1} on {1..k}.
pub fn geometric_pmf(ratio: f64, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|i| ratio.powi(i as i32)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

/// Grid discretization of the one-dimensional jump chain on [1, inf):
/// P(x, .) = w(x) nu(.) + (1 - w(x)) delta_x with nu proportional to x^{-a}
/// and w(x) = x^{-b}. Cells are geometric, masses are the exact continuous
/// cell masses renormalized, atoms sit at cell left endpoints.
#[derive(Debug, Clone)]
pub struct JumpChainGrid {
    pub chain: FiniteChain,
    pub a: f64,
    pub b: f64,
    pub points: Vec<f64>,
    pub nu: Vec<f64>,
    pub w: Vec<f64>,
    /// discarded tail masses of nu and mu
    pub truncation_nu: f64,
    pub truncation_mu: f64,
}

pub fn jump_chain(a: f64, b: f64, grid_max: f64, grid_step: f64) -> Result<JumpChainGrid> {
    if !(a > 1.0) || !(b > 0.0 && b < a - 1.0) {
        return Err(SubgeoError::InvalidParameter(format!(
            "jump chain needs a > 1 and 0 < b < a - 1, got a={a}, b={b}"
        )));
    }
    if !(grid_max > 1.0 && grid_step > 1.0) {
        return Err(SubgeoError::InvalidParameter(
            "jump chain grid needs grid_max > 1 and grid_step > 1".into(),
        ));
    }
    let mut points = vec![1.0_f64];
    while *points.last().unwrap() * grid_step < grid_max {
        let next = points.last().unwrap() * grid_step;
        points.push(next);
    }
    let m = points.len();
    let trunc_nu = grid_max.powf(-(a - 1.0));
    let trunc_mu = grid_max.powf(-(a - b - 1.0));
    let mut nu: Vec<f64> = (0..m)
        .map(|i| {
            let lo = points[i];
            let hi = if i + 1 < m { points[i + 1] } else { grid_max };
            lo.powf(-(a - 1.0)) - hi.powf(-(a - 1.0))
        })
        .collect();
    let z: f64 = nu.iter().sum();
    for v in nu.iter_mut() {
        *v /= z;
    }
    let w: Vec<f64> = points.iter().map(|x| x.powf(-b)).collect();
    let mut mu: Vec<f64> = nu.iter().zip(&w).map(|(n, w)| n / w).collect();
    let zm: f64 = mu.iter().sum();
    for v in mu.iter_mut() {
        *v /= zm;
    }
    let p: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row: Vec<f64> = nu.iter().map(|&nj| w[i] * nj).collect();
            row[i] += 1.0 - w[i];
            row
        })
        .collect();
    let chain = FiniteChain::new(
        points.iter().map(|x| format!("{x:.6e}")).collect(),
        mu,
        p,
        ChainFlags { reversible: true, support_restricted: false },
    )?;
    Ok(JumpChainGrid {
        chain,
        a,
        b,
        points,
        nu,
        w,
        truncation_nu: trunc_nu,
        truncation_mu: trunc_mu,
    })
}

/// Discrete independent Metropolis--Hastings kernel with proposal nu and
/// target mu on a shared finite space; w = mu/nu.
pub fn imh_discrete(mu: &[f64], nu: &[f64]) -> Result<FiniteChain> {
    let n = mu.len();
    if nu.len() != n {
        return Err(SubgeoError::InvalidParameter("imh needs matching dims".into()));
    }
    let w: Vec<f64> = mu
        .iter()
        .zip(nu)
        .map(|(&m, &v)| if v > 0.0 { m / v } else { f64::INFINITY })
        .collect();
    let mut p = vec![vec![0.0; n]; n];
    for x in 0..n {
        let mut stay = 0.0;
        for y in 0..n {
            if y == x {
                continue;
            }
            let acc = (w[y] / w[x]).min(1.0);
            p[x][y] = nu[y] * acc;
            stay += nu[y] * (1.0 - acc);
        }
        p[x][x] = stay + nu[x];
    }
    FiniteChain::new(
        (0..n).map(|i| i.to_string()).collect(),
        mu.to_vec(),
        p,
        ChainFlags { reversible: true, support_restricted: false },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{dirichlet_form, exact_decay};

    #[test]
    fn counterexample_invariant_law_matches() {
        let nu = geometric_pmf(0.5, 6);
        let c = counterexample_chain(&nu).unwrap();
        let norm: f64 = nu.iter().enumerate().map(|(i, v)| v * (i + 1) as f64).sum();
        let mut pos = 0;
        for i in 1..=6 {
            for _ in 1..=i {
                assert!((c.mu[pos] - nu[i - 1] / norm).abs() < 1e-15);
                pos += 1;
            }
        }
    }

    #[test]
    fn counterexample_products_absorb_exactly() {
        let nu = geometric_pmf(0.5, 6);
        let chk = check_product_reducibility(&nu, 2).unwrap();
        assert!(chk.all_absorbing);
        // the level-5 diagonal state in particular
        assert!(chk.diag.iter().any(|&(i, v)| i == 5 && v == 1.0));
        assert!(chk.dirichlet.abs() <= 1e-15);
        assert!(chk.f_norm2 > 0.0);
    }

    #[test]
    fn counterexample_chain_still_converges_under_p() {
        let nu = geometric_pmf(0.5, 6);
        let c = counterexample_chain(&nu).unwrap();
        let n = c.n();
        let f: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let d = exact_decay(&c, &f, 160);
        assert!(d.values[160] < 1e-8, "{}", d.values[160]);
    }

    #[test]
    fn jump_chain_grid_identities() {
        let g = jump_chain(4.0, 1.0, 1e5, 1.15).unwrap();
        let c = &g.chain;
        // E(P, f) = nu(w^{-1})^{-1} var_nu(f), exactly on any grid
        let n = c.n();
        let f: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64).collect();
        let nu_winv: f64 = g.nu.iter().zip(&g.w).map(|(n, w)| n / w).sum();
        let m_nu: f64 = g.nu.iter().zip(&f).map(|(n, x)| n * x).sum();
        let var_nu: f64 = g
            .nu
            .iter()
            .zip(&f)
            .map(|(n, x)| n * (x - m_nu) * (x - m_nu))
            .sum();
        let e = dirichlet_form(c, &f, 2);
        let want = var_nu / nu_winv;
        assert!((e - want).abs() < 1e-12 * want.max(1.0), "{e} vs {want}");
        // positivity: <Pf, f>_mu >= 0
        let pf = crate::chain::mat_vec(&c.p, &f);
        let ip: f64 = (0..n).map(|i| c.mu[i] * pf[i] * f[i]).sum();
        assert!(ip >= -1e-12);
        // mu(A_eps) = eps^{(a-b-1)/b} up to discretization
        for &eps in &[0.01_f64, 0.001] {
            let t_eps = eps.powf(-1.0 / g.b);
            let mass: f64 = (0..n)
                .filter(|&i| g.points[i] >= t_eps)
                .map(|i| c.mu[i])
                .sum();
            let want = eps.powf((g.a - g.b - 1.0) / g.b);
            assert!(
                (mass - want).abs() < 0.25 * want,
                "eps={eps}: {mass} vs {want}"
            );
        }
    }

    #[test]
    fn imh_diag_dominates_one_minus_winv() {
        // P(x, {x}) >= 1 - w(x)^{-1}
        let mu = [0.05, 0.15, 0.30, 0.50];
        let nu = [0.4, 0.3, 0.2, 0.1];
        let c = imh_discrete(&mu, &nu).unwrap();
        for x in 0..4 {
            let w = mu[x] / nu[x];
            assert!(c.p[x][x] >= 1.0 - 1.0 / w - 1e-14, "x={x}");
        }
    }

    #[test]
    fn imh_beta_lower_matches_tail_shape() {
        // beta(s) >= C mu(w >= C^{-1} s): the indicator bound dominates the
        // sticky one built from B_eps = {w^{-1} <= eps}
        let mu = [0.05, 0.15, 0.30, 0.50];
        let nu = [0.4, 0.3, 0.2, 0.1];
        let c = imh_discrete(&mu, &nu).unwrap();
        let sg: Vec<f64> = (0..12).map(|i| 0.5 * 2.0f64.powi(i)).collect();
        let ind = crate::chain::beta_lower_indicator(&c, &sg).unwrap();
        let st = crate::chain::beta_lower_sticky(&c, &sg);
        for ((s, bi), (_, bs)) in ind.iter().zip(&st) {
            assert!(*bs <= bi + 1e-12, "s={s}");
        }
        // and the bound is positive while s stays below the top weight scale
        assert!(ind[0].1 > 0.0);
    }
}

