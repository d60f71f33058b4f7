//! Pseudo-marginal lifts of finite marginal chains and the conductance
//! upper bound that follows from the weight tails.

use super::{weak_conductance_at, ChainFlags, FiniteChain};
use crate::error::{Result, SubgeoError};
use serde::{Deserialize, Serialize};

/// Inputs for a pseudo-marginal lift: a symmetric proposal on a finite
/// space, the target density varpi (w.r.t. counting measure), and a finite
/// unit-mean weight law per state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmSpec {
    pub proposal: Vec<Vec<f64>>,
    pub varpi: Vec<f64>,
    /// per state: atoms (value, probability), unit mean under each state
    pub weights: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct PmLifted {
    pub chain: FiniteChain,
    /// lifted state index -> (marginal state, weight atom)
    pub index: Vec<(usize, usize)>,
    pub varpi: Vec<f64>,
    pub weights: Vec<Vec<(f64, f64)>>,
}

const UNIT_MEAN_TOL: f64 = 1e-10;

/// Build the extended chain on X x W with the pseudo-marginal acceptance
/// rule min{1, r(x,y) u/w}.
pub fn pm_lift(spec: &PmSpec) -> Result<PmLifted> {
    let m = spec.varpi.len();
    if spec.proposal.len() != m || spec.weights.len() != m {
        return Err(SubgeoError::InvalidParameter(
            "pm spec dimensions disagree".into(),
        ));
    }
    for i in 0..m {
        for j in 0..m {
            if (spec.proposal[i][j] - spec.proposal[j][i]).abs() > 1e-12 {
                return Err(SubgeoError::InvalidParameter(
                    "pm proposal must be reversible w.r.t. the base measure (symmetric here)"
                        .into(),
                ));
            }
        }
        let mean: f64 = spec.weights[i].iter().map(|&(w, p)| w * p).sum();
        if (mean - 1.0).abs() > UNIT_MEAN_TOL {
            return Err(SubgeoError::InvalidParameter(format!(
                "weights at state {i} have mean {mean}, expected 1"
            )));
        }
        let pm: f64 = spec.weights[i].iter().map(|&(_, p)| p).sum();
        if (pm - 1.0).abs() > UNIT_MEAN_TOL {
            return Err(SubgeoError::InvalidParameter(format!(
                "weight probabilities at state {i} sum to {pm}"
            )));
        }
        if spec.weights[i].iter().any(|&(w, p)| w < 0.0 || p < 0.0) {
            return Err(SubgeoError::InvalidParameter(
                "weights and probabilities must be nonnegative".into(),
            ));
        }
    }
    let mut index = Vec::new();
    for x in 0..m {
        for a in 0..spec.weights[x].len() {
            index.push((x, a));
        }
    }
    let n = index.len();
    let offset: Vec<usize> = {
        let mut o = vec![0usize; m];
        for x in 1..m {
            o[x] = o[x - 1] + spec.weights[x - 1].len();
        }
        o
    };
    let z: f64 = spec.varpi.iter().sum();
    // mu(x, w) = pi(x) Q_x(w) w with pi = varpi / z
    let mut mu = vec![0.0; n];
    for (s, &(x, a)) in index.iter().enumerate() {
        let (w, p) = spec.weights[x][a];
        mu[s] = spec.varpi[x] / z * p * w;
    }
    let mut p_mat = vec![vec![0.0; n]; n];
    for (s, &(x, a)) in index.iter().enumerate() {
        let w = spec.weights[x][a].0;
        let mut total = 0.0;
        for y in 0..m {
            let q = spec.proposal[x][y];
            if q == 0.0 {
                continue;
            }
            for (b, &(u, pu)) in spec.weights[y].iter().enumerate() {
                let r = spec.varpi[y] / spec.varpi[x];
                let acc = if w > 0.0 { (r * u / w).min(1.0) } else { 1.0 };
                let t = s; // reject target is the current pair
                let d = offset[y] + b;
                p_mat[s][d] += q * pu * acc;
                total += q * pu * acc;
                let _ = t;
            }
        }
        p_mat[s][s] += 1.0 - total;
    }
    let states = index
        .iter()
        .map(|&(x, a)| format!("({x},{:.4})", spec.weights[x][a].0))
        .collect();
    let chain = FiniteChain::new(
        states,
        mu,
        p_mat,
        ChainFlags { reversible: true, support_restricted: true },
    )?;
    Ok(PmLifted {
        chain,
        index,
        varpi: spec.varpi.clone(),
        weights: spec.weights.clone(),
    })
}

/// psi^-(v) = sup { s : mu(A_s) >= v } over A_s = {(x,w) : varpi(x) w >= s}.
pub fn psi_inverse(lifted: &PmLifted, v: f64) -> f64 {
    let mut prods: Vec<(f64, f64)> = lifted
        .index
        .iter()
        .enumerate()
        .map(|(s, &(x, a))| (lifted.varpi[x] * lifted.weights[x][a].0, lifted.chain.mu[s]))
        .collect();
    prods.sort_by(|p, q| q.0.partial_cmp(&p.0).unwrap());
    let mut cum = 0.0;
    for &(prod, mass) in &prods {
        cum += mass;
        if cum >= v {
            return prod;
        }
    }
    0.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmBoundReport {
    pub v: Vec<f64>,
    /// exact weak conductance of the lifted chain
    pub exact: Vec<f64>,
    /// upper bound sup(varpi) / psi^-(v)
    pub bound: Vec<f64>,
    pub psi_inv: Vec<f64>,
    pub all_dominated: bool,
}

/// Exact weak conductance of the lifted chain against the upper bound
/// w_bar / psi^-(v); the exact profile must sit below the bound.
pub fn pm_conductance_bound(lifted: &PmLifted, v_grid: &[f64]) -> Result<PmBoundReport> {
    let w_bar = lifted.varpi.iter().fold(0.0_f64, |a, &b| a.max(b));
    let exact = weak_conductance_at(&lifted.chain, v_grid, 24)?;
    let psi: Vec<f64> = v_grid.iter().map(|&v| psi_inverse(lifted, v)).collect();
    let bound: Vec<f64> = psi.iter().map(|&p| if p > 0.0 { w_bar / p } else { f64::INFINITY }).collect();
    let all = exact
        .iter()
        .zip(&bound)
        .all(|(e, b)| !e.is_finite() || *e <= *b * (1.0 + 1e-12));
    Ok(PmBoundReport {
        v: v_grid.to_vec(),
        exact,
        bound,
        psi_inv: psi,
        all_dominated: all,
    })
}

/// Discretize Pareto(alpha, x_m = 1 - 1/alpha) to `atoms` equal-probability
/// atoms at conditional means; the atom means preserve the unit mean exactly
/// (up to a final renormalization of float dust).
pub fn pareto_weight_atoms(alpha: f64, atoms: usize) -> Result<Vec<(f64, f64)>> {
    if alpha <= 1.0 {
        return Err(SubgeoError::InvalidParameter(
            "pareto weights need alpha > 1".into(),
        ));
    }
    let xm = 1.0 - 1.0 / alpha;
    let q = |p: f64| xm * (1.0 - p).powf(-1.0 / alpha); // quantile
    // E[W 1{W > t}] = alpha x_m^alpha t^{1-alpha} / (alpha - 1)
    let tail_mean = |t: f64| alpha * xm.powf(alpha) * t.powf(1.0 - alpha) / (alpha - 1.0);
    let k = atoms as f64;
    let mut out = Vec::with_capacity(atoms);
    for i in 0..atoms {
        let lo = q(i as f64 / k);
        let hi_mean = if i + 1 == atoms {
            0.0
        } else {
            tail_mean(q((i + 1) as f64 / k))
        };
        let mean_bin = (tail_mean(lo) - hi_mean) * k;
        out.push((mean_bin, 1.0 / k));
    }
    let total: f64 = out.iter().map(|&(w, p)| w * p).sum();
    for a in out.iter_mut() {
        a.0 /= total;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_state_spec(weights: Vec<Vec<(f64, f64)>>) -> PmSpec {
        PmSpec {
            proposal: vec![
                vec![0.5, 0.5, 0.0],
                vec![0.5, 0.0, 0.5],
                vec![0.0, 0.5, 0.5],
            ],
            varpi: vec![1.0, 2.0, 4.0],
            weights,
        }
    }

    #[test]
    fn degenerate_weights_recover_marginal() {
        let spec = three_state_spec(vec![vec![(1.0, 1.0)]; 3]);
        let lifted = pm_lift(&spec).unwrap();
        assert_eq!(lifted.chain.n(), 3);
        // acceptance min(1, r): the exact algorithm
        let z = 7.0;
        assert!((lifted.chain.mu[0] - 1.0 / z).abs() < 1e-14);
        // moving 0 -> 1 accepts with prob 1 (r = 2)
        assert!((lifted.chain.p[0][1] - 0.5).abs() < 1e-14);
        // moving 2 -> 1 accepts with prob 1/2
        assert!((lifted.chain.p[2][1] - 0.25).abs() < 1e-14);
        // bound dominates exact trivially
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.05).collect();
        let rep = pm_conductance_bound(&lifted, &grid).unwrap();
        assert!(rep.all_dominated);
    }

    #[test]
    fn two_point_weights_bound_dominates() {
        let w = vec![(0.5, 0.5), (1.5, 0.5)];
        let spec = three_state_spec(vec![w.clone(), w.clone(), w]);
        let lifted = pm_lift(&spec).unwrap();
        assert_eq!(lifted.chain.n(), 6);
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.022).collect();
        let rep = pm_conductance_bound(&lifted, &grid).unwrap();
        assert!(rep.all_dominated);
        let mut checked = 0;
        for (i, (e, b)) in rep.exact.iter().zip(&rep.bound).enumerate() {
            if e.is_finite() {
                assert!(e <= b, "v={}: exact {e} > bound {b}", rep.v[i]);
                checked += 1;
            }
        }
        assert!(checked >= 15, "too few admissible v values: {checked}");
    }

    #[test]
    fn pareto_atoms_unit_mean_and_tail() {
        for &alpha in &[1.5, 2.0, 3.0] {
            let atoms = pareto_weight_atoms(alpha, 8).unwrap();
            let mean: f64 = atoms.iter().map(|&(w, p)| w * p).sum();
            assert!((mean - 1.0).abs() < 1e-12);
            assert!(atoms.windows(2).all(|w| w[0].0 < w[1].0));
        }
        // psi_*^{-1}(v) = x_m v^{-1/(alpha-1)} at alpha = 2: 0.5 / v
        let inv = crate::rwm::pareto_psi_inverse(2.0).unwrap();
        assert!((inv.eval(0.1) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn non_unit_mean_rejected() {
        let w = vec![(0.5, 0.5), (1.0, 0.5)];
        let spec = three_state_spec(vec![w.clone(), w.clone(), w]);
        assert!(pm_lift(&spec).is_err());
    }
}
