//! Gray-code subset enumeration with incremental mass/flow updates.
//!
//! Each step flips one element, so the boundary flow mu (x) P (A x A^c)
//! updates in O(n) and a full 2^n sweep costs O(n 2^n) with O(n) memory.

use super::FiniteChain;

/// Visit every nonempty proper subset of the state space exactly once with
/// its mass mu(A) and outflow mu (x) P (A x A^c). The visitor receives the
/// subset as a bitmask.
pub fn enumerate_subsets<F: FnMut(f64, f64, u64)>(chain: &FiniteChain, mut visit: F) {
    let n = chain.n();
    assert!(n <= 63, "bitmask enumeration needs n <= 63");
    if n < 2 {
        return;
    }
    let total: u64 = 1 << n;
    let mut bits: u64 = 0;
    let mut mass = 0.0_f64;
    let mut flow = 0.0_f64;
    for g in 1..total {
        let k = g.trailing_zeros() as usize; // flipped element
        let joining = bits >> k & 1 == 0;
        if joining {
            // flow gains k's outflow to A^c \ {k}, loses A's inflow to k
            let mut gain = 0.0;
            let mut lose = 0.0;
            for j in 0..n {
                let in_a = bits >> j & 1 == 1;
                if j != k && !in_a {
                    gain += chain.mu[k] * chain.p[k][j];
                }
                if in_a {
                    lose += chain.mu[j] * chain.p[j][k];
                }
            }
            flow += gain - lose;
            mass += chain.mu[k];
            bits |= 1 << k;
        } else {
            bits &= !(1 << k);
            let mut lose = 0.0;
            let mut gain = 0.0;
            for j in 0..n {
                let in_a = bits >> j & 1 == 1;
                if j != k && !in_a {
                    lose += chain.mu[k] * chain.p[k][j];
                }
                if in_a {
                    gain += chain.mu[j] * chain.p[j][k];
                }
            }
            flow += gain - lose;
            mass -= chain.mu[k];
        }
        if bits != 0 && bits != total - 1 {
            visit(mass, flow.max(0.0), bits);
        }
    }
}
