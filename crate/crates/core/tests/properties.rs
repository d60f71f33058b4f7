//! Property tests for the representation-level invariants: generalized
//! inverse involution, conjugation round trips, monotone consistency, and
//! the chain identities that hold for every finite chain.

use proptest::prelude::*;
use subgeo::chain::{self, fixtures};
use subgeo::monotone::{Direction, MonotoneFn};
use subgeo::rate;
use subgeo::wpi::{DecayProfile, OrliczTag, ParamTag, Sieve, WpiCertificate};

/// Strictly decreasing right-continuous staircases with a final value of 0.
fn staircases() -> impl Strategy<Value = MonotoneFn> {
    (
        proptest::collection::vec(0.05f64..2.0, 1..6),
        proptest::collection::vec(0.05f64..1.5, 1..6),
    )
        .prop_map(|(dxs, dvs)| {
            let k = dxs.len().min(dvs.len());
            let mut x = 0.0;
            let mut xs = Vec::new();
            for dx in dxs.iter().take(k) {
                x += dx;
                xs.push(x);
            }
            // values decrease strictly to 0
            let mut tail: Vec<f64> = vec![0.0];
            let mut v = 0.0;
            for dv in dvs.iter().take(k - 1) {
                v += dv;
                tail.push(v);
            }
            tail.reverse();
            let initial = v + 0.5;
            MonotoneFn::staircase(
                Direction::Decreasing,
                (0.0, f64::INFINITY),
                initial,
                xs.into_iter().zip(tail).collect(),
            )
            .unwrap()
        })
}

proptest! {
    #[test]
    fn involution_on_staircases(f in staircases()) {
        let ff = f
            .generalized_inverse()
            .unwrap()
            .generalized_inverse()
            .unwrap();
        // equality at the knots and at interior points of every piece
        let mut probes = f.knot_xs();
        let knots = f.knot_xs();
        for w in knots.windows(2) {
            probes.push(0.5 * (w[0] + w[1]));
        }
        probes.push(knots.last().unwrap() + 1.0);
        probes.push(0.5 * knots[0]);
        for x in probes {
            prop_assert_eq!(ff.eval(x), f.eval(x), "x = {}", x);
        }
    }

    #[test]
    fn alpha_beta_alpha_never_gains(c0 in 0.2f64..3.0, c1 in 0.3f64..2.5) {
        // converting alpha -> beta -> alpha returns a pointwise <= function
        let alpha = MonotoneFn::power_law(Direction::Decreasing, (1e-9, 1e9), c0, -c1);
        let cert = WpiCertificate::alpha(Sieve::Osc2, alpha, "P").unwrap();
        let back = cert
            .convert(ParamTag::Beta)
            .unwrap()
            .convert(ParamTag::Alpha)
            .unwrap();
        for i in 0..20 {
            let r = 0.24 * 0.7f64.powi(i);
            let orig = cert.eval_alpha(r).unwrap();
            let b = back.eval_alpha(r).unwrap();
            prop_assert!(b <= orig * (1.0 + 1e-12) + 1e-15, "r={}: {} > {}", r, b, orig);
        }
    }

    #[test]
    fn conjugation_round_trip_on_convex_pl(slopes in proptest::collection::vec(0.05f64..2.0, 2..6)) {
        // K convex PL from increasing slopes: conjugate twice on the interior
        let mut knots = vec![(0.0, 0.0)];
        let mut slopes = slopes;
        slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut u = 0.0;
        let mut k = 0.0;
        for s in &slopes {
            u += 0.5;
            k += 0.5 * s;
            knots.push((u, k));
        }
        let conj = rate::conjugate_pl(&knots);
        let back = rate::conjugate_pl(&conj);
        let eval = |grid: &[(f64, f64)], x: f64| -> f64 {
            let i = grid.partition_point(|g| g.0 < x);
            if i == 0 {
                return grid[0].1;
            }
            if i == grid.len() {
                let (a, b) = (grid[grid.len() - 2], grid[grid.len() - 1]);
                return b.1 + (b.1 - a.1) / (b.0 - a.0) * (x - b.0);
            }
            let (a, b) = (grid[i - 1], grid[i]);
            a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
        };
        for &(u, k) in knots.iter().take(knots.len() - 1) {
            prop_assert!((eval(&back, u) - k).abs() <= 1e-10 + 1e-10 * k.abs());
        }
    }

    #[test]
    fn decay_gamma_decreasing_and_capped(c0 in 0.3f64..2.0, c1 in 0.4f64..2.0) {
        let beta = MonotoneFn::power_law(Direction::Decreasing, (1e-9, 1e9), c0, -c1);
        let cert = WpiCertificate::beta(Sieve::Osc2, beta, "P*P").unwrap();
        let prof = DecayProfile::new(&cert).unwrap();
        let mut prev = prof.gamma_at(0.0).unwrap();
        prop_assert!(prev <= 0.25 + 1e-12);
        for n in [1.0, 3.0, 10.0, 100.0] {
            let g = prof.gamma_at(n).unwrap();
            prop_assert!(g <= prev * (1.0 + 1e-9));
            prev = g;
        }
    }

    #[test]
    fn orlicz_large_p_approaches_16_gamma(q in 0.5f64..3.0) {
        let gamma = MonotoneFn::power_law(Direction::Decreasing, (1.0, 1e9), 1.0, -q);
        let gn = subgeo::wpi::orlicz_transfer(&gamma, OrliczTag::Power { p: 1e8 }).unwrap();
        for n in [1.0, 10.0, 1e3] {
            let want = 16.0 * gamma.eval(n);
            prop_assert!((gn.eval(n) - want).abs() <= 1e-4 * want);
        }
    }

    #[test]
    fn chain_flow_symmetry_and_dirichlet_equalities(seed in 0u64..500, n in 3usize..7) {
        let c = fixtures::random_reversible_lazy(n, seed, 0.0).unwrap();
        // mu (x) P (A x A^c) = mu (x) P (A^c x A) for all A
        chain::enumerate_subsets(&c, |_, flow, bits| {
            let comp = !bits & ((1u64 << n) - 1);
            let back = chain::flow_out(&c, comp);
            assert!((flow - back).abs() < 1e-12, "bits={bits:b}");
        });
        // E_p equal across P, P*, S
        let adj = c.adjoint().unwrap();
        let s = c.reversibilize().unwrap();
        let f: Vec<f64> = (0..n).map(|i| ((seed as usize + i * 7) % 5) as f64).collect();
        for p in [1, 2] {
            let a = chain::dirichlet_form(&c, &f, p);
            prop_assert!((chain::dirichlet_form(&adj, &f, p) - a).abs() < 1e-12);
            prop_assert!((chain::dirichlet_form(&s, &f, p) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn indicator_bound_dominates_sticky(seed in 0u64..300) {
        let c = fixtures::random_reversible_lazy(5, seed, 0.4).unwrap();
        let sg: Vec<f64> = (0..12).map(|i| 0.2 * 2.0f64.powi(i)).collect();
        let ind = chain::beta_lower_indicator(&c, &sg).unwrap();
        let st = chain::beta_lower_sticky(&c, &sg);
        for ((s, bi), (_, bs)) in ind.iter().zip(&st) {
            prop_assert!(*bs <= bi + 1e-12, "s={}", s);
        }
    }

    #[test]
    fn peskun_indicator_ordering(seed in 0u64..200) {
        // extra laziness shrinks every indicator Dirichlet form of P*P, so
        // the indicator beta* lower bounds order the other way
        let c1 = fixtures::random_reversible_lazy(5, seed, 0.1).unwrap();
        let c2 = c1.lazy(0.5).unwrap();
        let t1 = c1.multiplicative().unwrap();
        let t2 = c2.multiplicative().unwrap();
        let mut dominated = true;
        chain::enumerate_subsets(&c1, |_, _, bits| {
            let f: Vec<f64> = (0..5).map(|i| (bits >> i & 1) as f64).collect();
            if chain::dirichlet_form(&t1, &f, 2) < chain::dirichlet_form(&t2, &f, 2) - 1e-12 {
                dominated = false;
            }
        });
        prop_assert!(dominated);
        let sg: Vec<f64> = (0..10).map(|i| 0.3 * 2.0f64.powi(i)).collect();
        let b1 = chain::beta_lower_indicator(&t1, &sg).unwrap();
        let b2 = chain::beta_lower_indicator(&t2, &sg).unwrap();
        for ((s, v1), (_, v2)) in b1.iter().zip(&b2) {
            prop_assert!(v1 <= &(v2 + 1e-12), "s={}", s);
        }
    }
}
