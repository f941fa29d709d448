use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stein_poisson::cost::CostRho;
use stein_poisson::dist::{poisson_pmf, Pmf, DEFAULT_EPS_TAIL};
use stein_poisson::semigroup::{resolvent, resolvent_by_quadrature};
use stein_poisson::stein::{
    closed_form_d2g, delta_h_rho, exact_factors, solve_stein, stein_identity_residual,
};

fn poisson(l: f64) -> Pmf {
    poisson_pmf(l, DEFAULT_EPS_TAIL).unwrap()
}

fn deep_poisson(l: f64) -> Pmf {
    poisson_pmf(l, 1e-280).unwrap()
}

fn wave(a: f64, b: f64) -> impl Fn(usize) -> f64 {
    move |i| (a * i as f64 + b).cos()
}

/// `sup_{1 ≤ i ≤ n} |Δ^k g(i)| / Δρ(i)`.
fn m_stat(g: &[f64], cost: &CostRho, k: usize, n: usize) -> f64 {
    (1..=n)
        .map(|i| {
            let d = match k {
                0 => g[i],
                1 => g[i + 1] - g[i],
                _ => g[i + 2] - 2.0 * g[i + 1] + g[i],
            };
            d.abs() / cost.delta(i)
        })
        .fold(0.0, f64::max)
}

#[test]
fn extremal_functions_dominate_random_unit_lipschitz_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9_001);
    for &l in &[0.5, 2.0, 10.0] {
        let n = poisson(l).trunc_index();
        let deep = deep_poisson(l);
        let nd = deep.trunc_index();
        for cost in [
            CostRho::linear(nd + 3),
            CostRho::squared(nd + 3),
            CostRho::sqrt_case(l, nd + 3),
        ] {
            let cost = cost.unwrap();
            let exact = exact_factors(&cost, l, &poisson(l)).unwrap();
            let bounds = [exact.m0, exact.m1, exact.m2];
            for _ in 0..100 {
                let mut f = vec![0.0];
                for j in 0..nd {
                    let step = if rng.random_bool(0.5) {
                        cost.delta(j)
                    } else {
                        -cost.delta(j)
                    };
                    f.push(f[j] + step);
                }
                let g = solve_stein(&f, l, &deep).unwrap().g;
                for (k, &m) in bounds.iter().enumerate() {
                    let stat = m_stat(&g, &cost, k, n);
                    assert!(
                        stat <= m + 1e-9,
                        "{} lambda={l} k={k}: {stat} > {m}",
                        cost.kind().name()
                    );
                }
            }
        }
    }
}

#[test]
fn delta_h_rho_is_minus_the_resolvent_of_the_increment() {
    for &l in &[0.5, 1.0, 3.0] {
        let pmf = poisson(l);
        for cost in [CostRho::linear(400), CostRho::squared(400)] {
            let cost = cost.unwrap();
            let dh = delta_h_rho(&cost, l, &pmf).unwrap();
            for (i, &d) in dh.iter().enumerate().take(6) {
                let q = resolvent_by_quadrature(|j| cost.delta(j), i, l, 200).unwrap();
                assert!(
                    (d + q.value).abs() <= 1e-6,
                    "{} lambda={l} i={i}: {d} vs {}",
                    cost.kind().name(),
                    -q.value
                );
            }
        }
    }
}

#[test]
fn resolvent_elimination_matches_quadrature() {
    for &l in &[0.5, 2.0] {
        for cost in [
            CostRho::linear(500).unwrap(),
            CostRho::squared(500).unwrap(),
        ] {
            let r = resolvent(|j| cost.delta(j), l, 100).unwrap();
            assert!(r.doubling_shift < 1e-9);
            for i in [0, 1, 2, 5, 10] {
                let q = resolvent_by_quadrature(|j| cost.delta(j), i, l, 100).unwrap();
                assert!(
                    (r.values[i] - q.value).abs() <= 1e-7,
                    "{} lambda={l} i={i}",
                    cost.kind().name()
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_satisfy_the_stein_equation(l in 0.05f64..120.0, a in 0.0f64..3.0, b in 0.0f64..6.3, scale in 0.1f64..50.0) {
        let pmf = poisson(l);
        let f: Vec<f64> = (0..=pmf.trunc_index()).map(|i| scale * wave(a, b)(i)).collect();
        let s = solve_stein(&f, l, &pmf).unwrap();
        prop_assert!(s.max_relative_residual() <= 1e-10);
        for i in 1..s.g.len() {
            prop_assert!((s.g[i] - (s.h[i] - s.h[i - 1])).abs() <= 1e-10 * s.g[i].abs().max(1.0));
        }
        let centre: f64 = pmf.probs().iter().zip(&s.h).map(|(p, h)| p * h).sum();
        prop_assert!(centre.abs() <= 1e-9);
    }

    #[test]
    fn delta_h_is_minus_the_resolvent_of_delta_f(l in 0.1f64..8.0, a in 0.0f64..3.0, b in 0.0f64..6.3) {
        let f = wave(a, b);
        let deep = deep_poisson(l);
        let fv: Vec<f64> = (0..=deep.trunc_index()).map(&f).collect();
        let s = solve_stein(&fv, l, &deep).unwrap();
        let n = poisson(l).trunc_index();
        let r = resolvent(|j| f(j + 1) - f(j), l, n).unwrap();
        for i in 0..n {
            prop_assert!((s.dh[i] + r.values[i]).abs() <= 1e-7, "i={} {} vs {}", i, s.dh[i], -r.values[i]);
        }
    }

    #[test]
    fn closed_form_second_difference_matches_finite_differences(l in 0.1f64..30.0, a in 0.0f64..3.0, b in 0.0f64..6.3) {
        let f = wave(a, b);
        let deep = deep_poisson(l);
        let fv: Vec<f64> = (0..=deep.trunc_index()).map(&f).collect();
        let g = solve_stein(&fv, l, &deep).unwrap().g;
        let n = poisson(l).trunc_index();
        let closed = closed_form_d2g(l, &fv, n).unwrap();
        for i in 1..=n {
            let fd = g[i + 2] - 2.0 * g[i + 1] + g[i];
            prop_assert!((closed[i - 1] - fd).abs() <= 1e-9, "i={} closed {} fd {}", i, closed[i - 1], fd);
        }
    }

    #[test]
    fn stein_solutions_are_centred_under_the_law(l in 0.1f64..50.0, a in 0.0f64..3.0, b in 0.0f64..6.3) {
        let pmf = poisson(l);
        let f: Vec<f64> = (0..=pmf.trunc_index()).map(wave(a, b)).collect();
        let s = solve_stein(&f, l, &pmf).unwrap();
        let r = stein_identity_residual(&s.g, &pmf, l).unwrap();
        prop_assert!(r.abs() <= 10.0 * DEFAULT_EPS_TAIL, "residual {}", r);
    }
}
