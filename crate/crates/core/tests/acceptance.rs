//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stein_poisson::bounds::{log_grid, theorem_bounds, xi1, xi2};
use stein_poisson::cert::certificate;
use stein_poisson::cost::CostRho;
use stein_poisson::dist::{poisson_pmf, LatticePmf, Pmf, DEFAULT_EPS_TAIL};
use stein_poisson::semigroup::{
    mode_majorant_integral, resolvent_diagonal_integral, simulate_coupled, SimulationConfig,
};
use stein_poisson::stein::{exact_factors, solve_stein, stein_identity_residual};
use stein_poisson::transport::{
    dual_witness_check, lp_dual_witness, lp_transport_oracle, rho_cost_matrix, wasserstein_p,
    wasserstein_rho,
};
use stein_poisson::{bounds, factor_report};

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || {
        format!("{what}: got {got:.15e}, want {want:.15e} (tol {tol:e})")
    })
}

fn poisson(lambda: f64) -> Pmf {
    poisson_pmf(lambda, DEFAULT_EPS_TAIL).expect("poisson table")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn linear_sharpness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for &l in &[0.1f64, 0.25, 0.5, 0.75, 1.0] {
        let pmf = poisson(l);
        let f = exact_factors(&CostRho::linear(pmf.trunc_index()).map_err(err)?, l, &pmf)
            .map_err(err)?;
        let want = 2.0 * ((-l).exp() + l - 1.0) / (l * l);
        within(&format!("M1 at lambda={l}"), f.m1, want, 1e-9)?;
        worst = worst.max((f.m1 - want).abs());
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))?;
    Ok(format!("max |M1 - 2(e^-l+l-1)/l^2| = {worst:.2e}, {t:?}"))
}

const GRID: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 50.0];

fn eigenvalue_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for &l in &GRID {
        let pmf = poisson(l);
        let f = exact_factors(&CostRho::linear(pmf.trunc_index()).map_err(err)?, l, &pmf)
            .map_err(err)?;
        within(&format!("M0 at lambda={l}"), f.m0, 1.0, 1e-10)?;
        worst = worst.max((f.m0 - 1.0).abs());
    }
    Ok(format!("max |M0 - 1| = {worst:.2e}"))
}

fn squared_cost_norms() -> Outcome {
    let mut worst: f64 = 0.0;
    for &l in &GRID {
        let pmf = poisson(l);
        let b = theorem_bounds(&CostRho::squared(pmf.trunc_index()).map_err(err)?, l, &pmf)
            .map_err(err)?;
        within(
            &format!("norm (-Q)^-1 at lambda={l}"),
            b.norm_qinv.value,
            1.0 + l,
            1e-10,
        )?;
        within(
            &format!("Lip norm of dh at lambda={l}"),
            b.lip_dh.value,
            1.0,
            1e-10,
        )?;
        within(
            &format!("Lip norm of d2h at lambda={l}"),
            b.lip_d2h.value,
            0.0,
            1e-10,
        )?;
        worst = worst
            .max((b.norm_qinv.value - 1.0 - l).abs())
            .max((b.lip_dh.value - 1.0).abs())
            .max(b.lip_d2h.value.abs());
    }
    Ok(format!("max deviation {worst:.2e}"))
}

fn universal_constants() -> Outcome {
    let start = Instant::now();
    let grid = log_grid(0.01, 1000.0, 500);
    let r = bounds::scan_constants(&grid).map_err(err)?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    let (m1, at1) = r.max_sqrt_xi1.ok_or("no grid point above 1")?;
    let (m2, at2) = r.max_sqrt_xi2.ok_or("no grid point above 1")?;
    Ok(format!("0 violations; max sqrt(l)*Xi1 = {m1:.5} at {at1:.3}, max sqrt(l)*Xi2 = {m2:.5} at {at2:.3}, {t:?}"))
}

fn domination() -> Outcome {
    let mut tightest = (f64::INFINITY, String::new());
    let mut ties = Vec::new();
    for &l in &[0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
        let pmf = poisson(l);
        let n = pmf.trunc_index();
        for cost in [
            CostRho::linear(n),
            CostRho::squared(n),
            CostRho::sqrt_case(l, n),
        ] {
            let cost = cost.map_err(err)?;
            let r = factor_report(&cost, l, &pmf).map_err(err)?;
            let b1 = r.bounds.b1().map_err(err)?;
            let pairs = [
                (r.exact.m0, r.bounds.b0),
                (r.exact.m1, b1),
                (r.exact.m2, r.bounds.b2),
            ];
            for (k, &(m, b)) in pairs.iter().enumerate() {
                let tag = format!("{} lambda={l} k={k}", cost.kind().name());
                ensure(m <= b + 1e-9, || format!("{tag}: M={m:.15e} > B={b:.15e}"))?;
                // A sharp bound equals M in exact arithmetic; the two evaluations may then differ in the last bits.
                let ulps = 2.0 * f64::EPSILON * b.abs();
                ensure(m <= b + ulps, || {
                    format!("{tag}: M={m:.17e} exceeds B={b:.17e}")
                })?;
                if m > b {
                    ties.push(format!("{tag} (+{:.1e})", m - b));
                }
                if b - m < tightest.0 {
                    tightest = (b - m, tag);
                }
            }
        }
    }
    let ties = if ties.is_empty() {
        "none".to_string()
    } else {
        ties.join(", ")
    };
    Ok(format!(
        "63 pairs dominated; smallest gap B-M = {:.3e} ({}); rounding-level ties: {ties}",
        tightest.0, tightest.1
    ))
}

fn quadrature_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    for &l in &[1.5, 2.0, 3.7, 4.0, 10.25] {
        let q2 = mode_majorant_integral(2.0, l).map_err(err)?.value;
        let q3 = mode_majorant_integral(3.0, l).map_err(err)?.value;
        within(&format!("Xi1({l})"), xi1(l), q2, 1e-8)?;
        within(&format!("Xi2({l})"), xi2(l), q3, 1e-8)?;
        worst = worst.max((xi1(l) - q2).abs()).max((xi2(l) - q3).abs());
    }
    for &l in &[0.3f64, 1.0] {
        let c2 = ((-l).exp() + l - 1.0) / (l * l);
        let c3 = ((l - 1.0).powi(2) - 2.0 * (-l).exp() + 1.0) / l.powi(3);
        let q2 = resolvent_diagonal_integral(1, 2.0, l).map_err(err)?.value;
        let q3 = resolvent_diagonal_integral(1, 3.0, l).map_err(err)?.value;
        within(&format!("s=2 diagonal integral at {l}"), q2, c2, 1e-9)?;
        within(&format!("s=3 diagonal integral at {l}"), q3, c3, 1e-9)?;
        worst = worst.max((q2 - c2).abs()).max((q3 - c3).abs());
    }
    Ok(format!("max deviation {worst:.2e}"))
}

fn random_pmf(rng: &mut ChaCha8Rng, max_len: usize) -> Pmf {
    let len = rng.random_range(1..=max_len);
    let mut w: Vec<f64> = (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[len - 1] = 1.0;
    }
    let s: f64 = w.iter().sum();
    Pmf::from_probs(w.into_iter().map(|x| x / s).collect()).expect("random pmf")
}

fn transport_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_917);
    let (mut primal_gap, mut dual_gap, mut w2_slack): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for pair in 0..200 {
        let (a, b) = (random_pmf(&mut rng, 16), random_pmf(&mut rng, 16));
        let n = 20;
        let costs = [
            CostRho::linear(n),
            CostRho::squared(n),
            CostRho::sqrt_case(1.0, n),
        ];
        for cost in costs {
            let cost = cost.map_err(err)?;
            let tag = format!("pair {pair} {}", cost.kind().name());
            let cdf = wasserstein_rho(&a, &b, &cost).map_err(err)?.distance;
            let matrix = rho_cost_matrix(&cost, a.trunc_index(), b.trunc_index()).map_err(err)?;
            let lp = lp_transport_oracle(&a, &b, &matrix).map_err(err)?.distance;
            within(&format!("{tag} cdf vs lp"), cdf, lp, 1e-9)?;
            let dual = lp_dual_witness(&a, &b, &cost).map_err(err)?;
            let f = dual.dual_witness.as_ref().ok_or("no witness")?;
            let attained = dual_witness_check(&a, &b, &cost, f).map_err(err)?;
            within(&format!("{tag} dual witness"), attained, lp, 1e-8)?;
            primal_gap = primal_gap.max((cdf - lp).abs());
            dual_gap = dual_gap.max((attained - lp).abs());
        }
        let r2 = CostRho::squared(n).map_err(err)?;
        let w2 = wasserstein_p(&LatticePmf::from(&a), &LatticePmf::from(&b), 2.0).map_err(err)?;
        let wr2 = wasserstein_rho(&a, &b, &r2).map_err(err)?.distance;
        ensure(w2 <= wr2.sqrt() + 1e-9, || {
            format!("pair {pair}: W2 {w2} > sqrt(W_rho2) {}", wr2.sqrt())
        })?;
        w2_slack = w2_slack.min(wr2.sqrt() - w2);
    }
    Ok(format!(
        "600 instances; max |cdf-lp| = {primal_gap:.2e}, max |dual-lp| = {dual_gap:.2e}, min sqrt(W_rho2)-W2 = {w2_slack:.2e}"
    ))
}

/// Block-constant probabilities with an integer `Σp²`: each block's size is a
/// multiple of `1/p²`.
fn block_instance(rng: &mut ChaCha8Rng) -> Vec<f64> {
    const BLOCKS: [(f64, usize); 4] = [(0.5, 4), (0.25, 16), (0.75, 16), (0.125, 64)];
    let mut p = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let (q, unit) = BLOCKS[rng.random_range(0..BLOCKS.len())];
        p.extend(std::iter::repeat_n(q, unit * rng.random_range(1..=3)));
    }
    p
}

fn certificates() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77_031);
    let mut instances = vec![vec![0.5; 4]];
    instances.extend((0..50).map(|_| block_instance(&mut rng)));
    let mut worst_ratio: f64 = 0.0;
    for (k, p) in instances.iter().enumerate() {
        let c = certificate(p).map_err(err)?;
        ensure(c.valid(), || {
            format!("instance {k}: not valid (mu2 = {})", c.mu2)
        })?;
        let (e1, b1) = (c.exact1.unwrap(), c.bound1.unwrap());
        let (e2, b2) = (c.exact2.unwrap(), c.bound2.unwrap());
        ensure(e1 <= b1, || {
            format!("instance {k}: exact1 {e1} > bound1 {b1}")
        })?;
        ensure(e2 <= b2, || {
            format!("instance {k}: exact2 {e2} > bound2 {b2}")
        })?;
        let ch = c.checks.unwrap();
        ensure(ch.truncated_mean.holds, || {
            format!("instance {k}: truncated mean {:?}", ch.truncated_mean)
        })?;
        ensure(ch.lower_tail.holds, || {
            format!("instance {k}: lower tail {:?}", ch.lower_tail)
        })?;
        worst_ratio = worst_ratio.max(e1 / b1).max(e2 / b2);
    }
    let first = certificate(&[0.5; 4]).map_err(err)?;
    within(
        "bound1 for four halves",
        first.bound1.unwrap(),
        3.0 + 8.0 * (-0.25f64).exp(),
        1e-12,
    )?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(30), || format!("took {t:?}"))?;
    Ok(format!(
        "51 instances; max exact/bound = {worst_ratio:.4}, {t:?}"
    ))
}

fn monte_carlo() -> Outcome {
    let config = SimulationConfig::new(1, 1.0, 2.0, 100_000, 0x5eed_2024);
    let r = simulate_coupled(&config).map_err(err)?;
    let d = r.diagonal_integral;
    let z = (d.estimate - (-1f64).exp()).abs() / d.std_error;
    ensure(z <= 3.0, || {
        format!("estimate {} is {z:.2} s.e. from 1/e", d.estimate)
    })?;
    for s in &r.samples {
        let excess = (s.diagonal.estimate - s.mode_probability)
            / s.diagonal.std_error.max(f64::MIN_POSITIVE);
        ensure(
            s.diagonal.estimate <= s.mode_probability + 3.0 * s.diagonal.std_error,
            || {
                format!(
                    "t={}: P(X=i-1) {} above mode prob {} by {excess:.2} s.e.",
                    s.t, s.diagonal.estimate, s.mode_probability
                )
            },
        )?;
    }
    Ok(format!(
        "estimate {:.6} +- {:.1e} ({z:.2} s.e. from 1/e); coupling inequality held at {} times",
        d.estimate,
        d.std_error,
        r.samples.len()
    ))
}

fn stein_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4_242);
    let mut worst_pointwise: f64 = 0.0;
    for &l in &[0.3, 1.0, 4.0, 25.0, 100.0] {
        let pmf = poisson(l);
        for _ in 0..4 {
            let f: Vec<f64> = (0..=pmf.trunc_index())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let s = solve_stein(&f, l, &pmf).map_err(err)?;
            let r = s.max_relative_residual();
            ensure(r <= 1e-10, || {
                format!("pointwise residual {r:e} at lambda={l}")
            })?;
            worst_pointwise = worst_pointwise.max(r);
        }
    }
    let mut worst_char: f64 = 0.0;
    for k in 0..20 {
        let l = rng.random_range(0.5..20.0);
        let pmf = poisson(l);
        let g: Vec<f64> = (0..=pmf.trunc_index() + 1)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let r = stein_identity_residual(&g, &pmf, l).map_err(err)?.abs();
        ensure(r <= 10.0 * DEFAULT_EPS_TAIL, || {
            format!("g #{k} at lambda={l:.3}: residual {r:e}")
        })?;
        worst_char = worst_char.max(r);
    }
    Ok(format!("max pointwise residual {worst_pointwise:.2e}; max characterization residual {worst_char:.2e}"))
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("M1 sharpness for linear cost", linear_sharpness),
        ("M0 = 1 for linear cost", eigenvalue_identity),
        ("squared-cost norms", squared_cost_norms),
        ("universal constants on 500-point grid", universal_constants),
        ("domination M_k <= B_k", domination),
        ("closed form vs quadrature", quadrature_agreement),
        ("transport oracle equivalence", transport_oracles),
        ("Poisson-binomial certificates", certificates),
        ("Monte-Carlo consistency", monte_carlo),
        ("Stein identity residuals", stein_identity),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail} [{t:.2?}]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why} [{t:.2?}]", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
