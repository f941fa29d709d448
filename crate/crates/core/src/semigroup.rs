//! The immigration-death semigroup with birth rate λ and death rate `i`, its
//! resolvent, and Monte-Carlo paths under the synchronous coupling.
//!
//! Started from `i`, the state at time `t` is `Binomial(i, e^{−t})` survivors
//! plus an independent `Poisson(λ(1 − e^{−t}))` immigrant count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::bounds::mode_majorant;
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::quad::{integrate, Quadrature};

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "lambda must be finite and positive, got {lambda}"
        )))
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_factorial(n as u64) - ln_factorial(k as u64) - ln_factorial((n - k) as u64)
}

/// `P_t(i, j)`, summed over the number `k` of survivors in log space.
pub fn semigroup_entry(i: usize, j: usize, t: f64, lambda: f64) -> f64 {
    if t == 0.0 {
        return if i == j { 1.0 } else { 0.0 };
    }
    let ln_p = -t;
    let ln_q = (-(-t).exp_m1()).ln();
    let mu = -lambda * (-t).exp_m1();
    let ln_mu = mu.ln();
    let terms: Vec<f64> = (0..=i.min(j))
        .map(|k| {
            ln_choose(i, k) + k as f64 * ln_p + (i - k) as f64 * ln_q + (j - k) as f64 * ln_mu
                - mu
                - ln_factorial((j - k) as u64)
        })
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return 0.0;
    }
    top.exp() * compensated_sum(terms.iter().map(|x| (x - top).exp()))
}

/// `P_t(i, j)` for `0 ≤ j ≤ n`.
pub fn semigroup_row(i: usize, t: f64, lambda: f64, n: usize) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid(format!(
            "time must be finite and non-negative, got {t}"
        )));
    }
    if i > n {
        return Err(invalid(format!("initial state {i} exceeds row length {n}")));
    }
    Ok((0..=n).map(|j| semigroup_entry(i, j, t, lambda)).collect())
}

fn check_s(s: f64) -> Result<()> {
    if s == 2.0 || s == 3.0 {
        Ok(())
    } else {
        Err(invalid(format!("discount rate must be 2 or 3, got {s}")))
    }
}

/// Horizon past which `∫ e^{−st}` of a probability is below `tail`.
fn horizon(s: f64, tail: f64) -> f64 {
    -(tail * s).ln() / s
}

const QUAD_TOL: f64 = 1e-12;
const QUAD_TAIL: f64 = 1e-14;

/// `∫₀^∞ e^{−st} P_t(i−1, i−1) dt`.
pub fn resolvent_diagonal_integral(i: usize, s: f64, lambda: f64) -> Result<Quadrature> {
    check_lambda(lambda)?;
    check_s(s)?;
    if i == 0 {
        return Err(invalid("diagonal index must be at least 1"));
    }
    let t_max = horizon(s, QUAD_TAIL);
    let mut q = integrate(
        |t| (-s * t).exp() * semigroup_entry(i - 1, i - 1, t, lambda),
        0.0,
        t_max,
        QUAD_TOL,
    )?;
    q.error += QUAD_TAIL;
    Ok(q)
}

/// `∫₀^∞ e^{−st} m(t) dt` where `m(t)` is `e^{−λ(1−e^{−t})}` while the mean
/// `λ(1 − e^{−t})` is below one and the Stirling mode majorant once it lies in
/// `[n, n+1)`. Each piece between `t_n = log(λ/(λ−n))` is integrated separately.
pub fn mode_majorant_integral(s: f64, lambda: f64) -> Result<Quadrature> {
    check_lambda(lambda)?;
    check_s(s)?;
    let t_max = horizon(s, QUAD_TAIL);
    let fl = lambda.floor() as u64;
    let t_at = |n: u64| (lambda / (lambda - n as f64)).ln();
    let first_end = if lambda > 1.0 { t_at(1) } else { t_max };
    let mut total = integrate(
        |t| (-s * t - lambda * -(-t).exp_m1()).exp(),
        0.0,
        first_end.min(t_max),
        QUAD_TOL,
    )?;
    let mut acc = CompensatedSum::new();
    acc.add(total.value);
    if lambda > 1.0 {
        for n in 1..=fl {
            let lo = t_at(n);
            let hi = if n < fl { t_at(n + 1) } else { t_max };
            if lo >= t_max {
                break;
            }
            let c = mode_majorant(n);
            let q = integrate(|t| c * (-s * t).exp(), lo, hi.min(t_max), QUAD_TOL)?;
            acc.add(q.value);
            total.error += q.error;
            total.intervals += q.intervals;
        }
    }
    total.value = acc.value();
    total.error += QUAD_TAIL;
    Ok(total)
}

/// Solution of `(I − Q)x = f` on `0..=n`, with no births out of `n`.
///
/// Row `i` reads `(1+λ+i)x_i − λx_{i+1} − i·x_{i−1} = f_i`; the system is
/// strictly diagonally dominant, so elimination without pivoting is stable.
pub fn resolvent_tridiagonal(f: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let n = f.len();
    if n < 2 {
        return Err(invalid("resolvent needs at least two states"));
    }
    let last = n - 1;
    let diag = |i: usize| 1.0 + i as f64 + if i == last { 0.0 } else { lambda };
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let b0 = diag(0);
    c[0] = -lambda / b0;
    d[0] = f[0] / b0;
    for i in 1..n {
        let a = -(i as f64);
        let upper = if i == last { 0.0 } else { -lambda };
        let denom = diag(i) - a * c[i - 1];
        c[i] = upper / denom;
        d[i] = (f[i] - a * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[last] = d[last];
    for i in (0..last).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolvent {
    /// `(I − Q)⁻¹f` on `0..=n`.
    pub values: Vec<f64>,
    /// Largest change on `0..=n` between solves on `0..=2n` and `0..=4n`.
    pub doubling_shift: f64,
}

/// `(I − Q)⁻¹f` on `0..=n`, read from truncated solves far enough out that the
/// upper boundary is not felt.
pub fn resolvent(f: impl Fn(usize) -> f64, lambda: f64, n: usize) -> Result<Resolvent> {
    let a: Vec<f64> = (0..=2 * n).map(&f).collect();
    let b: Vec<f64> = (0..=4 * n).map(&f).collect();
    let xa = resolvent_tridiagonal(&a, lambda)?;
    let xb = resolvent_tridiagonal(&b, lambda)?;
    let doubling_shift = (0..=n).map(|i| (xa[i] - xb[i]).abs()).fold(0.0, f64::max);
    Ok(Resolvent {
        values: xb[..=n].to_vec(),
        doubling_shift,
    })
}

/// `∫₀^∞ e^{−t} (P_t f)(i) dt` by quadrature, with `P_t f` summed over `0..=n`.
pub fn resolvent_by_quadrature(
    f: impl Fn(usize) -> f64,
    i: usize,
    lambda: f64,
    n: usize,
) -> Result<Quadrature> {
    check_lambda(lambda)?;
    let fv: Vec<f64> = (0..=n).map(f).collect();
    let scale = fv.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let t_max = horizon(1.0, QUAD_TAIL / scale);
    integrate(
        |t| (-t).exp() * compensated_sum((0..=n).map(|j| semigroup_entry(i, j, t, lambda) * fv[j])),
        0.0,
        t_max,
        QUAD_TOL * scale,
    )
}

/// `(r_n(1 + 1/(12n)), n!, r_n(1 + 1/(12n − 1/2)))` with `r_n = √(2πn)(n/e)^n`;
/// the outer values bracket `n!`.
pub fn stirling_sandwich(n: u32) -> (f64, f64, f64) {
    let x = f64::from(n);
    let r = (2.0 * std::f64::consts::PI * x).sqrt() * (x * (x.ln() - 1.0)).exp();
    let fact = (1..=n).map(f64::from).product::<f64>();
    (
        r * (1.0 + 1.0 / (12.0 * x)),
        fact,
        r * (1.0 + 1.0 / (12.0 * x - 0.5)),
    )
}

/// One trajectory of the chain: jump times and the states entered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub seed: u64,
    pub stream: u64,
    pub initial_state: usize,
    pub lambda: f64,
    pub horizon: f64,
    pub event_times: Vec<f64>,
    pub states: Vec<usize>,
}

impl PathSample {
    /// State at time `t ≤ horizon`.
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.event_times.partition_point(|&e| e <= t);
        if k == 0 {
            self.initial_state
        } else {
            self.states[k - 1]
        }
    }
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Walk the chain from `x0` until `horizon`, calling `visit(start, end, state)`
/// for each holding interval.
fn walk(
    rng: &mut ChaCha8Rng,
    x0: usize,
    lambda: f64,
    horizon: f64,
    mut visit: impl FnMut(f64, f64, usize),
) {
    let (mut t, mut x) = (0.0, x0);
    loop {
        let rate = lambda + x as f64;
        let hold: f64 = rng.sample::<f64, _>(Exp1) / rate;
        let next = t + hold;
        if next >= horizon {
            visit(t, horizon, x);
            return;
        }
        visit(t, next, x);
        t = next;
        if rng.random::<f64>() * rate < lambda {
            x += 1;
        } else {
            x -= 1;
        }
    }
}

/// The path on stream `stream` of `seed`, started from `x0`.
pub fn sample_path(
    x0: usize,
    lambda: f64,
    horizon: f64,
    seed: u64,
    stream: u64,
) -> Result<PathSample> {
    check_lambda(lambda)?;
    let mut rng = path_rng(seed, stream);
    let mut visits = Vec::new();
    walk(&mut rng, x0, lambda, horizon, |start, _, x| {
        visits.push((start, x))
    });
    let (event_times, states) = visits.into_iter().skip(1).unzip();
    Ok(PathSample {
        seed,
        stream,
        initial_state: x0,
        lambda,
        horizon,
        event_times,
        states,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    /// Coupled pair starts from `i − 1` and `i`.
    pub i: usize,
    pub lambda: f64,
    /// Discount rate `s` in `∫ e^{−st}`.
    pub s: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Times at which `P(X_t^{i−1} = i−1)` is estimated.
    pub sample_times: Vec<f64>,
}

impl SimulationConfig {
    /// Horizon chosen so that `e^{−sT} < 1e−8`.
    pub fn new(i: usize, lambda: f64, s: f64, n_paths: usize, seed: u64) -> Self {
        SimulationConfig {
            i,
            lambda,
            s,
            horizon: horizon(s, 1e-9),
            n_paths,
            seed,
            sample_times: vec![0.1, 0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSample {
    pub t: f64,
    /// Fraction of paths with `X_t^{i−1} = i−1`.
    pub diagonal: Estimate,
    /// `max_j P_t(0, j)`
    pub mode_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    /// `∫₀^T e^{−st} P(X_t^{i−1} = i−1) dt`
    pub diagonal_integral: Estimate,
    /// `∫₀^T e^{−st} E(X_t^i − X_t^{i−1}) dt`; exactly `(1 − e^{−(s+1)T})/(s+1)`.
    pub coupling_gap_integral: Estimate,
    /// `∫₀^T e^{−st} E X_t^{i−1} dt`
    pub mean_integral: Estimate,
    pub samples: Vec<TimeSample>,
    /// Counts of `X_T^{i−1}` by state.
    pub final_counts: Vec<u64>,
}

struct PathStats {
    diagonal: f64,
    gap: f64,
    mean: f64,
    at_diag: Vec<bool>,
    final_state: usize,
}

fn estimate(values: impl Iterator<Item = f64> + Clone, n: usize) -> Estimate {
    let nf = n as f64;
    let mean = compensated_sum(values.clone()) / nf;
    let var = compensated_sum(values.map(|v| (v - mean) * (v - mean))) / (nf - 1.0);
    Estimate {
        estimate: mean,
        std_error: (var / nf).sqrt(),
    }
}

/// Monte-Carlo estimates under the coupling `X_t^i = X_t^{i−1} + 1{Λ > t}`,
/// `Λ ~ Exp(1)`. Path `k` draws from stream `k` of the seed, so results do not
/// depend on the execution mode.
pub fn simulate_coupled(config: &SimulationConfig) -> Result<SimulationReport> {
    simulate_coupled_with(Execution::default(), config)
}

pub fn simulate_coupled_with(
    exec: Execution,
    config: &SimulationConfig,
) -> Result<SimulationReport> {
    let c = config;
    check_lambda(c.lambda)?;
    if c.i == 0 {
        return Err(invalid("coupled pair needs i >= 1"));
    }
    if c.n_paths < 2 {
        return Err(invalid("need at least two paths"));
    }
    if !(c.s > 0.0 && c.horizon > 0.0 && c.horizon.is_finite()) {
        return Err(invalid("discount rate and horizon must be positive"));
    }
    let target = c.i - 1;
    let s = c.s;
    let disc = |a: f64, b: f64| ((-s * a).exp() - (-s * b).exp()) / s;
    let stats = exec.map_range(0..c.n_paths, |k| {
        let mut rng = path_rng(c.seed, k as u64);
        let clock: f64 = rng.sample(Exp1);
        let (mut diagonal, mut mean) = (0.0, 0.0);
        let mut at_diag = vec![false; c.sample_times.len()];
        let mut final_state = target;
        walk(&mut rng, target, c.lambda, c.horizon, |a, b, x| {
            let w = disc(a, b);
            if x == target {
                diagonal += w;
            }
            mean += w * x as f64;
            for (slot, &t) in at_diag.iter_mut().zip(&c.sample_times) {
                if a <= t && t < b {
                    *slot = x == target;
                }
            }
            final_state = x;
        });
        PathStats {
            diagonal,
            gap: disc(0.0, clock.min(c.horizon)),
            mean,
            at_diag,
            final_state,
        }
    });
    let n = c.n_paths;
    let samples = c
        .sample_times
        .iter()
        .enumerate()
        .map(|(m, &t)| {
            let mu = -c.lambda * (-t).exp_m1();
            let mode = mu.floor() as usize;
            TimeSample {
                t,
                diagonal: estimate(
                    stats.iter().map(move |p| f64::from(u8::from(p.at_diag[m]))),
                    n,
                ),
                mode_probability: semigroup_entry(0, mode, t, c.lambda),
            }
        })
        .collect();
    let top = stats.iter().map(|p| p.final_state).max().unwrap_or(0);
    let mut final_counts = vec![0u64; top + 1];
    for p in &stats {
        final_counts[p.final_state] += 1;
    }
    Ok(SimulationReport {
        config: c.clone(),
        diagonal_integral: estimate(stats.iter().map(|p| p.diagonal), n),
        coupling_gap_integral: estimate(stats.iter().map(|p| p.gap), n),
        mean_integral: estimate(stats.iter().map(|p| p.mean), n),
        samples,
        final_counts,
    })
}
