//! Solutions of the Poisson Stein equation `λg(i+1) − i·g(i) = f(i) − π(f)` and
//! the exact Stein factors `M₀, M₁, M₂` of a cost ρ.

use serde::Serialize;

use crate::cost::{CostKind, CostRho, Shape};
use crate::dist::{poisson_pmf, tail_functionals, Pmf, TailFunctionals, DEEP_EPS_TAIL};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::numeric::{
    certify_sup, certify_sup_far, compensated_sum, CertifiedSup, CompensatedSum, SupKind,
};

/// Smallest index range scanned for the factor suprema.
pub const MIN_EVAL_RANGE: usize = 64;

/// Relative agreement required between the recursion and closed-form routes.
pub const ROUTE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteinSolution {
    pub lambda: f64,
    pub f: Vec<f64>,
    pub pi_f: f64,
    /// `g(0..=N)` with `g(0) = g(1)`.
    pub g: Vec<f64>,
    /// `h(0..=N)`, centred under the table weights.
    pub h: Vec<f64>,
    /// `Δh(0..N)`.
    pub dh: Vec<f64>,
}

impl SteinSolution {
    /// `max_i |λg(i+1) − i·g(i) − (f(i) − π(f))| / max(1, |f(i)|)` over `0 ≤ i < N`.
    pub fn max_relative_residual(&self) -> f64 {
        let n = self.g.len() - 1;
        (0..n)
            .map(|i| {
                let lhs = self.lambda * self.g[i + 1] - i as f64 * self.g[i];
                (lhs - (self.f[i] - self.pi_f)).abs() / self.f[i].abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "lambda must be finite and positive, got {lambda}"
        )))
    }
}

/// `g` on `0..=N` for weights `probs` (a Poisson(λ) table, possibly truncated)
/// and the table-weighted mean of `f`.
///
/// Indices up to `⌈λ⌉` use the forward recurrence `u(i+1) = c_i + (i/λ)u(i)`,
/// `g = u/λ`; higher indices use `v(i) = c_i + λ/(i+1)·v(i+1)`, `g = −v/i`.
/// Both multipliers are at most one on their side of the mode.
pub(crate) fn stein_g(lambda: f64, probs: &[f64], f: &[f64]) -> (Vec<f64>, f64) {
    let n = probs.len() - 1;
    let mass = compensated_sum(probs.iter().copied());
    let pi_f = compensated_sum(probs.iter().zip(f).map(|(p, x)| p * x)) / mass;
    let c: Vec<f64> = f[..=n].iter().map(|x| x - pi_f).collect();
    let mut g = vec![0.0; n + 1];
    if n == 0 {
        return (g, pi_f);
    }
    let split = (lambda.ceil() as usize).clamp(1, n);
    let mut u = c[0];
    g[1] = u / lambda;
    for i in 1..split {
        u = c[i] + (i as f64 / lambda) * u;
        g[i + 1] = u / lambda;
    }
    if n > split {
        let mut v = c[n];
        g[n] = -v / n as f64;
        for i in (split + 1..n).rev() {
            v = c[i] + lambda / (i as f64 + 1.0) * v;
            g[i] = -v / i as f64;
        }
    }
    g[0] = g[1];
    (g, pi_f)
}

/// Solve the Stein equation for `f` on the table of `pmf`, a Poisson(λ) law.
pub fn solve_stein(f: &[f64], lambda: f64, pmf: &Pmf) -> Result<SteinSolution> {
    check_lambda(lambda)?;
    if let Some(m) = pmf.mean_lambda() {
        if (m - lambda).abs() > 1e-12 * lambda {
            return Err(invalid(format!("pmf has mean {m}, expected {lambda}")));
        }
    }
    let n = pmf.trunc_index();
    if f.len() < n + 1 {
        return Err(invalid(format!(
            "f has {} values, needs {}",
            f.len(),
            n + 1
        )));
    }
    if f[..=n].iter().any(|x| !x.is_finite()) {
        return Err(invalid("f contains a non-finite value"));
    }
    let probs = pmf.probs();
    let (g, pi_f) = stein_g(lambda, probs, f);
    let mut h = Vec::with_capacity(n + 1);
    let mut acc = CompensatedSum::new();
    h.push(0.0);
    for &gi in &g[1..] {
        acc.add(gi);
        h.push(acc.value());
    }
    let mass = compensated_sum(probs.iter().copied());
    let centre = compensated_sum(probs.iter().zip(&h).map(|(p, x)| p * x)) / mass;
    h.iter_mut().for_each(|x| *x -= centre);
    let dh = g[1..].to_vec();
    Ok(SteinSolution {
        lambda,
        f: f[..=n].to_vec(),
        pi_f,
        g,
        h,
        dh,
    })
}

/// Poisson weights deep enough that truncation is invisible, and the cost
/// tabulated over the same range. Table costs shorter than the deep range
/// cut the range at the table's end.
pub(crate) fn deep_context(cost: &CostRho, lambda: f64) -> Result<(Vec<f64>, CostRho)> {
    let deep = poisson_pmf(lambda, DEEP_EPS_TAIL)?;
    let nd = deep.trunc_index();
    if cost.n() >= nd {
        return Ok((deep.probs().to_vec(), cost.clone()));
    }
    match cost.kind() {
        CostKind::Table { .. } => Ok((deep.probs()[..=cost.n()].to_vec(), cost.clone())),
        _ => Ok((deep.probs().to_vec(), cost.extended(nd)?)),
    }
}

/// Upper end of the index window scanned for suprema.
pub(crate) fn eval_range(pmf: &Pmf, deep_n: usize) -> usize {
    pmf.trunc_index().max(MIN_EVAL_RANGE).min(deep_n - 3)
}

/// `Δh_ρ(i)` for `0 ≤ i < N` where `Qh_ρ = ρ − π(ρ)`.
pub fn delta_h_rho(cost: &CostRho, lambda: f64, pmf: &Pmf) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let (probs, cost) = deep_context(cost, lambda)?;
    let (g, _) = stein_g(lambda, &probs, cost.values());
    let n = pmf.trunc_index().min(g.len() - 1);
    Ok(g[1..=n].to_vec())
}

/// `π(ρ_p)` for `ρ_p(i) = i^p`, through the binomial moment recursion.
pub fn poisson_power_moment(p: u32, lambda: f64) -> f64 {
    let mut moments = vec![1.0];
    for q in 1..=p as usize {
        let s: f64 = (0..q).map(|k| binomial(q - 1, k) * moments[k]).sum();
        moments.push(lambda * s);
    }
    moments[p as usize]
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `h_p(i)` solving `Qh_p = ρ_p − π(ρ_p)` for `ρ_p(i) = i^p`, by the recursion in `p`.
pub fn h_p_recursive(p: u32, lambda: f64, i: usize) -> Result<f64> {
    if p == 0 {
        return Err(invalid("h_p needs p >= 1"));
    }
    check_lambda(lambda)?;
    if i == 0 {
        return Ok(h_p_recursive(p, lambda, 1)? + poisson_power_moment(p, lambda) / lambda);
    }
    let x = i as f64;
    let mut h = vec![0.0, -x];
    for q in 2..=p as usize {
        let qf = q as f64;
        let s: f64 = (1..q)
            .map(|k| {
                let sign = if (q - k + 1) % 2 == 0 { 1.0 } else { -1.0 };
                binomial(q, k) * h[k] * (lambda + k as f64 * sign / (q - k + 1) as f64)
            })
            .sum();
        h.push(-x.powi(q as i32) / qf + s / qf);
    }
    Ok(h[p as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorStatus {
    /// The extremal function is proven extremal for this cost.
    Exact,
    /// Sup over the extremal family only; the true factor may be larger.
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorExact {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub argmax0: usize,
    pub argmax1: usize,
    pub argmax2: usize,
    pub sup_kind: [SupKind; 3],
    pub m1_status: FactorStatus,
    pub m2_status: FactorStatus,
    /// `|g(0)|/Δρ(0)`, `|Δg(0)|/Δρ(0)`, `|Δ²g(0)|/Δρ(0)` at the extremal functions.
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    /// Indices `1..=eval_range` were scanned.
    pub eval_range: usize,
    /// False when λ is too large for the closed-form route.
    pub routes_checked: bool,
}

/// `f_i^*(j) = −|ρ(j) − ρ(i)|`
pub fn extremal_m1(cost: &CostRho, i: usize, len: usize) -> Vec<f64> {
    (0..len).map(|j| -cost.distance(i, j)).collect()
}

/// `f_i^△(j) = ρ(i) − ρ(j)` for `j ≤ i` and `2ρ(i+1) − ρ(i) − ρ(j)` above.
pub fn extremal_m2(cost: &CostRho, i: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|j| {
            if j <= i {
                cost.rho(i) - cost.rho(j)
            } else {
                2.0 * cost.rho(i + 1) - cost.rho(i) - cost.rho(j)
            }
        })
        .collect()
}

/// Prefix sums `P(i) = Σ_{j<i} π_j f_j` and suffix sums `S(i) = Σ_{j≥i} π_j f_j`.
struct WeightedSums {
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl WeightedSums {
    fn new(probs: &[f64], f: &[f64]) -> Self {
        let n = probs.len();
        let mut prefix = Vec::with_capacity(n + 1);
        let mut acc = CompensatedSum::new();
        prefix.push(0.0);
        for j in 0..n {
            acc.add(probs[j] * f[j]);
            prefix.push(acc.value());
        }
        let mut suffix = vec![0.0; n + 1];
        let mut acc = CompensatedSum::new();
        for j in (0..n).rev() {
            acc.add(probs[j] * f[j]);
            suffix[j] = acc.value();
        }
        WeightedSums { prefix, suffix }
    }
}

/// `g_f(i) = e_i^− P(i) − e_{i−1}^+ S(i)`.
fn closed_g(tf: &TailFunctionals, s: &WeightedSums, i: usize) -> f64 {
    tf.e_minus(i) * s.prefix[i] - tf.e_plus(i - 1) * s.suffix[i]
}

/// `Δg_f(i) = Δe_i^− P(i) − Δe_{i−1}^+ S(i+1) + π_i f_i (e_{i+1}^− + e_{i−1}^+)`.
fn closed_dg(tf: &TailFunctionals, s: &WeightedSums, f: &[f64], i: usize) -> f64 {
    let de_minus = tf.e_minus(i + 1) - tf.e_minus(i);
    let de_plus = tf.e_plus(i) - tf.e_plus(i - 1);
    de_minus * s.prefix[i] - de_plus * s.suffix[i + 1]
        + tf.pi(i) * f[i] * (tf.e_minus(i + 1) + tf.e_plus(i - 1))
}

/// Second difference of `g_f` at `i ≥ 1` in tail-functional form.
pub(crate) fn closed_d2g_at(
    tf: &TailFunctionals,
    prefix_i: f64,
    suffix_i2: f64,
    f: &[f64],
    i: usize,
) -> f64 {
    let d2e_minus = tf.e_minus(i + 2) - 2.0 * tf.e_minus(i + 1) + tf.e_minus(i);
    let d2e_plus = tf.e_plus(i + 1) - 2.0 * tf.e_plus(i) + tf.e_plus(i - 1);
    d2e_minus * prefix_i - d2e_plus * suffix_i2
        + (2.0 * tf.e_plus(i) - tf.e_plus(i - 1) + tf.e_minus(i + 2)) * tf.pi(i + 1) * f[i + 1]
        + (tf.e_minus(i + 2) - 2.0 * tf.e_minus(i + 1) - tf.e_plus(i - 1)) * tf.pi(i) * f[i]
}

/// `Δ²g_f(i)` for `1 ≤ i ≤ N` through tail functionals, for any `f` on the deep range of λ.
pub fn closed_form_d2g(lambda: f64, f: &[f64], n: usize) -> Result<Vec<f64>> {
    let deep = poisson_pmf(lambda, DEEP_EPS_TAIL)?;
    let probs = &deep.probs()[..f.len().min(deep.probs().len())];
    let tf = tail_functionals(lambda, n)?;
    let s = WeightedSums::new(probs, f);
    Ok((1..=n)
        .map(|i| closed_d2g_at(&tf, s.prefix[i], s.suffix[i + 2], f, i))
        .collect())
}

/// `g_f(i)` for any `i ≥ 1` from the upper-tail series
/// `−(1/i) Σ_{k≥0} (π_{i+k}/π_i)(f(i+k) − π(f))`, which needs no `π_i`.
pub(crate) fn g_far(lambda: f64, pi_f: f64, f: impl Fn(usize) -> f64, i: usize) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut w = 1.0;
    let mut k = 0;
    loop {
        acc.add(w * (f(i + k) - pi_f));
        k += 1;
        w *= lambda / (i + k) as f64;
        if w < 1e-20 || !w.is_finite() {
            break;
        }
    }
    -acc.value() / i as f64
}

fn agree(what: &'static str, index: usize, recursion: f64, closed_form: f64) -> Result<()> {
    if (recursion - closed_form).abs() <= ROUTE_TOL * recursion.abs().max(1.0) {
        Ok(())
    } else {
        Err(Error::RouteDisagreement {
            what,
            index,
            recursion,
            closed_form,
        })
    }
}

struct PerIndex {
    r1: f64,
    r2: f64,
    closed: Option<(f64, f64)>,
}

/// Exact `M₀, M₁, M₂` and boundary values, each by two independent routes.
pub fn exact_factors(cost: &CostRho, lambda: f64, pmf: &Pmf) -> Result<FactorExact> {
    exact_factors_with(Execution::default(), cost, lambda, pmf)
}

pub fn exact_factors_with(
    exec: Execution,
    cost: &CostRho,
    lambda: f64,
    pmf: &Pmf,
) -> Result<FactorExact> {
    check_lambda(lambda)?;
    let (probs, cost) = deep_context(cost, lambda)?;
    let nd = probs.len() - 1;
    if nd < 8 {
        return Err(invalid("cost range too short for factor computation"));
    }
    let k = eval_range(pmf, nd);
    let tf = tail_functionals(lambda, k).ok();
    let len = nd + 1;

    let neg_rho: Vec<f64> = cost.values()[..len].iter().map(|x| -x).collect();
    let (g0, pi_neg_rho) = stein_g(lambda, &probs, &neg_rho);
    let r0: Vec<f64> = (1..=k).map(|i| g0[i] / cost.delta(i)).collect();
    if let Some(tf) = &tf {
        let s = WeightedSums::new(&probs, &neg_rho);
        for (i, &gi) in g0.iter().enumerate().take(k + 1).skip(1) {
            agree("g_{-rho}", i, gi, closed_g(tf, &s, i))?;
        }
    }

    let per_index = exec.map_range(1..k + 1, |i| {
        let f1 = extremal_m1(&cost, i, len);
        let (g1, _) = stein_g(lambda, &probs, &f1);
        let f2 = extremal_m2(&cost, i, len);
        let (g2, _) = stein_g(lambda, &probs, &f2);
        let d1 = g1[i + 1] - g1[i];
        let d2 = g2[i + 2] - 2.0 * g2[i + 1] + g2[i];
        let closed = tf.as_ref().map(|tf| {
            let s1 = WeightedSums::new(&probs, &f1);
            let s2 = WeightedSums::new(&probs, &f2);
            (
                closed_dg(tf, &s1, &f1, i),
                closed_d2g_at(tf, s2.prefix[i], s2.suffix[i + 2], &f2, i),
            )
        });
        PerIndex {
            r1: d1,
            r2: d2,
            closed,
        }
    });
    for (idx, p) in per_index.iter().enumerate() {
        if let Some((c1, c2)) = p.closed {
            agree("dg_{f*}", idx + 1, p.r1, c1)?;
            agree("d2g_{f-triangle}", idx + 1, p.r2, c2)?;
        }
    }
    let r1: Vec<f64> = per_index
        .iter()
        .enumerate()
        .map(|(idx, p)| p.r1 / cost.delta(idx + 1))
        .collect();
    let r2: Vec<f64> = per_index
        .iter()
        .enumerate()
        .map(|(idx, p)| p.r2 / cost.delta(idx + 1))
        .collect();

    let s0: CertifiedSup = match cost.kind() {
        CostKind::Table { .. } => certify_sup("M0 ratio", &r0, 1)?,
        _ => certify_sup_far("M0 ratio", &r0, 1, |i| {
            let g = g_far(lambda, pi_neg_rho, |j| -cost.eval(j).unwrap_or(f64::NAN), i);
            g / cost.delta_at(i).unwrap_or(f64::NAN)
        })?,
    };
    let s1 = certify_sup("M1 ratio", &r1, 1)?;
    let s2 = certify_sup("M2 ratio", &r2, 1)?;

    let f_star_1 = extremal_m1(&cost, 1, len);
    let (gb, _) = stein_g(lambda, &probs, &f_star_1);
    let b0 = g0[1].abs() / cost.delta(0);
    let b2 = (gb[2] - gb[1]).abs() / cost.delta(0);

    let m1_status = match cost.shape() {
        Shape::Convex | Shape::Concave => FactorStatus::Exact,
        Shape::Neither => FactorStatus::LowerBound,
    };
    let m2_status = match cost.kind() {
        CostKind::Linear | CostKind::SqrtCase { .. } => FactorStatus::Exact,
        CostKind::Power { p } if *p == 2.0 => FactorStatus::Exact,
        _ => FactorStatus::LowerBound,
    };
    Ok(FactorExact {
        m0: s0.value,
        m1: s1.value,
        m2: s2.value,
        argmax0: s0.argmax,
        argmax1: s1.argmax,
        argmax2: s2.argmax,
        sup_kind: [s0.kind, s1.kind, s2.kind],
        m1_status,
        m2_status,
        b0,
        b1: 0.0,
        b2,
        eval_range: k,
        routes_checked: tf.is_some(),
    })
}

/// `E[λg(W+1) − W·g(W)]` for `W` distributed as `pmf`.
///
/// `g` is read on `0..=N+1` and held at its last value beyond. For a Poisson
/// table the expectation runs over a table truncated at `1e-280`, so the
/// result measures the Stein characterization rather than the cut-off.
pub fn stein_identity_residual(g: &[f64], pmf: &Pmf, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if g.is_empty() {
        return Err(invalid("g is empty"));
    }
    let deep;
    let probs = match pmf.mean_lambda() {
        Some(m) if (m - lambda).abs() <= 1e-12 * lambda => {
            deep = poisson_pmf(lambda, DEEP_EPS_TAIL)?;
            deep.probs()
        }
        _ => pmf.probs(),
    };
    let at = |i: usize| g[i.min(g.len() - 1).min(pmf.trunc_index() + 1)];
    Ok(compensated_sum(
        probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * (lambda * at(i + 1) - i as f64 * at(i))),
    ))
}
