//! Distributions on the non-negative integers.

use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{invalid, Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};

/// Default certified tail mass for truncated Poisson tables.
pub const DEFAULT_EPS_TAIL: f64 = 1e-12;

/// Truncation used internally where the Stein recursions must not see the
/// cut: far below anything a caller can resolve.
pub(crate) const DEEP_EPS_TAIL: f64 = 1e-280;

const NORMALIZATION_TOL: f64 = 1e-15;

/// Finitely truncated probability mass function on `0..=N`, with a certified
/// bound on the mass beyond `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    probs: Vec<f64>,
    tail_bound: f64,
    mean_lambda: Option<f64>,
}

impl Pmf {
    /// Wrap probabilities whose total is within `1e-9` of one; they are
    /// renormalized exactly and the tail bound is zero.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("empty probability vector"));
        }
        if let Some(k) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid(format!("entry {k} is negative or not finite")));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Pmf {
            probs,
            tail_bound: 0.0,
            mean_lambda: None,
        })
    }

    /// Construct from raw parts, checking `Σ probs ∈ [1 − tail_bound, 1]`.
    pub fn with_tail(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("empty probability vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0)
            || tail_bound.is_nan()
            || tail_bound < 0.0
        {
            return Err(invalid(
                "probabilities and tail bound must be finite and non-negative",
            ));
        }
        let total = compensated_sum(probs.iter().copied());
        if total > 1.0 + NORMALIZATION_TOL || total + tail_bound < 1.0 - NORMALIZATION_TOL {
            return Err(invalid(format!(
                "mass {total} with tail bound {tail_bound} is not a probability"
            )));
        }
        Ok(Pmf {
            probs,
            tail_bound,
            mean_lambda: None,
        })
    }

    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Pmf {
            probs,
            tail_bound: 0.0,
            mean_lambda: None,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability at `i`; zero beyond the truncation.
    pub fn prob(&self, i: usize) -> f64 {
        self.probs.get(i).copied().unwrap_or(0.0)
    }

    pub fn trunc_index(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Poisson mean when this table is a truncated Poisson law.
    pub fn mean_lambda(&self) -> Option<f64> {
        self.mean_lambda
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    /// `Σ_i p_i f(i)` over the table.
    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        compensated_sum(self.probs.iter().enumerate().map(|(i, p)| p * f(i)))
    }

    /// Cumulative distribution `P(X ≤ i)` for `0 ≤ i ≤ N`.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = CompensatedSum::new();
        self.probs
            .iter()
            .map(|&p| {
                acc.add(p);
                acc.value()
            })
            .collect()
    }
}

/// Law on ℤ stored as a base index and a probability table; used for
/// centred sums whose support reaches below zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticePmf {
    pub base: i64,
    pub probs: Vec<f64>,
}

impl LatticePmf {
    pub fn shifted(pmf: &Pmf, shift: i64) -> Self {
        LatticePmf {
            base: shift,
            probs: pmf.probs.clone(),
        }
    }
}

impl From<&Pmf> for LatticePmf {
    fn from(pmf: &Pmf) -> Self {
        LatticePmf::shifted(pmf, 0)
    }
}

pub(crate) fn log_poisson(lambda: f64, i: usize) -> f64 {
    -lambda + i as f64 * lambda.ln() - ln_factorial(i as u64)
}

/// Poisson(λ) truncated at the smallest `N` whose upper tail is below `eps_tail`.
///
/// Entries are evaluated in log space, so the table is valid for large λ.
pub fn poisson_pmf(lambda: f64, eps_tail: f64) -> Result<Pmf> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(invalid(format!(
            "lambda must be finite and positive, got {lambda}"
        )));
    }
    if !(eps_tail > 0.0 && eps_tail < 1.0) {
        return Err(invalid(format!(
            "eps_tail must lie in (0, 1), got {eps_tail}"
        )));
    }
    let eps_tail = eps_tail.max(1e-300);
    // Generate past the point where the geometric majorant of the remainder is
    // far below eps_tail.
    let stop = eps_tail * 1e-4;
    let mut probs = Vec::new();
    let mut i = 0usize;
    loop {
        let p = log_poisson(lambda, i).exp();
        probs.push(p);
        if (i as f64) > lambda + 1.0 && p < stop {
            break;
        }
        i += 1;
    }
    let m = probs.len() - 1;
    let next = log_poisson(lambda, m + 1).exp();
    let mut remainder = next / (1.0 - lambda / (m as f64 + 2.0));
    // log-space entries carry ~1e-14 relative error for large λ; rescale so the
    // full law sums to one
    let total = compensated_sum(probs.iter().copied()) + remainder;
    probs.iter_mut().for_each(|p| *p /= total);
    remainder /= total;
    // tails[n] = certified mass strictly beyond n
    let mut tails = vec![0.0; m + 1];
    let mut acc = CompensatedSum::new();
    acc.add(remainder);
    for n in (0..=m).rev() {
        tails[n] = acc.value();
        acc.add(probs[n]);
    }
    let n = tails.iter().position(|&t| t < eps_tail).unwrap_or(m);
    probs.truncate(n + 1);
    Ok(Pmf {
        probs,
        tail_bound: tails[n],
        mean_lambda: Some(lambda),
    })
}

/// Exact law of a sum of independent Bernoulli(p_i), one convolution per summand.
pub fn poisson_binomial_pmf(p: &[f64]) -> Result<Pmf> {
    if p.is_empty() {
        return Err(invalid("empty probability list"));
    }
    if let Some(k) = p.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(invalid(format!("p[{k}] = {} outside [0, 1]", p[k])));
    }
    let mut probs = vec![1.0];
    for &q in p {
        let mut next = vec![0.0; probs.len() + 1];
        for (k, &w) in probs.iter().enumerate() {
            next[k] += w * (1.0 - q);
            next[k + 1] += w * q;
        }
        probs = next;
    }
    Ok(Pmf {
        probs,
        tail_bound: 0.0,
        mean_lambda: None,
    })
}

/// Lower-tail exponential bound `exp(-t² / (2μ))` for a Bernoulli sum with mean μ.
pub fn chernoff_lower_tail(mu: f64, t: f64) -> f64 {
    (-t * t / (2.0 * mu)).exp()
}

/// The Poisson tail functionals `e_i^+`, `e_i^-`, `r_i` and the two-sided CDFs.
#[derive(Debug, Clone, Serialize)]
pub struct TailFunctionals {
    lambda: f64,
    n: usize,
    pi: Vec<f64>,
    e_plus: Vec<f64>,
    /// `e_minus[0]` is unused.
    e_minus: Vec<f64>,
    f_left: Vec<f64>,
    f_right: Vec<f64>,
}

impl TailFunctionals {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pi(&self, i: usize) -> f64 {
        self.pi[i]
    }

    /// `e_i^+ = F_left(i) / (λ π_i)`, `0 ≤ i ≤ N + 2`.
    pub fn e_plus(&self, i: usize) -> f64 {
        self.e_plus[i]
    }

    /// `e_i^- = F_right(i) / (i π_i)`, `1 ≤ i ≤ N + 2`.
    pub fn e_minus(&self, i: usize) -> f64 {
        assert!(i >= 1, "e_minus is defined for i >= 1");
        self.e_minus[i]
    }

    /// `P(X ≤ i)`.
    pub fn f_left(&self, i: usize) -> f64 {
        self.f_left[i]
    }

    /// `P(X ≥ i)`, computed from the far tail inwards.
    pub fn f_right(&self, i: usize) -> f64 {
        self.f_right[i]
    }

    /// `r_i = π_{i+1}(2e_i^+ − e_{i−1}^+ + e_{i+2}^−) − Δ²e_{i−1}^+ · F_right(i+2)`, `1 ≤ i ≤ N`.
    pub fn r(&self, i: usize) -> f64 {
        assert!(i >= 1 && i <= self.n);
        let ep = &self.e_plus;
        self.pi[i + 1] * (2.0 * ep[i] - ep[i - 1] + self.e_minus[i + 2])
            - (ep[i + 1] - 2.0 * ep[i] + ep[i - 1]) * self.f_right[i + 2]
    }
}

/// Tabulate the tail functionals of Poisson(λ) for indices up to `n`.
///
/// Fails when `π_i` underflows on `0..=n+2` (λ beyond roughly 700).
pub fn tail_functionals(lambda: f64, n: usize) -> Result<TailFunctionals> {
    if n < 2 {
        return Err(invalid("tail functionals need N >= 2"));
    }
    let deep = poisson_pmf(lambda, DEEP_EPS_TAIL)?;
    let top = n + 3;
    let len = deep.probs.len().max(top + 1);
    let pi: Vec<f64> = (0..len)
        .map(|i| {
            if i < deep.probs.len() {
                deep.prob(i)
            } else {
                log_poisson(lambda, i).exp()
            }
        })
        .collect();
    if let Some(i) = pi[..=top].iter().position(|&p| p < f64::MIN_POSITIVE) {
        return Err(Error::NumericFailure(format!(
            "pi_{i} underflows at lambda = {lambda}; tail functionals unavailable"
        )));
    }
    let mut f_left = Vec::with_capacity(top + 1);
    let mut acc = CompensatedSum::new();
    for &p in &pi[..=top] {
        acc.add(p);
        f_left.push(acc.value());
    }
    let mut f_right = vec![0.0; len];
    let mut acc = CompensatedSum::new();
    acc.add(deep.tail_bound);
    for i in (0..len).rev() {
        acc.add(pi[i]);
        f_right[i] = acc.value();
    }
    f_right.truncate(top + 1);
    let e_plus: Vec<f64> = (0..=top).map(|i| f_left[i] / (lambda * pi[i])).collect();
    let e_minus: Vec<f64> = (0..=top)
        .map(|i| {
            if i == 0 {
                f64::INFINITY
            } else {
                f_right[i] / (i as f64 * pi[i])
            }
        })
        .collect();
    Ok(TailFunctionals {
        lambda,
        n,
        pi: pi[..=top].to_vec(),
        e_plus,
        e_minus,
        f_left,
        f_right,
    })
}
