//! Small numerical building blocks shared by the rest of the crate.

use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// How a supremum over an unbounded index set was obtained from a finite window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupKind {
    /// Attained inside the window; the tail sits below it by a margin.
    Interior,
    /// Approached as the index grows; value is the extrapolated limit.
    Limit,
    /// Every value is below the absolute floor.
    Negligible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifiedSup {
    pub value: f64,
    /// Index (in the caller's numbering) of the largest observed value.
    pub argmax: usize,
    pub kind: SupKind,
}

pub(crate) const SUP_WINDOW: usize = 20;
const SUP_REL_MARGIN: f64 = 1e-9;
const SUP_FLOOR: f64 = 1e-12;
const SUP_MONO_TOL: f64 = 1e-12;

/// Certify `sup_k values[k]` over an unbounded index set from a finite window.
///
/// `offset` is the index of `values[0]`. A supremum is accepted when the last
/// [`SUP_WINDOW`] values sit below the running maximum by a relative margin, when
/// the whole sequence is negligible, or when the tail is non-decreasing with
/// non-increasing increments; in the last case the reported value is the
/// limit extrapolated from a `L + a/i + b/i^2` model.
pub fn certify_sup(what: &str, values: &[f64], offset: usize) -> Result<CertifiedSup> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure(format!("non-finite value in {what}")));
    }
    let (argmax_local, max) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(ai, am), (i, v)| {
                if v > am {
                    (i, v)
                } else {
                    (ai, am)
                }
            });
    let argmax = argmax_local + offset;
    if values.len() < SUP_WINDOW + 2 {
        return Err(Error::CertificationFailure {
            what: what.to_string(),
            partial_max: max,
            argmax,
        });
    }
    if values.iter().all(|v| v.abs() <= SUP_FLOOR) {
        return Ok(CertifiedSup {
            value: max,
            argmax,
            kind: SupKind::Negligible,
        });
    }
    let tail = &values[values.len() - SUP_WINDOW..];
    let margin = SUP_REL_MARGIN * max.abs().max(1.0);
    if tail.iter().all(|&v| v <= max - margin) {
        return Ok(CertifiedSup {
            value: max,
            argmax,
            kind: SupKind::Interior,
        });
    }
    let tol = SUP_MONO_TOL * max.abs().max(1.0);
    let non_decreasing = tail.windows(2).all(|w| w[1] >= w[0] - tol);
    let concave = tail
        .windows(3)
        .all(|w| (w[2] - w[1]) <= (w[1] - w[0]) + tol);
    if non_decreasing && concave {
        let n = values.len();
        let limit = richardson_limit(values, offset, [n / 4, n / 2, n - 1]);
        return Ok(CertifiedSup {
            value: limit.max(max),
            argmax,
            kind: SupKind::Limit,
        });
    }
    Err(Error::CertificationFailure {
        what: what.to_string(),
        partial_max: max,
        argmax,
    })
}

/// [`certify_sup`], refining a [`SupKind::Limit`] result with `far(i)` evaluated
/// at `i = n·4^m`, `m = 1..=8`, past the window's last index `n`.
///
/// The far values must keep rising; the limit is the cubic extrapolation in
/// `1/i` through the last four of them.
pub fn certify_sup_far(
    what: &str,
    values: &[f64],
    offset: usize,
    far: impl Fn(usize) -> f64,
) -> Result<CertifiedSup> {
    let sup = certify_sup(what, values, offset)?;
    if sup.kind != SupKind::Limit {
        return Ok(sup);
    }
    let last = offset + values.len() - 1;
    let observed = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = SUP_MONO_TOL * observed.abs().max(1.0);
    let xs: Vec<f64> = (1..=8)
        .map(|m| 1.0 / (last as f64 * 4f64.powi(m)))
        .collect();
    let ys: Vec<f64> = xs.iter().map(|x| far((1.0 / x).round() as usize)).collect();
    let rising = std::iter::once(&values[values.len() - 1])
        .chain(&ys)
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| *w[1] >= *w[0] - tol);
    if !rising || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::CertificationFailure {
            what: what.to_string(),
            partial_max: observed,
            argmax: sup.argmax,
        });
    }
    let limit = neville_at_zero(&xs[4..], &ys[4..]);
    let value = ys.iter().copied().fold(observed.max(limit), f64::max);
    Ok(CertifiedSup {
        value,
        argmax: sup.argmax,
        kind: SupKind::Limit,
    })
}

/// Value at `x = 0` of the polynomial through `(xs, ys)`.
pub(crate) fn neville_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for level in 1..n {
        for k in 0..n - level {
            p[k] = (xs[k + level] * p[k] - xs[k] * p[k + 1]) / (xs[k + level] - xs[k]);
        }
    }
    p[0]
}

/// Fit `r(i) = L + a/i + b/i^2` through three samples and return `L`.
pub(crate) fn richardson_limit(values: &[f64], offset: usize, at: [usize; 3]) -> f64 {
    let x: Vec<f64> = at
        .iter()
        .map(|&k| 1.0 / ((k + offset).max(1) as f64))
        .collect();
    let y: Vec<f64> = at.iter().map(|&k| values[k]).collect();
    // Lagrange interpolation in x evaluated at x = 0.
    let mut l = 0.0;
    for a in 0..3 {
        let mut w = 1.0;
        for b in 0..3 {
            if a != b {
                w *= (0.0 - x[b]) / (x[a] - x[b]);
            }
        }
        l += w * y[a];
    }
    l
}
