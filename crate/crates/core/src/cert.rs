//! Error certificates for Poisson approximation of Poisson-binomial sums.
//!
//! With `μ = Σp_i`, `μ_l = Σp_i^l` and `λ = μ − μ₂`, an integer `μ₂` admits
//!
//! * `𝒲_{d_{ρ₂}}(L((W−μ₂)1_{W≥μ₂}), Poisson(λ)) ≤ 6(μ₂−μ₃) + μ₂(7+λ)e^{−λ²/(2μ)}`
//! * `𝕎₂(L(W−μ₂), Poisson(λ)) ≤ μ₂e^{−λ²/(4μ)} + √(first bound)`
//!
//! and both left-hand sides are computed exactly for comparison.

use std::str::FromStr;

use serde::Serialize;

use crate::cost::CostRho;
use crate::dist::{
    chernoff_lower_tail, poisson_binomial_pmf, poisson_pmf, LatticePmf, Pmf, DEFAULT_EPS_TAIL,
};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::numeric::compensated_sum;
use crate::transport::{wasserstein_p, wasserstein_rho};

/// `μ₂` counts as an integer within this distance.
pub const INTEGRALITY_TOL: f64 = 1e-9;
/// Slack allowed in every certificate inequality.
pub const CERT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Inequality {
    fn new(lhs: f64, rhs: f64) -> Self {
        Inequality {
            lhs,
            rhs,
            holds: lhs <= rhs + CERT_TOL,
        }
    }
}

/// Intermediate inequalities behind the two bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateChecks {
    /// `|E[(W−μ₂)1_{W≤μ₂}]| ≤ μ₂P(W ≤ μ₂)`
    pub truncated_mean: Inequality,
    /// `P(W ≤ μ₂) ≤ e^{−λ²/(2μ)}`
    pub lower_tail: Inequality,
    /// `𝕎₂(L((W−μ₂)1_{W≥μ₂}), L(W−μ₂)) ≤ μ₂e^{−λ²/(4μ)}`
    pub truncation_w2: Inequality,
    /// `μ₂ − μ₃ ≤ λ`
    pub moment_gap: Inequality,
}

impl CertificateChecks {
    pub fn all_hold(&self) -> bool {
        [
            self.truncated_mean,
            self.lower_tail,
            self.truncation_w2,
            self.moment_gap,
        ]
        .iter()
        .all(|c| c.holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub p: Vec<f64>,
    pub n: usize,
    pub mu: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub lam: f64,
    pub mu2_integral: bool,
    pub lambda_positive: bool,
    /// Present only when the certificate is valid.
    pub bound1: Option<f64>,
    pub bound2: Option<f64>,
    pub exact1: Option<f64>,
    /// Additive uncertainty of `exact1` from the truncated Poisson table.
    pub exact1_error_bar: Option<f64>,
    pub exact2: Option<f64>,
    pub checks: Option<CertificateChecks>,
}

impl Certificate {
    pub fn valid(&self) -> bool {
        self.mu2_integral && self.lambda_positive
    }

    /// Both bounds and every intermediate inequality hold; vacuous when invalid.
    pub fn holds(&self) -> bool {
        let le = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a <= b + CERT_TOL,
            _ => true,
        };
        le(self.exact1, self.bound1)
            && le(self.exact2, self.bound2)
            && self.checks.is_none_or(|c| c.all_hold())
    }
}

/// Law of `(W − b)1_{W ≥ b}`: mass `P(W ≤ b)` at zero and `P(W = b + k)` at `k ≥ 1`.
pub fn shifted_truncated_law(p: &[f64], b: usize) -> Result<Pmf> {
    shifted_truncated(&poisson_binomial_pmf(p)?, b)
}

fn shifted_truncated(w: &Pmf, b: usize) -> Result<Pmf> {
    let probs = w.probs();
    if b >= probs.len() {
        return Ok(Pmf::point_mass(0));
    }
    let mut out = Vec::with_capacity(probs.len() - b);
    out.push(compensated_sum(probs[..=b].iter().copied()));
    out.extend_from_slice(&probs[b + 1..]);
    Pmf::with_tail(out, 0.0)
}

pub fn certificate(p: &[f64]) -> Result<Certificate> {
    certificate_with(p, DEFAULT_EPS_TAIL)
}

/// Certificate for `W = Σ Bernoulli(p_i)`, with the Poisson target truncated at `eps_tail`.
pub fn certificate_with(p: &[f64], eps_tail: f64) -> Result<Certificate> {
    let w = poisson_binomial_pmf(p)?;
    let mu = compensated_sum(p.iter().copied());
    let mu2 = compensated_sum(p.iter().map(|x| x * x));
    let mu3 = compensated_sum(p.iter().map(|x| x * x * x));
    let lam = mu - mu2;
    let mu2_integral = (mu2 - mu2.round()).abs() <= INTEGRALITY_TOL;
    let lambda_positive = lam > 0.0;
    let mut cert = Certificate {
        p: p.to_vec(),
        n: p.len(),
        mu,
        mu2,
        mu3,
        lam,
        mu2_integral,
        lambda_positive,
        bound1: None,
        bound2: None,
        exact1: None,
        exact1_error_bar: None,
        exact2: None,
        checks: None,
    };
    if !cert.valid() {
        return Ok(cert);
    }
    let b = mu2.round() as usize;
    let bound1 = 6.0 * (mu2 - mu3) + mu2 * (7.0 + lam) * (-lam * lam / (2.0 * mu)).exp();
    let half_tail = (-lam * lam / (4.0 * mu)).exp();
    let bound2 = mu2 * half_tail + bound1.sqrt();

    let target = poisson_pmf(lam, eps_tail)?;
    let truncated = shifted_truncated(&w, b)?;
    let reach = truncated.trunc_index().max(target.trunc_index());
    let r2 = CostRho::squared(reach.max(4))?;
    let t1 = wasserstein_rho(&truncated, &target, &r2)?;
    let centred = LatticePmf::shifted(&w, -(b as i64));
    let exact2 = wasserstein_p(&centred, &(&target).into(), 2.0)?;

    let below = compensated_sum(w.probs()[..=b.min(w.trunc_index())].iter().copied());
    let trunc_mean = compensated_sum(
        w.probs()
            .iter()
            .enumerate()
            .take(b + 1)
            .map(|(k, q)| q * (k as f64 - b as f64)),
    );
    let checks = CertificateChecks {
        truncated_mean: Inequality::new(trunc_mean.abs(), mu2 * below),
        lower_tail: Inequality::new(below, chernoff_lower_tail(mu, lam)),
        truncation_w2: Inequality::new(
            wasserstein_p(&(&truncated).into(), &centred, 2.0)?,
            mu2 * half_tail,
        ),
        moment_gap: Inequality::new(mu2 - mu3, lam),
    };
    cert.bound1 = Some(bound1);
    cert.bound2 = Some(bound2);
    cert.exact1 = Some(t1.distance);
    cert.exact1_error_bar = Some(t1.error_bar);
    cert.exact2 = Some(exact2);
    cert.checks = Some(checks);
    Ok(cert)
}

/// I.i.d. Bernoulli(p) sums of each size in `sizes`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Family {
    pub p: f64,
    pub sizes: Vec<usize>,
}

impl FromStr for Family {
    type Err = crate::error::Error;

    /// `p=0.5:n=4,8,16,32`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            invalid(format!(
                "family spec {s:?} is not of the form p=P:n=N1,N2,..."
            ))
        };
        let (pp, nn) = s.split_once(':').ok_or_else(bad)?;
        let p: f64 = pp
            .trim()
            .strip_prefix("p=")
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        let sizes = nn
            .trim()
            .strip_prefix("n=")
            .ok_or_else(bad)?
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if !(0.0..=1.0).contains(&p) || sizes.is_empty() || sizes.contains(&0) {
            return Err(bad());
        }
        Ok(Family { p, sizes })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjectureRow {
    pub p: f64,
    pub n: usize,
    pub certificate: Certificate,
    /// `exact2 / bound2`
    pub ratio: f64,
}

/// Least-squares slopes of `log exact2` and `log bound2` against `log n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyFit {
    pub p: f64,
    pub points: usize,
    pub slope_exact2: Option<f64>,
    pub slope_bound2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjectureReport {
    pub rows: Vec<ConjectureRow>,
    pub fits: Vec<FamilyFit>,
    /// Instances left out, with the reason.
    pub skipped: Vec<String>,
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Certificates across i.i.d. families, with growth rates in `n`. Sizes whose
/// `μ₂ = np²` is not an integer are skipped.
pub fn conjecture_scan(families: &[Family]) -> Result<ConjectureReport> {
    conjecture_scan_with(Execution::default(), families)
}

pub fn conjecture_scan_with(exec: Execution, families: &[Family]) -> Result<ConjectureReport> {
    let mut skipped = Vec::new();
    let mut jobs = Vec::new();
    for f in families {
        for &n in &f.sizes {
            let mu2 = n as f64 * f.p * f.p;
            if (mu2 - mu2.round()).abs() > INTEGRALITY_TOL {
                skipped.push(format!("p={} n={n}: mu2 = {mu2} is not an integer", f.p));
            } else {
                jobs.push((f.p, n));
            }
        }
    }
    let certs = exec.map_slice(&jobs, |&(p, n)| certificate(&vec![p; n]));
    let mut rows = Vec::with_capacity(jobs.len());
    for (&(p, n), c) in jobs.iter().zip(certs) {
        let c = c?;
        if !c.valid() {
            skipped.push(format!("p={p} n={n}: lambda = {} is not positive", c.lam));
            continue;
        }
        let ratio = c.exact2.unwrap_or(f64::NAN) / c.bound2.unwrap_or(f64::NAN);
        rows.push(ConjectureRow {
            p,
            n,
            certificate: c,
            ratio,
        });
    }
    let fits = families
        .iter()
        .map(|f| {
            let pts: Vec<&ConjectureRow> = rows
                .iter()
                .filter(|r| r.p == f.p && f.sizes.contains(&r.n))
                .collect();
            let logs = |sel: fn(&Certificate) -> Option<f64>| {
                pts.iter()
                    .filter_map(|r| {
                        sel(&r.certificate)
                            .filter(|v| *v > 0.0)
                            .map(|v| ((r.n as f64).ln(), v.ln()))
                    })
                    .collect::<Vec<_>>()
            };
            FamilyFit {
                p: f.p,
                points: pts.len(),
                slope_exact2: slope(&logs(|c| c.exact2)),
                slope_bound2: slope(&logs(|c| c.bound2)),
            }
        })
        .collect();
    Ok(ConjectureReport {
        rows,
        fits,
        skipped,
    })
}
