//! Closed-form Stein-factor bounds: `Ξ₁`, `Ξ₂`, the upper bounds `B₀, B₁, B₂`,
//! boundary values at `i = 0`, and scans of the universal constants.

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::cost::{CostKind, CostRho, Shape};
use crate::dist::Pmf;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numeric::{certify_sup, certify_sup_far, compensated_sum, CertifiedSup};
use crate::stein::{
    check_lambda, deep_context, eval_range, exact_factors_with, g_far, stein_g, FactorExact,
};

/// Constant in `Ξ₁(λ) ≤ C₁/√λ` for `λ > 1`.
pub const XI1_CONSTANT: f64 = 0.532;
/// Constant in `Ξ₂(λ) ≤ C₂/√λ` for `λ > 1`.
pub const XI2_CONSTANT: f64 = 0.426;

/// `Σ_{j≥0} (−λ)^j / (j+shift)!`, alternating with decreasing terms for `λ ≤ 1`.
fn shifted_exp_series(lambda: f64, shift: u32) -> f64 {
    let mut term = 1.0 / (1..=shift).map(f64::from).product::<f64>();
    let mut acc = 0.0f64;
    let mut j = 0u32;
    while term.abs() > 1e-20 * acc.abs() || j < 2 {
        acc += term;
        j += 1;
        term *= -lambda / f64::from(j + shift);
    }
    acc
}

/// Mode majorant `1/(√(2πn)(1 + 1/(12n)))` of a Poisson law with mean in `[n, n+1)`.
pub fn mode_majorant(n: u64) -> f64 {
    let n = n as f64;
    12.0 * n.sqrt() / ((2.0 * PI).sqrt() * (12.0 * n + 1.0))
}

/// `Ξ₁(λ)`; for `λ ≤ 1` equal to `(e^{−λ} + λ − 1)/λ²`.
pub fn xi1(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        return shifted_exp_series(lambda, 2);
    }
    let fl = lambda.floor();
    let l2 = lambda * lambda;
    let head = ((E - 1.0) * (lambda - 1.0) + 1.0) / (l2 * E);
    let body = compensated_sum((1..fl as u64).map(|n| {
        let x = n as f64;
        mode_majorant(n) * (2.0 * (lambda - x) - 1.0) / (2.0 * l2)
    }));
    let frac = lambda - fl;
    head + body + mode_majorant(fl as u64) * frac * frac / (2.0 * l2)
}

/// `Ξ₂(λ)`; for `λ ≤ 1` equal to `((λ−1)² − 2e^{−λ} + 1)/λ³`.
pub fn xi2(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        return 2.0 * shifted_exp_series(lambda, 3);
    }
    let fl = lambda.floor();
    let l3 = lambda.powi(3);
    let body = compensated_sum((1..fl as u64).map(|n| {
        let y = lambda - n as f64;
        mode_majorant(n) * (3.0 * y * y - 3.0 * y + 1.0) / (3.0 * l3)
    }));
    let frac = lambda - fl;
    xi2_head(lambda) + body + mode_majorant(fl as u64) * frac.powi(3) / (3.0 * l3)
}

/// First term of `Ξ₂` for `λ > 1`: `((e−1)(λ−1)² + 2λ + e − 4)/(λ³e)`.
pub fn xi2_head(lambda: f64) -> f64 {
    ((E - 1.0) * (lambda - 1.0).powi(2) + 2.0 * lambda + E - 4.0) / (lambda.powi(3) * E)
}

/// The same term expanded: `(λ²(e−1) − 2λ(e−2) + 2e − 5)/(λ³e)`.
pub fn xi2_head_expanded(lambda: f64) -> f64 {
    (lambda * lambda * (E - 1.0) - 2.0 * lambda * (E - 2.0) + 2.0 * E - 5.0) / (lambda.powi(3) * E)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum B1Branch {
    /// `m_ρ‖Δh_ρ‖ + 2m_ρΞ₁`
    Convex,
    /// `m_ρ‖Δh_ρ‖ + 2Ξ₁`
    Concave,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorBounds {
    pub lambda: f64,
    pub b0: f64,
    /// `None` when the cost is neither convex nor concave.
    pub b1: Option<f64>,
    pub b2: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub m_rho: f64,
    /// `‖Δh_ρ‖_{Lip(ρ)}`
    pub lip_dh: CertifiedSup,
    /// `‖Δ²h_ρ‖_{Lip(ρ)}`
    pub lip_d2h: CertifiedSup,
    /// `‖(−Q)⁻¹‖_{Lip(ρ)}`
    pub norm_qinv: CertifiedSup,
    pub mode: Option<B1Branch>,
}

impl FactorBounds {
    pub fn b1(&self) -> Result<f64> {
        self.b1
            .ok_or(Error::UnsupportedShape("B1 needs a convex or concave cost"))
    }
}

/// Upper bounds for `M₀, M₁, M₂` from the norms of `(−Q)⁻¹`, `Δh_ρ` and `Δ²h_ρ`.
pub fn theorem_bounds(cost: &CostRho, lambda: f64, pmf: &Pmf) -> Result<FactorBounds> {
    check_lambda(lambda)?;
    let (probs, deep) = deep_context(cost, lambda)?;
    let nd = probs.len() - 1;
    if nd < 8 {
        return Err(crate::error::invalid(
            "cost range too short for bound computation",
        ));
    }
    let k = eval_range(pmf, nd);
    let rho = &deep.values()[..=nd];
    let neg: Vec<f64> = rho.iter().map(|x| -x).collect();
    let (g0, pi_neg) = stein_g(lambda, &probs, &neg);
    let q: Vec<f64> = (1..=k).map(|i| g0[i] / deep.delta(i - 1)).collect();
    let norm_qinv = match deep.kind() {
        CostKind::Table { .. } => certify_sup("norm of (-Q)^-1", &q, 1)?,
        _ => certify_sup_far("norm of (-Q)^-1", &q, 1, |i| {
            let g = g_far(lambda, pi_neg, |j| -deep.eval(j).unwrap_or(f64::NAN), i);
            g / deep.delta_at(i - 1).unwrap_or(f64::NAN)
        })?,
    };
    // Δh_ρ(i) = g_ρ(i+1)
    let (g, _) = stein_g(lambda, &probs, rho);
    let l1: Vec<f64> = (0..=k)
        .map(|i| (g[i + 2] - g[i + 1]).abs() / deep.delta(i))
        .collect();
    let l2: Vec<f64> = (0..=k)
        .map(|i| (g[i + 3] - 2.0 * g[i + 2] + g[i + 1]).abs() / deep.delta(i))
        .collect();
    let lip_dh = certify_sup("Lip norm of dh", &l1, 0)?;
    let lip_d2h = certify_sup("Lip norm of d2h", &l2, 0)?;

    let (x1, x2) = (xi1(lambda), xi2(lambda));
    let m = cost.m_rho();
    let mode = match cost.shape() {
        Shape::Convex => Some(B1Branch::Convex),
        Shape::Concave => Some(B1Branch::Concave),
        Shape::Neither => None,
    };
    let b1 = mode.map(|b| match b {
        B1Branch::Convex => m * lip_dh.value + 2.0 * m * x1,
        B1Branch::Concave => m * lip_dh.value + 2.0 * x1,
    });
    Ok(FactorBounds {
        lambda,
        b0: m * norm_qinv.value,
        b1,
        b2: m * lip_d2h.value + 2.0 * (2.0 * x2).min(1.0 / lambda),
        xi1: x1,
        xi2: x2,
        m_rho: m,
        lip_dh,
        lip_d2h,
        norm_qinv,
        mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryValues {
    pub b0: f64,
    pub b1: f64,
    /// `None` when the cost is neither convex nor concave.
    pub b2: Option<f64>,
    /// True when `b2` is only an upper bound on the boundary value (concave costs).
    pub b2_is_upper_bound: bool,
}

/// Closed forms of `|Δᵏg_f(0)|/Δρ(0)` at the extremal test functions.
pub fn boundary_values(cost: &CostRho, lambda: f64, _pmf: &Pmf) -> Result<BoundaryValues> {
    check_lambda(lambda)?;
    let (probs, deep) = deep_context(cost, lambda)?;
    let mass = compensated_sum(probs.iter().copied());
    let pi_rho = compensated_sum(probs.iter().zip(deep.values()).map(|(p, r)| p * r)) / mass;
    let (r0, d0) = (cost.rho(0), cost.delta(0));
    let b0 = (pi_rho - r0) / (lambda * d0);
    let sharp = 2.0 * shifted_exp_series(lambda, 2);
    let head = (1.0 / lambda + (r0 - pi_rho) / (lambda * lambda * d0)).abs();
    let (b2, upper) = match cost.shape() {
        Shape::Convex => (Some(head + sharp), false),
        Shape::Concave => (Some(head + cost.delta(1) / d0 * sharp), true),
        Shape::Neither => (None, false),
    };
    Ok(BoundaryValues {
        b0,
        b1: 0.0,
        b2,
        b2_is_upper_bound: upper,
    })
}

/// Closed forms for the square-root cost `ρ(i) = λ + √i − λ/√(i+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqrtCostClosedForms {
    pub m_rho: f64,
    /// `π(ρ)`
    pub pi_rho: f64,
    /// `‖Δh‖_{Lip(ρ)} = 1/(λ + (√2+√3)(2√3−√6))`
    pub lip_dh: f64,
    /// `(√2+1)(2+√2−√6/3)/(λ+2+√2)`, an upper bound for `‖Δ²h‖_{Lip(ρ)}`.
    pub lip_d2h_loose: f64,
    /// `(1 − (√2+1)(1−√6/3))/(λ+2+√2)`, attained at `i = 0`.
    pub lip_d2h: f64,
    /// `M₀ ≤ 2m_ρ`
    pub m0_bound: f64,
}

pub fn sqrt_cost_closed_forms(lambda: f64) -> SqrtCostClosedForms {
    let (s2, s3, s6) = (2f64.sqrt(), 3f64.sqrt(), 6f64.sqrt());
    let m = crate::cost::sqrt_case_m_rho(lambda);
    SqrtCostClosedForms {
        m_rho: m,
        pi_rho: lambda,
        lip_dh: 1.0 / (lambda + (s2 + s3) * (2.0 * s3 - s6)),
        lip_d2h_loose: (s2 + 1.0) * (2.0 + s2 - s6 / 3.0) / (lambda + 2.0 + s2),
        lip_d2h: (1.0 - (s2 + 1.0) * (1.0 - s6 / 3.0)) / (lambda + 2.0 + s2),
        m0_bound: 2.0 * m,
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub xi1: f64,
    pub xi2: f64,
    /// `Ξ₁` for `λ ≤ 1`, `√λΞ₁` above.
    pub scaled_xi1: f64,
    pub scaled_xi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Largest `√λΞ₁` over grid points with `λ > 1`, and where.
    pub max_sqrt_xi1: Option<(f64, f64)>,
    pub max_sqrt_xi2: Option<(f64, f64)>,
}

/// Check `Ξ₁ ≤ 1/2`, `Ξ₂ ≤ 1/3` on `(0, 1]` and `√λΞ₁ ≤ 0.532`, `√λΞ₂ ≤ 0.426` above.
pub fn scan_constants(grid: &[f64]) -> Result<ScanReport> {
    scan_constants_with(Execution::default(), grid)
}

pub fn scan_constants_with(exec: Execution, grid: &[f64]) -> Result<ScanReport> {
    if grid.is_empty() {
        return Err(crate::error::invalid("empty lambda grid"));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let rows = exec.map_slice(grid, |&lambda| {
        let (x1, x2) = (xi1(lambda), xi2(lambda));
        let s = if lambda <= 1.0 { 1.0 } else { lambda.sqrt() };
        ScanRow {
            lambda,
            xi1: x1,
            xi2: x2,
            scaled_xi1: s * x1,
            scaled_xi2: s * x2,
        }
    });
    for r in &rows {
        let (c1, c2) = if r.lambda <= 1.0 {
            (0.5, 1.0 / 3.0)
        } else {
            (XI1_CONSTANT, XI2_CONSTANT)
        };
        if r.scaled_xi1 > c1 {
            return Err(Error::ConstantViolation {
                lambda: r.lambda,
                detail: format!("xi1 scaled to {} exceeds {c1}", r.scaled_xi1),
            });
        }
        if r.scaled_xi2 > c2 {
            return Err(Error::ConstantViolation {
                lambda: r.lambda,
                detail: format!("xi2 scaled to {} exceeds {c2}", r.scaled_xi2),
            });
        }
    }
    let max_of = |sel: fn(&ScanRow) -> f64| {
        rows.iter()
            .filter(|r| r.lambda > 1.0)
            .map(|r| (sel(r), r.lambda))
            .fold(None, |acc: Option<(f64, f64)>, v| match acc {
                Some(a) if a.0 >= v.0 => Some(a),
                _ => Some(v),
            })
    };
    Ok(ScanReport {
        max_sqrt_xi1: max_of(|r| r.scaled_xi1),
        max_sqrt_xi2: max_of(|r| r.scaled_xi2),
        rows,
    })
}

/// Exact factors next to their bounds for one `(ρ, λ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorReport {
    pub lambda: f64,
    pub cost: &'static str,
    pub exact: FactorExact,
    pub bounds: FactorBounds,
    pub boundary: BoundaryValues,
    /// `M_k ≤ B_k + 1e−9`; `None` where `B_k` is undefined.
    pub dominated: [Option<bool>; 3],
}

impl FactorReport {
    pub fn all_dominated(&self) -> bool {
        self.dominated.iter().all(|d| d.unwrap_or(true))
    }
}

/// Tolerance for `M_k ≤ B_k`.
pub const DOMINATION_TOL: f64 = 1e-9;

pub fn factor_report(cost: &CostRho, lambda: f64, pmf: &Pmf) -> Result<FactorReport> {
    factor_report_with(Execution::default(), cost, lambda, pmf)
}

pub fn factor_report_with(
    exec: Execution,
    cost: &CostRho,
    lambda: f64,
    pmf: &Pmf,
) -> Result<FactorReport> {
    let exact = exact_factors_with(exec, cost, lambda, pmf)?;
    let bounds = theorem_bounds(cost, lambda, pmf)?;
    let boundary = boundary_values(cost, lambda, pmf)?;
    let dom = |m: f64, b: f64| m <= b + DOMINATION_TOL;
    let dominated = [
        Some(dom(exact.m0, bounds.b0)),
        bounds.b1.map(|b| dom(exact.m1, b)),
        Some(dom(exact.m2, bounds.b2)),
    ];
    Ok(FactorReport {
        lambda,
        cost: cost.kind().name(),
        exact,
        bounds,
        boundary,
        dominated,
    })
}
