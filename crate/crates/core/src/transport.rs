//! Optimal transport between laws on the integers.
//!
//! The production path for `d_ρ(i, j) = |ρ(i) − ρ(j)|` is the monotone-coupling
//! formula `Σ_i |F₁(i) − F₂(i)| Δρ(i)`. A transportation simplex solves the
//! finite problem for arbitrary cost matrices and serves as its oracle.

use serde::Serialize;

use crate::cost::{lip_seminorm, CostKind, CostRho};
use crate::dist::{log_poisson, LatticePmf, Pmf};
use crate::error::{invalid, Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMethod {
    Cdf,
    LpPrimal,
    LpDual,
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportResult {
    pub distance: f64,
    pub method: TransportMethod,
    /// Optimal coupling indexed by `(i, j)` over both tables, for `LpPrimal`.
    pub plan: Option<Vec<Vec<f64>>>,
    /// A 1-Lipschitz `f` on `0..=M` with `ν₁(f) − ν₂(f)` equal to the distance, for `LpDual`.
    pub dual_witness: Option<Vec<f64>>,
    /// Bound on the change in `distance` from mass missing past either table.
    pub error_bar: f64,
}

/// Largest mass imbalance the LP accepts.
pub const LP_BALANCE_TOL: f64 = 1e-9;
/// Largest support (positive entries) per side for the LP.
pub const LP_MAX_SUPPORT: usize = 64;
const MAX_PIVOTS: usize = 100_000;

/// Cost tabulated far enough to cover index `m`.
fn cost_covering(cost: &CostRho, m: usize) -> Result<std::borrow::Cow<'_, CostRho>> {
    if cost.n() + 3 > m {
        return Ok(std::borrow::Cow::Borrowed(cost));
    }
    match cost.kind() {
        CostKind::Table { .. } => Err(invalid(format!("cost table ends before index {m}"))),
        _ => Ok(std::borrow::Cow::Owned(cost.extended(m.max(4))?)),
    }
}

/// `Σ_{k>N} π_k(ρ(k) − ρ(N))` for a truncated Poisson table; `+∞` when the
/// missing mass cannot be bounded.
fn missing_mass_bar(pmf: &Pmf, cost: &CostRho) -> f64 {
    if pmf.tail_bound() == 0.0 {
        return 0.0;
    }
    let Some(lambda) = pmf.mean_lambda() else {
        return f64::INFINITY;
    };
    let n = pmf.trunc_index();
    let Some(rho_n) = cost.eval(n) else {
        return f64::INFINITY;
    };
    let mut acc = CompensatedSum::new();
    let mut k = n + 1;
    loop {
        let Some(rho_k) = cost.eval(k) else {
            return f64::INFINITY;
        };
        let term = log_poisson(lambda, k).exp() * (rho_k - rho_n);
        acc.add(term);
        if (k as f64) > lambda && term <= 1e-30 * acc.value().max(f64::MIN_POSITIVE) {
            break;
        }
        k += 1;
    }
    acc.value()
}

/// `𝒲_{d_ρ}(ν₁, ν₂) = Σ_i |F₁(i) − F₂(i)| Δρ(i)` over the union of the tables.
pub fn wasserstein_rho(nu1: &Pmf, nu2: &Pmf, cost: &CostRho) -> Result<TransportResult> {
    let m = nu1.trunc_index().max(nu2.trunc_index());
    let cost = cost_covering(cost, m)?;
    let (f1, f2) = (nu1.cdf(), nu2.cdf());
    let at = |f: &[f64], i: usize| f.get(i).copied().unwrap_or(f[f.len() - 1]);
    let distance = compensated_sum((0..m).map(|i| (at(&f1, i) - at(&f2, i)).abs() * cost.delta(i)));
    let error_bar = missing_mass_bar(nu1, &cost) + missing_mass_bar(nu2, &cost);
    Ok(TransportResult {
        distance,
        method: TransportMethod::Cdf,
        plan: None,
        dual_witness: None,
        error_bar,
    })
}

/// `|ρ(i) − ρ(j)|` for `0 ≤ i ≤ n1`, `0 ≤ j ≤ n2`.
pub fn rho_cost_matrix(cost: &CostRho, n1: usize, n2: usize) -> Result<Vec<Vec<f64>>> {
    let cost = cost_covering(cost, n1.max(n2))?;
    Ok((0..=n1)
        .map(|i| (0..=n2).map(|j| cost.distance(i, j)).collect())
        .collect())
}

struct LpSolution {
    /// `x[r][c]` over the compressed supports.
    x: Vec<Vec<f64>>,
    /// Column potentials; row potentials are implied by the c-transform.
    v: Vec<f64>,
    value: f64,
}

/// Transportation simplex from the north-west-corner basis. Entering cells
/// follow Bland's rule (first negative reduced cost in row-major order) and
/// leaving ties go to the earliest cell, which rules out cycling.
fn transportation_simplex(a: &[f64], b: &[f64], c: &[Vec<f64>]) -> Result<LpSolution> {
    let (m, n) = (a.len(), b.len());
    let mut x = vec![vec![0.0; n]; m];
    let mut basic = vec![vec![false; n]; m];
    let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        basic[i][j] = true;
        if i == m - 1 && j == n - 1 {
            x[i][j] = ra[i].max(0.0);
            break;
        }
        let row_first = j == n - 1 || (i < m - 1 && ra[i] <= rb[j]);
        if row_first {
            x[i][j] = ra[i];
            rb[j] -= ra[i];
            ra[i] = 0.0;
            i += 1;
        } else {
            x[i][j] = rb[j];
            ra[i] -= rb[j];
            rb[j] = 0.0;
            j += 1;
        }
    }
    let scale = c.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    for _ in 0..MAX_PIVOTS {
        potentials(&basic, c, &mut u, &mut v)?;
        let entering = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| !basic[i][j] && c[i][j] - u[i] - v[j] < -tol);
        let Some((ei, ej)) = entering else {
            let value = compensated_sum(
                (0..m)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| x[i][j] * c[i][j]),
            );
            return Ok(LpSolution { x, v, value });
        };
        let cycle = basis_path(&basic, ei, ej)?;
        // cycle alternates −, +, −, … starting at the cell adjacent to row ei
        let (mut theta, mut leave) = (f64::INFINITY, (usize::MAX, usize::MAX));
        for (k, &(ci, cj)) in cycle.iter().enumerate() {
            if k % 2 == 0 && (x[ci][cj] < theta || (x[ci][cj] == theta && (ci, cj) < leave)) {
                theta = x[ci][cj];
                leave = (ci, cj);
            }
        }
        for (k, &(ci, cj)) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                x[ci][cj] -= theta;
            } else {
                x[ci][cj] += theta;
            }
        }
        x[ei][ej] = theta;
        x[leave.0][leave.1] = 0.0;
        basic[ei][ej] = true;
        basic[leave.0][leave.1] = false;
    }
    Err(Error::SolverFailure(format!(
        "no optimum after {MAX_PIVOTS} pivots"
    )))
}

/// `u_i + v_j = c_ij` on the basis tree with `u_0 = 0`.
fn potentials(basic: &[Vec<bool>], c: &[Vec<f64>], u: &mut [f64], v: &mut [f64]) -> Result<()> {
    let (m, n) = (u.len(), v.len());
    let mut seen_r = vec![false; m];
    let mut seen_c = vec![false; n];
    u[0] = 0.0;
    seen_r[0] = true;
    // nodes 0..m are rows, m..m+n are columns
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        if node < m {
            for j in 0..n {
                if !basic[node][j] || seen_c[j] {
                    continue;
                }
                v[j] = c[node][j] - u[node];
                seen_c[j] = true;
                stack.push(m + j);
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if !basic[i][j] || seen_r[i] {
                    continue;
                }
                u[i] = c[i][j] - v[j];
                seen_r[i] = true;
                stack.push(i);
            }
        }
    }
    if seen_r.iter().all(|&s| s) && seen_c.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(Error::SolverFailure("basis is not a spanning tree".into()))
    }
}

/// Basic cells on the tree path from column `ej` back to row `ei`, listed from
/// the cell in row `ei` outward; with the entering cell they close the cycle.
fn basis_path(basic: &[Vec<bool>], ei: usize, ej: usize) -> Result<Vec<(usize, usize)>> {
    let (m, n) = (basic.len(), basic[0].len());
    let mut parent = vec![usize::MAX; m + n];
    let mut queue = std::collections::VecDeque::from([ei]);
    parent[ei] = ei;
    while let Some(node) = queue.pop_front() {
        if node == m + ej {
            break;
        }
        let next: Vec<usize> = if node < m {
            (0..n).filter(|&j| basic[node][j]).map(|j| m + j).collect()
        } else {
            (0..m).filter(|&i| basic[i][node - m]).collect()
        };
        for w in next {
            if parent[w] == usize::MAX {
                parent[w] = node;
                queue.push_back(w);
            }
        }
    }
    if parent[m + ej] == usize::MAX {
        return Err(Error::SolverFailure(
            "entering cell has no basis path".into(),
        ));
    }
    // walk from column ej to row ei, then reverse so the list starts at row ei
    let mut cells = Vec::new();
    let mut node = m + ej;
    while node != ei {
        let p = parent[node];
        cells.push(if node < m {
            (node, p - m)
        } else {
            (p, node - m)
        });
        node = p;
    }
    cells.reverse();
    Ok(cells)
}

struct Compressed {
    rows: Vec<usize>,
    cols: Vec<usize>,
    sol: LpSolution,
}

fn solve_lp(nu1: &Pmf, nu2: &Pmf, cost_matrix: &[Vec<f64>]) -> Result<Compressed> {
    let (n1, n2) = (nu1.trunc_index(), nu2.trunc_index());
    if cost_matrix.len() != n1 + 1 || cost_matrix.iter().any(|r| r.len() != n2 + 1) {
        return Err(invalid(format!(
            "cost matrix must be {} x {}",
            n1 + 1,
            n2 + 1
        )));
    }
    if cost_matrix
        .iter()
        .flatten()
        .any(|c| !c.is_finite() || *c < 0.0)
    {
        return Err(invalid(
            "cost matrix entries must be finite and non-negative",
        ));
    }
    let rows: Vec<usize> = (0..=n1).filter(|&i| nu1.prob(i) > 0.0).collect();
    let cols: Vec<usize> = (0..=n2).filter(|&j| nu2.prob(j) > 0.0).collect();
    if rows.len() > LP_MAX_SUPPORT || cols.len() > LP_MAX_SUPPORT {
        return Err(invalid(format!(
            "LP supports are limited to {LP_MAX_SUPPORT} points"
        )));
    }
    let a: Vec<f64> = rows.iter().map(|&i| nu1.prob(i)).collect();
    let mut b: Vec<f64> = cols.iter().map(|&j| nu2.prob(j)).collect();
    let (sa, sb) = (
        compensated_sum(a.iter().copied()),
        compensated_sum(b.iter().copied()),
    );
    if (sa - sb).abs() > LP_BALANCE_TOL {
        return Err(invalid(format!(
            "mass imbalance {} exceeds {LP_BALANCE_TOL:e}",
            sa - sb
        )));
    }
    b.iter_mut().for_each(|x| *x *= sa / sb);
    let c: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| cost_matrix[i][j]).collect())
        .collect();
    let sol = transportation_simplex(&a, &b, &c)?;
    Ok(Compressed { rows, cols, sol })
}

/// Exact optimum of the finite transport problem with the given cost matrix,
/// indexed over the full tables of `nu1` and `nu2`.
pub fn lp_transport_oracle(
    nu1: &Pmf,
    nu2: &Pmf,
    cost_matrix: &[Vec<f64>],
) -> Result<TransportResult> {
    let lp = solve_lp(nu1, nu2, cost_matrix)?;
    let mut plan = vec![vec![0.0; nu2.trunc_index() + 1]; nu1.trunc_index() + 1];
    for (r, &i) in lp.rows.iter().enumerate() {
        for (c, &j) in lp.cols.iter().enumerate() {
            plan[i][j] = lp.sol.x[r][c];
        }
    }
    Ok(TransportResult {
        distance: lp.sol.value,
        method: TransportMethod::LpPrimal,
        plan: Some(plan),
        dual_witness: None,
        error_bar: 0.0,
    })
}

/// Dual witness for `𝒲_{d_ρ}` from the LP potentials: the c-transform
/// `f(x) = min_j (d_ρ(x, j) − v_j)` over the support of `ν₂`, on `0..=M`.
pub fn lp_dual_witness(nu1: &Pmf, nu2: &Pmf, cost: &CostRho) -> Result<TransportResult> {
    let m = nu1.trunc_index().max(nu2.trunc_index());
    let cost = cost_covering(cost, m)?;
    let matrix = rho_cost_matrix(&cost, nu1.trunc_index(), nu2.trunc_index())?;
    let lp = solve_lp(nu1, nu2, &matrix)?;
    let f: Vec<f64> = (0..=m)
        .map(|x| {
            lp.cols
                .iter()
                .zip(&lp.sol.v)
                .map(|(&j, &vj)| cost.distance(x, j) - vj)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let distance = nu1.expect(|i| f[i]) - nu2.expect(|j| f[j]);
    Ok(TransportResult {
        distance,
        method: TransportMethod::LpDual,
        plan: None,
        dual_witness: Some(f),
        error_bar: 0.0,
    })
}

/// `ν₁(f) − ν₂(f)` for `f` on `0..=M` with `‖f‖_{Lip(ρ)} ≤ 1`; never above `𝒲_{d_ρ}(ν₁, ν₂)`.
pub fn dual_witness_check(nu1: &Pmf, nu2: &Pmf, cost: &CostRho, f: &[f64]) -> Result<f64> {
    let m = nu1.trunc_index().max(nu2.trunc_index());
    if f.len() < m + 1 {
        return Err(invalid(format!(
            "witness has {} values, needs {}",
            f.len(),
            m + 1
        )));
    }
    let cost = cost_covering(cost, m)?;
    let lip = lip_seminorm(&f[..=m], &cost);
    if lip > 1.0 + 1e-12 {
        return Err(invalid(format!("witness has Lipschitz seminorm {lip} > 1")));
    }
    Ok(nu1.expect(|i| f[i]) - nu2.expect(|j| f[j]))
}

/// `𝕎_p` by the quantile coupling: merge the two CDF partitions of `[0, 1]`
/// and charge `|x − y|^p` on each aligned segment. Mass left over when the
/// totals differ is ignored.
pub fn wasserstein_p(nu1: &LatticePmf, nu2: &LatticePmf, p: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(invalid(format!("p must be at least 1, got {p}")));
    }
    if nu1.probs.is_empty() || nu2.probs.is_empty() {
        return Err(invalid("empty probability table"));
    }
    let (mut i, mut j) = (0usize, 0usize);
    let (mut r1, mut r2) = (nu1.probs[0], nu2.probs[0]);
    let mut acc = CompensatedSum::new();
    loop {
        while r1 <= 0.0 {
            i += 1;
            match nu1.probs.get(i) {
                Some(&q) => r1 = q,
                None => return Ok(acc.value().max(0.0).powf(1.0 / p)),
            }
        }
        while r2 <= 0.0 {
            j += 1;
            match nu2.probs.get(j) {
                Some(&q) => r2 = q,
                None => return Ok(acc.value().max(0.0).powf(1.0 / p)),
            }
        }
        let q = r1.min(r2);
        let gap = ((nu1.base + i as i64) - (nu2.base + j as i64)).unsigned_abs() as f64;
        acc.add(q * gap.powf(p));
        if r1 <= r2 {
            r2 -= r1;
            r1 = 0.0;
        } else {
            r1 -= r2;
            r2 = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pmf(v: &[f64]) -> Pmf {
        Pmf::from_probs(v.to_vec()).unwrap()
    }

    #[test]
    fn point_masses() {
        let r2 = CostRho::squared(10).unwrap();
        let d = wasserstein_rho(&Pmf::point_mass(0), &Pmf::point_mass(1), &r2).unwrap();
        assert_eq!(d.distance, 1.0);
        let c = rho_cost_matrix(&r2, 0, 3).unwrap();
        let lp = lp_transport_oracle(&Pmf::point_mass(0), &Pmf::point_mass(3), &c).unwrap();
        assert_eq!(lp.distance, 9.0);
        let w = wasserstein_p(
            &(&Pmf::point_mass(0)).into(),
            &(&Pmf::point_mass(2)).into(),
            2.0,
        )
        .unwrap();
        assert_eq!(w, 2.0);
    }

    #[test]
    fn bernoulli_pair() {
        let r1 = CostRho::linear(10).unwrap();
        let (a, b) = (pmf(&[0.5, 0.5]), pmf(&[0.75, 0.25]));
        let d = wasserstein_rho(&a, &b, &r1).unwrap();
        assert!((d.distance - 0.25).abs() < 1e-15);
        let lp = lp_transport_oracle(&a, &b, &rho_cost_matrix(&r1, 1, 1).unwrap()).unwrap();
        assert!((lp.distance - 0.25).abs() < 1e-15);
        let dual = lp_dual_witness(&a, &b, &r1).unwrap();
        assert!((dual.distance - 0.25).abs() < 1e-15);
    }

    #[test]
    fn identical_laws_are_at_zero() {
        let r2 = CostRho::squared(10).unwrap();
        let a = pmf(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(wasserstein_rho(&a, &a, &r2).unwrap().distance, 0.0);
        let lp = lp_transport_oracle(&a, &a, &rho_cost_matrix(&r2, 3, 3).unwrap()).unwrap();
        assert!(lp.distance.abs() < 1e-15);
        assert_eq!(wasserstein_p(&(&a).into(), &(&a).into(), 2.0).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_plan_marginals() {
        let a = pmf(&[0.25, 0.25, 0.25, 0.25]);
        let b = pmf(&[0.5, 0.0, 0.25, 0.0, 0.25]);
        let r = CostRho::linear(10).unwrap();
        let lp = lp_transport_oracle(&a, &b, &rho_cost_matrix(&r, 3, 4).unwrap()).unwrap();
        let plan = lp.plan.unwrap();
        for (i, row) in plan.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - a.prob(i)).abs() < 1e-12);
        }
        for j in 0..=4 {
            assert!((plan.iter().map(|r| r[j]).sum::<f64>() - b.prob(j)).abs() < 1e-12);
        }
        let cdf = wasserstein_rho(&a, &b, &r).unwrap().distance;
        assert!((lp.distance - cdf).abs() < 1e-12);
    }

    #[test]
    fn imbalance_is_rejected() {
        let a = Pmf::with_tail(vec![0.5, 0.4999], 1e-4).unwrap();
        let b = pmf(&[0.5, 0.5]);
        let r = CostRho::linear(10).unwrap();
        assert!(lp_transport_oracle(&a, &b, &rho_cost_matrix(&r, 1, 1).unwrap()).is_err());
    }

    #[test]
    fn witness_seminorm_is_enforced() {
        let r = CostRho::linear(10).unwrap();
        let (a, b) = (pmf(&[0.5, 0.5]), pmf(&[1.0]));
        assert!(dual_witness_check(&a, &b, &r, &[0.0, 2.0]).is_err());
        assert_eq!(dual_witness_check(&a, &b, &r, &[3.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn negative_support_shift_invariance() {
        let a = pmf(&[0.2, 0.5, 0.3]);
        let b = pmf(&[0.6, 0.4]);
        let w = wasserstein_p(&(&a).into(), &(&b).into(), 2.0).unwrap();
        let ws = wasserstein_p(
            &LatticePmf::shifted(&a, -7),
            &LatticePmf::shifted(&b, -7),
            2.0,
        )
        .unwrap();
        assert!((w - ws).abs() < 1e-15);
    }

    #[test]
    fn poisson_error_bar_is_tiny() {
        let p = crate::dist::poisson_pmf(3.0, 1e-12).unwrap();
        let r2 = CostRho::squared(p.trunc_index()).unwrap();
        let d = wasserstein_rho(&p, &p, &r2).unwrap();
        assert!(d.error_bar > 0.0 && d.error_bar < 1e-9);
    }
}
