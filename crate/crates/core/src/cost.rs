//! Strictly increasing cost functions ρ and the induced distance `|ρ(i) − ρ(j)|`.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Tabulation reaches this many indices past `N`, enough for third differences.
pub const COST_HEADROOM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CostKind {
    /// `ρ(i) = i`
    Linear,
    /// `ρ(i) = i^p`, `p ≥ 1`
    Power { p: f64 },
    /// `ρ(i) = λ + √i − λ/√(i+1)`
    SqrtCase { lambda: f64 },
    /// Explicit values `ρ(0), ρ(1), …`
    Table { values: Vec<f64> },
}

impl CostKind {
    pub fn name(&self) -> &'static str {
        match self {
            CostKind::Linear => "r1",
            CostKind::Power { p } if *p == 2.0 => "r2",
            CostKind::Power { .. } => "power",
            CostKind::SqrtCase { .. } => "rhalf",
            CostKind::Table { .. } => "table",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Convex,
    Concave,
    Neither,
}

/// A cost ρ tabulated on `0..=N+3` together with its first two differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRho {
    kind: CostKind,
    n: usize,
    values: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    shape: Shape,
    m_rho: f64,
    /// False when `m_rho` is a range maximum over a ratio sequence whose tail
    /// is not monotone.
    m_rho_certified: bool,
}

fn sqrt_d1(lambda: f64, i: f64) -> f64 {
    let a = i.sqrt();
    let b = (i + 1.0).sqrt();
    let c = (i + 2.0).sqrt();
    1.0 / (a + b) + lambda / (b * c * (b + c))
}

/// `m_ρ` of the square-root cost in closed form.
pub fn sqrt_case_m_rho(lambda: f64) -> f64 {
    let (s2, s3) = (2f64.sqrt(), 3f64.sqrt());
    s3 * (s2 + s2 * lambda - lambda) / (s3 * (2.0 - s2) + lambda * (s3 - s2))
}

impl CostRho {
    /// Tabulate `kind` on `0..=n+3`. A table must supply at least `n + 4` values.
    pub fn new(kind: CostKind, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(invalid(format!("cost tabulation needs N >= 4, got {n}")));
        }
        let len = n + COST_HEADROOM + 1;
        let (values, d1): (Vec<f64>, Vec<f64>) = match &kind {
            CostKind::Linear => ((0..len).map(|i| i as f64).collect(), vec![1.0; len - 1]),
            CostKind::Power { p } => {
                if !(p.is_finite() && *p >= 1.0) {
                    return Err(invalid(format!("power cost needs p >= 1, got {p}")));
                }
                let v: Vec<f64> = (0..len).map(|i| (i as f64).powf(*p)).collect();
                let d = (0..len - 1).map(|i| power_d1(*p, i as f64)).collect();
                (v, d)
            }
            CostKind::SqrtCase { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(invalid(format!(
                        "square-root cost needs lambda > 0, got {lambda}"
                    )));
                }
                let v = (0..len)
                    .map(|i| {
                        let x = i as f64;
                        lambda + x.sqrt() - lambda / (x + 1.0).sqrt()
                    })
                    .collect();
                let d = (0..len - 1).map(|i| sqrt_d1(*lambda, i as f64)).collect();
                (v, d)
            }
            CostKind::Table { values } => {
                if values.len() < len {
                    return Err(invalid(format!(
                        "cost table has {} values, needs {len} for N = {n}",
                        values.len()
                    )));
                }
                let v: Vec<f64> = values[..len].to_vec();
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("cost table contains a non-finite value"));
                }
                let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
                if let Some(i) = d.iter().position(|&x| x <= 0.0) {
                    return Err(invalid(format!(
                        "cost table is not strictly increasing at index {i}"
                    )));
                }
                (v, d)
            }
        };
        let d2: Vec<f64> = d1.windows(2).map(|w| w[1] - w[0]).collect();
        let shape = if d2.iter().all(|&x| x >= 0.0) {
            Shape::Convex
        } else if d2.iter().all(|&x| x <= 0.0) {
            Shape::Concave
        } else {
            Shape::Neither
        };
        let mut cost = CostRho {
            kind,
            n,
            values,
            d1,
            d2,
            shape,
            m_rho: 0.0,
            m_rho_certified: true,
        };
        match &cost.kind {
            CostKind::Linear | CostKind::Power { .. } => cost.m_rho = 1.0,
            CostKind::SqrtCase { lambda } => cost.m_rho = sqrt_case_m_rho(*lambda),
            CostKind::Table { .. } => {
                let ratios = cost.increment_ratios();
                cost.m_rho = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let tail = &ratios[ratios.len().saturating_sub(crate::numeric::SUP_WINDOW)..];
                cost.m_rho_certified =
                    tail.windows(2).all(|w| w[1] >= w[0]) || tail.windows(2).all(|w| w[1] <= w[0]);
            }
        }
        Ok(cost)
    }

    pub fn linear(n: usize) -> Result<Self> {
        Self::new(CostKind::Linear, n)
    }

    pub fn squared(n: usize) -> Result<Self> {
        Self::new(CostKind::Power { p: 2.0 }, n)
    }

    pub fn sqrt_case(lambda: f64, n: usize) -> Result<Self> {
        Self::new(CostKind::SqrtCase { lambda }, n)
    }

    /// Same cost re-tabulated on `0..=n+3`.
    pub fn extended(&self, n: usize) -> Result<Self> {
        Self::new(self.kind.clone(), n)
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn d1(&self) -> &[f64] {
        &self.d1
    }

    pub fn d2(&self) -> &[f64] {
        &self.d2
    }

    pub fn rho(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn delta(&self, i: usize) -> f64 {
        self.d1[i]
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn m_rho(&self) -> f64 {
        self.m_rho
    }

    pub fn m_rho_certified(&self) -> bool {
        self.m_rho_certified
    }

    /// `d_ρ(i, j) = |ρ(i) − ρ(j)|`
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.values[i] - self.values[j]).abs()
    }

    /// `Δρ(i)/Δρ(i+1)` over the tabulated range.
    pub fn increment_ratios(&self) -> Vec<f64> {
        self.d1.windows(2).map(|w| w[0] / w[1]).collect()
    }

    /// Largest increment ratio over the tabulated range.
    pub fn m_rho_direct(&self) -> f64 {
        self.increment_ratios()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Δρ(i)` at any index for analytic kinds, free of cancellation; `None` past a table's end.
    pub fn delta_at(&self, i: usize) -> Option<f64> {
        match &self.kind {
            CostKind::Linear => Some(1.0),
            CostKind::Power { p } => Some(power_d1(*p, i as f64)),
            CostKind::SqrtCase { lambda } => Some(sqrt_d1(*lambda, i as f64)),
            CostKind::Table { .. } => self.d1.get(i).copied(),
        }
    }

    /// `ρ` evaluated at any index for analytic kinds; `None` past a table's end.
    pub fn eval(&self, i: usize) -> Option<f64> {
        let x = i as f64;
        match &self.kind {
            CostKind::Linear => Some(x),
            CostKind::Power { p } => Some(x.powf(*p)),
            CostKind::SqrtCase { lambda } => Some(lambda + x.sqrt() - lambda / (x + 1.0).sqrt()),
            CostKind::Table { values } => values.get(i).copied(),
        }
    }
}

fn power_d1(p: f64, i: f64) -> f64 {
    if i == 0.0 {
        1.0
    } else if p.fract() == 0.0 && p <= 8.0 {
        // Σ_{k<p} C(p,k) i^k, exact for moderate integer i
        let p = p as i32;
        let (mut c, mut acc) = (1.0, 0.0);
        for k in 0..p {
            acc += c * i.powi(k);
            c = c * f64::from(p - k) / f64::from(k + 1);
        }
        acc
    } else {
        // (i+1)^p − i^p without cancellation
        i.powf(p) * (p * (1.0 / i).ln_1p()).exp_m1()
    }
}

/// `sup_{0 ≤ i < N} |f(i+1) − f(i)| / Δρ(i)` over the given values.
pub fn lip_seminorm(f: &[f64], cost: &CostRho) -> f64 {
    f.windows(2)
        .enumerate()
        .map(|(i, w)| (w[1] - w[0]).abs() / cost.delta(i))
        .fold(0.0, f64::max)
}
