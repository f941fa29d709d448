//! Stein factors for Poisson approximation under Wasserstein distances with
//! non-linear costs `d_ρ(i, j) = |ρ(i) − ρ(j)|`, exact discrete transport on
//! the non-negative integers, and certificates for Poisson-binomial sums.
//!
//! Every supremum over an unbounded index set is reported together with how it
//! was certified; every truncation carries an explicit tail bound.

pub mod bounds;
pub mod cert;
pub mod cost;
pub mod dist;
pub mod error;
pub mod exec;
pub mod io;
pub mod numeric;
pub mod quad;
pub mod semigroup;
pub mod stein;
pub mod transport;

pub use bounds::{
    boundary_values, factor_report, scan_constants, theorem_bounds, xi1, xi2, BoundaryValues,
    FactorBounds, FactorReport, ScanReport,
};
pub use cert::{
    certificate, conjecture_scan, shifted_truncated_law, Certificate, ConjectureReport, Family,
};
pub use cost::{lip_seminorm, CostKind, CostRho, Shape};
pub use dist::{
    chernoff_lower_tail, poisson_binomial_pmf, poisson_pmf, tail_functionals, LatticePmf, Pmf,
    TailFunctionals, DEFAULT_EPS_TAIL,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use semigroup::{
    mode_majorant_integral, resolvent_diagonal_integral, semigroup_row, simulate_coupled,
    SimulationConfig, SimulationReport,
};
pub use stein::{
    delta_h_rho, exact_factors, h_p_recursive, solve_stein, stein_identity_residual, FactorExact,
    SteinSolution,
};
pub use transport::{
    dual_witness_check, lp_transport_oracle, wasserstein_p, wasserstein_rho, TransportResult,
};
