//! Galerkin discretization and numerical certification of a quadratic
//! nonlocal variational problem on the hybrid domain `[0,1] ∪ {2,…,N+1}`.
//!
//! The energy of `u = (v, a_2, …, a_{N+1})` is the double integral of
//! `|u(x) - u(y)|^2 / |x - y|^{1+2α}` against `μ ⊗ μ`, where `μ` is Lebesgue
//! measure on `[0,1]` plus unit point masses at the integers `2,…,N+1`.

pub mod analysis;
pub mod assembly;
pub mod domain;
pub mod energy;
pub mod error;
pub mod example;
pub mod quadrature;
pub mod random;
pub mod solver;

pub use analysis::{
    check_coercivity, check_interface_estimate, check_product_norm_lower, poincare_estimate,
    CoercivityConstants, PoincareEstimate, VerificationReport, WorstMargins,
};
pub use assembly::{assemble, assemble_load, mass_matrix, AssembledSystem};
pub use domain::{
    eval_continuous, make_domain, mu_integral, Cell, Forcing, ForcingKind, ForcingParams,
    HybridDomain, HybridFunction, LinearPiece, ProblemSpec,
};
pub use energy::{
    energy_cc, energy_cd, energy_dd, energy_total, hybrid_norm_sq, l2_mu_norm_sq, mean_stats,
    EnergyBreakdown, EnergyModel, MeanStats,
};
pub use error::{Error, Result};
pub use example::{check_splitting, example_spec, reduced_solve, ReducedAffineState};
pub use quadrature::{gagliardo_pair_integral, kernel_moment, GaussRule};
pub use solver::{evaluate_j, gradient_check, solve, strong_residuals, Problem, Solution};
