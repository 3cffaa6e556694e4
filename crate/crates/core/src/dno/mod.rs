//! The Dirichlet–Neumann operator `G(η)`: a strip solver by Neumann
//! iteration, the explicit constant-coefficient parametrix, the good unknown
//! and the principal paralinearization.

mod kernels;
mod parametrix;
mod principal;
mod solver;
mod zgrid;

pub use kernels::{c_kernel, dc_kernel, dk0_dzp, ds_kernel, k0, s_kernel, KernelOps};
pub use parametrix::{fundamental_solutions, green_kernel_var, order_minus_one_expected, order_minus_one_top, FundamentalData};
pub use principal::{a1_symbol, dn_principal_expand, dn_principal_expand_with, PrincipalDiagnostics, PrincipalExpansion};
pub use solver::{
    build_g_coefficients, dirichlet_neumann, good_unknown_fields, good_unknown_from, harmonic_extension_flat, poisson_kernel_apply, solve_strip, DnDiagnostics,
    DnSolver, DnoConfig, GCoefficients, GTerms, GoodUnknown, StripField, StripSolution, MAX_ETA,
};
pub use zgrid::{ZGrid, ZRule, MIN_J};
