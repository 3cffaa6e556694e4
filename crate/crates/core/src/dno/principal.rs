//! Principal paralinearization of `G(η)ψ` in terms of the good unknown.

use num_complex::Complex64 as C64;
use serde::Serialize;

use super::solver::{good_unknown_from, DnSolver, DnoConfig, GoodUnknown};
use crate::error::Result;
use crate::grid::PeriodicField;
use crate::symbols::{op_bw_apply, CutoffProfile, Symbol, SymbolTerm, XiFn};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PrincipalDiagnostics {
    /// `‖G(η)ψ − G_approx‖_{L²}/‖G_approx‖_{L²}`
    pub relative_residual: f64,
    pub residual_l2: f64,
    /// Same ratio for the top derivative of the good unknown.
    pub dz_relative_residual: f64,
}

#[derive(Clone, Debug)]
pub struct PrincipalExpansion {
    pub fields: GoodUnknown,
    /// `(D tanh D)ω − i Op^{BW}(Vξ)η`
    pub g_approx: PeriodicField,
    pub residual: PeriodicField,
    /// `∂_zΦ|_{z=0}` measured from the strip solution.
    pub dz_trace: PeriodicField,
    /// `(D tanh D)ω + Op^{BW}(a₁)ω`
    pub dz_approx: PeriodicField,
    pub diagnostics: PrincipalDiagnostics,
}

/// `a₁ = iη′ξ/(1+η′²) − (ξ tanh ξ)η′²/(1+η′²)`.
pub fn a1_symbol(eta: &PeriodicField) -> Result<Symbol> {
    let ep = eta.derivative(1);
    let q = ep.map_real(|v| 1.0 / (1.0 + v * v));
    let f1 = ep.product(&q)?.scale_complex(C64::new(0.0, 1.0));
    let f2 = ep.map_real(|v| -v * v / (1.0 + v * v));
    let terms = vec![SymbolTerm { f: f1, g: XiFn::xi() }, SymbolTerm { f: f2, g: XiFn::xi_tanh_xi() }];
    Symbol::new(eta.grid(), terms, 1.0)
}

fn rel(a: &PeriodicField, b: &PeriodicField) -> Result<f64> {
    let d = a.sub(b)?.l2();
    let n = b.l2();
    Ok(if n == 0.0 { d } else { d / n })
}

/// Evaluates the principal approximation against a strip solve.
///
/// The good-unknown trace in flattened-top coordinates `y = z + η` is
/// `∂_zΦ = ∂_zΦ̃ − Op^{BW}(∂_z²Φ̃)η` at `z = 0`, where `∂_zΦ̃ = B` and the
/// transformed Laplace equation at the top gives
/// `∂_z²Φ̃ = (−ψ″ + 2η′B′ + η″B)/(1+η′²)`.
pub fn dn_principal_expand_with(solver: &DnSolver, eta: &PeriodicField, psi: &PeriodicField, cutoff: &CutoffProfile) -> Result<PrincipalExpansion> {
    let (g, _) = solver.dirichlet_neumann(eta, psi)?;
    let fields = good_unknown_from(eta, psi, &g, cutoff)?;
    let dtanh = |u: &PeriodicField| u.apply_real_multiplier(|x| if x == 0.0 { 0.0 } else { x * x.tanh() });

    let vxi = Symbol::separable(&fields.v, XiFn::xi(), 1.0)?;
    let transport = op_bw_apply(&vxi, eta, cutoff)?.scale_complex(C64::new(0.0, -1.0));
    let g_approx = dtanh(&fields.omega).add(&transport)?;
    let residual = g.sub(&g_approx)?;

    let ep = eta.derivative(1);
    let q = ep.map_real(|v| 1.0 / (1.0 + v * v));
    let dzz = psi
        .derivative(2)
        .scale_real(-1.0)
        .add(&ep.product(&fields.b.derivative(1))?.scale_real(2.0))?
        .add(&eta.derivative(2).product(&fields.b)?)?
        .product(&q)?;
    let dz_trace = fields.b.sub(&op_bw_apply(&Symbol::function(&dzz)?, eta, cutoff)?)?;
    let dz_approx = dtanh(&fields.omega).add(&op_bw_apply(&a1_symbol(eta)?, &fields.omega, cutoff)?)?;

    let diagnostics =
        PrincipalDiagnostics { relative_residual: rel(&g, &g_approx)?, residual_l2: residual.l2(), dz_relative_residual: rel(&dz_trace, &dz_approx)? };
    Ok(PrincipalExpansion { fields, g_approx, residual, dz_trace, dz_approx, diagnostics })
}

pub fn dn_principal_expand(eta: &PeriodicField, psi: &PeriodicField, cfg: &DnoConfig) -> Result<PrincipalExpansion> {
    let solver = DnSolver::new(eta.grid(), cfg)?;
    dn_principal_expand_with(&solver, eta, psi, &CutoffProfile::default())
}
