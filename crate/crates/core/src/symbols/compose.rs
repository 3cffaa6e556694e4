//! Asymptotic composition `a # b` of separable symbols.

use num_complex::Complex64 as C64;

use super::jet::factorial;
use super::{Quantizable, Symbol, SymbolTerm, XiFn};
use crate::error::{Error, Result};

/// Highest expansion order accepted by [`compose_symbols`].
pub const MAX_RHO: usize = 4;

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `(a # b)_ρ = Σ_{ℓ<ρ} (1/ℓ!) ((i/2)σ(D_x,D_ξ,D_y,D_η))^ℓ [a(x,ξ) b(y,η)]` on the diagonal.
///
/// For separable terms the ℓ-th summand is
/// `(1/ℓ!)(−i/2)^ℓ Σ_j C(ℓ,j)(−1)^{ℓ−j} ∂_x^{ℓ−j}f_a ∂_x^j f_b · ∂_ξ^j g_a ∂_ξ^{ℓ−j} g_b`,
/// so ℓ = 1 gives `(1/2i){a,b}`.
pub fn compose_symbols(a: &Symbol, b: &Symbol, rho: usize) -> Result<Symbol> {
    if rho > MAX_RHO {
        return Err(Error::InvalidArgument(format!("rho = {rho} exceeds the supported order {MAX_RHO}")));
    }
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch { left: a.grid().m(), right: b.grid().m() });
    }
    let mut terms = Vec::new();
    for ell in 0..rho {
        let pref = C64::new(0.0, -0.5).powu(ell as u32) / factorial(ell);
        for ta in a.terms() {
            for tb in b.terms() {
                for j in 0..=ell {
                    let c = pref * binomial(ell, j) * if (ell - j) % 2 == 0 { 1.0 } else { -1.0 };
                    let fa = ta.f.derivative((ell - j) as u32);
                    let fb = tb.f.derivative(j as u32);
                    let f = fa.product(&fb)?.scale_complex(c);
                    if f.max_abs_coeff() == 0.0 {
                        continue;
                    }
                    let g = XiFn::Product { factors: vec![ta.g.clone().derivative(j), tb.g.clone().derivative(ell - j)] };
                    terms.push(SymbolTerm { f, g });
                }
            }
        }
    }
    Symbol::new(a.grid(), terms, a.order() + b.order())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Flags, PeriodicField, SpectralGrid};

    #[test]
    fn poisson_bracket_term_matches_hand_computation() {
        let g = SpectralGrid::new(32).unwrap();
        let f = PeriodicField::from_fn(&g, |x| 0.3 * (2.0 * x).cos(), Flags::real_even()).unwrap();
        let a = Symbol::function(&f).unwrap();
        let b = Symbol::multiplier(&g, XiFn::xi(), 1.0).unwrap();
        let ab = compose_symbols(&a, &b, 2).unwrap();
        let ba = compose_symbols(&b, &a, 2).unwrap();
        let fp = f.derivative(1);
        for &(x, xi) in &[(0.3, 2.0), (1.7, -5.5), (4.0, 0.5)] {
            let base = f.eval_at(x) * xi;
            let corr = C64::new(0.0, 0.5) * fp.eval_at(x);
            assert!((ab.eval(x, xi) - (base + corr)).norm() < 1e-14);
            assert!((ba.eval(x, xi) - (base - corr)).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_coefficients_commute() {
        let g = SpectralGrid::new(16).unwrap();
        let a = Symbol::multiplier(&g, XiFn::xi(), 1.0).unwrap();
        let c = compose_symbols(&a, &a, 3).unwrap();
        assert!((c.eval(0.4, 3.0) - C64::new(9.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn rejects_high_rho() {
        let g = SpectralGrid::new(16).unwrap();
        let a = Symbol::multiplier(&g, XiFn::xi(), 1.0).unwrap();
        assert!(compose_symbols(&a, &a, 5).is_err());
    }
}
