//! Weyl, Bony–Weyl and standard quantization on the grid.

use num_complex::Complex64 as C64;

use super::{CutoffProfile, Quantizable, RealityTag, Symbol, SymbolTable, SymbolTerm, XiFn};
use crate::error::{Error, Result};
use crate::grid::{Flags, MeanConvention, PeriodicField, FLAG_TOL};

fn check_grid(a: &impl Quantizable, u: &PeriodicField) -> Result<()> {
    if a.grid() != u.grid() {
        return Err(Error::GridMismatch { left: a.grid().m(), right: u.grid().m() });
    }
    Ok(())
}

/// Output flags: evenness and reality are inherited when the symbol's tags
/// guarantee them.
fn output_flags(a: &impl Quantizable, u: &PeriodicField, c0: C64, scale: f64) -> Flags {
    let tags = a.tags();
    let inf = u.flags();
    let mean = match inf.mean {
        MeanConvention::ModConstants => MeanConvention::ModConstants,
        MeanConvention::ZeroMean if c0.norm() <= FLAG_TOL * scale.max(f64::MIN_POSITIVE) => MeanConvention::ZeroMean,
        _ => MeanConvention::Free,
    };
    Flags::new(inf.is_real && tags.reality == RealityTag::ConjInvariant, inf.is_even && tags.even_in_x_xi, mean)
}

/// `c_out(k) = Σ_n w(k,n) â(k−n, s(k,n)) u_n`, folded back onto the grid.
fn apply_table(
    a: &impl Quantizable,
    table: &SymbolTable,
    u: &PeriodicField,
    weight: impl Fn(i64, i64) -> f64,
    lattice: impl Fn(i64, i64) -> i64,
) -> Result<PeriodicField> {
    let grid = u.grid();
    let nyq = grid.nyquist();
    let un: Vec<(i64, C64)> = (-nyq..=nyq).map(|n| (n, u.mode(n))).filter(|(_, c)| c.norm() > 0.0).collect();
    let mut out = vec![C64::new(0.0, 0.0); grid.m()];
    for k in -nyq..=nyq {
        let mut acc = C64::new(0.0, 0.0);
        for &(n, c) in &un {
            let p = k - n;
            if p.abs() > nyq {
                continue;
            }
            let w = weight(k, n);
            if w == 0.0 {
                continue;
            }
            acc += w * table.get(lattice(k, n), p) * c;
        }
        out[grid.index(k)] += acc;
    }
    let scale = out.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let flags = output_flags(a, u, out[0], scale);
    if flags.mean == MeanConvention::ZeroMean {
        out[0] = C64::new(0.0, 0.0);
    }
    Ok(PeriodicField::from_coeffs_enforced(grid, out, flags))
}

/// Bony–Weyl quantization `Op^{BW}(a)u`: the Weyl formula with the symbol's
/// `x`-spectrum cut off by `χ(k−n, (k+n)/2)`.
pub fn op_bw_apply(a: &impl Quantizable, u: &PeriodicField, cutoff: &CutoffProfile) -> Result<PeriodicField> {
    check_grid(a, u)?;
    let t = a.table();
    apply_table(a, &t, u, |k, n| cutoff.eval((k - n) as f64, 0.5 * (k + n) as f64), |k, n| k + n)
}

/// Plain Weyl quantization `Op^W(a)u` (no cutoff).
pub fn op_weyl_apply(a: &impl Quantizable, u: &PeriodicField) -> Result<PeriodicField> {
    check_grid(a, u)?;
    let t = a.table();
    apply_table(a, &t, u, |_, _| 1.0, |k, n| k + n)
}

/// Standard quantization `Op(a)u = Σ_n a(x,n) û_n e^{inx}`.
pub fn op_standard_apply(a: &impl Quantizable, u: &PeriodicField) -> Result<PeriodicField> {
    check_grid(a, u)?;
    let t = a.table();
    apply_table(a, &t, u, |_, _| 1.0, |_, n| 2 * n)
}

/// Weyl symbol `b` with `Op(a) = Op^W(b)`, i.e. `b̂(p,ξ) = â(p, ξ − p/2)`.
///
/// Each `x`-mode `p` of every term becomes its own term with the ξ-factor
/// shifted by `-p/2`. The `x`-coefficients must vanish at the Nyquist mode,
/// where a single exponential cannot be represented on the grid.
pub fn weyl_from_standard(a: &Symbol) -> Result<Symbol> {
    let grid = a.grid();
    let nyq = grid.nyquist();
    let mut terms = Vec::new();
    for t in a.terms() {
        // roundoff-level modes are dropped rather than turned into terms
        let floor = 1e-15 * t.f.max_abs_coeff();
        if t.f.mode(nyq).norm() > FLAG_TOL * t.f.max_abs_coeff() {
            return Err(Error::InvalidArgument("x-coefficient has Nyquist content; refine the grid".into()));
        }
        if (1 - nyq..nyq).all(|p| p == 0 || t.f.mode(p).norm() <= floor) {
            terms.push(t.clone());
            continue;
        }
        for p in 1 - nyq..nyq {
            let c = t.f.mode(p);
            if c.norm() <= floor {
                continue;
            }
            let f = PeriodicField::from_modes(grid, &[(p, c)], Flags::free())?;
            let g: XiFn = t.g.clone().shifted(-0.5 * p as f64);
            terms.push(SymbolTerm { f, g });
        }
    }
    Symbol::new(grid, terms, a.order())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpectralGrid;

    #[test]
    fn paraproduct_is_exact_on_separated_frequencies() {
        let g = SpectralGrid::new(64).unwrap();
        let c = PeriodicField::from_fn(&g, |x| x.cos(), Flags::real_even()).unwrap();
        let u = PeriodicField::from_fn(&g, |x| (10.0 * x).cos(), Flags::real_even()).unwrap();
        let a = Symbol::function(&c).unwrap();
        let out = op_bw_apply(&a, &u, &CutoffProfile::default()).unwrap();
        let exact = c.product(&u).unwrap();
        assert!(out.distance(&exact).unwrap() < 1e-15);
        assert!(out.flags().is_even && out.flags().is_real);
    }

    #[test]
    fn standard_quantization_of_xi_is_minus_i_derivative() {
        let g = SpectralGrid::new(32).unwrap();
        let u = PeriodicField::from_fn(&g, |x| (3.0 * x).cos() + 0.2 * x.sin(), Flags::real()).unwrap();
        let a = Symbol::multiplier(&g, XiFn::xi(), 1.0).unwrap();
        let out = op_standard_apply(&a, &u).unwrap();
        let d = u.derivative(1).scale_complex(C64::new(0.0, -1.0));
        assert!(out.distance(&d).unwrap() < 1e-14);
    }

    #[test]
    fn weyl_from_standard_reproduces_standard() {
        let g = SpectralGrid::new(32).unwrap();
        let f = PeriodicField::from_fn(&g, |x| 0.5 * x.cos() + 0.25 * (2.0 * x).sin(), Flags::real()).unwrap();
        let a = Symbol::separable(&f, XiFn::xi(), 1.0).unwrap();
        let b = weyl_from_standard(&a).unwrap();
        let u = PeriodicField::from_fn(&g, |x| (5.0 * x).cos(), Flags::real_even()).unwrap();
        let lhs = op_standard_apply(&a, &u).unwrap();
        let rhs = op_weyl_apply(&b, &u).unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-12);
    }
}
