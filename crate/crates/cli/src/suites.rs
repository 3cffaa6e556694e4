//! The symbol invariant suite: quantization identities on random symbols and
//! the smoothing order of the composition remainder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ripple_core::dynamics::loglog_slope;
use ripple_core::grid::{Flags, PeriodicField, SpectralGrid};
use ripple_core::symbols::{
    compose_symbols, conjugate_principal, invert_diffeo, op_bw_apply, paracomposition_flow, paracomposition_inverse, CutoffProfile, Quantizable, Symbol,
    SymbolTerm, XiFn,
};
use ripple_core::{Result, C64};

use crate::config::SymbolSection;
use crate::Check;

/// Largest `x`-frequency of a random symbol coefficient.
const SYMBOL_MODES: i64 = 4;

fn random_coeff(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
    C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)) * scale
}

/// Complex coefficients decaying like `|n|^{-1}`; mirrored when `even`.
/// The flags stay free so nothing downstream symmetrizes the result.
pub fn random_field(rng: &mut ChaCha8Rng, grid: &SpectralGrid, n_max: i64, even: bool) -> Result<PeriodicField> {
    let mut modes = Vec::new();
    for n in 1..=n_max {
        let c = random_coeff(rng, 1.0 / n as f64);
        let d = if even { c } else { random_coeff(rng, 1.0 / n as f64) };
        modes.push((n, c));
        modes.push((-n, d));
    }
    modes.push((0, random_coeff(rng, 1.0)));
    PeriodicField::from_modes(grid, &modes, Flags::free())
}

/// `(g, order, parity of g)`
fn random_xi_factor(rng: &mut ChaCha8Rng) -> (XiFn, f64, bool) {
    match rng.gen_range(0..5) {
        0 => (XiFn::xi(), 1.0, false),
        1 => (XiFn::xi_pow(2), 2.0, true),
        2 => {
            let s = rng.gen_range(-1.0..=1.5);
            (XiFn::JaPow { s }, s.max(0.0), true)
        }
        3 => (XiFn::MKappa { kappa: rng.gen_range(0.1..=2.0), smoothed: true }, 1.5, true),
        _ => (XiFn::xi().times(XiFn::JaPow { s: -1.0 }), 0.0, false),
    }
}

/// Sum of one to three separable terms. With `even` every term satisfies
/// `a(−x,−ξ) = a(x,ξ)`: the `x`-factor takes the parity of the `ξ`-factor.
pub fn random_symbol(rng: &mut ChaCha8Rng, grid: &SpectralGrid, even: bool) -> Result<Symbol> {
    let count = rng.gen_range(1..=3);
    let mut terms = Vec::with_capacity(count);
    let mut order: f64 = 0.0;
    for _ in 0..count {
        let (g, ord, g_even) = random_xi_factor(rng);
        let mut modes = vec![(0, if even && !g_even { C64::new(0.0, 0.0) } else { random_coeff(rng, 1.0) })];
        for p in 1..=SYMBOL_MODES {
            let c = random_coeff(rng, 0.5 / p as f64);
            let d = match (even, g_even) {
                (false, _) => random_coeff(rng, 0.5 / p as f64),
                (true, true) => c,
                (true, false) => -c,
            };
            modes.push((p, c));
            modes.push((-p, d));
        }
        terms.push(SymbolTerm { f: PeriodicField::from_modes(grid, &modes, Flags::free())?, g });
        order = order.max(ord);
    }
    Symbol::new(grid, terms, order)
}

fn rel(a: &PeriodicField, b: &PeriodicField) -> Result<f64> {
    let d = a.sub(b)?.l2();
    let n = a.l2().max(b.l2());
    Ok(if n == 0.0 { d } else { d / n })
}

/// Worst deviations over `pairs` random symbol/field pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityDefects {
    /// `conj(Op(a)u)` against `Op(ā^∨)ū`.
    pub conjugation: f64,
    /// Odd part of `Op(a)u` for `a` even in `(x,ξ)` and `u` even.
    pub parity: f64,
    /// `⟨Op(a)u, v⟩` against `⟨u, Op(ā)v⟩`.
    pub adjoint: f64,
}

pub fn identity_defects(grid: &SpectralGrid, pairs: usize, seed: u64, cutoff: &CutoffProfile) -> Result<IdentityDefects> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_max = grid.nyquist() / 2;
    let mut out = IdentityDefects::default();
    for _ in 0..pairs {
        let a = random_symbol(&mut rng, grid, false)?;
        let u = random_field(&mut rng, grid, n_max, false)?;
        let lhs = op_bw_apply(&a, &u, cutoff)?.conj();
        let rhs = op_bw_apply(&a.conj_reflect()?, &u.conj(), cutoff)?;
        out.conjugation = out.conjugation.max(rel(&lhs, &rhs)?);

        let v = random_field(&mut rng, grid, n_max, false)?;
        let abar = Symbol::new(grid, a.terms().iter().map(|t| SymbolTerm { f: t.f.conj(), g: t.g.clone() }).collect(), a.order())?;
        let left = op_bw_apply(&a, &u, cutoff)?.inner(&v)?;
        let right = u.inner(&op_bw_apply(&abar, &v, cutoff)?)?;
        out.adjoint = out.adjoint.max((left - right).norm() / left.norm().max(right.norm()).max(f64::MIN_POSITIVE));

        let e = random_symbol(&mut rng, grid, true)?;
        let w = random_field(&mut rng, grid, n_max, true)?;
        let r = op_bw_apply(&e, &w, cutoff)?;
        out.parity = out.parity.max(r.sub(&r.reflect())?.l2() / r.l2().max(f64::MIN_POSITIVE));
    }
    Ok(out)
}

/// Remainder `‖Op(a)Op(b)u − Op(a#_ρ b)u‖/‖u‖` for `u = cos(nx)`.
#[derive(Clone, Debug)]
pub struct CompositionSlope {
    pub rho: usize,
    pub target: f64,
    pub samples: Vec<(f64, f64)>,
    pub slope: Option<(f64, f64)>,
}

/// The pair `a = 0.3cos x ⟨ξ⟩^{1/2}`, `b = 0.2 sin x ⟨ξ⟩^{3/2}` of total
/// order 2, whose remainder after `ρ` terms has order `2 − ρ`.
pub fn composition_slope(grid: &SpectralGrid, rho: usize, n_range: (i64, i64), cutoff: &CutoffProfile) -> Result<CompositionSlope> {
    let f = PeriodicField::from_fn(grid, |x| 0.3 * x.cos(), Flags::real_even())?;
    let g = PeriodicField::from_fn(grid, |x| 0.2 * x.sin(), Flags::real())?;
    let a = Symbol::separable(&f, XiFn::JaPow { s: 0.5 }, 0.5)?;
    let b = Symbol::separable(&g, XiFn::JaPow { s: 1.5 }, 1.5)?;
    let c = compose_symbols(&a, &b, rho)?;
    let mut samples = Vec::new();
    for n in n_range.0..=n_range.1 {
        let u = PeriodicField::from_fn(grid, |x| (n as f64 * x).cos(), Flags::real_even())?;
        let lhs = op_bw_apply(&a, &op_bw_apply(&b, &u, cutoff)?, cutoff)?;
        let rhs = op_bw_apply(&c, &u, cutoff)?;
        samples.push((n as f64, lhs.sub(&rhs)?.l2() / u.l2()));
    }
    let slope = loglog_slope(&samples);
    Ok(CompositionSlope { rho, target: 2.0 - rho as f64, samples, slope })
}

/// `β = 0.05 sin x`, the generator used by the paracomposition probes.
pub fn probe_beta(grid: &SpectralGrid) -> Result<PeriodicField> {
    PeriodicField::from_fn(grid, |x| 0.05 * x.sin(), Flags::real())
}

/// `‖Φ_β Op(ξ²) Φ_β^{-1} v − Op(conjugate_principal(ξ²)) v‖/‖…‖` for
/// `v = cos(nx)` at each `n`.
pub fn conjugation_trend(grid: &SpectralGrid, ns: &[i64], cutoff: &CutoffProfile) -> Result<Vec<(i64, f64)>> {
    let beta = probe_beta(grid)?;
    let dp = invert_diffeo(&beta)?;
    let a = Symbol::multiplier(grid, XiFn::xi_pow(2), 2.0)?;
    let a0 = conjugate_principal(&a, &dp)?;
    ns.iter()
        .map(|&n| {
            let v = PeriodicField::from_fn(grid, |x| (n as f64 * x).cos(), Flags::real_even())?;
            let t1 = paracomposition_inverse(&beta, &v, ripple_core::symbols::DEFAULT_FLOW_STEPS, cutoff)?;
            let t2 = op_bw_apply(&a, &t1, cutoff)?;
            let lhs = paracomposition_flow(&beta, &t2, 1.0, ripple_core::symbols::DEFAULT_FLOW_STEPS, cutoff)?;
            let rhs = op_bw_apply(&a0, &v, cutoff)?;
            Ok((n, lhs.sub(&rhs)?.l2() / rhs.l2()))
        })
        .collect()
}

/// `sup|Φ_β u − u∘(id+β)|` for `u = cos(nx)`.
pub fn flow_vs_composition(grid: &SpectralGrid, n: i64, cutoff: &CutoffProfile) -> Result<f64> {
    let beta = probe_beta(grid)?;
    let nf = n as f64;
    let u = PeriodicField::from_fn(grid, |x| (nf * x).cos(), Flags::real_even())?;
    let w = paracomposition_flow(&beta, &u, 1.0, ripple_core::symbols::DEFAULT_FLOW_STEPS, cutoff)?;
    let exact = PeriodicField::from_fn(grid, |x| (nf * (x + 0.05 * x.sin())).cos(), Flags::real())?;
    Ok(w.sub(&exact)?.linf())
}

/// Runs the whole suite and returns one check per invariant.
pub fn symbol_suite(cfg: &SymbolSection) -> Result<Vec<Check>> {
    let grid = SpectralGrid::new(cfg.m)?;
    let cutoff = CutoffProfile::default();
    let d = identity_defects(&grid, cfg.pairs, cfg.seed, &cutoff)?;
    let tol = cfg.tolerance;
    let mut checks = vec![
        Check::below("conjugation_rule", d.conjugation, tol),
        Check::below("parity_preservation", d.parity, tol),
        Check::below("adjoint_rule", d.adjoint, tol),
    ];
    let compose_cut = CutoffProfile::new(cfg.compose_delta)?;
    for rho in [2usize, 3] {
        let s = composition_slope(&grid, rho, (cfg.n_min, cfg.n_max), &compose_cut)?;
        let name = format!("composition_slope_rho{rho}");
        checks.push(match s.slope {
            Some((b, se)) => Check::within(&name, b, s.target, cfg.slope_tolerance).with_detail(format!("standard error {se:.3e}")),
            None => Check::failed(&name, "remainder vanished; no slope"),
        });
    }
    // dyadic bands from n = 4, at most four, kept clear of the Nyquist mode
    let ns: Vec<i64> = (0..4).map(|k| 4i64 << k).filter(|&n| n <= grid.nyquist() / 2).collect();
    let trend = conjugation_trend(&grid, &ns, &cutoff)?;
    let monotone = trend.windows(2).all(|w| w[1].1 < w[0].1);
    let detail = trend.iter().map(|(n, e)| format!("n={n}:{e:.3e}")).collect::<Vec<_>>().join(" ");
    checks.push(Check::flag("conjugate_principal_trend", monotone, trend.last().map_or(f64::NAN, |t| t.1)).with_detail(detail));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_random_symbols_are_tagged_even() {
        let g = SpectralGrid::new(32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_symbol(&mut rng, &g, true).unwrap();
            for (x, xi) in [(0.3, 2.0), (1.1, -5.0), (2.0, 0.5)] {
                assert!((a.eval(x, xi) - a.eval(-x, -xi)).norm() < 1e-12 * (1.0 + a.eval(x, xi).norm()));
            }
        }
    }

    #[test]
    fn random_fields_depend_only_on_seed() {
        let g = SpectralGrid::new(32).unwrap();
        let a = random_field(&mut ChaCha8Rng::seed_from_u64(9), &g, 8, false).unwrap();
        let b = random_field(&mut ChaCha8Rng::seed_from_u64(9), &g, 8, false).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
    }
}
