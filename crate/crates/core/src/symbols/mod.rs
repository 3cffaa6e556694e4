//! Symbols `a(x,ξ)` on the circle and their quantizations.
//!
//! A [`Symbol`] is a finite separable sum `Σ_j f_j(x) g_j(ξ)` whose ξ-factors
//! are [`XiFn`] families with exact derivatives. A [`SampledSymbol`] holds
//! `a(x_j, ξ)` on the grid and on the half-integer ξ lattice, which is all the
//! quantization formulas ever read.

mod compose;
mod cutoff;
mod jet;
mod paracomp;
mod quantize;
mod xi;

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PeriodicField, SpectralGrid};

pub use compose::compose_symbols;
pub use cutoff::CutoffProfile;
pub use jet::Jet;
pub use paracomp::{
    conjugate_principal, flow_norm_bounds, invert_diffeo, paracomposition_flow, paracomposition_inverse, DiffeoPair, FlowBounds, DEFAULT_FLOW_STEPS,
};
pub use quantize::{op_bw_apply, op_standard_apply, op_weyl_apply, weyl_from_standard};
pub use xi::{dispersion_cutoff, XiFn, CHI_INNER, CHI_OUTER};

/// Slack factor allowed by the order check.
pub const ORDER_SLACK: f64 = 10.0;
/// Relative tolerance used when tagging symbol symmetries.
pub const TAG_TOL: f64 = 1e-12;

/// Reality structure of a symbol with respect to `ā^∨(x,ξ) = conj(a(x,-ξ))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealityTag {
    /// `ā^∨ = a`: the operator maps real fields to real fields.
    ConjInvariant,
    /// `ā^∨ = -a`
    ConjAntiInvariant,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolTags {
    /// `a(-x,-ξ) = a(x,ξ)`
    pub even_in_x_xi: bool,
    pub reality: RealityTag,
}

/// Fourier table `â(p, s/2)` for `|p| <= M/2`, `|s| <= M`, normalized so that
/// `a(x,ξ) = Σ_p â(p,ξ) e^{ipx}`.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    nyq: i64,
    data: Vec<C64>,
}

impl SymbolTable {
    fn zeros(nyq: i64) -> Self {
        let rows = (4 * nyq + 1) as usize;
        let cols = (2 * nyq + 1) as usize;
        Self { nyq, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    fn slot(&self, s: i64, p: i64) -> usize {
        let cols = 2 * self.nyq + 1;
        ((s + 2 * self.nyq) * cols + (p + self.nyq)) as usize
    }

    /// `â(p, s/2)`; zero outside the stored range.
    pub fn get(&self, s: i64, p: i64) -> C64 {
        if p.abs() > self.nyq || s.abs() > 2 * self.nyq {
            return C64::new(0.0, 0.0);
        }
        self.data[self.slot(s, p)]
    }

    fn add(&mut self, s: i64, p: i64, v: C64) {
        let k = self.slot(s, p);
        self.data[k] += v;
    }

    pub fn nyquist(&self) -> i64 {
        self.nyq
    }

    fn scale(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Symmetry tags measured on the table.
    pub fn measure_tags(&self) -> SymbolTags {
        let n = self.nyq;
        let tol = TAG_TOL * self.scale().max(f64::MIN_POSITIVE);
        let (mut even, mut conj_inv, mut conj_anti) = (0.0f64, 0.0f64, 0.0f64);
        for s in -2 * n..=2 * n {
            for p in -n..=n {
                let a = self.get(s, p);
                let b = self.get(-s, -p);
                even = even.max((a - b).norm());
                conj_inv = conj_inv.max((a - b.conj()).norm());
                conj_anti = conj_anti.max((a + b.conj()).norm());
            }
        }
        let reality = if conj_inv <= tol {
            RealityTag::ConjInvariant
        } else if conj_anti <= tol {
            RealityTag::ConjAntiInvariant
        } else {
            RealityTag::None
        };
        SymbolTags { even_in_x_xi: even <= tol, reality }
    }
}

/// Anything the quantization formulas can read.
pub trait Quantizable {
    fn grid(&self) -> &SpectralGrid;
    fn table(&self) -> SymbolTable;
    fn order(&self) -> f64;
    fn tags(&self) -> SymbolTags;
}

/// One separable term `f(x) g(ξ)`.
#[derive(Clone, Debug)]
pub struct SymbolTerm {
    pub f: PeriodicField,
    pub g: XiFn,
}

#[derive(Clone, Debug)]
pub struct Symbol {
    grid: SpectralGrid,
    terms: Vec<SymbolTerm>,
    order: f64,
    tags: SymbolTags,
}

fn japanese(xi: f64) -> f64 {
    (1.0 + xi * xi).sqrt()
}

impl Symbol {
    /// Builds a symbol and checks the declared order on the grid's ξ range.
    pub fn new(grid: &SpectralGrid, terms: Vec<SymbolTerm>, order: f64) -> Result<Self> {
        for t in &terms {
            if t.f.grid() != grid {
                return Err(Error::GridMismatch { left: grid.m(), right: t.f.grid().m() });
            }
        }
        let terms: Vec<SymbolTerm> = terms.into_iter().filter(|t| t.f.max_abs_coeff() > 0.0).collect();
        for t in &terms {
            check_order(&t.g, order, grid.nyquist())?;
        }
        let mut s = Self { grid: grid.clone(), terms, order, tags: SymbolTags { even_in_x_xi: false, reality: RealityTag::None } };
        s.tags = s.table().measure_tags();
        Ok(s)
    }

    /// `x`-independent symbol `g(ξ)`.
    pub fn multiplier(grid: &SpectralGrid, g: XiFn, order: f64) -> Result<Self> {
        let one = PeriodicField::from_modes(grid, &[(0, C64::new(1.0, 0.0))], crate::grid::Flags::real_even())?;
        Self::new(grid, vec![SymbolTerm { f: one, g }], order)
    }

    /// `ξ`-independent symbol `f(x)` (order 0).
    pub fn function(f: &PeriodicField) -> Result<Self> {
        Self::new(f.grid(), vec![SymbolTerm { f: f.clone(), g: XiFn::constant(1.0) }], 0.0)
    }

    /// `f(x) g(ξ)`.
    pub fn separable(f: &PeriodicField, g: XiFn, order: f64) -> Result<Self> {
        Self::new(f.grid(), vec![SymbolTerm { f: f.clone(), g }], order)
    }

    pub fn terms(&self) -> &[SymbolTerm] {
        &self.terms
    }

    /// `a(x,ξ)` at an arbitrary point, via trigonometric interpolation in `x`.
    pub fn eval(&self, x: f64, xi: f64) -> C64 {
        self.terms.iter().map(|t| t.f.eval_at(x) * t.g.eval(xi)).sum()
    }

    /// Sum of two symbols on the same grid; the order is the larger one.
    pub fn plus(&self, other: &Symbol) -> Result<Symbol> {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Symbol::new(&self.grid, terms, self.order.max(other.order))
    }

    pub fn scaled(&self, c: C64) -> Result<Symbol> {
        let terms = self.terms.iter().map(|t| SymbolTerm { f: t.f.scale_complex(c), g: t.g.clone() }).collect();
        Symbol::new(&self.grid, terms, self.order)
    }

    /// `ā^∨(x,ξ) = conj(a(x,-ξ))`.
    pub fn conj_reflect(&self) -> Result<Symbol> {
        let terms = self.terms.iter().map(|t| SymbolTerm { f: t.f.conj(), g: t.g.clone().reflected() }).collect();
        Symbol::new(&self.grid, terms, self.order)
    }

    /// JSON dump: `{terms: [{f: [[n, re, im], ...], g: {...}}], order, tags}`.
    pub fn to_json(&self) -> serde_json::Value {
        let nyq = self.grid.nyquist();
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|t| {
                let modes: Vec<(i64, f64, f64)> =
                    (-nyq..=nyq).map(|n| (n, t.f.mode(n))).filter(|(_, c)| c.norm() > 0.0).map(|(n, c)| (n, c.re, c.im)).collect();
                serde_json::json!({ "f": modes, "g": t.g })
            })
            .collect();
        serde_json::json!({ "terms": terms, "order": self.order, "tags": self.tags, "grid_m": self.grid.m() })
    }
}

impl Quantizable for Symbol {
    fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn table(&self) -> SymbolTable {
        let nyq = self.grid.nyquist();
        let mut t = SymbolTable::zeros(nyq);
        for term in &self.terms {
            let gv: Vec<f64> = (-2 * nyq..=2 * nyq).map(|s| term.g.eval(0.5 * s as f64)).collect();
            for p in -nyq..=nyq {
                let c = term.f.mode(p);
                if c.norm() == 0.0 {
                    continue;
                }
                for (i, s) in (-2 * nyq..=2 * nyq).enumerate() {
                    t.add(s, p, c * gv[i]);
                }
            }
        }
        t
    }

    fn order(&self) -> f64 {
        self.order
    }

    fn tags(&self) -> SymbolTags {
        self.tags
    }
}

fn check_order(g: &XiFn, order: f64, nyq: i64) -> Result<()> {
    let ratio = |xi: f64| g.eval(xi).abs() / japanese(xi).powf(order);
    let mut reference: f64 = 0.0;
    let mut measured: f64 = 0.0;
    for s in -2 * nyq..=2 * nyq {
        let xi = 0.5 * s as f64;
        let r = ratio(xi);
        if !r.is_finite() {
            return Err(Error::OrderViolation { declared: order, measured: r, reference });
        }
        if xi.abs() <= 2.0 {
            reference = reference.max(r);
        }
        measured = measured.max(r);
    }
    if reference == 0.0 {
        return Ok(());
    }
    if measured > ORDER_SLACK * reference {
        return Err(Error::OrderViolation { declared: order, measured, reference });
    }
    Ok(())
}

/// A non-separable symbol given by its samples `a(x_j, s/2)`.
#[derive(Clone, Debug)]
pub struct SampledSymbol {
    grid: SpectralGrid,
    order: f64,
    /// `values[s + M][j] = a(x_j, s/2)`
    values: Vec<Vec<C64>>,
}

impl SampledSymbol {
    /// Samples `a` on the grid and the half-integer lattice.
    pub fn from_fn(grid: &SpectralGrid, order: f64, a: impl Fn(usize, f64) -> C64) -> Self {
        let nyq = grid.nyquist();
        let values = (-2 * nyq..=2 * nyq).map(|s| (0..grid.m()).map(|j| a(j, 0.5 * s as f64)).collect()).collect();
        Self { grid: grid.clone(), order, values }
    }

    /// Samples a separable symbol.
    pub fn from_symbol(a: &Symbol) -> Self {
        let fs: Vec<Vec<C64>> = a.terms.iter().map(|t| t.f.samples()).collect();
        Self::from_fn(&a.grid, a.order, |j, xi| a.terms.iter().zip(&fs).map(|(t, f)| f[j] * t.g.eval(xi)).sum())
    }

    pub fn value(&self, j: usize, s: i64) -> C64 {
        self.values[(s + 2 * self.grid.nyquist()) as usize][j]
    }

    /// Largest pointwise difference on the sampled lattice, restricted to `|ξ| <= xi_max`.
    pub fn max_diff(&self, other: &SampledSymbol, xi_max: f64) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { left: self.grid.m(), right: other.grid.m() });
        }
        let nyq = self.grid.nyquist();
        let mut d: f64 = 0.0;
        for s in -2 * nyq..=2 * nyq {
            if 0.5 * (s as f64).abs() > xi_max {
                continue;
            }
            for j in 0..self.grid.m() {
                d = d.max((self.value(j, s) - other.value(j, s)).norm());
            }
        }
        Ok(d)
    }
}

impl Quantizable for SampledSymbol {
    fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn table(&self) -> SymbolTable {
        let nyq = self.grid.nyquist();
        let mut t = SymbolTable::zeros(nyq);
        for (row, s) in self.values.iter().zip(-2 * nyq..=2 * nyq) {
            let f = PeriodicField::from_samples(&self.grid, row, crate::grid::Flags::free()).expect("row length matches grid");
            for p in -nyq..=nyq {
                t.add(s, p, f.mode(p));
            }
        }
        t
    }

    fn order(&self) -> f64 {
        self.order
    }

    fn tags(&self) -> SymbolTags {
        self.table().measure_tags()
    }
}

/// `‖u‖_{L²}/√(2π)`-normalized helper used by tests and diagnostics.
pub fn rms(u: &PeriodicField) -> f64 {
    u.l2() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Flags;

    #[test]
    fn order_check_catches_underdeclared_growth() {
        let g = SpectralGrid::new(64).unwrap();
        assert!(Symbol::multiplier(&g, XiFn::xi_pow(2), 2.0).is_ok());
        let err = Symbol::multiplier(&g, XiFn::xi_pow(2), 1.0).unwrap_err();
        assert!(matches!(err, Error::OrderViolation { .. }));
    }

    #[test]
    fn tags_of_simple_symbols() {
        let g = SpectralGrid::new(32).unwrap();
        let c = PeriodicField::from_fn(&g, |x| x.cos(), Flags::real_even()).unwrap();
        let s = PeriodicField::from_fn(&g, |x| x.sin(), Flags::real()).unwrap();
        // cos(x)ξ² is even in (x,ξ) and conj-invariant
        let a = Symbol::separable(&c, XiFn::xi_pow(2), 2.0).unwrap();
        assert_eq!(a.tags(), SymbolTags { even_in_x_xi: true, reality: RealityTag::ConjInvariant });
        // sin(x)ξ is even in (x,ξ) jointly but conj(a(x,-ξ)) = -a
        let b = Symbol::separable(&s, XiFn::xi(), 1.0).unwrap();
        assert_eq!(b.tags(), SymbolTags { even_in_x_xi: true, reality: RealityTag::ConjAntiInvariant });
    }

    #[test]
    fn sampled_table_matches_separable_table() {
        let g = SpectralGrid::new(16).unwrap();
        let c = PeriodicField::from_fn(&g, |x| 0.3 * x.cos() + 0.1 * (2.0 * x).sin(), Flags::real()).unwrap();
        let a = Symbol::separable(&c, XiFn::JaPow { s: 1.0 }, 1.0).unwrap();
        let ta = a.table();
        let tb = SampledSymbol::from_symbol(&a).table();
        for s in -16..=16 {
            for p in -8..=8 {
                assert!((ta.get(s, p) - tb.get(s, p)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn json_dump_names_families() {
        let g = SpectralGrid::new(16).unwrap();
        let a = Symbol::multiplier(&g, XiFn::MKappa { kappa: 1.0, smoothed: true }, 1.5).unwrap();
        let v = a.to_json();
        assert_eq!(v["terms"][0]["g"]["family"], "m_kappa");
        assert_eq!(v["order"], 1.5);
    }
}
