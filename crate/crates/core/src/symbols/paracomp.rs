//! Paracomposition: inverse diffeomorphisms, the transport flow and the
//! conjugated principal symbol.

use num_complex::Complex64 as C64;
use serde::Serialize;

use super::{op_bw_apply, CutoffProfile, SampledSymbol, Symbol, XiFn};
use crate::error::{Error, Result};
use crate::grid::{Flags, PeriodicField};

/// Substeps used for `|θ| <= 1` unless the caller asks otherwise.
pub const DEFAULT_FLOW_STEPS: usize = 64;
/// Largest admissible `sup|β′|`.
pub const MAX_LIPSCHITZ: f64 = 0.5;
const INVERSE_TOL: f64 = 1e-12;
const INVERSE_MAX_ITER: usize = 200;

/// `Φ(x) = x + β(x)` together with `Φ⁻¹(y) = y + γ(y)`.
#[derive(Clone, Debug)]
pub struct DiffeoPair {
    pub beta: PeriodicField,
    pub gamma: PeriodicField,
    /// `sup_y |γ(y) + β(y + γ(y))|` on the grid.
    pub residual: f64,
    /// Same residual measured at the grid midpoints.
    pub residual_midpoints: f64,
    /// Mean of `γ`, recorded rather than asserted.
    pub gamma_mean: f64,
    pub iterations: usize,
}

fn sup_derivative(beta: &PeriodicField) -> f64 {
    let fine = crate::grid::SpectralGrid::new(4 * beta.grid().m()).expect("grid size stays even");
    beta.resample(&fine).derivative(1).linf()
}

/// Solves `γ(y) = −β(y + γ(y))` by fixed-point iteration.
pub fn invert_diffeo(beta: &PeriodicField) -> Result<DiffeoPair> {
    if !beta.check_symmetry().is_real {
        return Err(Error::FlagViolation { flag: "is_real", deviation: beta.check_symmetry().real_deviation });
    }
    let lip = sup_derivative(beta);
    if lip > MAX_LIPSCHITZ {
        return Err(Error::DiffeoTooSteep { lipschitz: lip, bound: MAX_LIPSCHITZ });
    }
    let grid = beta.grid();
    let ys = grid.points();
    let mut gamma: Vec<f64> = ys.iter().map(|&y| -beta.eval_at(y).re).collect();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < INVERSE_MAX_ITER {
        iterations += 1;
        let next: Vec<f64> = ys.iter().zip(&gamma).map(|(&y, &g)| -beta.eval_at(y + g).re).collect();
        change = next.iter().zip(&gamma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        gamma = next;
        if change <= 1e-3 * INVERSE_TOL {
            break;
        }
    }
    let flags = Flags::new(true, false, crate::grid::MeanConvention::Free);
    let gamma = PeriodicField::from_real_samples(grid, &gamma, flags)?;
    let residual_at = |y: f64| {
        let g = gamma.eval_at(y).re;
        (g + beta.eval_at(y + g).re).abs()
    };
    let h = 0.5 * (ys[1] - ys[0]);
    let residual = ys.iter().map(|&y| residual_at(y)).fold(0.0, f64::max);
    let residual_midpoints = ys.iter().map(|&y| residual_at(y + h)).fold(0.0, f64::max);
    if residual > INVERSE_TOL {
        return Err(Error::NotConverged { what: "inverse diffeomorphism", iterations, residual: residual.max(change) });
    }
    let gamma_mean = gamma.mean().re;
    Ok(DiffeoPair { beta: beta.clone(), gamma, residual, residual_midpoints, gamma_mean, iterations })
}

/// Generator `i Op^{BW}(b(θ,x)ξ)` with `b = β/(1 + θβ′)`.
fn generator(beta: &PeriodicField, dbeta: &PeriodicField, theta: f64, w: &PeriodicField, cutoff: &CutoffProfile) -> Result<PeriodicField> {
    let inv = dbeta.map_real(|v| 1.0 / (1.0 + theta * v));
    let b = beta.product(&inv)?.scale_complex(C64::new(0.0, 1.0));
    let sym = Symbol::separable(&b, XiFn::xi(), 1.0)?;
    op_bw_apply(&sym, w, cutoff)
}

fn integrate(beta: &PeriodicField, u: &PeriodicField, from: f64, to: f64, steps: usize, cutoff: &CutoffProfile) -> Result<PeriodicField> {
    if steps == 0 {
        return Err(Error::InvalidArgument("flow needs at least one step".into()));
    }
    if beta.grid() != u.grid() {
        return Err(Error::GridMismatch { left: beta.grid().m(), right: u.grid().m() });
    }
    let dbeta = beta.derivative(1);
    let h = (to - from) / steps as f64;
    let mut w = u.clone();
    if h == 0.0 {
        return Ok(w);
    }
    for k in 0..steps {
        let th = from + k as f64 * h;
        let k1 = generator(beta, &dbeta, th, &w, cutoff)?;
        let k2 = generator(beta, &dbeta, th + 0.5 * h, &w.axpy(0.5 * h, &k1)?, cutoff)?;
        let k3 = generator(beta, &dbeta, th + 0.5 * h, &w.axpy(0.5 * h, &k2)?, cutoff)?;
        let k4 = generator(beta, &dbeta, th + h, &w.axpy(h, &k3)?, cutoff)?;
        let incr = k1.axpy(2.0, &k2)?.axpy(2.0, &k3)?.add(&k4)?;
        let flags = w.flags();
        let next = w.axpy(h / 6.0, &incr)?;
        w = PeriodicField::from_coeffs_enforced(u.grid(), next.into_coeffs(), flags);
    }
    Ok(w)
}

/// `Ω(θ)u`: the flow of `∂_θW = i Op^{BW}(b(θ)ξ)W` from `W(0) = u`, stepped with
/// RK4. `Ω(1)u` approximates `u ∘ (Id + β)`.
pub fn paracomposition_flow(beta: &PeriodicField, u: &PeriodicField, theta: f64, steps: usize, cutoff: &CutoffProfile) -> Result<PeriodicField> {
    if !(-1.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta must lie in [-1,1], got {theta}")));
    }
    integrate(beta, u, 0.0, theta, steps, cutoff)
}

/// `Ω(1)⁻¹u`, obtained by integrating the same flow backwards from θ = 1 to 0.
pub fn paracomposition_inverse(beta: &PeriodicField, u: &PeriodicField, steps: usize, cutoff: &CutoffProfile) -> Result<PeriodicField> {
    integrate(beta, u, 1.0, 0.0, steps, cutoff)
}

/// Measured constants `C⁻¹ <= ‖Ω(θ)W‖/‖W‖ <= C` over single-mode `W`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlowBounds {
    pub s: f64,
    pub theta: f64,
    pub n_max: i64,
    pub lower: f64,
    pub upper: f64,
}

pub fn flow_norm_bounds(beta: &PeriodicField, s: f64, theta: f64, n_max: i64, steps: usize, cutoff: &CutoffProfile) -> Result<FlowBounds> {
    let grid = beta.grid();
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for n in 1..=n_max {
        for phase in [0.0, std::f64::consts::FRAC_PI_2] {
            let u = PeriodicField::from_fn(grid, |x| (n as f64 * x + phase).cos(), Flags::new(true, false, crate::grid::MeanConvention::ZeroMean))?;
            let w = paracomposition_flow(beta, &u, theta, steps, cutoff)?;
            let w = w.clone().project_mean_out();
            let r = w.sobolev_norm(s)? / u.sobolev_norm(s)?;
            lower = lower.min(r);
            upper = upper.max(r);
        }
    }
    Ok(FlowBounds { s, theta, n_max, lower, upper })
}

/// `a(x + β(x), ξ(1 + γ′(y))|_{y = x+β(x)})` sampled on the grid.
pub fn conjugate_principal(a: &Symbol, dp: &DiffeoPair) -> Result<SampledSymbol> {
    let grid = super::Quantizable::grid(a);
    if dp.beta.grid() != grid {
        return Err(Error::GridMismatch { left: grid.m(), right: dp.beta.grid().m() });
    }
    let dgamma = dp.gamma.derivative(1);
    let pts: Vec<(Vec<C64>, f64)> = grid
        .points()
        .into_iter()
        .map(|x| {
            let y = x + dp.beta.eval_at(x).re;
            let fy = a.terms().iter().map(|t| t.f.eval_at(y)).collect();
            (fy, 1.0 + dgamma.eval_at(y).re)
        })
        .collect();
    Ok(SampledSymbol::from_fn(grid, super::Quantizable::order(a), |j, xi| {
        let (fy, factor) = &pts[j];
        a.terms().iter().zip(fy).map(|(t, f)| f * t.g.eval(xi * factor)).sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpectralGrid;

    #[test]
    fn zero_beta_gives_zero_gamma() {
        let g = SpectralGrid::new(32).unwrap();
        let z = PeriodicField::zeros(&g, Flags::real());
        let dp = invert_diffeo(&z).unwrap();
        assert_eq!(dp.gamma.max_abs_coeff(), 0.0);
    }

    #[test]
    fn small_sine_inverts_to_leading_order() {
        let g = SpectralGrid::new(64).unwrap();
        let beta = PeriodicField::from_fn(&g, |x| 0.1 * x.sin(), Flags::real()).unwrap();
        let dp = invert_diffeo(&beta).unwrap();
        assert!(dp.residual < 1e-12);
        assert!(dp.residual_midpoints < 1e-10);
        let lead = beta.scale_real(-1.0);
        assert!(dp.gamma.sub(&lead).unwrap().linf() < 0.02);
    }

    #[test]
    fn steep_profiles_are_rejected() {
        let g = SpectralGrid::new(64).unwrap();
        let beta = PeriodicField::from_fn(&g, |x| 0.6 * (2.0 * x).sin(), Flags::real()).unwrap();
        assert!(matches!(invert_diffeo(&beta), Err(Error::DiffeoTooSteep { .. })));
    }

    #[test]
    fn flow_with_zero_generator_is_identity() {
        let g = SpectralGrid::new(32).unwrap();
        let z = PeriodicField::zeros(&g, Flags::real());
        let u = PeriodicField::from_fn(&g, |x| (3.0 * x).cos(), Flags::real_even()).unwrap();
        let c = CutoffProfile::default();
        let w = paracomposition_flow(&z, &u, 0.7, 8, &c).unwrap();
        assert_eq!(w.distance(&u).unwrap(), 0.0);
        let w0 = paracomposition_flow(&z, &u, 0.0, 8, &c).unwrap();
        assert_eq!(w0.distance(&u).unwrap(), 0.0);
        assert!(paracomposition_flow(&z, &u, 0.5, 0, &c).is_err());
    }

    #[test]
    fn constant_symbol_is_unchanged() {
        let g = SpectralGrid::new(32).unwrap();
        let beta = PeriodicField::from_fn(&g, |x| 0.05 * x.sin(), Flags::real()).unwrap();
        let dp = invert_diffeo(&beta).unwrap();
        let one = Symbol::function(&PeriodicField::from_fn(&g, |_| 1.0, Flags::real_even()).unwrap()).unwrap();
        let c = conjugate_principal(&one, &dp).unwrap();
        for j in [0usize, 9, 31] {
            for xi in [-7i64, 0, 12] {
                assert!((c.value(j, xi) - 1.0).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn conjugating_xi_squared() {
        let g = SpectralGrid::new(32).unwrap();
        let beta = PeriodicField::from_fn(&g, |x| 0.05 * x.sin(), Flags::real()).unwrap();
        let dp = invert_diffeo(&beta).unwrap();
        let a = Symbol::multiplier(&g, XiFn::xi_pow(2), 2.0).unwrap();
        let c = conjugate_principal(&a, &dp).unwrap();
        let db = beta.derivative(1).real_samples();
        for j in [0usize, 5, 17] {
            let expect = 9.0 / (1.0 + db[j]).powi(2);
            assert!((c.value(j, 6) - C64::new(expect, 0.0)).norm() < 1e-9);
        }
    }
}
