//! Strip solver for the flattened Laplace problem and the Dirichlet–Neumann
//! trace.
//!
//! With `y = η + z̃(1+η)` the potential `φ(x,z̃)` satisfies
//! `(∂_x² + ∂_z̃²)φ = ∂_z̃²[G₂φ] + ∂_z̃[G₁φ] + G₀φ`, `φ(·,0) = ψ`,
//! `∂_z̃φ(·,-1) = 0`. Writing `φ = φ₀ + w` with `φ₀` the flat harmonic
//! extension, `w` is the fixed point of
//!
//! `w = F − C(z)F(0) − S(z)H(−1) + ∫K₀(n²F + G₀φ)dz′ − ∫∂_{z′}K₀ H dz′`
//!
//! where `F = G₂φ`, `H = G₁φ`. This is the twice integrated-by-parts form of
//! `∫K₀[∂²F + ∂H + G₀φ]`; the `−C(z)F(0)` term restores the top boundary
//! value that the integration by parts leaves behind.
//!
//! The trace uses `∂_yΦ = ∂_z̃φ/(1+η)` and `∂_xΦ = ∂_xφ − η′∂_z̃φ/(1+η)` on
//! the surface, which gives
//! `G(η)ψ = (1+η′²)∂_z̃φ(·,0)/(1+η) − η′∂_xψ`.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::kernels::{c_kernel, ds_kernel, s_kernel, KernelOps};
use super::zgrid::{ZGrid, ZRule};
use crate::error::{Error, Result};
use crate::grid::{Flags, MeanConvention, PeriodicField, SpectralGrid};
use crate::symbols::{op_bw_apply, CutoffProfile, Symbol};

/// Largest admissible `sup|η|`.
pub const MAX_ETA: f64 = 0.5;
/// Consecutive iterations with ratio `>= 1` tolerated before giving up.
const NON_CONTRACTION_RUN: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DnoConfig {
    /// Number of vertical intervals.
    pub j: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub rule: ZRule,
    /// Gauss–Legendre nodes per panel of the `z′` integrals.
    pub quad_points: usize,
}

impl Default for DnoConfig {
    fn default() -> Self {
        Self { j: 64, tol: 1e-12, max_iter: 200, rule: ZRule::ChebyshevLobatto, quad_points: 96 }
    }
}

impl DnoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// `Φ(x, z̃)` sampled on the vertical grid, one row of Fourier coefficients
/// per node.
#[derive(Clone, Debug)]
pub struct StripField {
    zgrid: ZGrid,
    grid: SpectralGrid,
    rows: Vec<Vec<C64>>,
    flags: Flags,
}

impl StripField {
    pub fn zeros(grid: &SpectralGrid, zgrid: &ZGrid, flags: Flags) -> Self {
        Self { zgrid: zgrid.clone(), grid: grid.clone(), rows: vec![vec![C64::new(0.0, 0.0); grid.m()]; zgrid.len()], flags }
    }

    pub fn from_rows(grid: &SpectralGrid, zgrid: &ZGrid, rows: Vec<Vec<C64>>, flags: Flags) -> Result<Self> {
        if rows.len() != zgrid.len() || rows.iter().any(|r| r.len() != grid.m()) {
            return Err(Error::InvalidArgument("strip rows do not match the grids".into()));
        }
        let mut s = Self { zgrid: zgrid.clone(), grid: grid.clone(), rows, flags };
        s.enforce();
        Ok(s)
    }

    fn enforce(&mut self) {
        let flags = self.flags.with_mean(MeanConvention::Free);
        for r in &mut self.rows {
            let f = PeriodicField::from_coeffs_enforced(&self.grid, std::mem::take(r), flags);
            *r = f.into_coeffs();
        }
    }

    pub fn zgrid(&self) -> &ZGrid {
        &self.zgrid
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn flags(&self) -> Flags {
        self.flags
    }

    /// Fourier coefficients at node `i`.
    pub fn row_coeffs(&self, i: usize) -> &[C64] {
        &self.rows[i]
    }

    pub fn row(&self, i: usize) -> PeriodicField {
        PeriodicField::from_coeffs_enforced(&self.grid, self.rows[i].clone(), self.flags.with_mean(MeanConvention::Free))
    }

    /// Values of storage slot `slot` at every node.
    pub fn column(&self, slot: usize) -> Vec<C64> {
        self.rows.iter().map(|r| r[slot]).collect()
    }

    /// `∂_z̃` at node `i` by differentiating the vertical interpolant.
    pub fn dz_row(&self, i: usize) -> PeriodicField {
        let d = self.zgrid.diff_row(i);
        let m = self.grid.m();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for (k, r) in self.rows.iter().enumerate() {
            if d[k] != 0.0 {
                out.iter_mut().zip(r).for_each(|(o, c)| *o += d[k] * c);
            }
        }
        PeriodicField::from_coeffs_enforced(&self.grid, out, self.flags.with_mean(MeanConvention::Free))
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &StripField) -> Result<StripField> {
        if self.grid != other.grid || self.zgrid.nodes() != other.zgrid.nodes() {
            return Err(Error::GridMismatch { left: self.grid.m(), right: other.grid.m() });
        }
        let rows = self.rows.iter().zip(&other.rows).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        Ok(Self { zgrid: self.zgrid.clone(), grid: self.grid.clone(), rows, flags: self.flags.product(other.flags) })
    }

    /// CSV dump with columns `z, n, re, im`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["z", "n", "re", "im"])?;
        for (i, &z) in self.zgrid.nodes().iter().enumerate() {
            for (slot, c) in self.rows[i].iter().enumerate() {
                let n = self.grid.mode_of(slot);
                wr.write_record([format!("{z:.17e}"), n.to_string(), format!("{:.17e}", c.re), format!("{:.17e}", c.im)])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// `φ₀(x,z) = cosh((z+1)D)/cosh D ψ`; the mean of ψ is extended as a constant.
pub fn harmonic_extension_flat(psi: &PeriodicField, zgrid: &ZGrid) -> StripField {
    let grid = psi.grid();
    let rows = zgrid
        .nodes()
        .iter()
        .map(|&z| psi.coeffs().iter().enumerate().map(|(slot, c)| c * c_kernel(grid.mode_of(slot).unsigned_abs() as f64, z)).collect())
        .collect();
    StripField { zgrid: zgrid.clone(), grid: grid.clone(), rows, flags: psi.flags().with_mean(MeanConvention::Free) }
}

/// `z ↦ ∫K₀(z,z′,D)f(z′)dz′` with the product quadrature of `quad_points`
/// Gauss–Legendre nodes per panel.
pub fn poisson_kernel_apply(f: &StripField, quad_points: usize) -> StripField {
    let ops = KernelOps::new(f.zgrid(), f.grid().nyquist() as usize, quad_points);
    let mut out = StripField::zeros(f.grid(), f.zgrid(), f.flags());
    let len = f.zgrid().len();
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for slot in 0..f.grid().m() {
        let n = f.grid().mode_of(slot).unsigned_abs() as usize;
        ops.apply_k(n, &f.column(slot), &mut buf);
        for i in 0..len {
            out.rows[i][slot] = buf[i];
        }
    }
    out
}

fn deriv_coeffs(grid: &SpectralGrid, c: &[C64], k: u32) -> Vec<C64> {
    let nyq = grid.nyquist();
    c.iter()
        .enumerate()
        .map(|(slot, &v)| {
            let n = grid.mode_of(slot);
            if n == nyq && k % 2 == 1 {
                C64::new(0.0, 0.0)
            } else {
                v * C64::new(0.0, n as f64).powu(k)
            }
        })
        .collect()
}

/// Coefficients of `G₀, G₁, G₂`, sampled on the padded grid so that each
/// application is a single dealiased product.
#[derive(Clone, Debug)]
pub struct GCoefficients {
    grid: SpectralGrid,
    eta: PeriodicField,
    zero: bool,
    /// `η′²`
    ep2: Vec<C64>,
    /// `2η′(1+η)`
    g1_dx: Vec<C64>,
    /// `2η′² + η″(1+η)`
    g1_id: Vec<C64>,
    /// `2η + η²`
    g0_dxx: Vec<C64>,
    /// `2η′(1+η)`, shared with `G₁`
    g0_dx: Vec<C64>,
    /// `η″(1+η)`
    g0_id: Vec<C64>,
}

/// Per-row output of [`GCoefficients::apply`].
#[derive(Clone, Debug)]
pub struct GTerms {
    pub g2: Vec<C64>,
    pub g1: Vec<C64>,
    pub g0: Vec<C64>,
}

/// Builds `G₂φ = −(1+z̃)²η′²φ`,
/// `G₁φ = 2(1+z̃)η′(1+η)∂_xφ + (1+z̃)[2η′² + η″(1+η)]φ` and
/// `G₀φ = −(2η+η²)∂_x²φ − 2η′(1+η)∂_xφ − η″(1+η)φ`.
pub fn build_g_coefficients(eta: &PeriodicField) -> Result<GCoefficients> {
    let sup = eta.linf();
    if sup >= MAX_ETA {
        return Err(Error::AmplitudeTooLarge { sup, bound: MAX_ETA });
    }
    let grid = eta.grid().clone();
    let e = grid.pad_samples(eta.coeffs());
    let ep = grid.pad_samples(&deriv_coeffs(&grid, eta.coeffs(), 1));
    let epp = grid.pad_samples(&deriv_coeffs(&grid, eta.coeffs(), 2));
    let zip3 = |f: &dyn Fn(C64, C64, C64) -> C64| -> Vec<C64> { e.iter().zip(&ep).zip(&epp).map(|((&a, &b), &c)| f(a, b, c)).collect() };
    let one = C64::new(1.0, 0.0);
    Ok(GCoefficients {
        zero: eta.max_abs_coeff() == 0.0,
        ep2: zip3(&|_, p, _| p * p),
        g1_dx: zip3(&|h, p, _| 2.0 * p * (one + h)),
        g1_id: zip3(&|h, p, q| 2.0 * p * p + q * (one + h)),
        g0_dxx: zip3(&|h, _, _| 2.0 * h + h * h),
        g0_dx: zip3(&|h, p, _| 2.0 * p * (one + h)),
        g0_id: zip3(&|h, _, q| q * (one + h)),
        grid,
        eta: eta.clone(),
    })
}

impl GCoefficients {
    pub fn eta(&self) -> &PeriodicField {
        &self.eta
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// `(G₂φ, G₁φ, G₀φ)` for one row `φ` at height `z`.
    pub fn apply(&self, phi: &[C64], z: f64) -> GTerms {
        let m = self.grid.m();
        if self.zero {
            let zeros = vec![C64::new(0.0, 0.0); m];
            return GTerms { g2: zeros.clone(), g1: zeros.clone(), g0: zeros };
        }
        let p = self.grid.pad_samples(phi);
        let px = self.grid.pad_samples(&deriv_coeffs(&self.grid, phi, 1));
        let pxx = self.grid.pad_samples(&deriv_coeffs(&self.grid, phi, 2));
        let l = p.len();
        let w = 1.0 + z;
        let mut f2 = Vec::with_capacity(l);
        let mut f1 = Vec::with_capacity(l);
        let mut f0 = Vec::with_capacity(l);
        for k in 0..l {
            f2.push(-w * w * self.ep2[k] * p[k]);
            f1.push(w * (self.g1_dx[k] * px[k] + self.g1_id[k] * p[k]));
            f0.push(-self.g0_dxx[k] * pxx[k] - self.g0_dx[k] * px[k] - self.g0_id[k] * p[k]);
        }
        GTerms { g2: self.grid.unpad_coeffs(f2), g1: self.grid.unpad_coeffs(f1), g0: self.grid.unpad_coeffs(f0) }
    }

    /// Field versions of [`Self::apply`], for inspection.
    pub fn apply_field(&self, phi: &PeriodicField, z: f64) -> (PeriodicField, PeriodicField, PeriodicField) {
        let t = self.apply(phi.coeffs(), z);
        let fl = Flags::new(phi.flags().is_real && self.eta.flags().is_real, false, MeanConvention::Free);
        let mk = |c| PeriodicField::from_coeffs_enforced(&self.grid, c, fl);
        (mk(t.g2), mk(t.g1), mk(t.g0))
    }
}

/// Per-solve diagnostics.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DnDiagnostics {
    pub iterations: usize,
    /// Largest measured `‖w_{k+1}−w_k‖/‖w_k−w_{k−1}‖` before the increments
    /// reach roundoff.
    pub contraction_ratio: f64,
    pub ratios: Vec<f64>,
    /// `‖M(φ₀+w) − w‖/‖ψ‖` at the returned iterate.
    pub fixed_point_residual: f64,
    /// Residual of the strip equation by differentiating the vertical
    /// interpolant, relative to `max_n n²|ψ̂_n|`.
    pub pde_residual: f64,
    /// `max|φ(·,0) − ψ|/‖ψ‖`.
    pub top_trace_error: f64,
    /// `max|∂_z̃φ(·,−1)|/‖ψ‖`.
    pub bottom_trace_error: f64,
    /// `|∫G(η)ψ|/(2π‖ψ‖)` before the mean is projected out.
    pub mean_before_projection: f64,
    /// Relative gap between the integral trace and the differentiated
    /// interpolant in the flattened-top coordinates.
    pub dual_route_difference: f64,
}

/// Strip solution together with its diagnostics.
#[derive(Clone, Debug)]
pub struct StripSolution {
    pub phi: StripField,
    pub diagnostics: DnDiagnostics,
    // the last source terms, reused by the trace
    terms: Vec<GTerms>,
}

/// Reusable solver holding the quadrature matrices for one `(M, J)` pair.
#[derive(Clone)]
pub struct DnSolver {
    grid: SpectralGrid,
    cfg: DnoConfig,
    ops: Arc<KernelOps>,
}

fn scale_of(c: &[C64]) -> f64 {
    c.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl DnSolver {
    pub fn new(grid: &SpectralGrid, cfg: &DnoConfig) -> Result<Self> {
        cfg.validate()?;
        let zgrid = ZGrid::new(cfg.j, cfg.rule)?;
        let ops = KernelOps::new(&zgrid, grid.nyquist() as usize, cfg.quad_points);
        Ok(Self { grid: grid.clone(), cfg: cfg.clone(), ops: Arc::new(ops) })
    }

    pub fn config(&self) -> &DnoConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn zgrid(&self) -> &ZGrid {
        self.ops.zgrid()
    }

    fn check_inputs(&self, eta: &PeriodicField, psi: &PeriodicField) -> Result<()> {
        for f in [eta, psi] {
            if *f.grid() != self.grid {
                return Err(Error::GridMismatch { left: self.grid.m(), right: f.grid().m() });
            }
        }
        Ok(())
    }

    fn terms(&self, g: &GCoefficients, phi: &[Vec<C64>]) -> Vec<GTerms> {
        use rayon::prelude::*;
        let nodes = self.zgrid().nodes();
        phi.par_iter().zip(nodes.par_iter()).map(|(row, &z)| g.apply(row, z)).collect()
    }

    /// One application of the fixed-point map, returning the new correction.
    fn step(&self, terms: &[GTerms]) -> Vec<Vec<C64>> {
        let zg = self.zgrid();
        let len = zg.len();
        let top = zg.top();
        let m = self.grid.m();
        let mut out = vec![vec![C64::new(0.0, 0.0); m]; len];
        let mut src = vec![C64::new(0.0, 0.0); len];
        let mut h = vec![C64::new(0.0, 0.0); len];
        let mut a = vec![C64::new(0.0, 0.0); len];
        let mut b = vec![C64::new(0.0, 0.0); len];
        for slot in 0..m {
            let n = self.grid.mode_of(slot).unsigned_abs() as usize;
            let nf = n as f64;
            for i in 0..len {
                src[i] = nf * nf * terms[i].g2[slot] + terms[i].g0[slot];
                h[i] = terms[i].g1[slot];
            }
            self.ops.apply_k(n, &src, &mut a);
            self.ops.apply_dk(n, &h, &mut b);
            let f_top = terms[top].g2[slot];
            let h_bot = terms[0].g1[slot];
            for (i, &z) in zg.nodes().iter().enumerate() {
                out[i][slot] = terms[i].g2[slot] - c_kernel(nf, z) * f_top - s_kernel(nf, z) * h_bot + a[i] - b[i];
            }
        }
        out
    }

    /// Solves the flattened problem by the Neumann iteration.
    pub fn solve_strip(&self, eta: &PeriodicField, psi: &PeriodicField) -> Result<StripSolution> {
        self.check_inputs(eta, psi)?;
        let g = build_g_coefficients(eta)?;
        let zg = self.zgrid().clone();
        let phi0 = harmonic_extension_flat(psi, &zg);
        let flags = Flags::new(eta.flags().is_real && psi.flags().is_real, eta.flags().is_even && psi.flags().is_even, MeanConvention::Free);
        let scale = scale_of(psi.coeffs());
        let mut diag = DnDiagnostics::default();
        let m = self.grid.m();
        let len = zg.len();
        let mut w = vec![vec![C64::new(0.0, 0.0); m]; len];
        let add = |w: &[Vec<C64>]| -> Vec<Vec<C64>> { phi0.rows.iter().zip(w).map(|(p, q)| p.iter().zip(q).map(|(a, b)| a + b).collect()).collect() };
        let enforce = |rows: &mut Vec<Vec<C64>>| {
            for r in rows.iter_mut() {
                *r = PeriodicField::from_coeffs_enforced(&self.grid, std::mem::take(r), flags).into_coeffs();
            }
        };
        if g.is_zero() || scale == 0.0 {
            let terms = self.terms(&g, &phi0.rows);
            let phi = StripField { zgrid: zg, grid: self.grid.clone(), rows: phi0.rows.clone(), flags };
            return Ok(StripSolution { phi, diagnostics: diag, terms });
        }
        let mut prev: Option<f64> = None;
        let mut bad_run = 0;
        let mut converged = false;
        for it in 1..=self.cfg.max_iter {
            let terms = self.terms(&g, &add(&w));
            let mut next = self.step(&terms);
            enforce(&mut next);
            let diff = next.iter().zip(&w).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm())).fold(0.0, f64::max) / scale;
            w = next;
            diag.iterations = it;
            if let Some(p) = prev {
                if p > 1e3 * self.cfg.tol {
                    let r = diff / p;
                    diag.ratios.push(r);
                    diag.contraction_ratio = diag.contraction_ratio.max(r);
                    if r >= 1.0 {
                        bad_run += 1;
                        if bad_run >= NON_CONTRACTION_RUN {
                            return Err(Error::NonContraction { ratio: r, iteration: it });
                        }
                    } else {
                        bad_run = 0;
                    }
                }
            }
            prev = Some(diff);
            if diff <= self.cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotConverged { what: "Neumann iteration", iterations: diag.iterations, residual: prev.unwrap_or(f64::NAN) });
        }
        let rows = add(&w);
        let terms = self.terms(&g, &rows);
        let check = self.step(&terms);
        diag.fixed_point_residual = check.iter().zip(&w).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm())).fold(0.0, f64::max) / scale;
        let phi = StripField { zgrid: zg, grid: self.grid.clone(), rows, flags };
        diag.top_trace_error = phi.rows[phi.zgrid.top()].iter().zip(psi.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
        diag.bottom_trace_error = phi.dz_row(0).max_abs_coeff() / scale;
        diag.pde_residual = pde_residual(&phi, &terms) / (scale * (self.grid.nyquist() as f64).powi(2));
        Ok(StripSolution { phi, diagnostics: diag, terms })
    }

    /// `G(η)ψ` with zero mean, plus diagnostics.
    pub fn dirichlet_neumann(&self, eta: &PeriodicField, psi: &PeriodicField) -> Result<(PeriodicField, DnDiagnostics)> {
        let sol = self.solve_strip(eta, psi)?;
        let mut diag = sol.diagnostics.clone();
        let dz = self.trace_dz(&sol, eta, psi);
        let (g, mean) = surface_flux(eta, psi, &dz)?;
        let scale = scale_of(psi.coeffs()).max(f64::MIN_POSITIVE);
        diag.mean_before_projection = mean / scale;
        let alt = sol.phi.dz_row(sol.phi.zgrid.top());
        let (g_alt, _) = surface_flux(eta, psi, &alt)?;
        let gs = g.max_abs_coeff().max(f64::MIN_POSITIVE);
        diag.dual_route_difference = g.distance(&g_alt.project_mean_out())? / gs;
        Ok((g, diag))
    }

    /// `∂_z̃φ(·,0)` from the integral representation, without differentiating
    /// the interpolant.
    fn trace_dz(&self, sol: &StripSolution, eta: &PeriodicField, psi: &PeriodicField) -> PeriodicField {
        let zg = self.zgrid();
        let len = zg.len();
        let top = zg.top();
        let m = self.grid.m();
        let terms = &sol.terms;
        let mut rhs = vec![C64::new(0.0, 0.0); m];
        let mut src = vec![C64::new(0.0, 0.0); len];
        let mut h = vec![C64::new(0.0, 0.0); len];
        for slot in 0..m {
            let n = self.grid.mode_of(slot).unsigned_abs() as usize;
            let nf = n as f64;
            for i in 0..len {
                src[i] = nf * nf * terms[i].g2[slot] + terms[i].g0[slot];
                h[i] = terms[i].g1[slot];
            }
            let t = if n == 0 { 0.0 } else { nf * nf.tanh() };
            rhs[slot] = t * psi.coeffs()[slot] - t * terms[top].g2[slot] - ds_kernel(nf, 0.0) * h[0] + self.ops.c_integral(n, &src) + h[top]
                - self.ops.dc_integral(n, &h);
        }
        // rhs = (1+η′²)∂_z̃φ(0) + 2η′²ψ; the η′²ψ part is removed on the padded grid
        let grid = &self.grid;
        let ep = grid.pad_samples(&deriv_coeffs(grid, eta.coeffs(), 1));
        let ps = grid.pad_samples(psi.coeffs());
        let r = grid.pad_samples(&rhs);
        let dz: Vec<C64> = r.iter().zip(&ep).zip(&ps).map(|((&r, &p), &s)| (r - 2.0 * p * p * s) / (1.0 + p * p)).collect();
        let flags = sol.phi.flags().with_mean(MeanConvention::Free);
        PeriodicField::from_coeffs_enforced(grid, grid.unpad_coeffs(dz), flags)
    }
}

/// `(1+η′²)∂_z̃φ/(1+η) − η′∂_xψ`, returned with its mean removed along with
/// the magnitude of the removed mean.
fn surface_flux(eta: &PeriodicField, psi: &PeriodicField, dz: &PeriodicField) -> Result<(PeriodicField, f64)> {
    let grid = eta.grid();
    let e = grid.pad_samples(eta.coeffs());
    let ep = grid.pad_samples(&deriv_coeffs(grid, eta.coeffs(), 1));
    let px = grid.pad_samples(&deriv_coeffs(grid, psi.coeffs(), 1));
    let d = grid.pad_samples(dz.coeffs());
    let vals: Vec<C64> = (0..e.len()).map(|k| (1.0 + ep[k] * ep[k]) * d[k] / (1.0 + e[k]) - ep[k] * px[k]).collect();
    let coeffs = grid.unpad_coeffs(vals);
    let mean = coeffs[0].norm();
    let flags = Flags::new(eta.flags().is_real && psi.flags().is_real, eta.flags().is_even && psi.flags().is_even, MeanConvention::ZeroMean);
    Ok((PeriodicField::from_coeffs_enforced(grid, coeffs, flags), mean))
}

fn pde_residual(phi: &StripField, terms: &[GTerms]) -> f64 {
    let zg = phi.zgrid();
    let d = zg.diff_matrix();
    let len = zg.len();
    let m = phi.grid.m();
    let apply = |rows: &dyn Fn(usize) -> Vec<C64>| -> Vec<Vec<C64>> {
        let src: Vec<Vec<C64>> = (0..len).map(rows).collect();
        (0..len)
            .map(|i| {
                let mut o = vec![C64::new(0.0, 0.0); m];
                for k in 0..len {
                    if d[i][k] != 0.0 {
                        o.iter_mut().zip(&src[k]).for_each(|(a, b)| *a += d[i][k] * b);
                    }
                }
                o
            })
            .collect()
    };
    let dphi = apply(&|i| phi.rows[i].clone());
    let ddphi = apply(&|i| dphi[i].clone());
    let df2 = apply(&|i| terms[i].g2.clone());
    let ddf2 = apply(&|i| df2[i].clone());
    let dh = apply(&|i| terms[i].g1.clone());
    let mut worst: f64 = 0.0;
    // interior nodes only: the boundary rows carry the boundary conditions
    for i in 1..len - 1 {
        for slot in 0..m {
            let n = phi.grid.mode_of(slot) as f64;
            let lhs = ddphi[i][slot] - n * n * phi.rows[i][slot];
            let rhs = ddf2[i][slot] + dh[i][slot] + terms[i].g0[slot];
            worst = worst.max((lhs - rhs).norm());
        }
    }
    worst
}

/// One-shot strip solve.
pub fn solve_strip(eta: &PeriodicField, psi: &PeriodicField, cfg: &DnoConfig) -> Result<StripSolution> {
    DnSolver::new(eta.grid(), cfg)?.solve_strip(eta, psi)
}

/// One-shot `G(η)ψ`.
pub fn dirichlet_neumann(eta: &PeriodicField, psi: &PeriodicField, cfg: &DnoConfig) -> Result<(PeriodicField, DnDiagnostics)> {
    DnSolver::new(eta.grid(), cfg)?.dirichlet_neumann(eta, psi)
}

/// `B`, `V` and the good unknown `ω` together with `G(η)ψ`.
#[derive(Clone, Debug)]
pub struct GoodUnknown {
    pub g: PeriodicField,
    pub b: PeriodicField,
    pub v: PeriodicField,
    pub omega: PeriodicField,
}

/// `B = (G(η)ψ + η′∂_xψ)/(1+η′²)`, `V = ∂_xψ − η′B`, `ω = ψ − Op^{BW}(B)η`.
pub fn good_unknown_from(eta: &PeriodicField, psi: &PeriodicField, g: &PeriodicField, cutoff: &CutoffProfile) -> Result<GoodUnknown> {
    let ep = eta.derivative(1);
    let px = psi.derivative(1);
    let inv = ep.map_real(|v| 1.0 / (1.0 + v * v));
    let num = g.add(&ep.product(&px)?)?;
    let real = eta.flags().is_real && psi.flags().is_real;
    let even = eta.flags().is_even && psi.flags().is_even;
    let b = PeriodicField::from_coeffs_enforced(eta.grid(), num.product(&inv)?.into_coeffs(), Flags::new(real, even, MeanConvention::Free));
    let v = PeriodicField::from_coeffs_enforced(eta.grid(), px.sub(&ep.product(&b)?)?.into_coeffs(), Flags::new(real, false, MeanConvention::Free));
    let para = op_bw_apply(&Symbol::function(&b)?, eta, cutoff)?;
    let omega = PeriodicField::from_coeffs_enforced(eta.grid(), psi.sub(&para)?.into_coeffs(), Flags::new(real, even, psi.flags().mean));
    Ok(GoodUnknown { g: g.clone(), b, v, omega })
}

pub fn good_unknown_fields(eta: &PeriodicField, psi: &PeriodicField, cfg: &DnoConfig) -> Result<GoodUnknown> {
    let (g, _) = dirichlet_neumann(eta, psi, cfg)?;
    good_unknown_from(eta, psi, &g, &CutoffProfile::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> SpectralGrid {
        SpectralGrid::new(m).unwrap()
    }

    fn cfg(j: usize) -> DnoConfig {
        DnoConfig { j, ..Default::default() }
    }

    fn psi_of(g: &SpectralGrid, f: impl Fn(f64) -> f64) -> PeriodicField {
        PeriodicField::from_fn(g, f, Flags::real_even().with_mean(MeanConvention::ModConstants)).unwrap()
    }

    fn eta_of(g: &SpectralGrid, f: impl Fn(f64) -> f64, even: bool) -> PeriodicField {
        PeriodicField::from_fn(g, f, Flags::new(true, even, MeanConvention::Free)).unwrap()
    }

    #[test]
    fn flat_extension_values() {
        let g = grid(16);
        let zg = ZGrid::chebyshev(16).unwrap();
        let psi = psi_of(&g, |x| x.cos());
        let phi = harmonic_extension_flat(&psi, &zg);
        assert!((phi.row(zg.top()).mode(1).re - 0.5).abs() < 1e-15);
        assert!((phi.row(0).mode(1).re - 0.5 / 1f64.cosh()).abs() < 1e-15);
        assert!(phi.dz_row(0).max_abs_coeff() < 1e-12);
    }

    #[test]
    fn poisson_kernel_of_zero_is_zero() {
        let g = grid(16);
        let zg = ZGrid::chebyshev(16).unwrap();
        let f = StripField::zeros(&g, &zg, Flags::real());
        assert_eq!(poisson_kernel_apply(&f, 32).max_abs(), 0.0);
    }

    #[test]
    fn g_coefficients_spot_check() {
        let g = grid(32);
        let eps = 0.1;
        let eta = eta_of(&g, |x| eps * x.cos(), true);
        let gc = build_g_coefficients(&eta).unwrap();
        let phi = psi_of(&g, |x| (2.0 * x).cos());
        let z = -0.4;
        let (g2, g1, g0) = gc.apply_field(&phi, z);
        let x = g.x(3);
        let (h, hp, hpp) = (eps * x.cos(), -eps * x.sin(), -eps * x.cos());
        let (p, px, pxx) = ((2.0 * x).cos(), -2.0 * (2.0 * x).sin(), -4.0 * (2.0 * x).cos());
        let w = 1.0 + z;
        let e2 = -w * w * hp * hp * p;
        let e1 = 2.0 * w * hp * (1.0 + h) * px + w * (2.0 * hp * hp + hpp * (1.0 + h)) * p;
        let e0 = -(2.0 * h + h * h) * pxx - 2.0 * hp * (1.0 + h) * px - hpp * (1.0 + h) * p;
        assert!((g2.real_samples()[3] - e2).abs() < 1e-14);
        assert!((g1.real_samples()[3] - e1).abs() < 1e-14);
        assert!((g0.real_samples()[3] - e0).abs() < 1e-14);
        let (b2, _, _) = gc.apply_field(&phi, -1.0);
        assert_eq!(b2.max_abs_coeff(), 0.0);
        let zero = build_g_coefficients(&PeriodicField::zeros(&g, Flags::real())).unwrap();
        assert!(zero.is_zero());
    }

    #[test]
    fn large_amplitude_is_rejected() {
        let g = grid(32);
        let eta = eta_of(&g, |x| 0.6 * x.cos(), true);
        assert!(matches!(build_g_coefficients(&eta), Err(Error::AmplitudeTooLarge { .. })));
    }

    #[test]
    fn flat_surface_needs_no_iterations() {
        let g = grid(64);
        let s = DnSolver::new(&g, &cfg(32)).unwrap();
        let eta = PeriodicField::zeros(&g, Flags::real_even().with_mean(MeanConvention::ZeroMean));
        let (out, d) = s.dirichlet_neumann(&eta, &psi_of(&g, |x| (2.0 * x).cos())).unwrap();
        assert_eq!(d.iterations, 0);
        assert!((out.mode(2).re / 0.5 - 2.0 * 2f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn constant_elevation_deepens_the_strip() {
        let g = grid(64);
        let s = DnSolver::new(&g, &cfg(32)).unwrap();
        let eta = eta_of(&g, |_| 0.1, true);
        let (out, d) = s.dirichlet_neumann(&eta, &psi_of(&g, |x| x.cos())).unwrap();
        assert!((out.mode(1).re / 0.5 - 1.1f64.tanh()).abs() < 1e-10);
        assert!(d.contraction_ratio < 0.9);
        assert!(d.fixed_point_residual < 10.0 * s.config().tol);
    }

    #[test]
    fn small_cosine_converges_quickly() {
        let g = grid(64);
        let s = DnSolver::new(&g, &cfg(32)).unwrap();
        let eta = eta_of(&g, |x| 0.01 * x.cos(), true);
        let sol = s.solve_strip(&eta, &psi_of(&g, |x| x.cos())).unwrap();
        let d = &sol.diagnostics;
        assert!(d.iterations < 10, "{} iterations", d.iterations);
        assert!(d.top_trace_error < 1e-12 && d.bottom_trace_error < 1e-10);
        assert!(d.dual_route_difference.is_finite());
    }

    #[test]
    fn linear_self_adjoint_and_parity_preserving() {
        let g = grid(64);
        let s = DnSolver::new(&g, &cfg(32)).unwrap();
        let eta = eta_of(&g, |x| 0.05 * x.cos() - 0.03 * (2.0 * x).cos(), true);
        let p1 = psi_of(&g, |x| x.cos() + 0.2 * (3.0 * x).cos());
        let p2 = psi_of(&g, |x| 0.5 * (2.0 * x).cos() - 0.1 * (5.0 * x).cos());
        let (g1, _) = s.dirichlet_neumann(&eta, &p1).unwrap();
        let (g2, _) = s.dirichlet_neumann(&eta, &p2).unwrap();
        let (g12, _) = s.dirichlet_neumann(&eta, &p1.axpy(-2.0, &p2).unwrap()).unwrap();
        assert!(g12.distance(&g1.axpy(-2.0, &g2).unwrap()).unwrap() < 1e-11 * g1.l2().max(1.0));
        let a = p1.inner(&g2).unwrap().re;
        let b = p2.inner(&g1).unwrap().re;
        assert!((a - b).abs() < 1e-8);
        assert!(g1.flags().is_even && g1.check_symmetry().is_even);
        assert!(g1.mean().norm() == 0.0);
    }

    #[test]
    fn good_unknown_reduces_on_flat_surface() {
        let g = grid(32);
        let eta = PeriodicField::zeros(&g, Flags::real_even().with_mean(MeanConvention::ZeroMean));
        let psi = psi_of(&g, |x| (3.0 * x).cos());
        let gu = good_unknown_fields(&eta, &psi, &cfg(16)).unwrap();
        let expect = psi.apply_real_multiplier(|x| x * x.tanh());
        assert!(gu.b.distance(&expect).unwrap() < 1e-12);
        assert!(gu.v.distance(&psi.derivative(1)).unwrap() < 1e-12);
        assert!(gu.omega.distance(&psi).unwrap() < 1e-14);
    }

    #[test]
    fn good_unknown_identity_and_odd_velocity() {
        let g = grid(64);
        let eta = eta_of(&g, |x| 0.04 * x.cos(), true);
        let psi = psi_of(&g, |x| x.cos() + 0.1 * (2.0 * x).cos());
        let gu = good_unknown_fields(&eta, &psi, &cfg(32)).unwrap();
        let ep = eta.derivative(1);
        let rebuilt = ep.map_real(|v| 1.0 + v * v).product(&gu.b).unwrap().sub(&ep.product(&psi.derivative(1)).unwrap()).unwrap();
        assert!(rebuilt.distance(&gu.g).unwrap() < 1e-10);
        let v = gu.v.check_symmetry();
        assert!(v.is_real);
        assert!(gu.v.add(&gu.v.reflect()).unwrap().linf() < 1e-12);
    }
}
