//! Time evolution of the capillarity–gravity system
//!
//! `∂_tη = G(η)ψ`,
//! `∂_tψ = −gη + κH(η) − ½(∂_xψ)² + ½(η′∂_xψ + G(η)ψ)²/(1+η′²)`
//!
//! with `H(η) = ∂_x[η′(1+η′²)^{-1/2}]`, plus structural checks and the
//! complex coordinates `u = Λ_κ(D)ω + iΛ_κ(D)^{-1}η`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dispersion::{lambda_kappa, m_kappa, PhysParams};
use crate::dno::{good_unknown_from, DnSolver, DnoConfig, MAX_ETA};
use crate::error::{Error, Result};
use crate::grid::{Flags, MeanConvention, MultiplierSymmetry, PeriodicField, SpectralGrid};
use crate::symbols::CutoffProfile;

/// Default CFL safety factor against the fastest linear frequency.
pub const CFL_SAFETY: f64 = 0.5;

fn eta_flags() -> Flags {
    Flags::real_even().with_mean(MeanConvention::ZeroMean)
}

fn psi_flags() -> Flags {
    Flags::real_even().with_mean(MeanConvention::ModConstants)
}

#[derive(Clone, Debug)]
pub struct WaveState {
    pub eta: PeriodicField,
    pub psi: PeriodicField,
    pub t: f64,
    pub params: PhysParams,
}

impl WaveState {
    /// Validates the data and stamps the structural flags on it.
    pub fn new(eta: PeriodicField, psi: PeriodicField, params: PhysParams) -> Result<Self> {
        let eta = eta.with_flags(eta_flags())?;
        let psi = psi.with_flags(psi_flags())?;
        if eta.grid() != psi.grid() {
            return Err(Error::GridMismatch { left: eta.grid().m(), right: psi.grid().m() });
        }
        let sup = eta.linf();
        if sup >= MAX_ETA {
            return Err(Error::AmplitudeTooLarge { sup, bound: MAX_ETA });
        }
        Ok(Self { eta, psi, t: 0.0, params })
    }

    pub fn zeros(grid: &SpectralGrid, params: PhysParams) -> Self {
        Self { eta: PeriodicField::zeros(grid, eta_flags()), psi: PeriodicField::zeros(grid, psi_flags()), t: 0.0, params }
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.eta.grid()
    }

    /// The reversibility involution `S(η, ψ) = (η, −ψ)`.
    pub fn involution(&self) -> Self {
        Self { psi: self.psi.scale_real(-1.0), ..self.clone() }
    }

    /// `(‖η‖²_{Ḣ^{s+1/4}} + ‖ψ‖²_{Ḣ^{s−1/4}})^{1/2}`.
    pub fn hs_norm(&self, s: f64) -> f64 {
        let a = self.eta.sobolev_norm(s + 0.25).unwrap_or(f64::NAN);
        let b = self.psi.sobolev_norm(s - 0.25).unwrap_or(f64::NAN);
        (a * a + b * b).sqrt()
    }

    /// Distance in the same norm, used by reversibility checks.
    pub fn distance_hs(&self, other: &Self, s: f64) -> Result<f64> {
        let d = Self { eta: self.eta.sub(&other.eta)?, psi: self.psi.sub(&other.psi)?.with_flags(psi_flags())?, ..self.clone() };
        Ok(d.hs_norm(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub dealias: bool,
    pub resym: bool,
    /// Steps between recorded observables.
    pub cadence: usize,
    /// Sobolev index of the recorded norm.
    pub s: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: 1e-3, scheme: Scheme::Rk4, dealias: true, resym: true, cadence: 10, s: 1.0 }
    }
}

/// `CFL_SAFETY·(M/2)^{−3/2}/√κ`.
pub fn cfl_limit(m: usize, params: &PhysParams) -> f64 {
    CFL_SAFETY * ((m / 2) as f64).powf(-1.5) / params.kappa.sqrt()
}

/// `H(η) = ∂_x[η′(1+η′²)^{-1/2}]`.
pub fn curvature(eta: &PeriodicField) -> PeriodicField {
    eta.derivative(1).map_real(|p| p / (1.0 + p * p).sqrt()).derivative(1)
}

/// Time derivative together with the mean of `G(η)ψ` removed before projection.
#[derive(Clone, Debug)]
pub struct Rhs {
    pub eta_dot: PeriodicField,
    pub psi_dot: PeriodicField,
    /// `∫G(η)ψ dx` before projection.
    pub mass_rate: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Observables {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub hs_norm: f64,
    pub linf_eta: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<WaveState>,
    pub observables: Vec<Observables>,
    /// `Σ dt |∫G(η)ψ dx|` before projection, over all stages.
    pub mass_drift: f64,
    pub steps: usize,
    /// Set when the run stopped before the final time.
    pub stopped: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &WaveState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// `t,mass,energy,Hs_norm,Linf_eta`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "mass", "energy", "Hs_norm", "Linf_eta"])?;
        for o in &self.observables {
            wr.write_record([o.t, o.mass, o.energy, o.hs_norm, o.linf_eta].iter().map(|v| format!("{v:.15e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// The system with its Dirichlet–Neumann solver.
#[derive(Clone)]
pub struct WaterWaves {
    solver: DnSolver,
    params: PhysParams,
}

impl WaterWaves {
    pub fn new(grid: &SpectralGrid, params: PhysParams, cfg: &DnoConfig) -> Result<Self> {
        Ok(Self { solver: DnSolver::new(grid, cfg)?, params })
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn solver(&self) -> &DnSolver {
        &self.solver
    }

    pub fn rhs(&self, eta: &PeriodicField, psi: &PeriodicField) -> Result<Rhs> {
        let (g, diag) = self.solver.dirichlet_neumann(eta, psi)?;
        let scale = psi.max_abs_coeff();
        let mass_rate = 2.0 * PI * diag.mean_before_projection * scale;
        let ep = eta.derivative(1);
        let px = psi.derivative(1);
        let q = ep.map_real(|v| 1.0 / (1.0 + v * v));
        let num = ep.product(&px)?.add(&g)?;
        let psi_dot = eta
            .scale_real(-self.params.g)
            .add(&curvature(eta).scale_real(self.params.kappa))?
            .sub(&px.product(&px)?.scale_real(0.5))?
            .add(&PeriodicField::product_many(&[&num, &num, &q])?.scale_real(0.5))?;
        let psi_dot = PeriodicField::from_coeffs_enforced(eta.grid(), psi_dot.into_coeffs(), psi_flags());
        let eta_dot = PeriodicField::from_coeffs_enforced(eta.grid(), g.into_coeffs(), eta_flags());
        Ok(Rhs { eta_dot, psi_dot, mass_rate })
    }

    /// One RK4 step; returns the new state and `Σ|mass rate|·dt` over stages.
    pub fn step(&self, s: &WaveState, dt: f64) -> Result<(WaveState, f64)> {
        let shift = |f: &PeriodicField, h: f64, k: &PeriodicField| f.axpy(h, k);
        let k1 = self.rhs(&s.eta, &s.psi)?;
        let k2 = self.rhs(&shift(&s.eta, 0.5 * dt, &k1.eta_dot)?, &shift(&s.psi, 0.5 * dt, &k1.psi_dot)?)?;
        let k3 = self.rhs(&shift(&s.eta, 0.5 * dt, &k2.eta_dot)?, &shift(&s.psi, 0.5 * dt, &k2.psi_dot)?)?;
        let k4 = self.rhs(&shift(&s.eta, dt, &k3.eta_dot)?, &shift(&s.psi, dt, &k3.psi_dot)?)?;
        let combine =
            |a: &PeriodicField, b: &PeriodicField, c: &PeriodicField, d: &PeriodicField| -> Result<PeriodicField> { a.axpy(2.0, b)?.axpy(2.0, c)?.add(d) };
        let eta = s.eta.axpy(dt / 6.0, &combine(&k1.eta_dot, &k2.eta_dot, &k3.eta_dot, &k4.eta_dot)?)?;
        let psi = s.psi.axpy(dt / 6.0, &combine(&k1.psi_dot, &k2.psi_dot, &k3.psi_dot, &k4.psi_dot)?)?;
        let drift = dt / 6.0 * (k1.mass_rate + 2.0 * k2.mass_rate + 2.0 * k3.mass_rate + k4.mass_rate);
        let eta = PeriodicField::from_coeffs_enforced(s.grid(), eta.into_coeffs(), eta_flags());
        let psi = PeriodicField::from_coeffs_enforced(s.grid(), psi.into_coeffs(), psi_flags());
        Ok((WaveState { eta, psi, t: s.t + dt, params: s.params }, drift))
    }

    /// `½⟨ψ, G(η)ψ⟩ + (g/2)∫η² + κ∫(√(1+η′²) − 1)`.
    pub fn energy(&self, s: &WaveState) -> Result<f64> {
        let (g, _) = self.solver.dirichlet_neumann(&s.eta, &s.psi)?;
        let kinetic = 0.5 * s.psi.inner(&g)?.re;
        let potential = 0.5 * self.params.g * s.eta.inner(&s.eta)?.re;
        let surface = self.params.kappa * 2.0 * PI * s.eta.derivative(1).map_real(|p| (1.0 + p * p).sqrt() - 1.0).mean().re;
        Ok(kinetic + potential + surface)
    }

    pub fn observables(&self, s: &WaveState, sobolev: f64) -> Result<Observables> {
        Ok(Observables { t: s.t, mass: 2.0 * PI * s.eta.mean().re, energy: self.energy(s)?, hs_norm: s.hs_norm(sobolev), linf_eta: s.eta.linf() })
    }

    /// RK4 from `state.t` to `t_final`; a negative `t_final − t` integrates
    /// backwards with `−|dt|`.
    pub fn evolve(&self, state: &WaveState, t_final: f64, icfg: &IntegratorConfig) -> Result<Trajectory> {
        if !(icfg.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", icfg.dt)));
        }
        let limit = cfl_limit(state.grid().m(), &self.params);
        if icfg.dt > limit {
            return Err(Error::CflViolation { dt: icfg.dt, limit });
        }
        let span = t_final - state.t;
        let steps = (span.abs() / icfg.dt).round().max(if span == 0.0 { 0.0 } else { 1.0 }) as usize;
        let dt = if steps == 0 { 0.0 } else { span / steps as f64 };
        let cadence = icfg.cadence.max(1);
        let mut traj =
            Trajectory { states: vec![state.clone()], observables: vec![self.observables(state, icfg.s)?], mass_drift: 0.0, steps: 0, stopped: None };
        let mut cur = state.clone();
        for k in 1..=steps {
            match self.step(&cur, dt) {
                Ok((next, drift)) => {
                    traj.mass_drift += drift.abs();
                    cur = next;
                }
                Err(e) => {
                    traj.stopped = Some(format!("step {k}: {e}"));
                    break;
                }
            }
            traj.steps = k;
            let sup = cur.eta.linf();
            if sup >= MAX_ETA {
                traj.stopped = Some(format!("step {k}: sup|eta| = {sup:.4} reached {MAX_ETA}"));
                break;
            }
            if k % cadence == 0 || k == steps {
                traj.observables.push(self.observables(&cur, icfg.s)?);
                traj.states.push(cur.clone());
            }
        }
        Ok(traj)
    }
}

/// One-shot right-hand side.
pub fn rhs(state: &WaveState, cfg: &DnoConfig) -> Result<(PeriodicField, PeriodicField)> {
    let ww = WaterWaves::new(state.grid(), state.params, cfg)?;
    let r = ww.rhs(&state.eta, &state.psi)?;
    Ok((r.eta_dot, r.psi_dot))
}

/// One-shot evolution.
pub fn evolve(state: &WaveState, t_final: f64, icfg: &IntegratorConfig, cfg: &DnoConfig) -> Result<Trajectory> {
    WaterWaves::new(state.grid(), state.params, cfg)?.evolve(state, t_final, icfg)
}

/// `max(‖F₁(η,−ψ) + F₁(η,ψ)‖, ‖F₂(η,−ψ) − F₂(η,ψ)‖)` in coefficient sup norm.
pub fn vector_field_reversibility(ww: &WaterWaves, state: &WaveState) -> Result<f64> {
    let a = ww.rhs(&state.eta, &state.psi)?;
    let b = ww.rhs(&state.eta, &state.psi.scale_real(-1.0))?;
    Ok(b.eta_dot.add(&a.eta_dot)?.max_abs_coeff().max(b.psi_dot.sub(&a.psi_dot)?.distance(&PeriodicField::zeros(state.grid(), psi_flags()))?))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReversibilityReport {
    pub t: f64,
    pub dt: f64,
    /// `‖Φ^{−T}x₀ − SΦ^T Sx₀‖`
    pub defect: f64,
    /// `‖Φ^{−T}_{dt}x₀ − Φ^{−T}_{dt/2}x₀‖`
    pub self_convergence: f64,
    pub passed: bool,
}

/// Compares `Φ^{−T}(x₀)` with `SΦ^T(Sx₀)` and measures the integrator's own
/// error by halving `dt`.
pub fn reversibility_check(ww: &WaterWaves, state0: &WaveState, t: f64, icfg: &IntegratorConfig) -> Result<ReversibilityReport> {
    let s = icfg.s;
    let back = ww.evolve(state0, state0.t - t, icfg)?;
    let fwd = ww.evolve(&state0.involution(), state0.t + t, icfg)?;
    for tr in [&back, &fwd] {
        if let Some(why) = &tr.stopped {
            return Err(Error::InvalidArgument(format!("reversibility run stopped early: {why}")));
        }
    }
    let a = back.last();
    let b = fwd.last().involution();
    let defect = a.distance_hs(&b, s)?;
    let fine = IntegratorConfig { dt: 0.5 * icfg.dt, ..icfg.clone() };
    let back_fine = ww.evolve(state0, state0.t - t, &fine)?;
    let self_convergence = a.distance_hs(back_fine.last(), s)?;
    // when both sit at roundoff the defect is trivially an integrator artifact
    let floor = 1e-14 * state0.hs_norm(s).max(1e-300);
    let passed = defect <= 10.0 * self_convergence.max(floor);
    Ok(ReversibilityReport { t, dt: icfg.dt, defect, self_convergence, passed })
}

/// Complex variable `u` with its parameters.
#[derive(Clone, Debug)]
pub struct ComplexState {
    pub u: PeriodicField,
    pub params: PhysParams,
}

fn lambda_mult(u: &PeriodicField, params: &PhysParams, inverse: bool) -> PeriodicField {
    let p = *params;
    u.apply_multiplier(
        move |xi| {
            if xi == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let l = lambda_kappa(xi.abs(), &p);
            C64::new(if inverse { 1.0 / l } else { l }, 0.0)
        },
        MultiplierSymmetry::EVEN_REAL,
    )
}

/// `u = Λ_κ(D)ω + iΛ_κ(D)^{-1}η`.
pub fn to_complex(eta: &PeriodicField, omega: &PeriodicField, params: &PhysParams) -> Result<ComplexState> {
    let re = lambda_mult(omega, params, false);
    let im = lambda_mult(eta, params, true);
    let u = re.add(&im.scale_complex(C64::new(0.0, 1.0)))?;
    let even = eta.flags().is_even && omega.flags().is_even;
    let u = PeriodicField::from_coeffs_enforced(eta.grid(), u.into_coeffs(), Flags::new(false, even, MeanConvention::ZeroMean));
    Ok(ComplexState { u, params: *params })
}

/// `η = Λ_κ(D)[(u−ū)/2i]`, `ω = Λ_κ(D)^{-1}[(u+ū)/2]`.
pub fn from_complex(c: &ComplexState) -> Result<(PeriodicField, PeriodicField)> {
    let (re, im) = c.u.re_im();
    let eta = PeriodicField::from_coeffs_enforced(c.u.grid(), lambda_mult(&im, &c.params, false).into_coeffs(), eta_flags());
    let omega = PeriodicField::from_coeffs_enforced(c.u.grid(), lambda_mult(&re, &c.params, true).into_coeffs(), psi_flags());
    Ok((eta, omega))
}

/// Complex coordinates of a physical state, through the good unknown.
pub fn complex_coordinates(ww: &WaterWaves, state: &WaveState) -> Result<ComplexState> {
    let (g, _) = ww.solver.dirichlet_neumann(&state.eta, &state.psi)?;
    let gu = good_unknown_from(&state.eta, &state.psi, &g, &CutoffProfile::default())?;
    to_complex(&state.eta, &gu.omega, &state.params)
}

/// `‖u‖_{Ḣ^s}/(‖η‖_{H^{s+1/4}} + ‖ω‖_{Ḣ^{s−1/4}})`.
pub fn norm_ratio(eta: &PeriodicField, omega: &PeriodicField, params: &PhysParams, s: f64) -> Result<f64> {
    let u = to_complex(eta, omega, params)?;
    let den = eta.sobolev_norm_inhom(s + 0.25) + omega.sobolev_norm(s - 0.25)?;
    Ok(u.u.sobolev_norm(s)? / den)
}

/// Empirical angular frequency of a small single-mode oscillation.
///
/// The state starts at `η = ε cos(nx)`, `ψ = 0`; the phase of
/// `η̂_n + i ψ̂_n n tanh n/m_κ(n)` is unwrapped over `periods` linear periods.
pub fn linear_frequency(ww: &WaterWaves, n: i64, eps: f64, periods: f64, icfg: &IntegratorConfig) -> Result<f64> {
    let grid = ww.solver.grid().clone();
    let eta = PeriodicField::from_fn(&grid, |x| eps * (n as f64 * x).cos(), eta_flags())?;
    let s0 = WaveState::new(eta, PeriodicField::zeros(&grid, psi_flags()), ww.params)?;
    let nf = n as f64;
    let m = m_kappa(nf, &ww.params, false);
    let t_final = periods * 2.0 * PI / m;
    let cfg = IntegratorConfig { cadence: 1, ..icfg.clone() };
    let traj = ww.evolve(&s0, t_final, &cfg)?;
    if let Some(why) = traj.stopped {
        return Err(Error::InvalidArgument(why));
    }
    let factor = nf * nf.tanh() / m;
    let mut phase = 0.0;
    let mut last = 0.0;
    for st in &traj.states {
        let z = C64::new(st.eta.mode(n).re, st.psi.mode(n).re * factor);
        let a = z.arg();
        let mut d = a - last;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        phase += d;
        last = a;
    }
    Ok(-phase / traj.last().t)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LifetimeRow {
    pub eps: f64,
    pub kappa: f64,
    /// First time the norm doubles; `None` when censored at `t_max`.
    pub t_double: Option<f64>,
    pub t_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LifetimeTable {
    pub rows: Vec<LifetimeRow>,
    /// Least-squares slope of `log T_double` against `log ε` over uncensored
    /// rows, with its standard error.
    pub slope: Option<(f64, f64)>,
}

/// Least-squares slope and its standard error.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let resid: f64 = pts.iter().map(|p| (p.1 - my - b * (p.0 - mx)).powi(2)).sum();
    let se = if pts.len() > 2 { (resid / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Some((b, se))
}

/// Doubling times of `‖(η,ψ)(t)‖` for data `ε·(η₁, ψ₁)`.
pub fn lifetime_experiment(
    ww: &WaterWaves,
    eps_list: &[f64],
    eta1: &PeriodicField,
    psi1: &PeriodicField,
    t_max: f64,
    icfg: &IntegratorConfig,
) -> Result<LifetimeTable> {
    let mut rows = Vec::new();
    for &eps in eps_list {
        let s0 = WaveState::new(eta1.scale_real(eps), psi1.scale_real(eps), ww.params)?;
        let n0 = s0.hs_norm(icfg.s);
        let steps = (t_max / icfg.dt).ceil() as usize;
        let mut cur = s0;
        let mut t_double = None;
        for _ in 0..steps {
            match ww.step(&cur, icfg.dt) {
                Ok((next, _)) => cur = next,
                Err(_) => {
                    t_double = Some(cur.t);
                    break;
                }
            }
            if cur.hs_norm(icfg.s) > 2.0 * n0 || cur.eta.linf() >= MAX_ETA {
                t_double = Some(cur.t);
                break;
            }
        }
        rows.push(LifetimeRow { eps, kappa: ww.params.kappa, t_double, t_max });
    }
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.t_double.map(|t| (r.eps, t))).collect();
    Ok(LifetimeTable { slope: loglog_slope(&pts), rows })
}
