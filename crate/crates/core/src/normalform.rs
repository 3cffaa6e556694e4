//! Birkhoff normal form for the scalar model
//!
//! `∂_t u = i m_κ(D)u + i a Π_{N_c}(u^ℓ ū^{p−ℓ})`
//!
//! on zero-mean functions with modes `1 ≤ |k| ≤ N_c`, together with the
//! flattening profile `(ζ̄, γ)` of a strip coefficient.
//!
//! Conventions. `Π_{N_c}` keeps the modes `1 ≤ |k| ≤ N_c` and drops the mean.
//! The map is `Q(u)_K = Σ M(|k₁|,…,|k_p|; |K|) Π_j w_j(k_j)` over signed modes
//! with `k₁+…+k_p = K`, where `w_j = u` for `j ≤ ℓ` and `w_j = ū` otherwise.
//! In this exponential basis the homological equation reads `D·M + a = 0`
//! with no extra factor. Against the cosine basis `φ_n = cos(nx)/√π` the same
//! table is contracted with [`cosine_projection_factor`].

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{is_resonant_tuple, m_kappa, small_divisor, DivisorTuple, PhysParams};
use crate::dynamics::{loglog_slope, IntegratorConfig, CFL_SAFETY};
use crate::error::{Error, Result};
use crate::grid::{Flags, MeanConvention, PeriodicField, SpectralGrid};

/// Divisors below this are refused.
pub const NEAR_RESONANCE: f64 = 1e-8;

const INVERSE_TOL: f64 = 1e-12;
const INVERSE_MAX_ITER: usize = 500;
const CUTOFF_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kappa: f64,
    pub p: usize,
    pub ell: usize,
    pub a: f64,
    pub n_c: usize,
}

impl ModelSpec {
    pub fn new(kappa: f64, p: usize, ell: usize, a: f64, n_c: usize) -> Result<Self> {
        let s = Self { kappa, p, ell, a, n_c };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        PhysParams::unit(self.kappa)?;
        if self.p < 2 {
            return Err(Error::InvalidArgument(format!("homogeneity p must be >= 2, got {}", self.p)));
        }
        if self.ell > self.p {
            return Err(Error::InvalidArgument(format!("ell = {} outside [0, {}]", self.ell, self.p)));
        }
        if !self.a.is_finite() {
            return Err(Error::InvalidArgument(format!("coefficient must be finite, got {}", self.a)));
        }
        if self.n_c == 0 {
            return Err(Error::InvalidArgument("cutoff must be positive".into()));
        }
        Ok(())
    }

    /// `g = 1` parameters.
    pub fn params(&self) -> PhysParams {
        PhysParams { g: 1.0, kappa: self.kappa }
    }

    /// `m_κ(n)` for `n = 0..=N_c`.
    pub fn frequencies(&self) -> Vec<f64> {
        let params = self.params();
        (0..=self.n_c).map(|n| m_kappa(n as f64, &params, false)).collect()
    }

    /// `CFL_SAFETY / m_κ(N_c)`.
    pub fn cfl_limit(&self) -> f64 {
        CFL_SAFETY / m_kappa(self.n_c as f64, &self.params(), false)
    }

    fn resonant(&self, tuple: &[usize]) -> bool {
        let l = self.ell;
        if self.p % 2 == 0 || 2 * l != self.p + 1 {
            return false;
        }
        let mut a: Vec<usize> = tuple[..l].to_vec();
        let mut b: Vec<usize> = tuple[l..].to_vec();
        a.sort_unstable();
        b.sort_unstable();
        a == b
    }
}

// Coefficient vectors over `−N_c..=N_c`, stored at `k + N_c`.

fn modes_of(u: &PeriodicField, n_c: usize) -> Result<Vec<C64>> {
    let nyq = u.grid().nyquist();
    if nyq <= n_c as i64 {
        return Err(Error::Resolution(format!("grid Nyquist {nyq} must exceed the cutoff {n_c}")));
    }
    let scale = u.max_abs_coeff();
    let outside = (-nyq..=nyq).filter(|k| *k == 0 || k.unsigned_abs() as usize > n_c).map(|k| u.mode(k).norm()).fold(0.0, f64::max);
    if outside > CUTOFF_TOL * scale {
        return Err(Error::InvalidArgument(format!("data has weight {outside:.3e} outside modes 1..={n_c}")));
    }
    let n = n_c as i64;
    Ok((-n..=n).map(|k| if k == 0 { C64::new(0.0, 0.0) } else { u.mode(k) }).collect())
}

fn field_of(grid: &SpectralGrid, c: &[C64]) -> PeriodicField {
    let n = (c.len() / 2) as i64;
    let mut coeffs = vec![C64::new(0.0, 0.0); grid.m()];
    for k in -n..=n {
        coeffs[grid.index(k)] = c[(k + n) as usize];
    }
    PeriodicField::from_coeffs_enforced(grid, coeffs, Flags::free().with_mean(MeanConvention::ZeroMean))
}

fn bar(c: &[C64]) -> Vec<C64> {
    c.iter().rev().map(|z| z.conj()).collect()
}

fn hs_norm_modes(c: &[C64], s: f64) -> f64 {
    let n = (c.len() / 2) as i64;
    let acc: f64 = (-n..=n).filter(|k| *k != 0).map(|k| (k.unsigned_abs() as f64).powf(2.0 * s) * c[(k + n) as usize].norm_sqr()).sum();
    (2.0 * PI * acc).sqrt()
}

/// `2π Σ |k|^{2s} x_k conj(y_k)`
fn hs_inner_modes(x: &[C64], y: &[C64], s: f64) -> C64 {
    let n = (x.len() / 2) as i64;
    let acc: C64 = (-n..=n).filter(|k| *k != 0).map(|k| (k.unsigned_abs() as f64).powf(2.0 * s) * x[(k + n) as usize] * y[(k + n) as usize].conj()).sum();
    2.0 * PI * acc
}

fn axpy(x: &[C64], h: f64, y: &[C64]) -> Vec<C64> {
    x.iter().zip(y).map(|(a, b)| a + h * b).collect()
}

/// `out_K = Σ weight(|k₁|..|k_p|; |K|) Π args_j(k_j)` over signed modes in the
/// cutoff with `Σ k_j = K`, `1 ≤ |K| ≤ N_c`.
fn convolve(n_c: usize, args: &[&[C64]], weight: &(dyn Fn(&[usize], usize) -> C64 + Sync)) -> Vec<C64> {
    #[allow(clippy::too_many_arguments)]
    fn rec(j: usize, ksum: i64, prod: C64, n: i64, args: &[&[C64]], mags: &mut [usize], out: &mut [C64], weight: &(dyn Fn(&[usize], usize) -> C64 + Sync)) {
        if j == args.len() {
            let big_k = ksum.unsigned_abs() as usize;
            if big_k >= 1 && big_k <= n as usize {
                out[(ksum + n) as usize] += weight(mags, big_k) * prod;
            }
            return;
        }
        let remaining = (args.len() - j - 1) as i64 * n;
        for k in -n..=n {
            let c = args[j][(k + n) as usize];
            if k == 0 || c == C64::new(0.0, 0.0) {
                continue;
            }
            let s = ksum + k;
            if s.abs() > n + remaining {
                continue;
            }
            mags[j] = k.unsigned_abs() as usize;
            rec(j + 1, s, prod * c, n, args, mags, out, weight);
        }
    }
    let n = n_c as i64;
    let mut out = vec![C64::new(0.0, 0.0); 2 * n_c + 1];
    let mut mags = vec![0usize; args.len()];
    rec(0, 0, C64::new(1.0, 0.0), n, args, &mut mags, &mut out, weight);
    out
}

fn monomial_args<'a>(spec: &ModelSpec, u: &'a [C64], ubar: &'a [C64]) -> Vec<&'a [C64]> {
    (0..spec.p).map(|j| if j < spec.ell { u } else { ubar }).collect()
}

/// Coefficient-space generator `i m u + i a Π(u^ℓ ū^{p−ℓ})`, possibly with a
/// complex `a`. `mask`, indexed like the map table, keeps only the monomials
/// it marks.
fn model_rhs_modes(spec: &ModelSpec, m: &[f64], a: C64, mask: Option<&[bool]>, u: &[C64]) -> Vec<C64> {
    let ub = bar(u);
    let args = monomial_args(spec, u, &ub);
    let n_c = spec.n_c;
    let w = move |mags: &[usize], big_k: usize| match mask {
        Some(mask) => {
            let idx = mags.iter().rev().fold(big_k - 1, |acc, &v| acc * n_c + (v - 1));
            if mask[idx] {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }
        None => C64::new(1.0, 0.0),
    };
    let nl = convolve(n_c, &args, &w);
    let n = n_c as i64;
    (-n..=n)
        .map(|k| {
            let j = (k + n) as usize;
            C64::new(0.0, 1.0) * (m[k.unsigned_abs() as usize] * u[j] + a * nl[j])
        })
        .collect()
}

fn rk4(f: &dyn Fn(&[C64]) -> Vec<C64>, u: &[C64], dt: f64) -> Vec<C64> {
    let k1 = f(u);
    let k2 = f(&axpy(u, 0.5 * dt, &k1));
    let k3 = f(&axpy(u, 0.5 * dt, &k2));
    let k4 = f(&axpy(u, dt, &k3));
    (0..u.len()).map(|j| u[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])).collect()
}

/// `i m_κ(D)u + i a Π_{N_c}(u^ℓ ū^{p−ℓ})`, with the monomial formed pointwise
/// on a grid fine enough that nothing aliases back into the cutoff.
pub fn model_rhs(u: &PeriodicField, spec: &ModelSpec) -> Result<PeriodicField> {
    spec.validate()?;
    let c = modes_of(u, spec.n_c)?;
    let l = ((spec.p + 1) * spec.n_c + 2).next_power_of_two().max(8);
    let fine = SpectralGrid::new(l)?;
    let uf = u.resample(&fine);
    let s = uf.samples();
    let prod: Vec<C64> = s.iter().map(|z| z.powu(spec.ell as u32) * z.conj().powu((spec.p - spec.ell) as u32)).collect();
    let nl = PeriodicField::from_samples(&fine, &prod, Flags::free())?;
    let n = spec.n_c as i64;
    let m = spec.frequencies();
    let out: Vec<C64> = (-n..=n)
        .map(|k| if k == 0 { C64::new(0.0, 0.0) } else { C64::new(0.0, 1.0) * (m[k.unsigned_abs() as usize] * c[(k + n) as usize] + spec.a * nl.mode(k)) })
        .collect();
    Ok(field_of(u.grid(), &out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryFlag {
    Divided,
    ResonantSkipped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NfEntry {
    pub value: C64,
    pub divisor: f64,
    pub flag: EntryFlag,
}

/// Dense table `M(n₁,…,n_p; n_{p+1})`, `1 ≤ n_j ≤ N_c`.
#[derive(Clone, Debug)]
pub struct NFMap {
    spec: ModelSpec,
    entries: Vec<NfEntry>,
    /// Smallest `|D|` over divided entries.
    pub min_divisor: f64,
}

fn tuple_of(idx: usize, n_c: usize, len: usize) -> Vec<usize> {
    let mut r = idx;
    (0..len)
        .map(|_| {
            let v = r % n_c + 1;
            r /= n_c;
            v
        })
        .collect()
}

fn index_of(tuple: &[usize], n_c: usize) -> usize {
    tuple.iter().rev().fold(0, |acc, &v| acc * n_c + (v - 1))
}

fn divisor_tuple(tuple: &[usize], ell: usize) -> DivisorTuple {
    let t: Vec<u32> = tuple.iter().map(|&v| v as u32).collect();
    DivisorTuple::from_blocks(&t[..ell], &t[ell..]).expect("positive entries")
}

/// Divides `−a` by `D = Σ_{j≤ℓ} m(n_j) − Σ_{j>ℓ} m(n_j)` on every tuple except
/// the resonant ones, refusing any divisor below [`NEAR_RESONANCE`].
pub fn build_nf_map(spec: &ModelSpec) -> Result<NFMap> {
    spec.validate()?;
    let params = spec.params();
    let len = spec.p + 1;
    let total = spec
        .n_c
        .checked_pow(len as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or(Error::BudgetExceeded { count: (spec.n_c as u64).saturating_pow(len as u32), limit: 50_000_000 })?;
    let entries: Vec<NfEntry> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let t = divisor_tuple(&tuple_of(idx, spec.n_c, len), spec.ell);
            let d = small_divisor(&t, &params);
            if spec.resonant(&tuple_of(idx, spec.n_c, len)) {
                debug_assert!(is_resonant_tuple(&t));
                NfEntry { value: C64::new(0.0, 0.0), divisor: d, flag: EntryFlag::ResonantSkipped }
            } else {
                NfEntry { value: C64::new(-spec.a / d, 0.0), divisor: d, flag: EntryFlag::Divided }
            }
        })
        .collect();
    let worst = entries.iter().enumerate().filter(|(_, e)| e.flag == EntryFlag::Divided).min_by(|a, b| a.1.divisor.abs().total_cmp(&b.1.divisor.abs()));
    let min_divisor = worst.map(|(_, e)| e.divisor.abs()).unwrap_or(f64::INFINITY);
    if let Some((idx, e)) = worst {
        if e.divisor.abs() < NEAR_RESONANCE {
            let t = divisor_tuple(&tuple_of(idx, spec.n_c, len), spec.ell);
            return Err(Error::NearResonance { kappa: spec.kappa, tuple: t.label(), divisor: e.divisor });
        }
    }
    Ok(NFMap { spec: *spec, entries, min_divisor })
}

impl NFMap {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry at `(n₁,…,n_p, n_{p+1})`.
    pub fn get(&self, tuple: &[usize]) -> Result<&NfEntry> {
        if tuple.len() != self.spec.p + 1 || tuple.iter().any(|&v| v == 0 || v > self.spec.n_c) {
            return Err(Error::InvalidArgument(format!("tuple {tuple:?} outside the table")));
        }
        Ok(&self.entries[index_of(tuple, self.spec.n_c)])
    }

    /// `(tuple, entry)` in table order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, &NfEntry)> + '_ {
        let len = self.spec.p + 1;
        self.entries.iter().enumerate().map(move |(i, e)| (tuple_of(i, self.spec.n_c, len), e))
    }

    fn weight(&self) -> impl Fn(&[usize], usize) -> C64 + Sync + '_ {
        let n_c = self.spec.n_c;
        move |mags: &[usize], big_k: usize| {
            let mut idx = big_k - 1;
            for &v in mags.iter().rev() {
                idx = idx * n_c + (v - 1);
            }
            self.entries[idx].value
        }
    }

    fn q_modes(&self, u: &[C64]) -> Vec<C64> {
        let ub = bar(u);
        let w = self.weight();
        convolve(self.spec.n_c, &monomial_args(&self.spec, u, &ub), &w)
    }

    /// `DQ[u]w`: one slot at a time replaced by `w` (or `w̄` in a conjugate slot).
    fn dq_modes(&self, u: &[C64], dir: &[C64]) -> Vec<C64> {
        let ub = bar(u);
        let db = bar(dir);
        let w = self.weight();
        let mut acc = vec![C64::new(0.0, 0.0); u.len()];
        for j in 0..self.spec.p {
            let mut args = monomial_args(&self.spec, u, &ub);
            args[j] = if j < self.spec.ell { dir } else { &db };
            for (a, b) in acc.iter_mut().zip(convolve(self.spec.n_c, &args, &w)) {
                *a += b;
            }
        }
        acc
    }

    /// `Q(u, ū)`.
    pub fn q(&self, u: &PeriodicField) -> Result<PeriodicField> {
        Ok(field_of(u.grid(), &self.q_modes(&modes_of(u, self.spec.n_c)?)))
    }

    /// `DQ[u]w`.
    pub fn dq(&self, u: &PeriodicField, w: &PeriodicField) -> Result<PeriodicField> {
        let n = self.spec.n_c;
        Ok(field_of(u.grid(), &self.dq_modes(&modes_of(u, n)?, &modes_of(w, n)?)))
    }

    /// The same map contracted against cosine coefficients: for even `u` with
    /// `u = Σ_n c_n φ_n`, returns the `φ_n` coefficients of `Q(u, ū)`,
    /// `n = 1..=N_c`.
    pub fn apply_cosine(&self, c: &[C64]) -> Result<Vec<C64>> {
        let n_c = self.spec.n_c;
        if c.len() != n_c {
            return Err(Error::InvalidArgument(format!("expected {n_c} cosine coefficients, got {}", c.len())));
        }
        let len = self.spec.p + 1;
        let mut out = vec![C64::new(0.0, 0.0); n_c];
        for (idx, e) in self.entries.iter().enumerate() {
            if e.value == C64::new(0.0, 0.0) {
                continue;
            }
            let t = tuple_of(idx, n_c, len);
            let f = cosine_projection_factor(&t);
            if f == 0.0 {
                continue;
            }
            let prod: C64 = t[..self.spec.p].iter().enumerate().map(|(j, &n)| if j < self.spec.ell { c[n - 1] } else { c[n - 1].conj() }).product();
            out[t[self.spec.p] - 1] += e.value * f * prod;
        }
        Ok(out)
    }

    /// `n_tuple,re,im,flag` preceded by a `#` line stating the convention.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# Q(u)_K = sum M(|k_1|..|k_p|;|K|) prod w_j(k_j) over k_1+..+k_p = K in the exponential basis, w_j = u (j <= {}) or conj(u); M = -a/D; p = {}, kappa = {}, a = {}, N_c = {}",
            self.spec.ell, self.spec.p, self.spec.kappa, self.spec.a, self.spec.n_c
        )?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n_tuple", "re", "im", "flag"])?;
        for (t, e) in self.iter() {
            let label = t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
            let flag = match e.flag {
                EntryFlag::Divided => "divided",
                EntryFlag::ResonantSkipped => "resonant_skipped",
            };
            wr.write_record([label, format!("{:.15e}", e.value.re), format!("{:.15e}", e.value.im), flag.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `∫ φ_{n₁}⋯φ_{n_q} dx` with `φ_n = cos(nx)/√π`, i.e.
/// `2π·2^{−q}·#{σ ∈ {±1}^q : Σσ_j n_j = 0}/π^{q/2}`.
pub fn cosine_projection_factor(n: &[usize]) -> f64 {
    let q = n.len();
    let count = (0u64..1 << q)
        .filter(|mask| {
            let s: i64 = n.iter().enumerate().map(|(j, &v)| if mask >> j & 1 == 1 { v as i64 } else { -(v as i64) }).sum();
            s == 0
        })
        .count();
    2.0 * PI * count as f64 / (2f64.powi(q as i32) * PI.powf(q as f64 / 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

fn l2_modes(c: &[C64]) -> f64 {
    hs_norm_modes(c, 0.0)
}

fn near_identity(map: &NFMap, u: &[C64]) -> Result<Vec<C64>> {
    let q = map.q_modes(u);
    let (qn, half) = (l2_modes(&q), 0.5 * l2_modes(u));
    if qn >= half && qn > 0.0 {
        return Err(Error::NotNearIdentity { q: qn, half });
    }
    Ok(q)
}

fn transform_modes(map: &NFMap, x: &[C64], direction: Direction) -> Result<Vec<C64>> {
    match direction {
        Direction::Forward => {
            let q = near_identity(map, x)?;
            Ok(axpy(x, 1.0, &q))
        }
        Direction::Inverse => {
            let scale = l2_modes(x);
            let mut u = x.to_vec();
            for it in 0..INVERSE_MAX_ITER {
                let next: Vec<C64> = x.iter().zip(map.q_modes(&u)).map(|(a, b)| a - b).collect();
                let step = l2_modes(&axpy(&next, -1.0, &u));
                u = next;
                if step <= INVERSE_TOL * scale {
                    near_identity(map, &u)?;
                    return Ok(u);
                }
                if !step.is_finite() || (it > 20 && step > scale) {
                    break;
                }
            }
            let residual = l2_modes(&axpy(&axpy(&u, 1.0, &map.q_modes(&u)), -1.0, x));
            Err(Error::NotConverged { what: "normal-form inverse", iterations: INVERSE_MAX_ITER, residual })
        }
    }
}

/// `v = u + Q(u, ū)` or its inverse by fixed-point iteration.
pub fn apply_nf_transform(u: &PeriodicField, map: &NFMap, direction: Direction) -> Result<PeriodicField> {
    let c = modes_of(u, map.spec.n_c)?;
    Ok(field_of(u.grid(), &transform_modes(map, &c, direction)?))
}

/// `d/dt‖u‖²_{Ḣ^s}` and `d/dt‖u + Q(u)‖²_{Ḣ^s}` at `t = 0` along the model flow.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormRates {
    pub eps: f64,
    pub raw: f64,
    pub transformed: f64,
}

pub fn norm_rates(map: &NFMap, u: &PeriodicField, s: f64) -> Result<(f64, f64)> {
    let spec = &map.spec;
    let c = modes_of(u, spec.n_c)?;
    let m = spec.frequencies();
    let udot = model_rhs_modes(spec, &m, C64::new(spec.a, 0.0), None, &c);
    let raw = 2.0 * hs_inner_modes(&c, &udot, s).re;
    let v = axpy(&c, 1.0, &map.q_modes(&c));
    let vdot = axpy(&udot, 1.0, &map.dq_modes(&c, &udot));
    let transformed = 2.0 * hs_inner_modes(&v, &vdot, s).re;
    Ok((raw, transformed))
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderBumpReport {
    pub rows: Vec<NormRates>,
    /// Fitted exponents of `|rate|` against `ε`.
    pub raw_exponent: Option<f64>,
    pub transformed_exponent: Option<f64>,
}

/// Norm growth rates at `t = 0` for data `ε·profile`.
pub fn order_bump(map: &NFMap, profile: &PeriodicField, eps_list: &[f64], s: f64) -> Result<OrderBumpReport> {
    let rows = eps_list
        .iter()
        .map(|&eps| {
            let (raw, transformed) = norm_rates(map, &profile.scale_real(eps), s)?;
            Ok(NormRates { eps, raw, transformed })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = |f: fn(&NormRates) -> f64| loglog_slope(&rows.iter().map(|r| (r.eps, f(r).abs())).collect::<Vec<_>>()).map(|(s, _)| s);
    Ok(OrderBumpReport { raw_exponent: fit(|r| r.raw), transformed_exponent: fit(|r| r.transformed), rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionReport {
    pub t_final: f64,
    pub dt: f64,
    /// `‖Π_n u(0)‖²_{L²}` for `n = 1..=N_c`.
    pub initial: Vec<f64>,
    /// `max_{t,n} |A_n(t) − A_n(0)| / Σ_n A_n(0)` for real `a`.
    pub max_drift: f64,
    /// Same quantity with `a` replaced by `−i a`.
    pub control_drift: f64,
    /// The control run stops once its drift exceeds 1.
    pub control_stop: Option<f64>,
    /// True when the largest control action grew at every step.
    pub control_monotone: bool,
}

fn actions(c: &[C64]) -> Vec<f64> {
    let n = c.len() / 2;
    (1..=n).map(|k| 2.0 * PI * (c[n + k].norm_sqr() + c[n - k].norm_sqr())).collect()
}

struct ActionRun {
    drift: f64,
    stop: Option<f64>,
    monotone: bool,
}

fn action_run(spec: &ModelSpec, a: C64, u0: &[C64], t_final: f64, dt: f64, stop_at: f64) -> ActionRun {
    let m = spec.frequencies();
    let len = spec.p + 1;
    let mask: Vec<bool> = (0..spec.n_c.pow(len as u32)).map(|idx| spec.resonant(&tuple_of(idx, spec.n_c, len))).collect();
    let f = |u: &[C64]| model_rhs_modes(spec, &m, a, Some(&mask), u);
    let a0 = actions(u0);
    let total: f64 = a0.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let lead = a0.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).map(|(i, _)| i).unwrap_or(0);
    let steps = (t_final / dt).round() as usize;
    let mut u = u0.to_vec();
    let mut run = ActionRun { drift: 0.0, stop: None, monotone: steps > 0 };
    let mut prev = a0[lead];
    for k in 1..=steps {
        u = rk4(&f, &u, dt);
        let a = actions(&u);
        run.drift = a.iter().zip(&a0).map(|(x, y)| (x - y).abs() / total).fold(run.drift, f64::max);
        run.monotone &= a[lead] > prev;
        prev = a[lead];
        if run.drift > stop_at {
            run.stop = Some(k as f64 * dt);
            break;
        }
    }
    run
}

/// Integrates the resonant truncation (only the monomials skipped by the map)
/// and records the drift of the actions `‖Π_n u‖²`; the same run with an
/// imaginary coefficient serves as a negative control.
pub fn action_check(spec: &ModelSpec, u0: &PeriodicField, t_final: f64, dt: f64) -> Result<ActionReport> {
    spec.validate()?;
    if spec.p % 2 == 0 || 2 * spec.ell != spec.p + 1 {
        return Err(Error::InvalidArgument(format!("action check needs p odd and ell = (p+1)/2, got p = {}, ell = {}", spec.p, spec.ell)));
    }
    if !(dt > 0.0) || dt > spec.cfl_limit() {
        return Err(Error::CflViolation { dt, limit: spec.cfl_limit() });
    }
    let c = modes_of(u0, spec.n_c)?;
    let (real, control) = rayon::join(
        || action_run(spec, C64::new(spec.a, 0.0), &c, t_final, dt, f64::INFINITY),
        || action_run(spec, C64::new(0.0, -spec.a), &c, t_final, dt, 1.0),
    );
    Ok(ActionReport {
        t_final,
        dt,
        initial: actions(&c),
        max_drift: real.drift,
        control_drift: control.drift,
        control_stop: control.stop,
        control_monotone: control.monotone,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NfLifetimeRow {
    pub eps: f64,
    /// First time `‖u‖_{Ḣ^s}` doubles.
    pub t_raw: Option<f64>,
    /// First time `‖u + Q(u)‖_{Ḣ^s}` doubles, along the same trajectory.
    pub t_transformed: Option<f64>,
    pub censored: bool,
    /// Largest ratios `‖·(t)‖/‖·(0)‖` seen before stopping.
    pub max_ratio_raw: f64,
    pub max_ratio_transformed: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NfLifetimeTable {
    pub spec: ModelSpec,
    pub t_max: f64,
    pub dt: f64,
    pub rows: Vec<NfLifetimeRow>,
    /// `(slope, standard error)` over uncensored rows.
    pub slope_raw: Option<(f64, f64)>,
    pub slope_transformed: Option<(f64, f64)>,
    /// `slope_raw − slope_transformed` when both fits exist.
    pub slope_gap: Option<f64>,
}

impl NfLifetimeTable {
    /// `eps,T_raw,T_transformed,censored`; censored times are left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["eps", "T_raw", "T_transformed", "censored"])?;
        let fmt = |t: Option<f64>| t.map(|v| format!("{v:.15e}")).unwrap_or_default();
        for r in &self.rows {
            wr.write_record([format!("{:.15e}", r.eps), fmt(r.t_raw), fmt(r.t_transformed), r.censored.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn lifetime_row(map: &NFMap, u0: &[C64], eps: f64, t_max: f64, dt: f64, s: f64) -> Result<NfLifetimeRow> {
    let spec = &map.spec;
    let m = spec.frequencies();
    let a = C64::new(spec.a, 0.0);
    let f = |u: &[C64]| model_rhs_modes(spec, &m, a, None, u);
    let u0: Vec<C64> = u0.iter().map(|z| z * eps).collect();
    let v0 = transform_modes(map, &u0, Direction::Forward)?;
    let (nu0, nv0) = (hs_norm_modes(&u0, s), hs_norm_modes(&v0, s));
    let steps = (t_max / dt).ceil() as usize;
    let mut u = u0;
    let (mut t_raw, mut t_tr) = (None, None);
    let (mut max_u, mut max_v) = (1.0f64, 1.0f64);
    for k in 1..=steps {
        u = rk4(&f, &u, dt);
        let t = k as f64 * dt;
        let ru = hs_norm_modes(&u, s) / nu0;
        if !ru.is_finite() {
            t_raw = t_raw.or(Some(t));
            t_tr = t_tr.or(Some(t));
            break;
        }
        let v = axpy(&u, 1.0, &map.q_modes(&u));
        let rv = hs_norm_modes(&v, s) / nv0;
        max_u = max_u.max(ru);
        max_v = max_v.max(rv);
        if t_raw.is_none() && ru > 2.0 {
            t_raw = Some(t);
        }
        if t_tr.is_none() && rv > 2.0 {
            t_tr = Some(t);
        }
        if t_raw.is_some() && t_tr.is_some() {
            break;
        }
    }
    Ok(NfLifetimeRow { eps, t_raw, t_transformed: t_tr, censored: t_raw.is_none() || t_tr.is_none(), max_ratio_raw: max_u, max_ratio_transformed: max_v })
}

/// Doubling times of `‖u‖_{Ḣ^s}` and `‖u + Q(u)‖_{Ḣ^s}` for data
/// `ε·profile`, integrated with RK4 at `icfg.dt` up to `t_max`.
pub fn nf_lifetime_compare(map: &NFMap, profile: &PeriodicField, eps_list: &[f64], t_max: f64, icfg: &IntegratorConfig) -> Result<NfLifetimeTable> {
    let spec = map.spec;
    let limit = spec.cfl_limit();
    if !(icfg.dt > 0.0) || icfg.dt > limit {
        return Err(Error::CflViolation { dt: icfg.dt, limit });
    }
    let c = modes_of(profile, spec.n_c)?;
    let rows = eps_list.par_iter().map(|&eps| lifetime_row(map, &c, eps, t_max, icfg.dt, icfg.s)).collect::<Result<Vec<_>>>()?;
    let fit = |f: fn(&NfLifetimeRow) -> Option<f64>| loglog_slope(&rows.iter().filter_map(|r| f(r).map(|t| (r.eps, t))).collect::<Vec<_>>());
    let slope_raw = fit(|r| r.t_raw);
    let slope_transformed = fit(|r| r.t_transformed);
    let slope_gap = slope_raw.zip(slope_transformed).map(|(a, b)| a.0 - b.0);
    Ok(NfLifetimeTable { spec, t_max, dt: icfg.dt, rows, slope_raw, slope_transformed, slope_gap })
}

/// `ζ = (1+η′²)^{−3/2} − 1`.
pub fn zeta_of_eta(eta: &PeriodicField) -> PeriodicField {
    eta.derivative(1).map_real(|p| (1.0 + p * p).powf(-1.5) - 1.0)
}

#[derive(Clone, Debug)]
pub struct Flattening {
    /// `ζ̄ = [(1/2π)∫(1+ζ₁)^{−2/3}]^{−3/2} − 1`
    pub zeta_bar: f64,
    /// `(1+ζ̄)^{2/3}(1+ζ₁)^{−2/3} − 1`
    pub integrand: PeriodicField,
    /// Zero-mean primitive of the integrand.
    pub gamma: PeriodicField,
    /// Mean of the integrand, zero up to rounding.
    pub integrand_mean: f64,
    pub gamma_mean: f64,
}

/// Constant `ζ̄` and diffeomorphism generator `γ` for a real profile `ζ₁`
/// with `1 + ζ₁ > 1/2`.
pub fn flattening_profile(zeta1: &PeriodicField) -> Result<Flattening> {
    if !zeta1.flags().is_real {
        return Err(Error::InvalidArgument("profile must be real".into()));
    }
    let low = zeta1.real_samples().into_iter().chain(zeta1.map_real(|z| z).real_samples()).fold(f64::INFINITY, f64::min);
    let fine_low = zeta1.resample(&SpectralGrid::new(4 * zeta1.grid().m())?).real_samples().into_iter().fold(low, f64::min);
    if 1.0 + fine_low <= 0.5 {
        return Err(Error::InvalidArgument(format!("1 + zeta must exceed 1/2, found {:.6}", 1.0 + fine_low)));
    }
    let h = zeta1.map_real(|z| (1.0 + z).powf(-2.0 / 3.0));
    let mean = h.mean().re;
    let zeta_bar = mean.powf(-1.5) - 1.0;
    let c = (1.0 + zeta_bar).powf(2.0 / 3.0);
    let integrand = zeta1.map_real(|z| c * (1.0 + z).powf(-2.0 / 3.0) - 1.0);
    let integrand_mean = integrand.mean().re;
    let gamma = integrand.antiderivative();
    let gamma_mean = gamma.mean().re;
    Ok(Flattening { zeta_bar, integrand, gamma, integrand_mean, gamma_mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2() -> ModelSpec {
        ModelSpec::new(1.0, 2, 2, 1.0, 4).unwrap()
    }

    fn field(g: &SpectralGrid, modes: &[(i64, C64)]) -> PeriodicField {
        PeriodicField::from_modes(g, modes, Flags::free().with_mean(MeanConvention::ZeroMean)).unwrap()
    }

    #[test]
    fn divisor_example() {
        let map = build_nf_map(&spec2()).unwrap();
        let e = map.get(&[1, 1, 2]).unwrap();
        let m = |n: f64| (n * n.tanh() * (1.0 + n * n)).sqrt();
        let d = 2.0 * m(1.0) - m(2.0);
        assert!((e.divisor - d).abs() < 1e-15);
        // quoted value -0.636522 differs from the direct evaluation in the sixth digit
        assert!((e.divisor + 0.636522).abs() < 1e-5);
        assert!((e.value.re + 1.0 / d).abs() < 1e-14);
        assert!((e.value.re - 1.571).abs() < 1e-3);
        assert_eq!(e.flag, EntryFlag::Divided);
    }

    #[test]
    fn zero_coefficient_gives_zero_map() {
        let map = build_nf_map(&ModelSpec::new(1.0, 2, 1, 0.0, 5).unwrap()).unwrap();
        assert!(map.iter().all(|(_, e)| e.value == C64::new(0.0, 0.0)));
    }

    #[test]
    fn cubic_resonant_flags() {
        let map = build_nf_map(&ModelSpec::new(1.0, 3, 2, 1.0, 4).unwrap()).unwrap();
        for (t, e) in map.iter() {
            let mut a = t[..2].to_vec();
            let mut b = t[2..].to_vec();
            a.sort();
            b.sort();
            assert_eq!(e.flag == EntryFlag::ResonantSkipped, a == b, "{t:?}");
            if e.flag == EntryFlag::ResonantSkipped {
                assert_eq!(e.value, C64::new(0.0, 0.0));
                assert!(e.divisor.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn tuple_index_roundtrip() {
        for idx in 0..125 {
            assert_eq!(index_of(&tuple_of(idx, 5, 3), 5), idx);
        }
    }

    #[test]
    fn near_resonance_is_refused() {
        // (1,1 | 2) vanishes where 2 m(1) = m(2)
        let root = crate::dispersion::find_wilton_kappa(1, 1).unwrap().unwrap();
        let err = build_nf_map(&ModelSpec::new(root.kappa, 2, 2, 1.0, 3).unwrap()).unwrap_err();
        match err {
            Error::NearResonance { tuple, .. } => assert_eq!(tuple, "(1,1|2)"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn model_rhs_of_cosine() {
        let g = SpectralGrid::new(16).unwrap();
        let eps = 0.1;
        let spec = ModelSpec::new(1.0, 2, 2, 0.7, 4).unwrap();
        let u = field(&g, &[(1, C64::new(eps / 2.0, 0.0)), (-1, C64::new(eps / 2.0, 0.0))]);
        let r = model_rhs(&u, &spec).unwrap();
        let m1 = m_kappa(1.0, &spec.params(), false);
        // cos²x = 1/2 + cos(2x)/2, and the mean is projected away
        assert!((r.mode(1) - C64::new(0.0, m1 * eps / 2.0)).norm() < 1e-16);
        assert!((r.mode(2) - C64::new(0.0, 0.7 * eps * eps / 4.0)).norm() < 1e-16);
        assert!(r.mode(0).norm() == 0.0 && r.mode(3).norm() < 1e-17);
    }

    #[test]
    fn model_rhs_matches_convolution() {
        let g = SpectralGrid::new(32).unwrap();
        for (p, ell) in [(2, 0), (2, 1), (3, 2), (4, 3)] {
            let spec = ModelSpec::new(2.0, p, ell, 1.3, 5).unwrap();
            let modes: Vec<(i64, C64)> =
                (1..=5).flat_map(|k| [(k, C64::from_polar(0.1 / k as f64, k as f64)), (-k, C64::from_polar(0.05, 0.3 * k as f64))]).collect();
            let u = field(&g, &modes);
            let direct = model_rhs(&u, &spec).unwrap();
            let c = modes_of(&u, 5).unwrap();
            let conv = field_of(&g, &model_rhs_modes(&spec, &spec.frequencies(), C64::new(1.3, 0.0), None, &c));
            assert!(direct.distance(&conv).unwrap() < 1e-15, "p={p} l={ell}");
        }
    }

    #[test]
    fn cosine_factor_matches_quadrature() {
        // brute force ∫ φ_a φ_b φ_c on a fine trapezoid rule
        let n = 64;
        for a in 1..=4 {
            for b in 1..=4 {
                for c in 1..=4 {
                    let q: f64 = (0..n)
                        .map(|j| {
                            let x = 2.0 * PI * j as f64 / n as f64;
                            (a as f64 * x).cos() * (b as f64 * x).cos() * (c as f64 * x).cos()
                        })
                        .sum::<f64>()
                        * 2.0
                        * PI
                        / n as f64
                        / PI.powf(1.5);
                    assert!((q - cosine_projection_factor(&[a, b, c])).abs() < 1e-14, "{a} {b} {c}");
                }
            }
        }
    }

    #[test]
    fn cosine_path_matches_convolution() {
        let g = SpectralGrid::new(16).unwrap();
        for ell in 0..=2 {
            let map = build_nf_map(&ModelSpec::new(1.0, 2, ell, 0.9, 4).unwrap()).unwrap();
            let c: Vec<C64> = (1..=4).map(|n| C64::from_polar(0.1 / n as f64, 0.7 * n as f64)).collect();
            let modes: Vec<(i64, C64)> =
                (1..=4i64).flat_map(|n| [(n, c[n as usize - 1] / (2.0 * PI.sqrt())), (-n, c[n as usize - 1] / (2.0 * PI.sqrt()))]).collect();
            let q = map.q(&field(&g, &modes)).unwrap();
            let qc = map.apply_cosine(&c).unwrap();
            for n in 1..=4i64 {
                assert!((q.mode(n) - q.mode(-n)).norm() < 1e-17);
                assert!((2.0 * PI.sqrt() * q.mode(n) - qc[n as usize - 1]).norm() < 1e-15, "ell={ell} n={n}");
            }
        }
    }

    #[test]
    fn homological_equation() {
        // DQ[u](i m u) − i m Q(u) = −i a Π(u^ℓ ū^{p−ℓ}), the right side formed pointwise
        let g = SpectralGrid::new(32).unwrap();
        for (p, ell, k) in [(2, 2, 1.0), (2, 1, 1.0), (2, 0, 3.0), (3, 3, 1.0), (3, 1, 1.0)] {
            let spec = ModelSpec::new(k, p, ell, 0.8, 4).unwrap();
            let map = build_nf_map(&spec).unwrap();
            let modes: Vec<(i64, C64)> = (1..=4).flat_map(|k| [(k, C64::from_polar(0.2, k as f64)), (-k, C64::from_polar(0.1, 2.0 * k as f64))]).collect();
            let u = field(&g, &modes);
            let lin = model_rhs(&u, &ModelSpec { a: 0.0, ..spec }).unwrap();
            let lhs = map.dq(&u, &lin).unwrap().sub(&model_rhs(&map.q(&u).unwrap(), &ModelSpec { a: 0.0, ..spec }).unwrap()).unwrap();
            let nl = model_rhs(&u, &spec).unwrap().sub(&lin).unwrap();
            let err = lhs.add(&nl).unwrap().max_abs_coeff() / nl.max_abs_coeff();
            assert!(err < 1e-13, "p={p} l={ell}: {err:e}");
        }
    }

    #[test]
    fn divided_entries_are_real_and_bounded() {
        for (p, ell) in [(2, 0), (2, 1), (2, 2), (3, 2)] {
            let map = build_nf_map(&ModelSpec::new(1.7, p, ell, -0.6, 5).unwrap()).unwrap();
            for (_, e) in map.iter().filter(|(_, e)| e.flag == EntryFlag::Divided) {
                assert_eq!(e.value.im, 0.0);
                assert!(e.value.norm() <= 0.6 / map.min_divisor);
                assert!((e.divisor * e.value.re - 0.6).abs() < 1e-12 * 0.6);
            }
        }
    }

    #[test]
    fn transform_roundtrip() {
        let g = SpectralGrid::new(32).unwrap();
        let map = build_nf_map(&ModelSpec::new(1.0, 2, 1, 1.0, 6).unwrap()).unwrap();
        let modes: Vec<(i64, C64)> = (1..=6).flat_map(|k| [(k, C64::from_polar(0.02, k as f64)), (-k, C64::from_polar(0.01, 0.5 * k as f64))]).collect();
        let u = field(&g, &modes);
        let v = apply_nf_transform(&u, &map, Direction::Forward).unwrap();
        let back = apply_nf_transform(&v, &map, Direction::Inverse).unwrap();
        assert!(back.distance(&u).unwrap() < 1e-11 * u.max_abs_coeff());
        let zero = PeriodicField::zeros(&g, Flags::free().with_mean(MeanConvention::ZeroMean));
        assert_eq!(apply_nf_transform(&zero, &map, Direction::Inverse).unwrap().max_abs_coeff(), 0.0);
    }

    #[test]
    fn large_data_is_not_near_identity() {
        let g = SpectralGrid::new(16).unwrap();
        let map = build_nf_map(&spec2()).unwrap();
        let u = field(&g, &[(1, C64::new(2.0, 0.0)), (-1, C64::new(2.0, 0.0))]);
        assert!(matches!(apply_nf_transform(&u, &map, Direction::Forward), Err(Error::NotNearIdentity { .. })));
    }

    #[test]
    fn data_outside_cutoff_is_rejected() {
        let g = SpectralGrid::new(16).unwrap();
        let map = build_nf_map(&spec2()).unwrap();
        let u = field(&g, &[(5, C64::new(0.1, 0.0))]);
        assert!(map.q(&u).is_err());
    }

    #[test]
    fn flattening_of_zero() {
        let g = SpectralGrid::new(16).unwrap();
        let f = flattening_profile(&PeriodicField::zeros(&g, Flags::real_even())).unwrap();
        assert_eq!(f.zeta_bar, 0.0);
        assert_eq!(f.gamma.max_abs_coeff(), 0.0);
    }

    #[test]
    fn flattening_rejects_deep_profile() {
        let g = SpectralGrid::new(16).unwrap();
        let z = PeriodicField::from_fn(&g, |x| 0.6 * x.cos(), Flags::real_even()).unwrap();
        assert!(flattening_profile(&z).is_err());
    }

    #[test]
    fn lifetime_without_nonlinearity_is_censored() {
        let g = SpectralGrid::new(16).unwrap();
        let map = build_nf_map(&ModelSpec::new(1.0, 2, 2, 0.0, 4).unwrap()).unwrap();
        let u = field(&g, &[(1, C64::new(0.5, 0.0)), (-1, C64::new(0.5, 0.0))]);
        let icfg = IntegratorConfig { dt: 0.05, ..Default::default() };
        let t = nf_lifetime_compare(&map, &u, &[0.1, 0.05], 20.0, &icfg).unwrap();
        assert!(t.rows.iter().all(|r| r.censored && r.t_raw.is_none()));
        assert!(t.slope_gap.is_none());
    }
}
