//! Linear dispersion `m_κ`, the auxiliary multiplier `Λ_κ`, small divisors
//! and non-resonance scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::XiFn;

/// Physical parameters; the depth is fixed to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub g: f64,
    pub kappa: f64,
}

impl PhysParams {
    pub fn new(g: f64, kappa: f64) -> Result<Self> {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidArgument(format!("gravity must be positive, got {g}")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("surface tension must be positive, got {kappa}")));
        }
        Ok(Self { g, kappa })
    }

    /// `g = 1` units.
    pub fn unit(kappa: f64) -> Result<Self> {
        Self::new(1.0, kappa)
    }

    pub fn depth(&self) -> f64 {
        1.0
    }
}

/// Result of rescaling to `g = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Reduced {
    pub params: PhysParams,
    /// `t_reduced = time_scale · t`
    pub time_scale: f64,
    /// `ψ_reduced = ψ / psi_scale`
    pub psi_scale: f64,
}

/// Rescales `(g, κ)` to `(1, κ/g)`.
///
/// If `(η, ψ)` solves the system with gravity `g`, then
/// `(η(t/√g), ψ(t/√g)/√g)` solves it with `(1, κ/g)`: times are multiplied
/// by `√g` and potentials divided by `√g` on the way in.
pub fn reduce_g(params: &PhysParams) -> Reduced {
    let s = params.g.sqrt();
    Reduced { params: PhysParams { g: 1.0, kappa: params.kappa / params.g }, time_scale: s, psi_scale: s }
}

fn m_unit(xi: f64, kappa: f64, smoothed: bool) -> f64 {
    XiFn::MKappa { kappa, smoothed }.eval(xi)
}

/// `m_κ(ξ)`; for `g != 1` this is `√g · m_{κ/g}(ξ)`.
pub fn m_kappa(xi: f64, params: &PhysParams, smoothed: bool) -> f64 {
    let r = reduce_g(params);
    r.time_scale * m_unit(xi, r.params.kappa, smoothed)
}

/// `Λ_κ(ξ) = (ξ tanh ξ/(1+κξ²))^{1/4}(1-χ(ξ))` in `g = 1` units.
pub fn lambda_kappa(xi: f64, params: &PhysParams) -> f64 {
    XiFn::LambdaKappa { kappa: reduce_g(params).params.kappa }.eval(xi)
}

/// Signed tuple `(n_0..n_ℓ | n_{ℓ+1}..n_{p+1})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DivisorTuple {
    pub p: usize,
    pub ell: i64,
    pub n: Vec<u32>,
}

impl DivisorTuple {
    pub fn new(p: usize, ell: i64, n: Vec<u32>) -> Result<Self> {
        if n.len() != p + 2 {
            return Err(Error::InvalidArgument(format!("tuple for p = {p} needs {} entries, got {}", p + 2, n.len())));
        }
        if ell < -1 || ell > p as i64 + 1 {
            return Err(Error::InvalidArgument(format!("ell = {ell} outside [-1, {}]", p + 1)));
        }
        if n.contains(&0) {
            return Err(Error::InvalidArgument("tuple entries must be positive".into()));
        }
        Ok(Self { p, ell, n })
    }

    /// Builds a tuple from its `+` and `-` blocks.
    pub fn from_blocks(plus: &[u32], minus: &[u32]) -> Result<Self> {
        let q = plus.len() + minus.len();
        if q < 2 {
            return Err(Error::InvalidArgument("tuple needs at least two entries".into()));
        }
        let mut n = plus.to_vec();
        n.extend_from_slice(minus);
        Self::new(q - 2, plus.len() as i64 - 1, n)
    }

    pub fn plus(&self) -> &[u32] {
        &self.n[..(self.ell + 1) as usize]
    }

    pub fn minus(&self) -> &[u32] {
        &self.n[(self.ell + 1) as usize..]
    }

    /// Same entries with the `+` and `-` blocks exchanged.
    pub fn swapped(&self) -> Self {
        Self::from_blocks(self.minus(), self.plus()).expect("swap keeps validity")
    }

    pub fn max_n(&self) -> u32 {
        *self.n.iter().max().expect("nonempty")
    }

    pub fn label(&self) -> String {
        let f = |b: &[u32]| b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        format!("({}|{})", f(self.plus()), f(self.minus()))
    }
}

/// `Σ_{j<=ℓ} m_κ(n_j) − Σ_{j>ℓ} m_κ(n_j)` with the unsmoothed `m_κ`.
pub fn small_divisor(t: &DivisorTuple, params: &PhysParams) -> f64 {
    let plus: f64 = t.plus().iter().map(|&n| m_kappa(n as f64, params, false)).sum();
    let minus: f64 = t.minus().iter().map(|&n| m_kappa(n as f64, params, false)).sum();
    plus - minus
}

/// True iff both blocks have the same size and the same multiset of entries.
pub fn is_resonant_tuple(t: &DivisorTuple) -> bool {
    if t.plus().len() != t.minus().len() {
        return false;
    }
    let mut a = t.plus().to_vec();
    let mut b = t.minus().to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

/// Threshold below which a divisor is reported as a candidate resonance.
pub const RESONANCE_THRESHOLD: f64 = 1e-10;
/// Default cap on the number of tuples a scan may enumerate per κ.
pub const DEFAULT_TUPLE_BUDGET: u64 = 20_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct KappaScan {
    pub kappa: f64,
    pub min_abs_d: f64,
    pub worst: DivisorTuple,
    pub worst_divisor: f64,
    /// `(ν, min |D| over tuples with max entry ν)`
    pub by_max_n: Vec<(u32, f64)>,
    /// Least-squares exponent of `min_{max n = ν} |D| ~ c ν^{-N₀}`, fitted
    /// over `2 <= ν <= n_sum_max/(p_max+2)` where the enumeration is complete.
    pub fitted_n0: f64,
    pub fit_intercept: f64,
    pub tuples_scanned: u64,
    pub resonant_skipped: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResonanceReport {
    pub p_max: usize,
    pub n_sum_max: u32,
    pub rows: Vec<KappaScan>,
    /// κ values of the grid where `min|D| < RESONANCE_THRESHOLD`.
    pub candidate_resonances: Vec<f64>,
    /// Non-canonical orderings are not enumerated: every tuple stands for all
    /// permutations within its blocks and for its block swap.
    pub symmetry_note: &'static str,
}

/// Non-decreasing blocks of `len` entries in `[lo, ..]` with sum `<= budget`.
fn for_each_block(len: usize, lo: u32, budget: u32, acc: &mut Vec<u32>, f: &mut impl FnMut(&[u32], u32)) {
    if len == 0 {
        let s: u32 = acc.iter().sum();
        f(acc, s);
        return;
    }
    let mut v = lo;
    while (v as u64) * (len as u64) <= budget as u64 {
        acc.push(v);
        for_each_block(len - 1, v, budget - v, acc, f);
        acc.pop();
        v += 1;
    }
}

/// Number of non-decreasing positive blocks of each length with each sum.
fn block_counts(max_len: usize, n_sum_max: u32) -> Vec<Vec<u64>> {
    // c[len][s]: partitions of s into exactly len positive parts
    let s_max = n_sum_max as usize;
    let mut c = vec![vec![0u64; s_max + 1]; max_len + 1];
    c[0][0] = 1;
    for len in 1..=max_len {
        for s in len..=s_max {
            // p(s, len) = p(s-1, len-1) + p(s-len, len)
            c[len][s] = c[len - 1][s - 1].saturating_add(c[len][s - len]);
        }
    }
    c
}

/// Canonical splits `(plus_len, minus_len)` with `plus_len >= minus_len`.
fn splits(p_max: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for p in 0..=p_max {
        let q = p + 2;
        for plus in 0..=q {
            let minus = q - plus;
            if plus >= minus {
                out.push((plus, minus));
            }
        }
    }
    out
}

/// Number of tuples a scan would visit.
pub fn count_tuples(p_max: usize, n_sum_max: u32) -> u64 {
    let c = block_counts(p_max + 2, n_sum_max);
    let mut total: u64 = 0;
    for (a, b) in splits(p_max) {
        for s1 in 0..=n_sum_max as usize {
            if c[a][s1] == 0 {
                continue;
            }
            let rest: u64 = (0..=n_sum_max as usize - s1).map(|s2| c[b][s2]).sum();
            total = total.saturating_add(c[a][s1].saturating_mul(rest));
        }
    }
    total
}

fn fit_power(by_max: &[(u32, f64)]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = by_max.iter().filter(|(_, d)| *d > 0.0 && d.is_finite()).map(|&(n, d)| ((n as f64).ln(), d.ln())).collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (-slope, my - slope * mx)
}

/// Entries of `by_max` with `2 <= ν <= nu_max`.
fn envelope(by_max: &[(u32, f64)], nu_max: u32) -> Vec<(u32, f64)> {
    by_max.iter().copied().filter(|(nu, _)| *nu >= 2 && *nu <= nu_max).collect()
}

fn scan_one(kappa: f64, p_max: usize, n_sum_max: u32) -> Result<KappaScan> {
    let params = PhysParams::unit(kappa)?;
    let m: Vec<f64> = (0..=n_sum_max).map(|n| if n == 0 { 0.0 } else { m_kappa(n as f64, &params, false) }).collect();
    let mut best = f64::INFINITY;
    let mut worst: Option<(Vec<u32>, Vec<u32>, f64)> = None;
    let mut by_max = vec![f64::INFINITY; n_sum_max as usize + 1];
    let mut scanned = 0u64;
    let mut skipped = 0u64;
    for (a, b) in splits(p_max) {
        let mut plus_acc = Vec::with_capacity(a);
        for_each_block(a, 1, n_sum_max, &mut plus_acc, &mut |plus, s1| {
            let sp: f64 = plus.iter().map(|&v| m[v as usize]).sum();
            let pmax = plus.last().copied().unwrap_or(0);
            let mut minus_acc = Vec::with_capacity(b);
            for_each_block(b, 1, n_sum_max - s1, &mut minus_acc, &mut |minus, _| {
                if a == b && plus == minus {
                    skipped += 1;
                    return;
                }
                scanned += 1;
                let d = sp - minus.iter().map(|&v| m[v as usize]).sum::<f64>();
                let ad = d.abs();
                let mx = pmax.max(minus.last().copied().unwrap_or(0)) as usize;
                if ad < by_max[mx] {
                    by_max[mx] = ad;
                }
                if ad < best {
                    best = ad;
                    worst = Some((plus.to_vec(), minus.to_vec(), d));
                }
            });
        });
    }
    let (plus, minus, d) = worst.ok_or(Error::EmptyFamily)?;
    let by_max_n: Vec<(u32, f64)> = by_max.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(n, &v)| (n as u32, v)).collect();
    let (fitted_n0, fit_intercept) = fit_power(&envelope(&by_max_n, n_sum_max / (p_max as u32 + 2)));
    Ok(KappaScan {
        kappa,
        min_abs_d: best,
        worst: DivisorTuple::from_blocks(&plus, &minus)?,
        worst_divisor: d,
        by_max_n,
        fitted_n0,
        fit_intercept,
        tuples_scanned: scanned,
        resonant_skipped: skipped,
    })
}

/// Scans all non-resonant tuples with `p <= p_max` and `Σ n_j <= n_sum_max`
/// for every κ of the grid (in parallel), in `g = 1` units.
pub fn scan_nonresonance(p_max: usize, n_sum_max: u32, kappa_grid: &[f64], budget: u64) -> Result<ResonanceReport> {
    if kappa_grid.is_empty() {
        return Err(Error::InvalidArgument("empty kappa grid".into()));
    }
    if p_max > 4 || n_sum_max > 200 {
        return Err(Error::InvalidArgument(format!("scan limited to p_max <= 4 and n_sum_max <= 200, got {p_max}, {n_sum_max}")));
    }
    if n_sum_max < 2 {
        return Err(Error::EmptyFamily);
    }
    let count = count_tuples(p_max, n_sum_max);
    if count > budget {
        return Err(Error::BudgetExceeded { count, limit: budget });
    }
    let rows: Vec<KappaScan> = kappa_grid.par_iter().map(|&k| scan_one(k, p_max, n_sum_max)).collect::<Result<_>>()?;
    let candidate_resonances = rows.iter().filter(|r| r.min_abs_d < RESONANCE_THRESHOLD).map(|r| r.kappa).collect();
    Ok(ResonanceReport {
        p_max,
        n_sum_max,
        rows,
        candidate_resonances,
        symmetry_note: "blocks sorted non-decreasing; only splits with |plus| >= |minus| enumerated (|D| is swap invariant)",
    })
}

/// Wilton root of `m_κ(a) + m_κ(b) − m_κ(a+b)` on `κ ∈ (1e-6, 1e3)`, in `g = 1` units.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WiltonRoot {
    pub a: u32,
    pub b: u32,
    pub kappa: f64,
    pub residual: f64,
    pub bracket_width: f64,
}

pub fn find_wilton_kappa(a: u32, b: u32) -> Result<Option<WiltonRoot>> {
    if a == 0 || b == 0 {
        return Err(Error::InvalidArgument("Wilton search needs a, b >= 1".into()));
    }
    let f = |k: f64| {
        let p = PhysParams { g: 1.0, kappa: k };
        m_kappa(a as f64, &p, false) + m_kappa(b as f64, &p, false) - m_kappa((a + b) as f64, &p, false)
    };
    let (lo0, hi0) = (1e-6f64, 1e3f64);
    let samples = 400;
    let ks: Vec<f64> = (0..=samples).map(|i| (lo0.ln() + (hi0.ln() - lo0.ln()) * i as f64 / samples as f64).exp()).collect();
    let Some(i) = ks.windows(2).position(|w| f(w[0]).signum() != f(w[1]).signum()) else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (ks[i], ks[i + 1]);
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let kappa = if f(lo).abs() < f(hi).abs() { lo } else { hi };
    Ok(Some(WiltonRoot { a, b, kappa, residual: f(kappa).abs(), bracket_width: hi - lo }))
}
