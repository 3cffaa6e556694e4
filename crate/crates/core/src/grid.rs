//! Periodic fields on the circle `R/2πZ`.
//!
//! A field is stored by its Fourier coefficients in FFT order with the plain
//! normalization `u(x) = Σ c_n e^{inx}`, `c_n = (1/M) Σ_j u(x_j) e^{-inx_j}`.
//! Modes run over `-M/2+1 ..= M/2`. The single Nyquist slot stores the
//! amplitude of `cos(M/2 x)`, so the symmetric accessor [`PeriodicField::mode`]
//! splits it evenly between `±M/2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when validating reality, evenness and mean flags.
pub const FLAG_TOL: f64 = 1e-12;

struct Plans {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pad_fwd: Arc<dyn Fft<f64>>,
    pad_inv: Arc<dyn Fft<f64>>,
}

/// Equispaced sampling of the circle with `M` points.
#[derive(Clone)]
pub struct SpectralGrid {
    plans: Arc<Plans>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpectralGrid(M={})", self.plans.m)
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.plans.m == other.plans.m
    }
}

impl SpectralGrid {
    /// Builds a grid of `m` points. `m` must be even and at least 8.
    pub fn new(m: usize) -> Result<Self> {
        if m < 8 || m % 2 != 0 {
            return Err(Error::InvalidGrid(format!("M must be even and >= 8, got {m}")));
        }
        let mut planner = FftPlanner::new();
        let l = 3 * m / 2;
        Ok(Self {
            plans: Arc::new(Plans {
                m,
                fwd: planner.plan_fft_forward(m),
                inv: planner.plan_fft_inverse(m),
                pad_fwd: planner.plan_fft_forward(l),
                pad_inv: planner.plan_fft_inverse(l),
            }),
        })
    }

    pub fn m(&self) -> usize {
        self.plans.m
    }

    /// Highest stored mode `M/2`.
    pub fn nyquist(&self) -> i64 {
        (self.plans.m / 2) as i64
    }

    pub fn x(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.plans.m as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m()).map(|j| self.x(j)).collect()
    }

    /// Storage slot of mode `n` (taken modulo `M`).
    pub fn index(&self, n: i64) -> usize {
        n.rem_euclid(self.m() as i64) as usize
    }

    /// Mode number held in storage slot `j`; slot `M/2` maps to `+M/2`.
    pub fn mode_of(&self, j: usize) -> i64 {
        let m = self.m();
        if j <= m / 2 {
            j as i64
        } else {
            j as i64 - m as i64
        }
    }

    /// Padded length used by dealiased products.
    pub fn padded_len(&self) -> usize {
        3 * self.m() / 2
    }

    pub(crate) fn to_coeffs(&self, samples: &mut [C64]) {
        self.plans.fwd.process(samples);
        let s = 1.0 / self.m() as f64;
        samples.iter_mut().for_each(|c| *c *= s);
    }

    pub(crate) fn to_samples(&self, coeffs: &mut [C64]) {
        self.plans.inv.process(coeffs);
    }

    /// Spreads coefficients onto the padded grid and returns padded samples.
    pub(crate) fn pad_samples(&self, coeffs: &[C64]) -> Vec<C64> {
        let l = self.padded_len();
        let n = self.nyquist();
        let mut buf = vec![C64::new(0.0, 0.0); l];
        for (j, &c) in coeffs.iter().enumerate() {
            let k = self.mode_of(j);
            if k == n {
                buf[n as usize] += 0.5 * c;
                buf[l - n as usize] += 0.5 * c;
            } else {
                buf[k.rem_euclid(l as i64) as usize] = c;
            }
        }
        self.plans.pad_inv.process(&mut buf);
        buf
    }

    /// Inverse of [`Self::pad_samples`] followed by truncation to the base grid.
    pub(crate) fn unpad_coeffs(&self, mut buf: Vec<C64>) -> Vec<C64> {
        let l = self.padded_len();
        self.plans.pad_fwd.process(&mut buf);
        let s = 1.0 / l as f64;
        let n = self.nyquist();
        let mut out = vec![C64::new(0.0, 0.0); self.m()];
        for (j, slot) in out.iter_mut().enumerate() {
            let k = self.mode_of(j);
            *slot = if k == n { (buf[n as usize] + buf[l - n as usize]) * s } else { buf[k.rem_euclid(l as i64) as usize] * s };
        }
        out
    }
}

/// How the zero mode is treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanConvention {
    /// Mode 0 is identically zero.
    ZeroMean,
    /// Mode 0 is ignored by norms and comparisons.
    ModConstants,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub is_real: bool,
    pub is_even: bool,
    pub mean: MeanConvention,
}

impl Flags {
    pub const fn new(is_real: bool, is_even: bool, mean: MeanConvention) -> Self {
        Self { is_real, is_even, mean }
    }

    pub const fn free() -> Self {
        Self::new(false, false, MeanConvention::Free)
    }

    pub const fn real() -> Self {
        Self::new(true, false, MeanConvention::Free)
    }

    pub const fn real_even() -> Self {
        Self::new(true, true, MeanConvention::Free)
    }

    /// Flags of a product of fields carrying `self` and `other`.
    pub fn product(self, other: Flags) -> Flags {
        Flags::new(self.is_real && other.is_real, self.is_even && other.is_even, MeanConvention::Free)
    }

    pub fn with_mean(self, mean: MeanConvention) -> Flags {
        Flags { mean, ..self }
    }

    /// Header tag used in CSV dumps.
    pub fn tag(&self) -> String {
        let mean = match self.mean {
            MeanConvention::ZeroMean => "zero_mean",
            MeanConvention::ModConstants => "mod_constants",
            MeanConvention::Free => "free",
        };
        format!("real={};even={};mean={}", self.is_real, self.is_even, mean)
    }
}

/// Symmetry of a Fourier multiplier, used to propagate flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiplierSymmetry {
    /// `g(-ξ) = g(ξ)`.
    pub even: bool,
    /// `g(-ξ) = conj(g(ξ))`, i.e. the multiplier maps real fields to real fields.
    pub real_preserving: bool,
}

impl MultiplierSymmetry {
    pub const EVEN_REAL: Self = Self { even: true, real_preserving: true };
    pub const NONE: Self = Self { even: false, real_preserving: false };
}

/// Amplitudes of a field against `φ_n = cos(nx)/√π` and of its conjugate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModePair {
    pub n: i64,
    pub plus: C64,
    pub minus: C64,
}

/// Measured deviations from the structural flags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub real_deviation: f64,
    pub even_deviation: f64,
    pub mean: f64,
    pub max_magnitude: f64,
    pub is_real: bool,
    pub is_even: bool,
    pub is_zero_mean: bool,
}

#[derive(Clone, Debug)]
pub struct PeriodicField {
    grid: SpectralGrid,
    coeffs: Vec<C64>,
    flags: Flags,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

impl PeriodicField {
    pub fn zeros(grid: &SpectralGrid, flags: Flags) -> Self {
        Self { grid: grid.clone(), coeffs: vec![zero(); grid.m()], flags }
    }

    /// Builds a field from FFT-ordered coefficients, validating `flags`.
    pub fn from_coeffs(grid: &SpectralGrid, coeffs: Vec<C64>, flags: Flags) -> Result<Self> {
        if coeffs.len() != grid.m() {
            return Err(Error::GridMismatch { left: grid.m(), right: coeffs.len() });
        }
        let mut f = Self { grid: grid.clone(), coeffs, flags };
        f.validate()?;
        f.resymmetrize();
        Ok(f)
    }

    /// Builds a field whose flags hold by construction; they are enforced by
    /// resymmetrizing instead of being validated against roundoff-sized data.
    pub(crate) fn from_coeffs_enforced(grid: &SpectralGrid, coeffs: Vec<C64>, flags: Flags) -> Self {
        let mut f = Self { grid: grid.clone(), coeffs, flags };
        f.resymmetrize();
        f
    }

    pub fn from_samples(grid: &SpectralGrid, samples: &[C64], flags: Flags) -> Result<Self> {
        if samples.len() != grid.m() {
            return Err(Error::GridMismatch { left: grid.m(), right: samples.len() });
        }
        if flags.is_real {
            let scale = samples.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let dev = samples.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            if dev > FLAG_TOL * scale {
                return Err(Error::FlagViolation { flag: "is_real", deviation: dev / scale });
            }
        }
        let mut buf = samples.to_vec();
        grid.to_coeffs(&mut buf);
        Self::from_coeffs(grid, buf, flags)
    }

    pub fn from_real_samples(grid: &SpectralGrid, samples: &[f64], flags: Flags) -> Result<Self> {
        let s: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
        Self::from_samples(grid, &s, flags)
    }

    /// Samples a real function on the grid.
    pub fn from_fn(grid: &SpectralGrid, f: impl Fn(f64) -> f64, flags: Flags) -> Result<Self> {
        let s: Vec<f64> = grid.points().into_iter().map(f).collect();
        Self::from_real_samples(grid, &s, flags)
    }

    /// Builds a field from `(n, c_n)` pairs with `|n| <= M/2`.
    ///
    /// Entries at `±M/2` are both folded into the Nyquist slot.
    pub fn from_modes(grid: &SpectralGrid, modes: &[(i64, C64)], flags: Flags) -> Result<Self> {
        let nyq = grid.nyquist();
        let mut c = vec![zero(); grid.m()];
        for &(n, v) in modes {
            if n.abs() > nyq {
                return Err(Error::ModeOutOfRange { n, max: nyq });
            }
            c[grid.index(n)] += v;
        }
        Self::from_coeffs(grid, c, flags)
    }

    fn scale(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let r = self.check_symmetry();
        let scale = r.max_magnitude.max(f64::MIN_POSITIVE);
        if self.flags.is_real && r.real_deviation > FLAG_TOL * scale {
            return Err(Error::FlagViolation { flag: "is_real", deviation: r.real_deviation / scale });
        }
        if self.flags.is_even && r.even_deviation > FLAG_TOL * scale {
            return Err(Error::FlagViolation { flag: "is_even", deviation: r.even_deviation / scale });
        }
        if self.flags.mean == MeanConvention::ZeroMean && r.mean > FLAG_TOL * scale {
            return Err(Error::FlagViolation { flag: "zero_mean", deviation: r.mean / scale });
        }
        Ok(())
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn flags(&self) -> Flags {
        self.flags
    }

    /// FFT-ordered storage.
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    /// Coefficient of `e^{inx}` for `|n| <= M/2`, splitting the Nyquist slot.
    pub fn mode(&self, n: i64) -> C64 {
        let nyq = self.grid.nyquist();
        if n.abs() > nyq {
            zero()
        } else if n.abs() == nyq {
            0.5 * self.coeffs[self.grid.index(nyq)]
        } else {
            self.coeffs[self.grid.index(n)]
        }
    }

    pub fn samples(&self) -> Vec<C64> {
        let mut b = self.coeffs.clone();
        self.grid.to_samples(&mut b);
        b
    }

    pub fn real_samples(&self) -> Vec<f64> {
        self.samples().into_iter().map(|z| z.re).collect()
    }

    /// Trigonometric interpolant at an arbitrary point.
    pub fn eval_at(&self, x: f64) -> C64 {
        let nyq = self.grid.nyquist();
        let mut acc = zero();
        for n in -nyq..=nyq {
            let c = self.mode(n);
            if c != zero() {
                acc += c * C64::from_polar(1.0, n as f64 * x);
            }
        }
        acc
    }

    /// Average value `(1/2π)∫u`.
    pub fn mean(&self) -> C64 {
        self.coeffs[0]
    }

    pub fn linf(&self) -> f64 {
        self.samples().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.scale()
    }

    /// Replaces the flags, validating them against the data.
    pub fn with_flags(mut self, flags: Flags) -> Result<Self> {
        self.flags = flags;
        self.validate()?;
        self.resymmetrize();
        Ok(self)
    }

    /// Drops the mean and marks the field as zero-mean.
    pub fn project_mean_out(mut self) -> Self {
        self.coeffs[0] = zero();
        self.flags.mean = MeanConvention::ZeroMean;
        self
    }

    /// Enforces the declared flags exactly by averaging with reflected and
    /// conjugated copies.
    pub fn resymmetrize(&mut self) {
        let m = self.grid.m();
        if self.flags.is_even {
            for j in 1..m / 2 {
                let avg = 0.5 * (self.coeffs[j] + self.coeffs[m - j]);
                self.coeffs[j] = avg;
                self.coeffs[m - j] = avg;
            }
        }
        if self.flags.is_real {
            self.coeffs[0].im = 0.0;
            self.coeffs[m / 2].im = 0.0;
            for j in 1..m / 2 {
                let avg = 0.5 * (self.coeffs[j] + self.coeffs[m - j].conj());
                self.coeffs[j] = avg;
                self.coeffs[m - j] = avg.conj();
            }
        }
        if self.flags.mean == MeanConvention::ZeroMean {
            self.coeffs[0] = zero();
        }
    }

    pub fn check_symmetry(&self) -> SymmetryReport {
        let m = self.grid.m();
        let c = &self.coeffs;
        let mut real_dev = c[0].im.abs().max(c[m / 2].im.abs());
        let mut even_dev: f64 = 0.0;
        for j in 1..m / 2 {
            real_dev = real_dev.max((c[j] - c[m - j].conj()).norm());
            even_dev = even_dev.max((c[j] - c[m - j]).norm());
        }
        let scale = self.scale();
        let tol = FLAG_TOL * scale.max(f64::MIN_POSITIVE);
        SymmetryReport {
            real_deviation: real_dev,
            even_deviation: even_dev,
            mean: c[0].norm(),
            max_magnitude: scale,
            is_real: real_dev <= tol,
            is_even: even_dev <= tol,
            is_zero_mean: c[0].norm() <= tol,
        }
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { left: self.grid.m(), right: other.grid.m() });
        }
        Ok(())
    }

    fn merged_flags(&self, other: &Self) -> Flags {
        let mean = if self.flags.mean == other.flags.mean { self.flags.mean } else { MeanConvention::Free };
        Flags::new(self.flags.is_real && other.flags.is_real, self.flags.is_even && other.flags.is_even, mean)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid.clone(), coeffs, flags: self.merged_flags(other) })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid.clone(), coeffs, flags: self.merged_flags(other) })
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + alpha * b).collect();
        Ok(Self { grid: self.grid.clone(), coeffs, flags: self.merged_flags(other) })
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { grid: self.grid.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect(), flags: self.flags }
    }

    /// Multiplication by a complex constant; reality survives only for real `s`.
    pub fn scale_complex(&self, s: C64) -> Self {
        let mut flags = self.flags;
        flags.is_real &= s.im == 0.0;
        Self { grid: self.grid.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect(), flags }
    }

    /// Complex conjugate field `ū`.
    pub fn conj(&self) -> Self {
        let coeffs = (0..self.grid.m()).map(|j| self.coeffs[(self.grid.m() - j) % self.grid.m()].conj()).collect();
        Self { grid: self.grid.clone(), coeffs, flags: self.flags }
    }

    /// Reflection `u(-x)`.
    pub fn reflect(&self) -> Self {
        let coeffs = (0..self.grid.m()).map(|j| self.coeffs[(self.grid.m() - j) % self.grid.m()]).collect();
        Self { grid: self.grid.clone(), coeffs, flags: self.flags }
    }

    /// Real and imaginary parts as real fields.
    pub fn re_im(&self) -> (Self, Self) {
        let c = self.conj();
        let mut re = self.add(&c).expect("same grid").scale_real(0.5);
        let mut im = self.sub(&c).expect("same grid").scale_complex(C64::new(0.0, -0.5));
        re.flags = Flags::new(true, self.flags.is_even, self.flags.mean);
        im.flags = Flags::new(true, self.flags.is_even, self.flags.mean);
        re.resymmetrize();
        im.resymmetrize();
        (re, im)
    }

    /// Fourier multiplier `c_n -> g(n) c_n`; the Nyquist slot uses
    /// `(g(N) + g(-N))/2` so that it stays a cosine.
    pub fn apply_multiplier(&self, g: impl Fn(f64) -> C64, sym: MultiplierSymmetry) -> Self {
        let nyq = self.grid.nyquist();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let n = self.grid.mode_of(j);
                if n == nyq {
                    c * 0.5 * (g(nyq as f64) + g(-nyq as f64))
                } else {
                    c * g(n as f64)
                }
            })
            .collect();
        let mut flags = self.flags;
        flags.is_even &= sym.even;
        flags.is_real &= sym.real_preserving;
        if flags.mean == MeanConvention::ZeroMean && g(0.0).norm() != 0.0 && self.coeffs[0].norm() != 0.0 {
            flags.mean = MeanConvention::Free;
        }
        let mut out = Self { grid: self.grid.clone(), coeffs, flags };
        out.resymmetrize();
        out
    }

    /// Real-valued even multiplier convenience wrapper.
    pub fn apply_real_multiplier(&self, g: impl Fn(f64) -> f64) -> Self {
        self.apply_multiplier(|x| C64::new(g(x), 0.0), MultiplierSymmetry::EVEN_REAL)
    }

    /// `k`-th derivative.
    pub fn derivative(&self, k: u32) -> Self {
        let mut out = self.apply_multiplier(|x| C64::new(0.0, x).powu(k), MultiplierSymmetry { even: k % 2 == 0, real_preserving: true });
        if k > 0 {
            out.flags.mean = MeanConvention::ZeroMean;
            out.coeffs[0] = zero();
        }
        if k % 2 == 1 {
            out.flags.is_even = false;
        } else {
            out.flags.is_even = self.flags.is_even;
        }
        out
    }

    /// Zero-mean primitive; the mean of `self` is discarded.
    pub fn antiderivative(&self) -> Self {
        let mut out =
            self.apply_multiplier(|x| if x == 0.0 { zero() } else { C64::new(0.0, -1.0 / x) }, MultiplierSymmetry { even: false, real_preserving: true });
        out.coeffs[0] = zero();
        out.flags.mean = MeanConvention::ZeroMean;
        out
    }

    /// Dealiased product using 3/2 zero padding.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let a = self.grid.pad_samples(&self.coeffs);
        let b = self.grid.pad_samples(&other.coeffs);
        let prod: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let coeffs = self.grid.unpad_coeffs(prod);
        let mut out = Self { grid: self.grid.clone(), coeffs, flags: self.flags.product(other.flags) };
        out.resymmetrize();
        Ok(out)
    }

    /// Product of several fields, evaluated once on the padded grid.
    pub fn product_many(fields: &[&Self]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
        let mut acc = first.grid.pad_samples(&first.coeffs);
        let mut flags = first.flags;
        for f in &fields[1..] {
            first.same_grid(f)?;
            let s = f.grid.pad_samples(&f.coeffs);
            acc.iter_mut().zip(&s).for_each(|(a, b)| *a *= b);
            flags = flags.product(f.flags);
        }
        let coeffs = first.grid.unpad_coeffs(acc);
        let mut out = Self { grid: first.grid.clone(), coeffs, flags: flags.with_mean(MeanConvention::Free) };
        out.resymmetrize();
        Ok(out)
    }

    /// Applies a pointwise nonlinearity on the padded grid and truncates.
    ///
    /// `preserves_real` and `preserves_even` describe `f` and drive flags.
    pub fn map_dealiased(&self, f: impl Fn(C64) -> C64, preserves_real: bool) -> Self {
        let mut s = self.grid.pad_samples(&self.coeffs);
        s.iter_mut().for_each(|z| *z = f(*z));
        let coeffs = self.grid.unpad_coeffs(s);
        let flags = Flags::new(self.flags.is_real && preserves_real, self.flags.is_even, MeanConvention::Free);
        let mut out = Self { grid: self.grid.clone(), coeffs, flags };
        out.resymmetrize();
        out
    }

    /// Real nonlinearity applied to a real field.
    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> Self {
        self.map_dealiased(|z| C64::new(f(z.re), 0.0), true)
    }

    /// `∫ u conj(v) dx` over one period.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.same_grid(other)?;
        let nyq = self.grid.nyquist();
        let mut acc = zero();
        for n in -nyq..=nyq {
            acc += self.mode(n) * other.mode(n).conj();
        }
        Ok(2.0 * PI * acc)
    }

    /// `L²` norm over one period.
    pub fn l2(&self) -> f64 {
        self.inner(self).expect("same grid").re.max(0.0).sqrt()
    }

    /// Homogeneous Sobolev norm `(Σ_{n>=1} n^{2s} ‖Π_n u‖²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        if self.flags.mean == MeanConvention::Free && self.coeffs[0].norm() > FLAG_TOL * self.scale().max(f64::MIN_POSITIVE) {
            return Err(Error::IllDefinedNorm(format!("free mean convention with mean {:.3e}", self.coeffs[0].norm())));
        }
        let nyq = self.grid.nyquist();
        let mut acc = 0.0;
        for n in 1..=nyq {
            let w = (n as f64).powf(2.0 * s);
            acc += w * 2.0 * PI * (self.mode(n).norm_sqr() + self.mode(-n).norm_sqr());
        }
        Ok(acc.sqrt())
    }

    /// Inhomogeneous norm `(Σ_n <n>^{2s} |c_n|² 2π)^{1/2}` including mode 0.
    pub fn sobolev_norm_inhom(&self, s: f64) -> f64 {
        let nyq = self.grid.nyquist();
        let mut acc = 0.0;
        for n in -nyq..=nyq {
            let w = (1.0 + (n * n) as f64).powf(s);
            acc += w * 2.0 * PI * self.mode(n).norm_sqr();
        }
        acc.sqrt()
    }

    /// `Π_n u`: the part of `u` on modes `±n`.
    pub fn project_mode(&self, n: i64) -> Result<Self> {
        let nyq = self.grid.nyquist();
        if n < 1 || n > nyq {
            return Err(Error::ModeOutOfRange { n, max: nyq });
        }
        let mut coeffs = vec![zero(); self.grid.m()];
        coeffs[self.grid.index(n)] = self.coeffs[self.grid.index(n)];
        coeffs[self.grid.index(-n)] = self.coeffs[self.grid.index(-n)];
        let flags = self.flags.with_mean(MeanConvention::ZeroMean);
        Ok(Self { grid: self.grid.clone(), coeffs, flags })
    }

    /// Amplitudes against `φ_n = cos(nx)/√π` of `u` (plus) and `ū` (minus).
    pub fn mode_pair(&self, n: i64) -> Result<ModePair> {
        let nyq = self.grid.nyquist();
        if n < 1 || n > nyq {
            return Err(Error::ModeOutOfRange { n, max: nyq });
        }
        let plus = PI.sqrt() * (self.mode(n) + self.mode(-n));
        let minus = PI.sqrt() * (self.mode(-n).conj() + self.mode(n).conj());
        Ok(ModePair { n, plus, minus })
    }

    /// Max coefficient distance, ignoring mode 0 when either side works
    /// modulo constants.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let skip0 = self.flags.mean == MeanConvention::ModConstants || other.flags.mean == MeanConvention::ModConstants;
        Ok(self.coeffs.iter().zip(&other.coeffs).enumerate().filter(|(j, _)| !(skip0 && *j == 0)).map(|(_, (a, b))| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Same data on a finer or coarser grid (zero padding or truncation).
    pub fn resample(&self, grid: &SpectralGrid) -> Self {
        let nyq_new = grid.nyquist();
        let mut coeffs = vec![zero(); grid.m()];
        let nyq_old = self.grid.nyquist();
        let top = nyq_old.min(nyq_new);
        for n in -top..=top {
            coeffs[grid.index(n)] += self.mode(n);
        }
        let mut out = Self { grid: grid.clone(), coeffs, flags: self.flags };
        out.resymmetrize();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> SpectralGrid {
        SpectralGrid::new(m).unwrap()
    }

    #[test]
    fn rejects_odd_or_tiny_grids() {
        assert!(SpectralGrid::new(7).is_err());
        assert!(SpectralGrid::new(6).is_err());
        assert!(SpectralGrid::new(8).is_ok());
    }

    #[test]
    fn constant_with_zero_mean_flag_is_rejected() {
        let g = grid(16);
        let r = PeriodicField::from_real_samples(&g, &[1.0; 16], Flags::new(true, true, MeanConvention::ZeroMean));
        assert!(matches!(r, Err(Error::FlagViolation { flag: "zero_mean", .. })));
    }

    #[test]
    fn cosine_has_half_coefficients() {
        let g = grid(16);
        let u = PeriodicField::from_fn(&g, f64::cos, Flags::real_even()).unwrap();
        for n in -7i64..=8 {
            let want = if n.abs() == 1 { 0.5 } else { 0.0 };
            assert!((u.mode(n) - C64::new(want, 0.0)).norm() < 1e-15, "mode {n}");
        }
    }

    #[test]
    fn modes_reproduce_cos3() {
        let g = grid(16);
        let u = PeriodicField::from_modes(&g, &[(3, C64::new(0.5, 0.0)), (-3, C64::new(0.5, 0.0))], Flags::real_even()).unwrap();
        for (j, v) in u.real_samples().iter().enumerate() {
            assert!((v - (3.0 * g.x(j)).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn complex_samples_with_real_flag_rejected() {
        let g = grid(8);
        let s = vec![C64::new(0.0, 1.0); 8];
        assert!(PeriodicField::from_samples(&g, &s, Flags::real()).is_err());
    }

    #[test]
    fn projector_examples() {
        let g = grid(32);
        let u = PeriodicField::from_fn(&g, |x| (2.0 * x).cos(), Flags::real_even()).unwrap();
        assert!(u.project_mode(2).unwrap().distance(&u).unwrap() < 1e-15);
        assert!(u.project_mode(3).unwrap().max_abs_coeff() < 1e-15);
        let v = PeriodicField::from_fn(&g, |x| x.cos() + (4.0 * x).cos(), Flags::real_even()).unwrap();
        let p = v.mode_pair(4).unwrap();
        assert!((p.plus.re - PI.sqrt()).abs() < 1e-14);
        assert!((p.minus - p.plus.conj()).norm() < 1e-15);
        assert!(v.project_mode(0).is_err());
        assert!(v.project_mode(17).is_err());
    }

    #[test]
    fn sobolev_examples() {
        let g = grid(32);
        let flags = Flags::new(true, true, MeanConvention::ZeroMean);
        let u = PeriodicField::from_fn(&g, f64::cos, flags).unwrap();
        assert!((u.sobolev_norm(0.0).unwrap() - PI.sqrt()).abs() < 1e-14);
        let v = PeriodicField::from_fn(&g, |x| (2.0 * x).cos(), flags).unwrap();
        assert!((v.sobolev_norm(1.0).unwrap() - 2.0 * PI.sqrt()).abs() < 1e-13);
        assert_eq!(PeriodicField::zeros(&g, flags).sobolev_norm(3.0).unwrap(), 0.0);
        let w = PeriodicField::from_fn(&g, |x| 1.0 + x.cos(), Flags::real_even()).unwrap();
        assert!(w.sobolev_norm(0.0).is_err());
    }

    #[test]
    fn multiplier_examples() {
        let g = grid(32);
        let u = PeriodicField::from_fn(&g, f64::cos, Flags::real_even()).unwrap();
        let du = u.apply_multiplier(|x| C64::new(0.0, x), MultiplierSymmetry { even: false, real_preserving: true });
        for (j, v) in du.real_samples().iter().enumerate() {
            assert!((v + g.x(j).sin()).abs() < 1e-14);
        }
        let c2 = PeriodicField::from_fn(&g, |x| (2.0 * x).cos(), Flags::real_even()).unwrap();
        let t = c2.apply_real_multiplier(|x| x * x.tanh());
        assert!((t.mode(2).re * 2.0 - 1.9280552).abs() < 1e-7);
        assert!(t.flags().is_even && t.flags().is_real);
        assert!(u.apply_real_multiplier(|_| 1.0).distance(&u).unwrap() == 0.0);
    }

    #[test]
    fn symmetry_reports() {
        let g = grid(16);
        let c3 = PeriodicField::from_fn(&g, |x| (3.0 * x).cos(), Flags::real()).unwrap().check_symmetry();
        assert!(c3.is_real && c3.is_even && c3.is_zero_mean);
        let s1 = PeriodicField::from_fn(&g, f64::sin, Flags::real()).unwrap().check_symmetry();
        assert!(s1.is_real && !s1.is_even);
        let ic: Vec<C64> = g.points().iter().map(|x| C64::new(0.0, x.cos())).collect();
        let r = PeriodicField::from_samples(&g, &ic, Flags::free()).unwrap().check_symmetry();
        assert!(!r.is_real);
    }

    #[test]
    fn dealiased_product_is_exact_for_band_limited_squares() {
        let g = grid(16);
        let u = PeriodicField::from_fn(&g, |x| (3.0 * x).cos(), Flags::real_even()).unwrap();
        let p = u.product(&u).unwrap();
        // cos²(3x) = (1 + cos 6x)/2
        assert!((p.mode(0).re - 0.5).abs() < 1e-15);
        assert!((p.mode(6).re - 0.25).abs() < 1e-15);
        // high products are truncated, not aliased
        let v = PeriodicField::from_fn(&g, |x| (6.0 * x).cos(), Flags::real_even()).unwrap();
        let q = v.product(&v).unwrap();
        assert!(q.mode(4).norm() < 1e-15);
        assert!((q.mode(0).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nyquist_behaves_as_cosine() {
        let g = grid(8);
        let u = PeriodicField::from_fn(&g, |x| (4.0 * x).cos(), Flags::real_even()).unwrap();
        assert!((u.mode(4).re - 0.5).abs() < 1e-15 && (u.mode(-4).re - 0.5).abs() < 1e-15);
        assert!(u.derivative(1).max_abs_coeff() < 1e-15);
        assert!((u.l2() - PI.sqrt()).abs() < 1e-14);
        assert!((u.eval_at(0.3) - C64::new((1.2f64).cos(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn antiderivative_inverts_derivative() {
        let g = grid(32);
        let u = PeriodicField::from_fn(&g, |x| (2.0 * x).sin() + 0.3 * (5.0 * x).cos(), Flags::real()).unwrap();
        let back = u.antiderivative().derivative(1);
        assert!(back.distance(&u).unwrap() < 1e-14);
    }
}
