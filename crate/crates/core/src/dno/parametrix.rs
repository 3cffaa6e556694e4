//! Explicit solutions of the frozen-coefficient boundary problem
//! `P u = ((1+η′²)∂_z² − 2iη′ξ∂_z − ξ²)u` on `[-1, 0]`.
//!
//! Dividing by `1+η′²` gives `(∂_z² − 2iaξ∂_z − (1+b)ξ²)u` with
//! `a = η′/(1+η′²)`, `b = −η′²/(1+η′²)` and `1+c = √(1+b−a²)`. The
//! characteristic roots are `iaξ ± ξ(1+c)`, so with `k = ξ(1+c)` and
//! `α = a/(1+c)`:
//!
//! `w₊ = e^{izaξ}(cosh((z+1)k) − iα sinh((z+1)k))/(cosh k − iα sinh k)`,
//! `w₋ = e^{i(z+1)aξ} sinh(zk)/(k(cosh k − iα sinh k))`,
//! `W = w₊w₋′ − w₊′w₋ = e^{i(2z+1)aξ}/(cosh k − iα sinh k)`.
//!
//! Hyperbolic functions are evaluated as `e^{−|k|}`-scaled combinations so
//! large `|ξ|` does not overflow.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

const I: C64 = C64::new(0.0, 1.0);

/// Frozen coefficients at one `(η′, ξ)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FundamentalData {
    pub eta_prime: f64,
    pub xi: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `|ξ|(1+c)`
    k: f64,
    /// `α sgn ξ`, folded so that `k >= 0`
    alpha: f64,
}

/// `(1 + iα)`-type combinations scaled by `e^{-k}`: returns
/// `e^{-k}(cosh(tk) − iα sinh(tk))` for `t ∈ [0, 1]`.
fn scaled_ch(k: f64, alpha: f64, t: f64) -> C64 {
    let e1 = (k * (t - 1.0)).exp();
    let e2 = (-k * (t + 1.0)).exp();
    0.5 * (C64::new(e1 + e2, 0.0) - I * alpha * (e1 - e2))
}

/// `e^{-k}(sinh(tk) − iα cosh(tk))`.
fn scaled_sh(k: f64, alpha: f64, t: f64) -> C64 {
    let e1 = (k * (t - 1.0)).exp();
    let e2 = (-k * (t + 1.0)).exp();
    0.5 * (C64::new(e1 - e2, 0.0) - I * alpha * (e1 + e2))
}

pub fn fundamental_solutions(eta_prime: f64, xi: f64) -> Result<FundamentalData> {
    let q = 1.0 + eta_prime * eta_prime;
    let a = eta_prime / q;
    let b = -eta_prime * eta_prime / q;
    let disc = 1.0 + b - a * a;
    if !(disc > 0.0) {
        return Err(Error::InvalidArgument(format!("1 + b − a² = {disc} is not positive")));
    }
    let c = disc.sqrt() - 1.0;
    let s = if xi < 0.0 { -1.0 } else { 1.0 };
    Ok(FundamentalData { eta_prime, xi, a, b, c, k: xi.abs() * (1.0 + c), alpha: s * a / (1.0 + c) })
}

impl FundamentalData {
    fn phase(&self, z: f64) -> C64 {
        C64::from_polar(1.0, z * self.a * self.xi)
    }

    /// `e^{-k}(cosh k − iα sinh k)`
    fn den(&self) -> C64 {
        scaled_ch(self.k, self.alpha, 1.0)
    }

    pub fn w_plus(&self, z: f64) -> C64 {
        self.phase(z) * scaled_ch(self.k, self.alpha, z + 1.0) / self.den()
    }

    pub fn dz_w_plus(&self, z: f64) -> C64 {
        let iax = I * self.a * self.xi;
        iax * self.w_plus(z) + self.phase(z) * self.k * scaled_sh(self.k, self.alpha, z + 1.0) / self.den()
    }

    pub fn w_minus(&self, z: f64) -> C64 {
        if self.k == 0.0 {
            return C64::new(z, 0.0);
        }
        // sinh(zk)e^{-k} for z <= 0
        let sh = 0.5 * ((self.k * (z - 1.0)).exp() - (-self.k * (z + 1.0)).exp());
        self.phase(z + 1.0) * sh / (self.k * self.den())
    }

    pub fn dz_w_minus(&self, z: f64) -> C64 {
        if self.k == 0.0 {
            return C64::new(1.0, 0.0);
        }
        let ch = 0.5 * ((self.k * (z - 1.0)).exp() + (-self.k * (z + 1.0)).exp());
        I * self.a * self.xi * self.w_minus(z) + self.phase(z + 1.0) * ch / self.den()
    }

    /// Closed-form Wronskian `w₊w₋′ − w₊′w₋`.
    pub fn wronskian(&self, z: f64) -> C64 {
        // e^{-k} scaling of the denominator is undone here
        self.phase(2.0 * z + 1.0) * (-self.k).exp() / self.den()
    }

    /// Residual of `(∂_z² − 2iaξ∂_z − (1+b)ξ²)u` with `u` given as a closure,
    /// by centred differences with step `h`.
    pub fn ode_residual(&self, u: impl Fn(f64) -> C64, z: f64, h: f64) -> C64 {
        let d2 = (u(z + h) - 2.0 * u(z) + u(z - h)) / (h * h);
        let d1 = (u(z + h) - u(z - h)) / (2.0 * h);
        d2 - 2.0 * I * self.a * self.xi * d1 - (1.0 + self.b) * self.xi * self.xi * u(z)
    }

    /// `K̃(z,z′) = (w₊(z)w₋(z′)1_{z<z′} + w₋(z)w₊(z′)1_{z>z′})/W(z′)`.
    pub fn k_tilde(&self, z: f64, zp: f64) -> C64 {
        let num = if z < zp { self.w_plus(z) * self.w_minus(zp) } else { self.w_minus(z) * self.w_plus(zp) };
        num / self.wronskian(zp)
    }

    /// `K⁰ = K̃/(1+η′²)`, the Green kernel of `P`.
    pub fn green(&self, z: f64, zp: f64) -> C64 {
        self.k_tilde(z, zp) / (1.0 + self.eta_prime * self.eta_prime)
    }

    /// `ξ tanh ξ + iaξ − ξ tanh ξ·η′²/(1+η′²)`: the expansion of `∂_zw₊(0)`
    /// up to terms of order `−∞`.
    pub fn dz_w_plus_expansion(&self) -> C64 {
        let q = 1.0 + self.eta_prime * self.eta_prime;
        let t = self.xi * self.xi.tanh();
        C64::new(t - t * self.eta_prime * self.eta_prime / q, self.a * self.xi)
    }
}

/// Closure form of the Green kernel at frozen `(η′, ξ)`.
pub fn green_kernel_var(eta_prime: f64, xi: f64) -> Result<impl Fn(f64, f64) -> C64> {
    let d = fundamental_solutions(eta_prime, xi)?;
    Ok(move |z: f64, zp: f64| d.green(z, zp))
}

/// Order −1 correction at the top: `(1+η′²)∂_z e¹_{+,1}|_{z=0}` from the
/// Green-kernel representation `e¹ = −|ξ|(sgn ξ − iη′)^{-2}η″ ∫K⁰ e⁰₊ dz′`,
/// integrated with composite Gauss–Legendre.
pub fn order_minus_one_top(eta_prime: f64, eta_second: f64, xi: f64) -> Result<C64> {
    if xi.abs() < 1.0 {
        return Err(Error::InvalidArgument("the order −1 correction is defined for |ξ| >= 1".into()));
    }
    let d = fundamental_solutions(eta_prime, xi)?;
    let gl = gauss_quad::legendre::GaussLegendre::new(std::num::NonZeroUsize::new(32).expect("nonzero"));
    let dwm0 = d.dz_w_minus(0.0);
    // the integrand decays like e^{2kz′}; panels are refined toward the top
    let mut edges = vec![-1.0];
    let mut z = -1.0;
    while z < 0.0 {
        let width = (0.25 / d.k.max(1.0)).max(0.25 * (-z)).min(0.25);
        z = (z + width).min(0.0);
        edges.push(z);
    }
    let mut acc = C64::new(0.0, 0.0);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for &(x, wt) in gl.as_node_weight_pairs() {
            let zp = 0.5 * (hi - lo) * x + 0.5 * (hi + lo);
            let wp = d.w_plus(zp);
            acc += 0.5 * (hi - lo) * wt * dwm0 * wp / d.wronskian(zp) * wp;
        }
    }
    let s = xi.signum();
    let pref = -xi.abs() * eta_second / (C64::new(s, -eta_prime) * C64::new(s, -eta_prime));
    Ok(pref * acc)
}

/// `−½η″(sgn ξ + iη′)²/(1+η′²)`.
pub fn order_minus_one_expected(eta_prime: f64, eta_second: f64, xi: f64) -> C64 {
    let z = C64::new(xi.signum(), eta_prime);
    -0.5 * eta_second * z * z / (1.0 + eta_prime * eta_prime)
}
