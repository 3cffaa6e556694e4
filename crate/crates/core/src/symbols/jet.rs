//! Truncated Taylor series ("jets") used to get exact ξ-derivatives of the
//! multiplier families without finite differences.

use std::ops::{Add, Mul, Neg, Sub};

/// Taylor coefficients `c_k = f^{(k)}(x₀)/k!` for `k <= order`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub c: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Self { c }
    }

    /// The identity function expanded at `x0`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = x0;
        if order > 0 {
            c[1] = 1.0;
        }
        Self { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `k`-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        if k > self.order() {
            return 0.0;
        }
        self.c[k] * factorial(k)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn add_const(&self, s: f64) -> Self {
        let mut c = self.c.clone();
        c[0] += s;
        Self { c }
    }

    pub fn recip(&self) -> Self {
        let d = self.order();
        let mut b = vec![0.0; d + 1];
        b[0] = 1.0 / self.c[0];
        for k in 1..=d {
            let s: f64 = (1..=k).map(|j| self.c[j] * b[k - j]).sum();
            b[k] = -s / self.c[0];
        }
        Self { c: b }
    }

    pub fn div(&self, other: &Self) -> Self {
        self * &other.recip()
    }

    pub fn exp(&self) -> Self {
        let d = self.order();
        let mut b = vec![0.0; d + 1];
        b[0] = self.c[0].exp();
        for k in 1..=d {
            let s: f64 = (1..=k).map(|j| j as f64 * self.c[j] * b[k - j]).sum();
            b[k] = s / k as f64;
        }
        Self { c: b }
    }

    /// `self^r`; requires a positive constant term.
    pub fn powf(&self, r: f64) -> Self {
        let d = self.order();
        let a0 = self.c[0];
        let mut b = vec![0.0; d + 1];
        b[0] = a0.powf(r);
        for k in 1..=d {
            let s: f64 = (1..=k).map(|j| ((r + 1.0) * j as f64 - k as f64) * self.c[j] * b[k - j]).sum();
            b[k] = s / (k as f64 * a0);
        }
        Self { c: b }
    }

    pub fn tanh(&self) -> Self {
        let d = self.order();
        let mut t = vec![0.0; d + 1];
        let mut s = vec![0.0; d + 1];
        t[0] = stable_tanh(self.c[0]);
        s[0] = 1.0 - t[0] * t[0];
        for k in 1..=d {
            let acc: f64 = (1..=k).map(|j| j as f64 * self.c[j] * s[k - j]).sum();
            t[k] = acc / k as f64;
            s[k] = -(0..=k).map(|i| t[i] * t[k - i]).sum::<f64>();
        }
        Self { c: t }
    }

    /// `sech(self)`, computed as `2e^{-|a|}/(1+e^{-2|a|})` on the constant term.
    pub fn sech(&self) -> Self {
        let sign = if self.c[0] < 0.0 { -1.0 } else { 1.0 };
        let a = self.scale(sign);
        let e = a.scale(-1.0).exp();
        let e2 = a.scale(-2.0).exp().add_const(1.0);
        e.scale(2.0).div(&e2)
    }

    /// Shifts the expansion to the `k`-th derivative: returns the jet of `f^{(k)}`
    /// truncated at `order() - k`.
    pub fn differentiate(&self, k: usize) -> Self {
        let d = self.order();
        assert!(k <= d, "jet too short to differentiate");
        let c = (0..=d - k).map(|m| self.c[k + m] * falling(k + m, k)).collect();
        Self { c }
    }
}

pub(crate) fn stable_tanh(a: f64) -> f64 {
    if a < 0.0 {
        return -stable_tanh(-a);
    }
    let e = (-2.0 * a).exp();
    (1.0 - e) / (1.0 + e)
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `n(n-1)…(n-k+1)`
fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        Jet { c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        Jet { c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let d = self.order().min(o.order());
        let c = (0..=d).map(|k| (0..=k).map(|j| self.c[j] * o.c[k - j]).sum()).collect();
        Jet { c }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}
