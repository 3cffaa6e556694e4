//! Real functions of the frequency variable ξ with exact derivatives.

use serde::{Deserialize, Serialize};

use super::jet::Jet;

/// Smooth low-frequency cutoff used by the dispersion multipliers:
/// 1 on `|ξ| <= 1/8`, 0 on `|ξ| >= 3/8`.
pub const CHI_INNER: f64 = 0.125;
pub const CHI_OUTER: f64 = 0.375;

/// A named ξ-multiplier family, closed under the operations the calculus
/// needs (products, sums, shifts, reflections, derivatives).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum XiFn {
    Const {
        value: f64,
    },
    /// `ξ^k`
    XiPow {
        k: u32,
    },
    /// `⟨ξ⟩^s = (1+ξ²)^{s/2}`
    JaPow {
        s: f64,
    },
    /// `(ξ tanh ξ)^{1/2}(1+κξ²)^{1/2}`, optionally times `1-χ(ξ)`.
    MKappa {
        kappa: f64,
        smoothed: bool,
    },
    TanhXi,
    /// `(ξ tanh ξ/(1+κξ²))^{1/4}(1-χ(ξ))`
    LambdaKappa {
        kappa: f64,
    },
    /// `sech(ξ/scale)`
    SechProfile {
        scale: f64,
    },
    /// `g(-ξ)`
    Reflect {
        g: Box<XiFn>,
    },
    /// `g(ξ + by)`
    Shift {
        g: Box<XiFn>,
        by: f64,
    },
    /// `g^{(k)}(ξ)`
    Deriv {
        g: Box<XiFn>,
        k: usize,
    },
    Scale {
        c: f64,
        g: Box<XiFn>,
    },
    Product {
        factors: Vec<XiFn>,
    },
    Sum {
        terms: Vec<XiFn>,
    },
}

impl XiFn {
    pub fn constant(value: f64) -> Self {
        XiFn::Const { value }
    }

    pub fn xi() -> Self {
        XiFn::XiPow { k: 1 }
    }

    pub fn xi_pow(k: u32) -> Self {
        XiFn::XiPow { k }
    }

    /// `ξ tanh ξ`, the symbol of `D tanh D`.
    pub fn xi_tanh_xi() -> Self {
        XiFn::Product { factors: vec![XiFn::xi(), XiFn::TanhXi] }
    }

    pub fn times(self, other: XiFn) -> Self {
        XiFn::Product { factors: vec![self, other] }
    }

    pub fn scaled(self, c: f64) -> Self {
        XiFn::Scale { c, g: Box::new(self) }
    }

    pub fn shifted(self, by: f64) -> Self {
        if by == 0.0 {
            return self;
        }
        XiFn::Shift { g: Box::new(self), by }
    }

    pub fn reflected(self) -> Self {
        XiFn::Reflect { g: Box::new(self) }
    }

    pub fn derivative(self, k: usize) -> Self {
        if k == 0 {
            return self;
        }
        XiFn::Deriv { g: Box::new(self), k }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        self.jet(xi, 0).value()
    }

    /// `k`-th derivative at `xi`.
    pub fn deriv_at(&self, xi: f64, k: usize) -> f64 {
        self.jet(xi, k).derivative(k)
    }

    /// Taylor jet of order `order` at `xi`.
    pub fn jet(&self, xi: f64, order: usize) -> Jet {
        match self {
            XiFn::Const { value } => Jet::constant(*value, order),
            XiFn::XiPow { k } => {
                let x = Jet::variable(xi, order);
                let mut acc = Jet::constant(1.0, order);
                for _ in 0..*k {
                    acc = &acc * &x;
                }
                acc
            }
            XiFn::JaPow { s } => {
                let x = Jet::variable(xi, order);
                (&x * &x).add_const(1.0).powf(0.5 * s)
            }
            XiFn::MKappa { kappa, smoothed } => even_jet(xi, order, |x0, d| m_kappa_jet(x0, d, *kappa, *smoothed)),
            XiFn::TanhXi => Jet::variable(xi, order).tanh(),
            XiFn::LambdaKappa { kappa } => even_jet(xi, order, |x0, d| lambda_kappa_jet(x0, d, *kappa)),
            XiFn::SechProfile { scale } => Jet::variable(xi, order).scale(1.0 / scale).sech(),
            XiFn::Reflect { g } => flip_odd(g.jet(-xi, order)),
            XiFn::Shift { g, by } => g.jet(xi + by, order),
            XiFn::Deriv { g, k } => g.jet(xi, order + k).differentiate(*k),
            XiFn::Scale { c, g } => g.jet(xi, order).scale(*c),
            XiFn::Product { factors } => {
                let mut acc = Jet::constant(1.0, order);
                for f in factors {
                    acc = &acc * &f.jet(xi, order);
                }
                acc
            }
            XiFn::Sum { terms } => {
                let mut acc = Jet::constant(0.0, order);
                for f in terms {
                    acc = &acc + &f.jet(xi, order);
                }
                acc
            }
        }
    }
}

fn flip_odd(mut j: Jet) -> Jet {
    for (k, c) in j.c.iter_mut().enumerate() {
        if k % 2 == 1 {
            *c = -*c;
        }
    }
    j
}

/// Evaluates an even function from its expansion on `ξ >= 0`.
fn even_jet(xi: f64, order: usize, f: impl Fn(f64, usize) -> Jet) -> Jet {
    if xi < 0.0 {
        flip_odd(f(-xi, order))
    } else {
        f(xi, order)
    }
}

/// `e^{-1/t}/(e^{-1/t}+e^{-1/(1-t)})` on `0 < t < 1`.
fn smooth_step_jet(t: &Jet) -> Jet {
    let one_minus = t.scale(-1.0).add_const(1.0);
    let a = t.recip().scale(-1.0).exp();
    let b = one_minus.recip().scale(-1.0).exp();
    a.div(&(&a + &b))
}

/// Jet of `1 - χ(ξ)` for `ξ >= 0`.
fn one_minus_chi_jet(x0: f64, order: usize) -> Jet {
    if x0 <= CHI_INNER {
        Jet::constant(0.0, order)
    } else if x0 >= CHI_OUTER {
        Jet::constant(1.0, order)
    } else {
        let t = Jet::variable(x0, order).add_const(-CHI_INNER).scale(1.0 / (CHI_OUTER - CHI_INNER));
        smooth_step_jet(&t)
    }
}

/// The low-frequency cutoff `χ(ξ)`.
pub fn dispersion_cutoff(xi: f64) -> f64 {
    1.0 - one_minus_chi_jet(xi.abs(), 0).value()
}

fn m_kappa_jet(x0: f64, order: usize, kappa: f64, smoothed: bool) -> Jet {
    if smoothed && x0 <= CHI_INNER {
        return Jet::constant(0.0, order);
    }
    if x0 == 0.0 {
        // one-sided expansion m(ξ) = ξ + (κ/2 - 1/6)ξ³ + O(ξ⁵) for ξ > 0
        let mut j = Jet::constant(0.0, order);
        if order >= 1 {
            j.c[1] = 1.0;
        }
        if order >= 3 {
            j.c[3] = 0.5 * kappa - 1.0 / 6.0;
        }
        return j;
    }
    let x = Jet::variable(x0, order);
    let q = (&x * &x.tanh()).powf(0.5);
    let r = (&x * &x).scale(kappa).add_const(1.0).powf(0.5);
    let m = &q * &r;
    if smoothed {
        &m * &one_minus_chi_jet(x0, order)
    } else {
        m
    }
}

fn lambda_kappa_jet(x0: f64, order: usize, kappa: f64) -> Jet {
    if x0 <= CHI_INNER {
        return Jet::constant(0.0, order);
    }
    let x = Jet::variable(x0, order);
    let num = &x * &x.tanh();
    let den = (&x * &x).scale(kappa).add_const(1.0);
    &num.div(&den).powf(0.25) * &one_minus_chi_jet(x0, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(g: &XiFn, x: f64, k: usize) -> f64 {
        // central differences with a coarse step are enough to catch sign or
        // factor mistakes in the jet recurrences
        let h: f64 = 1e-3;
        match k {
            1 => (g.eval(x + h) - g.eval(x - h)) / (2.0 * h),
            2 => (g.eval(x + h) - 2.0 * g.eval(x) + g.eval(x - h)) / (h * h),
            _ => unreachable!(),
        }
    }

    #[test]
    fn families_agree_with_difference_quotients() {
        let fams = vec![
            XiFn::xi_pow(3),
            XiFn::JaPow { s: 0.5 },
            XiFn::MKappa { kappa: 1.0, smoothed: true },
            XiFn::MKappa { kappa: 0.3, smoothed: false },
            XiFn::TanhXi,
            XiFn::LambdaKappa { kappa: 2.0 },
            XiFn::SechProfile { scale: 2.0 },
            XiFn::xi_tanh_xi().shifted(0.5),
            XiFn::TanhXi.reflected(),
            XiFn::JaPow { s: 1.5 }.derivative(1),
        ];
        for g in &fams {
            for &x in &[-3.3, -0.7, 0.3, 1.1, 4.0] {
                for k in 1..=2 {
                    let exact = g.deriv_at(x, k);
                    let approx = fd(g, x, k);
                    assert!((exact - approx).abs() < 1e-4 * (1.0 + exact.abs()), "{g:?} at {x}, k={k}: {exact} vs {approx}");
                }
            }
        }
    }

    #[test]
    fn m_kappa_values() {
        let m = XiFn::MKappa { kappa: 1.0, smoothed: true };
        assert_eq!(m.eval(0.0), 0.0);
        assert!((m.eval(1.0) - 1.2341752).abs() < 1e-7);
        assert_eq!(m.eval(2.0), XiFn::MKappa { kappa: 1.0, smoothed: false }.eval(2.0));
        assert_eq!(m.eval(-2.5), m.eval(2.5));
    }

    #[test]
    fn cutoff_is_one_then_zero() {
        assert_eq!(dispersion_cutoff(0.1), 1.0);
        assert_eq!(dispersion_cutoff(-0.4), 0.0);
        let mid = dispersion_cutoff(0.25);
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let g = XiFn::MKappa { kappa: 0.5, smoothed: true }.times(XiFn::xi()).shifted(-1.5);
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("m_kappa"));
        let back: XiFn = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
