//! Admissible cutoff `χ(ξ′,ξ) = χ̃(ξ′/⟨ξ⟩)` for the Bony–Weyl quantization.

use std::sync::Arc;

use crate::error::{Error, Result};

const TABLE_LEN: usize = 10_000;

/// Smooth even bump `χ̃` with `χ̃ = 1` on `|r| <= δ/2` and `χ̃ = 0` on `|r| >= δ`.
///
/// The transition is `1 - S(t)` with `t = (|r| - δ/2)/(δ/2)` and `S` the
/// normalized primitive of `exp(-1/(4t(1-t)))`, tabulated once and read back
/// with cubic Hermite interpolation.
#[derive(Clone, Debug)]
pub struct CutoffProfile {
    delta: f64,
    table: Arc<StepTable>,
}

#[derive(Debug)]
struct StepTable {
    value: Vec<f64>,
    slope: Vec<f64>,
}

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (4.0 * t * (1.0 - t))).exp()
    }
}

impl StepTable {
    fn build() -> Self {
        let h = 1.0 / TABLE_LEN as f64;
        let mut value = vec![0.0; TABLE_LEN + 1];
        // Simpson on each cell, using the midpoint
        for i in 0..TABLE_LEN {
            let a = i as f64 * h;
            let cell = h / 6.0 * (bump(a) + 4.0 * bump(a + 0.5 * h) + bump(a + h));
            value[i + 1] = value[i] + cell;
        }
        let total = value[TABLE_LEN];
        value.iter_mut().for_each(|v| *v /= total);
        let slope = (0..=TABLE_LEN).map(|i| bump(i as f64 * h) / total).collect();
        Self { value, slope }
    }

    fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let h = 1.0 / TABLE_LEN as f64;
        let i = ((t / h) as usize).min(TABLE_LEN - 1);
        let s = t / h - i as f64;
        let (y0, y1) = (self.value[i], self.value[i + 1]);
        let (d0, d1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self::new(0.4).expect("default delta is admissible")
    }
}

impl CutoffProfile {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("cutoff delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { delta, table: Arc::new(StepTable::build()) })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `χ̃(r)`.
    pub fn profile(&self, r: f64) -> f64 {
        let half = 0.5 * self.delta;
        let t = (r.abs() - half) / half;
        1.0 - self.table.eval(t)
    }

    /// `χ(ξ′, ξ) = χ̃(ξ′/⟨ξ⟩)`.
    pub fn eval(&self, xi_prime: f64, xi: f64) -> f64 {
        self.profile(xi_prime / (1.0 + xi * xi).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let c = CutoffProfile::default();
        assert_eq!(c.profile(0.0), 1.0);
        assert_eq!(c.profile(0.2), 1.0);
        assert_eq!(c.profile(-0.4), 0.0);
        assert_eq!(c.profile(0.9), 0.0);
        assert!((c.profile(0.3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monotone_between() {
        let c = CutoffProfile::new(0.5).unwrap();
        let mut prev = 1.0;
        for i in 0..=2000 {
            let r = 0.25 + 0.25 * i as f64 / 2000.0;
            let v = c.profile(r);
            assert!(v <= prev + 1e-15 && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(CutoffProfile::new(0.0).is_err());
        assert!(CutoffProfile::new(1.0).is_err());
    }
}
