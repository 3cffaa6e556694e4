//! Vertical grids on `[-1, 0]` with interpolation and differentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of vertical intervals.
pub const MIN_J: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZRule {
    /// Chebyshev–Lobatto nodes with global barycentric interpolation.
    ChebyshevLobatto,
    /// Equispaced nodes with local cubic interpolation, kept as a cross-check.
    Uniform,
}

/// Nodes `z_0 = -1 < … < z_J = 0`.
#[derive(Clone, Debug)]
pub struct ZGrid {
    rule: ZRule,
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl ZGrid {
    pub fn new(j: usize, rule: ZRule) -> Result<Self> {
        if j < MIN_J {
            return Err(Error::Resolution(format!("vertical resolution J = {j} is below {MIN_J}")));
        }
        let nodes: Vec<f64> = match rule {
            ZRule::ChebyshevLobatto => (0..=j).map(|i| -0.5 * (1.0 + (std::f64::consts::PI * i as f64 / j as f64).cos())).collect(),
            ZRule::Uniform => (0..=j).map(|i| -1.0 + i as f64 / j as f64).collect(),
        };
        let mut nodes = nodes;
        nodes[0] = -1.0;
        nodes[j] = 0.0;
        let bary = (0..=j)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                if i == 0 || i == j {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { rule, nodes, bary })
    }

    pub fn chebyshev(j: usize) -> Result<Self> {
        Self::new(j, ZRule::ChebyshevLobatto)
    }

    pub fn rule(&self) -> ZRule {
        self.rule
    }

    /// Number of intervals `J`.
    pub fn j(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of the top node `z = 0`.
    pub fn top(&self) -> usize {
        self.j()
    }

    /// Weights `r` with `f(q) ≈ Σ_i r_i f(z_i)`.
    pub fn interp_row(&self, q: f64) -> Vec<f64> {
        let n = self.len();
        let mut row = vec![0.0; n];
        match self.rule {
            ZRule::ChebyshevLobatto => {
                if let Some(i) = self.nodes.iter().position(|&z| (q - z).abs() < 1e-15) {
                    row[i] = 1.0;
                    return row;
                }
                let mut s = 0.0;
                for i in 0..n {
                    let r = self.bary[i] / (q - self.nodes[i]);
                    row[i] = r;
                    s += r;
                }
                row.iter_mut().for_each(|r| *r /= s);
            }
            ZRule::Uniform => {
                let start = self.stencil(q);
                let pts = &self.nodes[start..start + 4];
                for k in 0..4 {
                    row[start + k] = lagrange(pts, k, q);
                }
            }
        }
        row
    }

    /// First of four consecutive nodes around `q`, shifted inward at the ends.
    fn stencil(&self, q: f64) -> usize {
        let j = self.j();
        let cell = (((q + 1.0) * j as f64).floor() as isize).clamp(0, j as isize - 1) as usize;
        cell.saturating_sub(1).min(j - 3)
    }

    /// Row `d` with `f′(z_i) ≈ Σ_k d_k f(z_k)`.
    pub fn diff_row(&self, i: usize) -> Vec<f64> {
        let n = self.len();
        let mut row = vec![0.0; n];
        match self.rule {
            ZRule::ChebyshevLobatto => {
                let zi = self.nodes[i];
                let mut diag = 0.0;
                for k in 0..n {
                    if k != i {
                        let d = (self.bary[k] / self.bary[i]) / (zi - self.nodes[k]);
                        row[k] = d;
                        diag -= d;
                    }
                }
                row[i] = diag;
            }
            ZRule::Uniform => {
                // fourth-order five-point stencils, one-sided near the ends
                let start = i.saturating_sub(2).min(self.j() - 4);
                let pts = &self.nodes[start..start + 5];
                for k in 0..5 {
                    row[start + k] = lagrange_deriv(pts, k, self.nodes[i]);
                }
            }
        }
        row
    }

    /// Dense differentiation matrix, row-major.
    pub fn diff_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.diff_row(i)).collect()
    }
}

fn lagrange(pts: &[f64], k: usize, q: f64) -> f64 {
    pts.iter().enumerate().filter(|(m, _)| *m != k).map(|(_, &p)| (q - p) / (pts[k] - p)).product()
}

fn lagrange_deriv(pts: &[f64], k: usize, q: f64) -> f64 {
    let mut total = 0.0;
    for m in 0..pts.len() {
        if m == k {
            continue;
        }
        let mut term = 1.0 / (pts[k] - pts[m]);
        for (r, &p) in pts.iter().enumerate() {
            if r != k && r != m {
                term *= (q - p) / (pts[k] - p);
            }
        }
        total += term;
    }
    total
}
