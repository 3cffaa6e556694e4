//! Flat-strip Poisson kernels and their quadrature matrices.
//!
//! For a Fourier mode `n >= 0` on `[-1, 0]`:
//! `C(z) = cosh((z+1)n)/cosh n`, `S(z) = sinh(zn)/(n cosh n)` and
//! `K₀(z,z′) = cosh n (C(z)S(z′)1_{z<z′} + S(z)C(z′)1_{z>z′})`,
//! which solves `(∂_z² − n²)K₀ = δ(z−z′)` with `K₀|_{z=0} = 0` and
//! `∂_zK₀|_{z=-1} = 0`. At `n = 0` the limits are `C = 1`, `S = z` and
//! `K₀ = max(z, z′)`. Everything is written with decaying exponentials only.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::zgrid::{ZGrid, ZRule};

/// `C(z, n)`.
pub fn c_kernel(n: f64, z: f64) -> f64 {
    if n == 0.0 {
        return 1.0;
    }
    (n * z).exp() * (1.0 + (-2.0 * n * (z + 1.0)).exp()) / (1.0 + (-2.0 * n).exp())
}

/// `∂_zC(z, n)`.
pub fn dc_kernel(n: f64, z: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    n * (n * z).exp() * (1.0 - (-2.0 * n * (z + 1.0)).exp()) / (1.0 + (-2.0 * n).exp())
}

/// `S(z, n)`.
pub fn s_kernel(n: f64, z: f64) -> f64 {
    if n == 0.0 {
        return z;
    }
    ((n * (z - 1.0)).exp() - (-n * (z + 1.0)).exp()) / (n * (1.0 + (-2.0 * n).exp()))
}

/// `∂_zS(z, n)`.
pub fn ds_kernel(n: f64, z: f64) -> f64 {
    if n == 0.0 {
        return 1.0;
    }
    ((n * (z - 1.0)).exp() + (-n * (z + 1.0)).exp()) / (1.0 + (-2.0 * n).exp())
}

/// `K₀(z, z′, n)`.
pub fn k0(n: f64, z: f64, zp: f64) -> f64 {
    let (lo, hi) = if z < zp { (z, zp) } else { (zp, z) };
    if n == 0.0 {
        return hi;
    }
    -(n * (lo - hi)).exp() * (1.0 + (-2.0 * n * (lo + 1.0)).exp()) * (1.0 - (2.0 * n * hi).exp()) / (2.0 * n * (1.0 + (-2.0 * n).exp()))
}

/// `∂_{z′}K₀(z, z′, n)`; the value on the diagonal is the average of the
/// one-sided limits.
pub fn dk0_dzp(n: f64, z: f64, zp: f64) -> f64 {
    if n == 0.0 {
        return if zp > z {
            1.0
        } else if zp < z {
            0.0
        } else {
            0.5
        };
    }
    let d = 2.0 * (1.0 + (-2.0 * n).exp());
    let above = || (n * (z - zp)).exp() * (1.0 + (-2.0 * n * (z + 1.0)).exp()) * (1.0 + (2.0 * n * zp).exp()) / d;
    let below = || -(n * (zp - z)).exp() * (1.0 - (2.0 * n * z).exp()) * (1.0 - (-2.0 * n * (zp + 1.0)).exp()) / d;
    if zp > z {
        above()
    } else if zp < z {
        below()
    } else {
        0.5 * (above() + below())
    }
}

/// Product-quadrature nodes for one target height: `(z′, weight)` pairs
/// and the interpolation row of each `z′`.
struct Panels {
    points: Vec<(f64, f64)>,
    interp: Vec<Vec<f64>>,
}

fn panels(z: &ZGrid, a: f64, b: f64, gl: &GaussLegendre) -> Panels {
    let mut points = Vec::new();
    let push = |lo: f64, hi: f64, points: &mut Vec<(f64, f64)>| {
        if hi - lo <= 1e-15 {
            return;
        }
        for &(x, w) in gl.as_node_weight_pairs() {
            points.push((0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w));
        }
    };
    match z.rule() {
        ZRule::ChebyshevLobatto => push(a, b, &mut points),
        ZRule::Uniform => {
            for w in z.nodes().windows(2) {
                let (lo, hi) = (w[0].max(a), w[1].min(b));
                if hi > lo {
                    push(lo, hi, &mut points);
                }
            }
        }
    }
    let interp = points.iter().map(|&(q, _)| z.interp_row(q)).collect();
    Panels { points, interp }
}

/// Quadrature matrices for every `|n| <= nmax` on a given vertical grid.
pub struct KernelOps {
    zgrid: ZGrid,
    nmax: usize,
    /// `k[n][i*(J+1)+k]` approximates `∫K₀(z_i,z′,n) ℓ_k(z′) dz′`.
    k: Vec<Vec<f64>>,
    /// Same with `∂_{z′}K₀`.
    dk: Vec<Vec<f64>>,
    /// `∫C(z′,n) ℓ_k(z′) dz′`.
    c_row: Vec<Vec<f64>>,
    /// `∫∂_zC(z′,n) ℓ_k(z′) dz′`.
    dc_row: Vec<Vec<f64>>,
}

impl KernelOps {
    /// `quad_points` Gauss–Legendre nodes per panel; panels split at each
    /// target height so that the kink of `K₀` never falls inside one.
    pub fn new(zgrid: &ZGrid, nmax: usize, quad_points: usize) -> Self {
        let q = NonZeroUsize::new(quad_points.max(2)).expect("nonzero");
        let gl = match zgrid.rule() {
            ZRule::ChebyshevLobatto => GaussLegendre::new(q),
            ZRule::Uniform => GaussLegendre::new(NonZeroUsize::new(8).expect("nonzero")),
        };
        let nodes = zgrid.nodes().to_vec();
        let len = nodes.len();
        let split: Vec<(Panels, Panels)> = nodes.iter().map(|&zi| (panels(zgrid, -1.0, zi, &gl), panels(zgrid, zi, 0.0, &gl))).collect();
        let full = panels(zgrid, -1.0, 0.0, &gl);
        let per_mode: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..=nmax)
            .into_par_iter()
            .map(|n| {
                let nf = n as f64;
                let mut km = vec![0.0; len * len];
                let mut dkm = vec![0.0; len * len];
                for (i, &zi) in nodes.iter().enumerate() {
                    for p in [&split[i].0, &split[i].1] {
                        for (&(q, w), row) in p.points.iter().zip(&p.interp) {
                            let kv = w * k0(nf, zi, q);
                            let dv = w * dk0_dzp(nf, zi, q);
                            for (k, &r) in row.iter().enumerate() {
                                km[i * len + k] += kv * r;
                                dkm[i * len + k] += dv * r;
                            }
                        }
                    }
                }
                let mut cr = vec![0.0; len];
                let mut dcr = vec![0.0; len];
                for (&(q, w), row) in full.points.iter().zip(&full.interp) {
                    let cv = w * c_kernel(nf, q);
                    let dv = w * dc_kernel(nf, q);
                    for (k, &r) in row.iter().enumerate() {
                        cr[k] += cv * r;
                        dcr[k] += dv * r;
                    }
                }
                (km, dkm, cr, dcr)
            })
            .collect();
        let mut k = Vec::with_capacity(nmax + 1);
        let mut dk = Vec::with_capacity(nmax + 1);
        let mut c_row = Vec::with_capacity(nmax + 1);
        let mut dc_row = Vec::with_capacity(nmax + 1);
        for (a, b, c, d) in per_mode {
            k.push(a);
            dk.push(b);
            c_row.push(c);
            dc_row.push(d);
        }
        Self { zgrid: zgrid.clone(), nmax, k, dk, c_row, dc_row }
    }

    pub fn zgrid(&self) -> &ZGrid {
        &self.zgrid
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    fn matvec(mat: &[f64], col: &[C64], out: &mut [C64]) {
        let len = col.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &mat[i * len..(i + 1) * len];
            *o = row.iter().zip(col).map(|(r, c)| c * *r).sum();
        }
    }

    /// `z_i ↦ ∫K₀(z_i,z′,n) f(z′) dz′` for one mode column.
    pub fn apply_k(&self, n: usize, col: &[C64], out: &mut [C64]) {
        Self::matvec(&self.k[n], col, out)
    }

    /// `z_i ↦ ∫∂_{z′}K₀(z_i,z′,n) f(z′) dz′`.
    pub fn apply_dk(&self, n: usize, col: &[C64], out: &mut [C64]) {
        Self::matvec(&self.dk[n], col, out)
    }

    /// `∫C(z′,n) f(z′) dz′`.
    pub fn c_integral(&self, n: usize, col: &[C64]) -> C64 {
        self.c_row[n].iter().zip(col).map(|(r, c)| c * *r).sum()
    }

    /// `∫∂_zC(z′,n) f(z′) dz′`.
    pub fn dc_integral(&self, n: usize, col: &[C64]) -> C64 {
        self.dc_row[n].iter().zip(col).map(|(r, c)| c * *r).sum()
    }
}
