//! Precomputed conditional-CDF table for drawing the next exit parameter
//! z ~ K0(w, .).
//!
//! Uniform-envelope rejection is not an option here: K0 is unbounded along
//! the antidiagonal toward the corners (w, z) -> (±1, ∓1). Instead the table
//! stores, for a grid of w midpoints, the CDF of K0(w_i, .) at a fixed set
//! of z edges that cluster geometrically toward ±1 (where the kernel varies
//! fastest as |w| -> 1). A draw locates its cell through per-row quantile
//! hints, interpolates linearly inside the cell, and applies one Newton
//! correction against the analytic integrand at the true w.

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use std::sync::OnceLock;

use super::{canon, PSI0_MAX};
use crate::quad;

const QBUCKETS: usize = 256;
/// Geometric cell-width ratio of the z grid.
const GROWTH: f64 = 1.01;

/// Default resolution: 2048 w cells x 4096 z cells.
pub const STANDARD_NW: usize = 2048;
pub const STANDARD_NZ: usize = 4096;

#[derive(Debug)]
pub struct ZTable {
    nw: usize,
    nz: usize,
    w_step: f64,
    z_edges: Vec<f64>,
    /// Row-major (nw rows) x (nz + 1) CDF values, each row normalized to
    /// end exactly at 1.
    cdf: Vec<f64>,
    /// Per row, for each of QBUCKETS equal quantile buckets, the largest
    /// edge index whose CDF value does not exceed the bucket boundary.
    qidx: Vec<u32>,
}

fn k0_at(w: f64, z: f64) -> f64 {
    PSI0_MAX * canon(w, z).k0_reduced()
}

/// z edges on [-1, 1]: `half` cells per side, widths growing geometrically
/// from each endpoint toward the center.
fn geometric_edges(half: usize) -> Vec<f64> {
    let h = (GROWTH - 1.0) / (GROWTH.powi(half as i32) - 1.0);
    // distances from the endpoint after k cells
    let mut dist = Vec::with_capacity(half + 1);
    let mut d = 0.0;
    let mut width = h;
    dist.push(0.0);
    for _ in 0..half {
        d += width;
        width *= GROWTH;
        dist.push(d);
    }
    // exact endpoints
    dist[half] = 1.0;
    let mut edges = Vec::with_capacity(2 * half + 1);
    // left half: -1 .. 0
    for k in 0..=half {
        edges.push(-1.0 + dist[k]);
    }
    // right half: 0 .. 1, mirrored
    for k in (0..half).rev() {
        edges.push(1.0 - dist[k]);
    }
    edges[half] = 0.0;
    edges
}

impl ZTable {
    /// Builds a table with the given resolution (`nz` must be even).
    pub fn with_resolution(nw: usize, nz: usize) -> Self {
        assert!(nw >= 2 && nz >= 8 && nz % 2 == 0);
        let z_edges = geometric_edges(nz / 2);
        debug_assert_eq!(z_edges.len(), nz + 1);
        let w_step = 2.0 / nw as f64;
        let (gl_nodes, gl_weights) = quad::gauss_legendre(8);

        let rows: Vec<(Vec<f64>, Vec<u32>)> = (0..nw)
            .into_par_iter()
            .map(|i| {
                let w = -1.0 + (i as f64 + 0.5) * w_step;
                let kink = -w;
                let mut cdf = Vec::with_capacity(nz + 1);
                cdf.push(0.0);
                let mut acc = 0.0;
                for c in 0..nz {
                    let (a, b) = (z_edges[c], z_edges[c + 1]);
                    acc += if a < kink && kink < b {
                        cell_integral(w, a, kink, &gl_nodes, &gl_weights)
                            + cell_integral(w, kink, b, &gl_nodes, &gl_weights)
                    } else {
                        cell_integral(w, a, b, &gl_nodes, &gl_weights)
                    };
                    cdf.push(acc);
                }
                let total = acc;
                for v in cdf.iter_mut() {
                    *v /= total;
                }
                cdf[nz] = 1.0;
                // quantile hints
                let mut qidx = vec![0u32; QBUCKETS];
                let mut k = 0usize;
                for (b, slot) in qidx.iter_mut().enumerate() {
                    let target = b as f64 / QBUCKETS as f64;
                    while k + 1 <= nz && cdf[k + 1] <= target {
                        k += 1;
                    }
                    *slot = k as u32;
                }
                (cdf, qidx)
            })
            .collect();

        let mut cdf = Vec::with_capacity(nw * (nz + 1));
        let mut qidx = Vec::with_capacity(nw * QBUCKETS);
        for (c, q) in rows {
            cdf.extend(c);
            qidx.extend(q);
        }
        ZTable { nw, nz, w_step, z_edges, cdf, qidx }
    }

    /// The shared full-resolution table (built once per process).
    pub fn standard() -> &'static ZTable {
        static TABLE: OnceLock<ZTable> = OnceLock::new();
        TABLE.get_or_init(|| ZTable::with_resolution(STANDARD_NW, STANDARD_NZ))
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.cdf[i * (self.nz + 1)..(i + 1) * (self.nz + 1)]
    }

    /// Draws z ~ K0(w, .).
    pub fn sample<R: Rng + ?Sized>(&self, w: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile(w, u)
    }

    /// Quantile function of the tabulated conditional law (exposed for
    /// goodness-of-fit tests).
    pub fn quantile(&self, w: f64, u: f64) -> f64 {
        // bracketing w rows (linear interpolation of CDF values in w)
        let t = (w + 1.0) / self.w_step - 0.5;
        let i0 = (t.floor() as isize).clamp(0, self.nw as isize - 2) as usize;
        let frac = (t - i0 as f64).clamp(0.0, 1.0);
        let r0 = self.row(i0);
        let r1 = self.row(i0 + 1);
        let mix = |k: usize| (1.0 - frac) * r0[k] + frac * r1[k];

        let b = ((u * QBUCKETS as f64) as usize).min(QBUCKETS - 1);
        let mut k = self.qidx[i0 * QBUCKETS + b].min(self.qidx[(i0 + 1) * QBUCKETS + b]) as usize;
        while k + 1 < self.nz && mix(k + 1) <= u {
            k += 1;
        }
        let (e0, e1) = (self.z_edges[k], self.z_edges[k + 1]);
        let (f0, f1) = (mix(k), mix(k + 1));
        let mut z = if f1 > f0 { e0 + (u - f0) / (f1 - f0) * (e1 - e0) } else { 0.5 * (e0 + e1) };

        // One Newton step against the analytic integrand at the true w:
        // residual from a local 4-point Gauss estimate of ∫_{e0}^{z} K0.
        let local = gauss4(|t| k0_at(w, t), e0, z);
        let dens = k0_at(w, z);
        if dens > 0.0 {
            z -= (f0 + local - u) / dens;
        }
        z.clamp(e0, e1).clamp(-1.0 + 1e-15, 1.0 - 1e-15)
    }

    /// Max interpolated-CDF deviation from adaptive quadrature along one
    /// row; used by accuracy tests.
    pub fn row_cdf_error(&self, w: f64, probes: usize) -> f64 {
        let mut worst = 0.0f64;
        for p in 1..probes {
            let z = -1.0 + 2.0 * p as f64 / probes as f64;
            let exact =
                quad::integrate_with_breakpoints(|t| k0_at(w, t), -1.0, z, &[-w], 1e-12).unwrap();
            let k = match self.z_edges.binary_search_by(|e| e.partial_cmp(&z).unwrap()) {
                Ok(k) => k,
                Err(k) => k - 1,
            };
            let t = (w + 1.0) / self.w_step - 0.5;
            let i0 = (t.floor() as isize).clamp(0, self.nw as isize - 2) as usize;
            let frac = (t - i0 as f64).clamp(0.0, 1.0);
            let approx = (1.0 - frac) * self.row(i0)[k] + frac * self.row(i0 + 1)[k]
                + gauss4(|t| k0_at(w, t), self.z_edges[k], z);
            worst = worst.max((exact - approx).abs());
        }
        worst
    }
}

fn cell_integral(w: f64, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, wt) in nodes.iter().zip(weights) {
        s += wt * k0_at(w, c + h * x);
    }
    s * h
}

fn gauss4<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    // 4-point Gauss-Legendre on [a, b]
    const X: [f64; 2] = [0.3399810435848563, 0.8611363115940526];
    const W: [f64; 2] = [0.6521451548625461, 0.3478548451374538];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for i in 0..2 {
        s += W[i] * (f(c - h * X[i]) + f(c + h * X[i]));
    }
    s * h
}
