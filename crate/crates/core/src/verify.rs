//! The numeric acceptance gates: every tolerance is pinned here, and the
//! same functions back both the `acceptance` integration suite and the
//! `verify` CLI subcommand.
//!
//! Gates are deterministic given (seed, scale): all sampling runs on
//! per-index streams and reductions are index-ordered, so reruns and
//! different thread counts reproduce results bit-for-bit.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::billiard::{kernel_samples, santalo_mean_free_path2, BilliardConfig};
use crate::flight::{ChainSpec, TruncationStream};
use crate::geom::{cross2, dot, Direction};
use crate::kernel2d::{canon, psi0_at, InitialLaw, ZTable, PSI0_MAX};
use crate::quad;
use crate::scattering::{frame_rotation2, scatter_matrix2, specular, ScatterModel};
use crate::stats;
use crate::Result;

const PI: f64 = std::f64::consts::PI;

/// 99.9th percentile of the chi-square distribution with 199 degrees of
/// freedom (frozen from an external quantile table).
pub const CHI2_199_P999: f64 = 266.38589537626206;

/// Doeblin bound on the spectral gap estimate: 1 - 3/(2 pi^2).
pub const DOEBLIN_BOUND: f64 = 1.0 - 3.0 / (2.0 * PI * PI);

/// Free-path tail target: x^2 P(xi > x) -> 1/(2 pi^2).
pub const TAIL_TARGET: f64 = 1.0 / (2.0 * PI * PI);

/// Conditional-mean tail target: u^2 ln(u) P(mu > u) -> 3/(4 pi^2).
pub const MU_TAIL_TARGET: f64 = 3.0 / (4.0 * PI * PI);

/// Variance growth target: A_n^2/(n ln n) -> d sigma_2^2 = 1/(2 pi^2).
pub const GROWTH_TARGET: f64 = 1.0 / (2.0 * PI * PI);

/// Run size: `Full` is the accepted configuration; `Quick` shrinks sample
/// counts ~1000x for determinism smoke tests (statistical gates are then
/// expected to be noisy and may fail; thresholds never change).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn shrink(self, n: u64, quick: u64) -> u64 {
        match self {
            Scale::Full => n,
            Scale::Quick => quick,
        }
    }
}

/// One named check with its measured values and verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    /// (label, measured value) pairs; thresholds are encoded in labels.
    pub details: Vec<(String, f64)>,
    /// Wall time; excluded from serialized manifests to keep outputs
    /// byte-identical across runs.
    #[serde(skip)]
    pub seconds: f64,
}

impl Gate {
    fn finish(id: u32, name: &'static str, pass: bool, details: Vec<(String, f64)>, t0: std::time::Instant) -> Gate {
        Gate { id, name, pass, details, seconds: t0.elapsed().as_secs_f64() }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "[{}] gate {:02} {:<28} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds
        )
    }
}

fn model() -> ScatterModel {
    ScatterModel::HardSphere
}

fn e1() -> Direction<2> {
    Direction::new([1.0, 0.0]).unwrap()
}

// ---------------------------------------------------------------------------
// gate 1: closed-form moments vs adaptive quadrature

pub fn gate01_moments_vs_quadrature(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let n = scale.shrink(1000, 50);
    let mut rng = crate::rng::stream(crate::rng::sub_seed(seed, "moments"), 0);
    let mut worst_full = 0.0f64;
    let mut worst_trunc = 0.0f64;
    for _ in 0..n {
        let w: f64 = rng.random_range(-0.99..0.99);
        let z: f64 = rng.random_range(-0.99..0.99);
        let c = canon(w, z);
        let x0 = c.x2;
        let r: f64 = rng.random_range(0.0..1.2 * x0.min(50.0));
        let m = crate::kernel2d::moments(w, z)?;
        let (k1r, k2r) = crate::kernel2d::moments_truncated(w, z, r)?;
        let k0r = crate::kernel2d::k0_truncated(w, z, r)?;
        for (p, closed, trunc) in
            [(0i32, m.k0, k0r), (1, m.k1, k1r), (2, m.k2, k2r)]
        {
            let full =
                quad::integrate_with_breakpoints(|x| x.powi(p) * c.psi0(x), 0.0, x0, &[c.x1], 1e-12)?;
            let part = quad::integrate_with_breakpoints(
                |x| x.powi(p) * c.psi0(x),
                0.0,
                r.min(x0),
                &[c.x1],
                1e-12,
            )?;
            worst_full = worst_full.max((closed - full).abs());
            worst_trunc = worst_trunc.max((trunc - part).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_full <= 1e-9 && worst_trunc <= 1e-9 && secs < 10.0;
    Ok(Gate::finish(
        1,
        "moments vs quadrature",
        pass,
        vec![
            ("max |closed - quadrature| (tol 1e-9)".into(), worst_full),
            ("max |truncated - quadrature| (tol 1e-9)".into(), worst_trunc),
            ("seconds (budget 10)".into(), secs),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 2: kernel symmetry, bounds, normalization

pub fn gate02_kernel_invariants(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let n = scale.shrink(1_000_000, 10_000);
    let mut rng = crate::rng::stream(crate::rng::sub_seed(seed, "invariants"), 0);
    let mut sym_exact = true;
    let mut worst_upper = 0.0f64;
    let mut worst_lower = 0.0f64;
    for _ in 0..n {
        let w: f64 = rng.random_range(-1.0..1.0);
        let z: f64 = rng.random_range(-1.0..1.0);
        let x: f64 = rng.random_range(0.0..2.5) + 1e-12;
        let v = psi0_at(w, x, z)?;
        sym_exact &= psi0_at(z, x, w)?.to_bits() == v.to_bits();
        worst_upper = worst_upper.max(v - PSI0_MAX);
        let lower = (1.0 - 4.0 * x) * PSI0_MAX;
        if lower > 0.0 {
            worst_lower = worst_lower.max(lower - v);
        }
    }
    // normalization over 100 Gauss-Legendre sampled w
    let (nodes, _) = quad::gauss_legendre(100);
    let mut worst_norm = 0.0f64;
    for &w in &nodes {
        let v = quad::integrate_with_breakpoints(
            |z| PSI0_MAX * canon(w, z).k0_reduced(),
            -1.0,
            1.0,
            &[-w],
            1e-12,
        )?;
        worst_norm = worst_norm.max((v - 1.0).abs());
    }
    let pass = sym_exact && worst_upper <= 1e-12 && worst_lower <= 1e-12 && worst_norm <= 1e-9;
    Ok(Gate::finish(
        2,
        "kernel invariants",
        pass,
        vec![
            ("symmetry bit-exact (1 = yes)".into(), if sym_exact { 1.0 } else { 0.0 }),
            ("max upper-bound excess (tol 1e-12)".into(), worst_upper),
            ("max lower-bound deficit (tol 1e-12)".into(), worst_lower),
            ("max |row integral - 1| (tol 1e-9)".into(), worst_norm),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 3: sampler goodness of fit

/// Equal-mass bin edges of the conditional z-law at fixed w, from the
/// quadrature CDF (independent of the sampling table).
fn z_quantile_edges(w: f64, bins: usize) -> Result<Vec<f64>> {
    let cdf = |z: f64| -> Result<f64> {
        quad::integrate_with_breakpoints(
            |t| PSI0_MAX * canon(w, t).k0_reduced(),
            -1.0,
            z,
            &[-w],
            1e-12,
        )
    };
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(-1.0);
    for k in 1..bins {
        let q = k as f64 / bins as f64;
        let (mut lo, mut hi) = (*edges.last().unwrap(), 1.0);
        for _ in 0..70 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid)? < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edges.push(0.5 * (lo + hi));
    }
    edges.push(1.0);
    Ok(edges)
}

/// Equal-mass bin edges of the conditional flight law at fixed (w, z) from
/// quadrature of the pointwise kernel (independent of the closed forms).
fn xi_quantile_edges(w: f64, z: f64, bins: usize) -> Result<Vec<f64>> {
    let c = canon(w, z);
    let total = quad::integrate_with_breakpoints(|x| c.psi0(x), 0.0, c.x2, &[c.x1], 1e-13)?;
    let cdf = |x: f64| -> Result<f64> {
        Ok(quad::integrate_with_breakpoints(|t| c.psi0(t), 0.0, x, &[c.x1], 1e-13)? / total)
    };
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(0.0);
    for k in 1..bins {
        let q = k as f64 / bins as f64;
        let (mut lo, mut hi) = (*edges.last().unwrap(), c.x2);
        for _ in 0..70 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid)? < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edges.push(0.5 * (lo + hi));
    }
    edges.push(c.x2);
    Ok(edges)
}

pub fn gate03_sampler_gates(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let table = ZTable::standard();
    let n = scale.shrink(1_000_000, 20_000) as usize;
    let sub = crate::rng::sub_seed(seed, "samplers");
    let mut details = Vec::new();
    let mut pass = true;

    // chi-square for z | w
    for (case, w) in [(0u64, 0.5), (1, -0.8), (2, 0.95)] {
        let edges = z_quantile_edges(w, 200)?;
        let samples: Vec<f64> = draw_parallel(sub, 100 + case, n, |rng| table.sample(w, rng));
        let stat = stats::chi_square_equal_mass(&samples, &edges);
        pass &= stat < CHI2_199_P999;
        details.push((format!("chi2 z|w at w={w} (thr {CHI2_199_P999:.2})"), stat));
    }
    // chi-square for xi | (w, z)
    for (case, (w, z)) in [(0u64, (0.5, 0.0)), (1, (-0.3, 0.7))] {
        let edges = xi_quantile_edges(w, z, 200)?;
        let c = canon(w, z);
        let samples: Vec<f64> = draw_parallel(sub, 200 + case, n, |rng| {
            crate::kernel2d::xi_quantile(&c, rng.sample(rand::distr::Open01))
        });
        let stat = stats::chi_square_equal_mass(&samples, &edges);
        pass &= stat < CHI2_199_P999;
        details.push((format!("chi2 xi|({w},{z}) (thr {CHI2_199_P999:.2})"), stat));
    }
    // eta_1 marginal uniform under the stationary start
    let mut eta1: Vec<f64> = draw_parallel(sub, 300, n, |rng| {
        crate::kernel2d::sample_initial(InitialLaw::StationaryDiscrete, table, rng)
            .expect("valid law")
            .eta1
    });
    let ks1 = stats::ks_statistic(&mut eta1, |x| (x + 1.0) / 2.0);
    pass &= ks1 <= 0.002;
    details.push(("KS eta_1 vs uniform (tol 0.002)".into(), ks1));
    // eta_100 marginal after 100 chain steps
    let mut eta100: Vec<f64> = draw_parallel(sub, 400, n, |rng| {
        let mut w = rng.random_range(-1.0..1.0);
        for _ in 0..100 {
            w = table.sample(w, rng);
        }
        w
    });
    let ks100 = stats::ks_statistic(&mut eta100, |x| (x + 1.0) / 2.0);
    pass &= ks100 <= 0.003;
    details.push(("KS eta_100 vs uniform (tol 0.003)".into(), ks100));

    Ok(Gate::finish(3, "sampler goodness of fit", pass, details, t0))
}

/// Draws `n` samples split over indexed parallel chunks; the result is the
/// ordered concatenation, independent of scheduling.
fn draw_parallel<T: Send, F: Fn(&mut crate::rng::Stream) -> T + Sync + Send>(
    seed: u64,
    tag: u64,
    n: usize,
    f: F,
) -> Vec<T> {
    const CHUNK: usize = 20_000;
    let chunks = n.div_ceil(CHUNK);
    let f = &f;
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(move |c| {
            let mut rng = crate::rng::stream(seed, tag * 1_000_000 + c as u64);
            let take = CHUNK.min(n - c * CHUNK);
            (0..take).map(move |_| f(&mut rng)).collect::<Vec<_>>().into_iter()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// gate 4: stationary free-path tail

pub fn gate04_free_path_tail(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let table = ZTable::standard();
    let n = scale.shrink(10_000_000, 100_000);
    let sub = crate::rng::sub_seed(seed, "free-path-tail");
    const CHUNK: u64 = 100_000;
    let chunks = n.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = crate::rng::stream(sub, c);
            let take = CHUNK.min(n - c * CHUNK);
            let mut h = 0u64;
            for _ in 0..take {
                let d = crate::kernel2d::sample_initial(InitialLaw::StationaryDiscrete, table, &mut rng)
                    .expect("valid law");
                if d.xi1 > 20.0 {
                    h += 1;
                }
            }
            h
        })
        .sum();
    let p = hits as f64 / n as f64;
    let compensated = 400.0 * p;
    let pass = (compensated - TAIL_TARGET).abs() <= 0.10 * TAIL_TARGET;
    Ok(Gate::finish(
        4,
        "free-path tail",
        pass,
        vec![
            ("x^2 P(xi > 20) (target 0.0506606 +-10%)".into(), compensated),
            ("tail hits".into(), hits as f64),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 5: conditional-mean tail

pub fn gate05_conditional_mean_tail(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let table = ZTable::standard();
    let n = scale.shrink(100_000_000, 1_000_000);
    let sub = crate::rng::sub_seed(seed, "mu-tail");
    const CHUNK: u64 = 250_000;
    let chunks = n.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = crate::rng::stream(sub, c);
            let take = CHUNK.min(n - c * CHUNK);
            let mut h = 0u64;
            for _ in 0..take {
                let w = rng.random_range(-1.0..1.0);
                let z = table.sample(w, &mut rng);
                let cn = canon(w, z);
                let mu = cn.k1_reduced() / cn.k0_reduced();
                if mu > 30.0 {
                    h += 1;
                }
            }
            h
        })
        .sum();
    let p = hits as f64 / n as f64;
    let compensated = 900.0 * 30.0f64.ln() * p;
    let pass = (compensated - MU_TAIL_TARGET).abs() <= 0.50 * MU_TAIL_TARGET;
    Ok(Gate::finish(
        5,
        "conditional-mean tail",
        pass,
        vec![
            ("u^2 ln(u) P(mu > 30) (target 0.0759909 +-50%)".into(), compensated),
            ("tail hits".into(), hits as f64),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 6: superdiffusive CLT at desk scale

pub fn gate06_clt_endpoint(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let table = ZTable::standard();
    let n_traj = scale.shrink(10_000, 400) as usize;
    let steps = scale.shrink(10_000, 1_000);
    let angle_at = scale.shrink(1_000, 100);
    let sub = crate::rng::sub_seed(seed, "clt");
    let model = model();
    let results: Vec<([f64; 2], [f64; 2])> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let spec = ChainSpec {
                steps,
                init: InitialLaw::StationaryDiscrete,
                v0: e1(),
                model: &model,
                table,
                seed: sub,
                index: i as u64,
            };
            let mut q_angle = [0.0, 0.0];
            let mut q_end = [0.0, 0.0];
            crate::flight::run_chain(&spec, |rec| {
                if rec.j == angle_at {
                    q_angle = rec.q;
                }
                if rec.j == steps {
                    q_end = rec.q;
                }
            })
            .expect("chain runs");
            (q_angle, q_end)
        })
        .collect();
    let scale_n = crate::flight::sigma2() * (steps as f64 * (steps as f64).ln()).sqrt();
    let mut xs: Vec<f64> = results.iter().map(|r| r.1[0] / scale_n).collect();
    let mut ys: Vec<f64> = results.iter().map(|r| r.1[1] / scale_n).collect();
    let ks_x = stats::ks_statistic(&mut xs, stats::normal_cdf);
    let ks_y = stats::ks_statistic(&mut ys, stats::normal_cdf);
    let mut acc = stats::MomentAccumulator::default();
    for r in &results {
        acc.push([r.1[0] / scale_n, r.1[1] / scale_n]);
    }
    let (cxx, cyy, cxy) = acc.covariance();
    let mut angles: Vec<f64> = results.iter().map(|r| r.0[1].atan2(r.0[0])).collect();
    let ks_angle = stats::ks_statistic(&mut angles, |a| (a + PI) / (2.0 * PI));
    // Robust (quantile-based) variance proxies: the flight law has an
    // x^-3 tail, so the second moment of the raw endpoint diverges and the
    // plain covariance estimator sits well above 1 at any sample size even
    // though the distribution itself is standard normal (which the KS
    // columns confirm). The interquartile-range variance shows this.
    let iqr_var = |sorted: &[f64]| {
        let q = |p: f64| sorted[((p * sorted.len() as f64) as usize).min(sorted.len() - 1)];
        let iqr = q(0.75) - q(0.25);
        (iqr / 1.3489795003921634).powi(2)
    };
    let (vx_iqr, vy_iqr) = (iqr_var(&xs), iqr_var(&ys));
    let pass = ks_x <= 0.08
        && ks_y <= 0.08
        && (cxx - 1.0).abs() <= 0.25
        && (cyy - 1.0).abs() <= 0.25
        && cxy.abs() <= 0.25
        && ks_angle <= 0.02;
    Ok(Gate::finish(
        6,
        "superdiffusive CLT",
        pass,
        vec![
            ("KS x vs normal (tol 0.08)".into(), ks_x),
            ("KS y vs normal (tol 0.08)".into(), ks_y),
            ("cov xx (1 +- 0.25)".into(), cxx),
            ("cov yy (1 +- 0.25)".into(), cyy),
            ("cov xy (0 +- 0.25)".into(), cxy),
            ("KS direction angle (tol 0.02)".into(), ks_angle),
            ("IQR-based variance x (diagnostic)".into(), vx_iqr),
            ("IQR-based variance y (diagnostic)".into(), vy_iqr),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 7: variance growth

pub fn gate07_variance_growth(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let table = ZTable::standard();
    let n_traj = scale.shrink(1_000, 50) as usize;
    let steps = scale.shrink(100_000, 2_000);
    let sub = crate::rng::sub_seed(seed, "growth");
    let model = model();
    let gamma = 1.5;
    let rows: Vec<(f64, f64, f64)> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let spec = ChainSpec {
                steps,
                init: InitialLaw::StationaryDiscrete,
                v0: e1(),
                model: &model,
                table,
                seed: sub,
                index: i as u64,
            };
            let mut tr = TruncationStream::new(gamma).expect("gamma in range");
            let mut q_end = [0.0, 0.0];
            crate::flight::run_chain(&spec, |rec| {
                tr.push(rec);
                q_end = rec.q;
            })
            .expect("chain runs");
            (
                tr.a2_sum,
                tr.q_tilde[0] * tr.q_tilde[0] + tr.q_tilde[1] * tr.q_tilde[1],
                q_end[0] * q_end[0] + q_end[1] * q_end[1],
            )
        })
        .collect();
    let norm = steps as f64 * (steps as f64).ln();
    let count = n_traj as f64;
    let a2 = rows.iter().map(|r| r.0).sum::<f64>() / count / norm;
    let qt = rows.iter().map(|r| r.1).sum::<f64>() / count / norm;
    let raw = rows.iter().map(|r| r.2).sum::<f64>() / count / norm;
    let pass = (a2 - GROWTH_TARGET).abs() <= 0.30 * GROWTH_TARGET
        && (qt - GROWTH_TARGET).abs() <= 0.30 * GROWTH_TARGET;
    Ok(Gate::finish(
        7,
        "variance growth",
        pass,
        vec![
            ("A_n^2/(n ln n) (target 0.0506606 +-30%)".into(), a2),
            ("E|Q~_n|^2/(n ln n) (target 0.0506606 +-30%)".into(), qt),
            ("E|Q_n|^2/(n ln n) (reported)".into(), raw),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 8: billiard mean free path

pub fn gate08_billiard_mfp(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let cfg = BilliardConfig::new(2, 1e-3, model())?;
    let n = scale.shrink(1_000_000, 20_000);
    let sub = crate::rng::sub_seed(seed, "billiard-mfp");
    // ensemble of 20 runs for parallelism; same total collision count
    let runs = 20u64;
    let per = n / runs;
    let sums: Vec<(f64, u64)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let t = crate::billiard::simulate_billiard2(&cfg, per, e1(), sub, i)
                .expect("billiard runs");
            (t.path_len[1..].iter().sum::<f64>(), t.collisions() as u64)
        })
        .collect();
    let total_len: f64 = sums.iter().map(|s| s.0).sum();
    let total_n: u64 = sums.iter().map(|s| s.1).sum();
    let mfp = total_len / total_n as f64;
    let exact = santalo_mean_free_path2(1e-3);
    let pass = (mfp - exact).abs() <= 0.01 * exact && (mfp - 0.5).abs() <= 0.02 * 0.5;
    Ok(Gate::finish(
        8,
        "billiard mean free path",
        pass,
        vec![
            ("mean free path".into(), mfp),
            ("exact finite-r value (tol 1%)".into(), exact),
            ("limit value (tol 2%)".into(), 0.5),
            ("collisions".into(), total_n as f64),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 9: convergence of billiard kernel samples to the limit kernel

/// Flight-length bin edges of the coarse (w, xi, z) histogram; the last bin
/// is open-ended.
pub const XI_BIN_EDGES: [f64; 8] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75];

/// Limit-kernel masses of the 8 x 8 x 8 histogram, total-mass normalized
/// ((1/2) ∫∫ over each (w, z) cell of the closed-form flight-bin mass).
pub fn limit_bin_masses() -> Result<Vec<f64>> {
    let mut masses = vec![0.0f64; 512];
    for wb in 0..8 {
        for zb in 0..8 {
            let (w0, w1) = (-1.0 + 0.25 * wb as f64, -1.0 + 0.25 * (wb + 1) as f64);
            let (z0, z1) = (-1.0 + 0.25 * zb as f64, -1.0 + 0.25 * (zb + 1) as f64);
            for xb in 0..8 {
                let lo = XI_BIN_EDGES[xb];
                let hi = if xb + 1 < 8 { Some(XI_BIN_EDGES[xb + 1]) } else { None };
                let inner = |w: f64| {
                    quad::integrate_with_breakpoints(
                        |z: f64| {
                            let c = canon(w, z);
                            let below_hi = match hi {
                                Some(h) => c.k0_trunc_reduced(h),
                                None => c.k0_reduced(),
                            };
                            PSI0_MAX * (below_hi - c.k0_trunc_reduced(lo)).max(0.0)
                        },
                        z0,
                        z1,
                        &[-w],
                        1e-11,
                    )
                    .expect("bin quadrature converges")
                };
                let v = quad::integrate(inner, w0, w1, 1e-9)?;
                masses[(wb * 8 + zb) * 8 + xb] = 0.5 * v;
            }
        }
    }
    Ok(masses)
}

/// Bin index of one (w, xi, z) sample in the coarse 8x8x8 histogram.
pub fn histogram_index(w: f64, xi: f64, z: f64) -> usize {
    let wb = (((w + 1.0) / 0.25) as usize).min(7);
    let zb = (((z + 1.0) / 0.25) as usize).min(7);
    let xb = match XI_BIN_EDGES.iter().rposition(|&e| xi >= e) {
        Some(k) => k,
        None => 0,
    };
    (wb * 8 + zb) * 8 + xb
}

/// Total-variation distance between the billiard (w, xi, z) histogram at
/// radius r and the limit-kernel masses.
pub fn billiard_tv_distance(
    seed: u64,
    radius: f64,
    samples: u64,
    masses: &[f64],
) -> Result<(f64, u64)> {
    let cfg = BilliardConfig::new(2, radius, model())?;
    let runs = 100u64;
    let per = samples / runs;
    let partial: Vec<(Vec<u64>, u64)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let t = crate::billiard::simulate_billiard2(&cfg, per, e1(), seed, i)
                .expect("billiard runs");
            let mut counts = vec![0u64; 512];
            for (w, xi, z) in kernel_samples(&t) {
                counts[histogram_index(w, xi, z)] += 1;
            }
            let escaped = if t.escaped { 1 } else { 0 };
            (counts, escaped)
        })
        .collect();
    let mut counts = vec![0u64; 512];
    let mut escapes = 0u64;
    for (c, e) in partial {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        escapes += e;
    }
    let total: u64 = counts.iter().sum();
    let tv = 0.5
        * counts
            .iter()
            .zip(masses)
            .map(|(&c, &m)| (c as f64 / total as f64 - m).abs())
            .sum::<f64>();
    Ok((tv, escapes))
}

pub fn gate09_bg_convergence(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let masses = limit_bin_masses()?;
    let samples = scale.shrink(10_000_000, 100_000);
    // allowance for multinomial noise when comparing successive radii
    let noise = 0.003;
    let mut details = Vec::new();
    let mut tvs = Vec::new();
    for (i, r) in [1e-2, 1e-3, 1e-4].into_iter().enumerate() {
        let sub = crate::rng::sub_seed(seed, &format!("bg-{i}"));
        let (tv, escapes) = billiard_tv_distance(sub, r, samples, &masses)?;
        details.push((format!("TV at r = {r:.0e}"), tv));
        if escapes > 0 {
            details.push((format!("escaped runs at r = {r:.0e}"), escapes as f64));
        }
        tvs.push(tv);
    }
    let pass = tvs[2] <= 0.05 && tvs[1] <= tvs[0] + noise && tvs[2] <= tvs[1] + noise;
    details.push(("TV ceiling at r = 1e-4 (tol 0.05)".into(), 0.05));
    details.push(("monotonicity slack".into(), noise));
    Ok(Gate::finish(9, "kernel convergence in r", pass, details, t0))
}

// ---------------------------------------------------------------------------
// gate 10: spectral gap

pub fn gate10_spectral_gap(scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let (m1, m2) = match scale {
        Scale::Full => (200, 400),
        Scale::Quick => (100, 200),
    };
    let g1 = stats::spectral_gap(m1)?;
    let g2 = stats::spectral_gap(m2)?;
    let pass = g1 <= DOEBLIN_BOUND + 1e-3 && g2 <= DOEBLIN_BOUND + 1e-3 && (g1 - g2).abs() <= 1e-3;
    Ok(Gate::finish(
        10,
        "spectral gap",
        pass,
        vec![
            (format!("omega0 at m = {m1}"), g1),
            (format!("omega0 at m = {m2}"), g2),
            ("Doeblin bound + 1e-3".into(), DOEBLIN_BOUND + 1e-3),
            ("grid difference (tol 1e-3)".into(), (g1 - g2).abs()),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 11: mixing rate of the velocity series

pub fn gate11_mixing(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let table = ZTable::standard();
    let steps = scale.shrink(1_000_000, 20_000);
    let sub = crate::rng::sub_seed(seed, "mixing");
    let model = model();
    let spec = ChainSpec {
        steps,
        init: InitialLaw::StationaryDiscrete,
        v0: e1(),
        model: &model,
        table,
        seed: sub,
        index: 0,
    };
    let mut series = Vec::with_capacity(steps as usize);
    crate::flight::run_chain(&spec, |rec| series.push(rec.v[0]))?;
    let (_, fit) = stats::autocovariance(&series, 30)?;
    let omega0 = stats::spectral_gap(200)?;
    let twisted = stats::twisted_spectral_radius(200, &model)?;
    // The stated gate compares the velocity-series decay rate to the plain
    // spectral gap. The measured rate follows the twisted-operator radius
    // instead (reported alongside), so this comparison fails for hard
    // spheres; see the acceptance notes.
    let pass = fit.rate <= omega0 + 0.05;
    Ok(Gate::finish(
        11,
        "velocity mixing vs gap",
        pass,
        vec![
            ("fitted decay rate".into(), fit.rate),
            ("omega0 + 0.05 (stated ceiling)".into(), omega0 + 0.05),
            ("twisted-operator radius (observed ceiling)".into(), twisted),
            ("rate <= twisted + 0.05 (1 = yes)".into(), if fit.rate <= twisted + 0.05 { 1.0 } else { 0.0 }),
            ("usable lags".into(), fit.used_lags.len() as f64),
        ],
        t0,
    ))
}

// ---------------------------------------------------------------------------
// gate 12: process identities

pub fn gate12_process_identities(seed: u64, scale: Scale) -> Result<Gate> {
    let t0 = std::time::Instant::now();
    let table = ZTable::standard();
    let sub = crate::rng::sub_seed(seed, "identities");
    let model = model();
    let steps = scale.shrink(2_000, 500);
    let spec = ChainSpec {
        steps,
        init: InitialLaw::StationaryDiscrete,
        v0: e1(),
        model: &model,
        table,
        seed: sub,
        index: 0,
    };
    let traj = crate::flight::simulate(&spec)?;
    // X_{tau_n} = Q_n bit-exact
    let mut knots_exact = true;
    for j in 0..=traj.steps() {
        let x = crate::flight::position_at(&traj, traj.tau[j])?;
        knots_exact &= x[0].to_bits() == traj.q[j][0].to_bits()
            && x[1].to_bits() == traj.q[j][1].to_bits();
    }
    // |Q_n - Q_{n-1}| = xi_n
    let speed_defect = crate::flight::unit_speed_defect(&traj);
    // Y_n(0) = 0
    let y0 = crate::flight::interpolated_path(&traj, traj.steps(), 0.0)?;
    let y0_zero = y0 == [0.0, 0.0];
    // specular reflection vs scattering-matrix route
    let mut rng = crate::rng::stream(sub, 1);
    let mut worst = 0.0f64;
    for _ in 0..scale.shrink(100_000, 5_000) {
        let a: f64 = rng.random_range(0.0..2.0 * PI);
        let u = [a.cos(), a.sin()];
        let b: f64 = rng.random_range(0.0..2.0 * PI);
        let vin = [b.cos(), b.sin()];
        if dot(&vin, &u) >= -1e-6 {
            continue;
        }
        let spec_v = specular(&vin, &u);
        let w = cross2(&vin, &u);
        let via = frame_rotation2(Direction::renormalized(vin))
            .mul(&scatter_matrix2(w, &model)?)
            .col0();
        worst = worst.max((spec_v[0] - via[0]).abs()).max((spec_v[1] - via[1]).abs());
    }
    let pass = knots_exact && speed_defect <= 1e-12 && y0_zero && worst <= 1e-10;
    Ok(Gate::finish(
        12,
        "process identities",
        pass,
        vec![
            ("X at tau_n bit-exact (1 = yes)".into(), if knots_exact { 1.0 } else { 0.0 }),
            ("max unit-speed defect (tol 1e-12)".into(), speed_defect),
            ("Y_n(0) = 0 (1 = yes)".into(), if y0_zero { 1.0 } else { 0.0 }),
            ("specular vs matrix route (tol 1e-10)".into(), worst),
        ],
        t0,
    ))
}

/// Runs all in-library gates in order. (Byte-level reproducibility of the
/// driver outputs is checked separately at the CLI layer.)
pub fn run_all(seed: u64, scale: Scale) -> Result<Vec<Gate>> {
    Ok(vec![
        gate01_moments_vs_quadrature(seed, scale)?,
        gate02_kernel_invariants(seed, scale)?,
        gate03_sampler_gates(seed, scale)?,
        gate04_free_path_tail(seed, scale)?,
        gate05_conditional_mean_tail(seed, scale)?,
        gate06_clt_endpoint(seed, scale)?,
        gate07_variance_growth(seed, scale)?,
        gate08_billiard_mfp(seed, scale)?,
        gate09_bg_convergence(seed, scale)?,
        gate10_spectral_gap(scale)?,
        gate11_mixing(seed, scale)?,
        gate12_process_identities(seed, scale)?,
    ])
}

/// Default master seed of the acceptance configuration.
pub const DEFAULT_SEED: u64 = 2026;
