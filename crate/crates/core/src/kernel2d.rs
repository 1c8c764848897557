//! The explicit two-dimensional collision kernel of the low-density limit,
//! its moment functions, conditional flight-length law, and exact samplers.
//!
//! State coordinates: `w` is the exit parameter of the previous collision,
//! `x > 0` the flight length to the next collision (macroscopic units, mean
//! free path 1/2), `z` the exit parameter of the next collision; `w, z` live
//! in the open interval (-1, 1).
//!
//! The kernel is symmetric, `psi0(w,x,z) = psi0(z,x,w)`, and point symmetric,
//! `psi0(w,x,z) = psi0(-w,x,-z)`. Every evaluation first maps its arguments
//! to a canonical representative (`w+z >= 0`, first argument largest), which
//! makes both symmetries hold bit-exactly and fixes the branch on the
//! boundary line `w + z = 0`.
//!
//! In canonical coordinates with `x1 = 1/(1+max)`, `x2 = 1/(1+min)` the
//! kernel is the constant `6/pi^2` on `x < x1`, the linear-fractional factor
//! `x1 (x2 - x) / (x (x2 - x1))` times that constant on `x1 <= x < x2`, and
//! zero beyond `x2`. All moment integrals below are closed forms of this
//! piecewise expression, arranged to avoid cancellation as `w -> z` (where
//! the textbook forms `ln((1+w)/(1+z))/(w-z)` lose every significant digit).

use rand::distr::Open01;
use rand::Rng;

use crate::{Error, Result};

pub mod initial;
pub mod table;

pub use initial::{sample_initial, InitialDraw, InitialLaw};
pub use table::ZTable;

/// Supremum of the kernel: 6/pi^2.
pub const PSI0_MAX: f64 = 6.0 / (std::f64::consts::PI * std::f64::consts::PI);

/// Validated argument triple for kernel evaluation.
#[derive(Debug, Clone, Copy)]
pub struct KernelArgs {
    pub w: f64,
    pub x: f64,
    pub z: f64,
}

impl KernelArgs {
    pub fn new(w: f64, x: f64, z: f64) -> Result<Self> {
        check_wz(w, z)?;
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("flight length x = {x} must be > 0")));
        }
        Ok(KernelArgs { w, x, z })
    }
}

pub(crate) fn check_w(w: f64) -> Result<()> {
    if !(w.abs() < 1.0) {
        return Err(Error::domain(format!("impact parameter w = {w} outside (-1, 1)")));
    }
    Ok(())
}

pub(crate) fn check_wz(w: f64, z: f64) -> Result<()> {
    check_w(w)?;
    if !(z.abs() < 1.0) {
        return Err(Error::domain(format!("impact parameter z = {z} outside (-1, 1)")));
    }
    Ok(())
}

/// Canonical representative of a parameter pair: support endpoints
/// `x1 <= x2` of the flight-length law.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Canon {
    /// 1/(1+a) where a = max of the canonical pair.
    pub x1: f64,
    /// 1/(1+b) where b = min of the canonical pair; the support endpoint.
    pub x2: f64,
}

pub(crate) fn canon(w: f64, z: f64) -> Canon {
    let (w, z) = if w + z < 0.0 { (-w, -z) } else { (w, z) };
    let (a, b) = if w >= z { (w, z) } else { (z, w) };
    Canon { x1: 1.0 / (1.0 + a), x2: 1.0 / (1.0 + b) }
}

/// ln(1+v) - v without cancellation.
fn ln1p_minus(v: f64) -> f64 {
    if v.abs() < 0.01 {
        // alternating series, remainder below 1e-16 relative at |v| = 0.01
        let v2 = v * v;
        v2 * (-0.5
            + v * (1.0 / 3.0
                + v * (-0.25
                    + v * (0.2 + v * (-1.0 / 6.0 + v * (1.0 / 7.0 + v * (-0.125 + v / 9.0)))))))
    } else {
        v.ln_1p() - v
    }
}

impl Canon {
    #[inline]
    pub fn psi0(&self, x: f64) -> f64 {
        if x < self.x1 {
            PSI0_MAX
        } else if x >= self.x2 {
            0.0
        } else {
            // x1 (x2 - x) / (x (x2 - x1)) is in [0, 1] by monotone rounding:
            // equals 1 bit-exactly at x = x1 and decreases to 0 at x2.
            PSI0_MAX * (self.x1 * (self.x2 - x)) / (x * (self.x2 - self.x1))
        }
    }

    /// Zeroth moment of the flight law (normalizer of the conditional
    /// flight density), divided by 6/pi^2.
    pub fn k0_reduced(&self) -> f64 {
        let l = self.x2 - self.x1;
        if l == 0.0 {
            return self.x1;
        }
        // x1 x2 ln(x2/x1) / (x2 - x1), written via atanh to stay exact
        // as x2 -> x1.
        let rho = l / (self.x2 + self.x1);
        self.x1 * self.x2 * 2.0 * rho.atanh() / l
    }

    /// First moment / (6/pi^2): x1 x2 / 2.
    pub fn k1_reduced(&self) -> f64 {
        0.5 * self.x1 * self.x2
    }

    /// Second moment / (6/pi^2): x1 x2 (x1 + x2) / 6.
    pub fn k2_reduced(&self) -> f64 {
        self.x1 * self.x2 * (self.x1 + self.x2) / 6.0
    }

    /// ∫_0^r psi0 dx / (6/pi^2).
    pub fn k0_trunc_reduced(&self, r: f64) -> f64 {
        let mut t = r.min(self.x1);
        let l = self.x2 - self.x1;
        if r > self.x1 && l > 0.0 {
            let u = r.min(self.x2) - self.x1;
            let v = u / self.x1;
            t += (self.x1 * self.x2 / l) * ln1p_minus(v) + u;
        }
        t
    }

    /// ∫_0^r x psi0 dx / (6/pi^2).
    pub fn k1_trunc_reduced(&self, r: f64) -> f64 {
        let m = r.min(self.x1);
        let mut t = 0.5 * m * m;
        let l = self.x2 - self.x1;
        if r > self.x1 && l > 0.0 {
            let u = r.min(self.x2) - self.x1;
            t += (self.x1 / l) * u * (l - 0.5 * u);
        }
        t
    }

    /// ∫_0^r x^2 psi0 dx / (6/pi^2).
    pub fn k2_trunc_reduced(&self, r: f64) -> f64 {
        let m = r.min(self.x1);
        let mut t = m * m * m / 3.0;
        let l = self.x2 - self.x1;
        if r > self.x1 && l > 0.0 {
            let u = r.min(self.x2) - self.x1;
            t += (self.x1 / l) * u * (self.x1 * l + u * (0.5 * self.x2 - self.x1) - u * u / 3.0);
        }
        t
    }
}

/// The transition density, zero outside its support.
pub fn psi0(args: KernelArgs) -> f64 {
    canon(args.w, args.z).psi0(args.x)
}

/// Convenience wrapper validating raw arguments.
pub fn psi0_at(w: f64, x: f64, z: f64) -> Result<f64> {
    Ok(psi0(KernelArgs::new(w, x, z)?))
}

/// Upper endpoint of the flight-length support: psi0(w,x,z) > 0 iff x < x0.
pub fn support_x0(w: f64, z: f64) -> Result<f64> {
    check_wz(w, z)?;
    Ok(canon(w, z).x2)
}

/// The three moment integrals of the flight law at fixed (w, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTriple {
    /// ∫ psi0 dx, the conditional density of z given w (per unit z).
    pub k0: f64,
    /// ∫ x psi0 dx.
    pub k1: f64,
    /// ∫ x^2 psi0 dx.
    pub k2: f64,
}

pub fn moments(w: f64, z: f64) -> Result<MomentTriple> {
    check_wz(w, z)?;
    let c = canon(w, z);
    Ok(MomentTriple {
        k0: PSI0_MAX * c.k0_reduced(),
        k1: PSI0_MAX * c.k1_reduced(),
        k2: PSI0_MAX * c.k2_reduced(),
    })
}

/// Truncated first and second moments ∫_0^r x^p psi0 dx, p = 1, 2.
pub fn moments_truncated(w: f64, z: f64, r: f64) -> Result<(f64, f64)> {
    check_wz(w, z)?;
    if !(r >= 0.0) {
        return Err(Error::domain(format!("truncation radius r = {r} must be >= 0")));
    }
    let c = canon(w, z);
    Ok((PSI0_MAX * c.k1_trunc_reduced(r), PSI0_MAX * c.k2_trunc_reduced(r)))
}

/// ∫_0^r psi0 dx (mass of flights shorter than r at fixed (w, z)).
pub fn k0_truncated(w: f64, z: f64, r: f64) -> Result<f64> {
    check_wz(w, z)?;
    if !(r >= 0.0) {
        return Err(Error::domain(format!("truncation radius r = {r} must be >= 0")));
    }
    Ok(PSI0_MAX * canon(w, z).k0_trunc_reduced(r))
}

/// Conditional CDF of the flight length given (w, z): F(0) = 0, F(x0) = 1,
/// piecewise linear then logarithmic.
pub fn xi_cdf(w: f64, z: f64, x: f64) -> Result<f64> {
    check_wz(w, z)?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("flight length x = {x} must be >= 0")));
    }
    let c = canon(w, z);
    if x >= c.x2 {
        return Ok(1.0);
    }
    Ok((c.k0_trunc_reduced(x) / c.k0_reduced()).clamp(0.0, 1.0))
}

/// Inverts the conditional flight CDF at quantile `q` in (0, 1).
///
/// The constant branch is closed form; the logarithmic branch is solved by
/// bisection-safeguarded Newton to 1e-12.
pub(crate) fn xi_quantile(c: &Canon, q: f64) -> f64 {
    let k0 = c.k0_reduced();
    let target = q * k0;
    if target <= c.x1 {
        return target.max(f64::MIN_POSITIVE);
    }
    let l = c.x2 - c.x1;
    let t2 = target - c.x1; // mass to place in the sloped piece
    let w = c.x1 * c.x2 / l;
    // solve w*ln1p_minus(u/x1) + u = t2 for u in (0, l)
    let f = |u: f64| w * ln1p_minus(u / c.x1) + u - t2;
    let fp = |u: f64| {
        let x = c.x1 + u;
        (c.x1 * (c.x2 - x)) / (x * l)
    };
    let (mut lo, mut hi) = (0.0, l);
    let mut u = t2.min(0.5 * l); // the integrand is <= 1, so u >= t2
    for _ in 0..200 {
        let fu = f(u);
        if fu.abs() <= 1e-15 + 1e-13 * t2 {
            break;
        }
        if fu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let d = fp(u);
        let step = fu / d;
        let next = u - step;
        u = if d > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-12 * c.x2 {
            break;
        }
    }
    (c.x1 + u).min(prev_f64(c.x2)).max(f64::MIN_POSITIVE)
}

pub(crate) fn prev_f64(x: f64) -> f64 {
    // largest float strictly below x (x finite positive)
    f64::from_bits(x.to_bits() - 1)
}

/// Draws a flight length with density psi0(w,.,z)/K0(w,z) by exact inverse
/// transform.
pub fn sample_xi_given<R: Rng + ?Sized>(w: f64, z: f64, rng: &mut R) -> Result<f64> {
    check_wz(w, z)?;
    let q: f64 = rng.sample(Open01);
    Ok(xi_quantile(&canon(w, z), q))
}

/// Draws the next exit parameter with density K0(w, .) using the
/// precomputed conditional-CDF table.
pub fn sample_eta_given<R: Rng + ?Sized>(w: f64, table: &ZTable, rng: &mut R) -> Result<f64> {
    check_w(w)?;
    Ok(table.sample(w, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn psi0_examples() {
        // constant branch
        assert_abs_diff_eq!(psi0_at(0.5, 0.5, 0.0).unwrap(), 6.0 / (PI * PI), epsilon = 1e-15);
        // sloped branch: (1/0.8 - 1 - 0)/(0.5 - 0) * 6/pi^2 = 3/pi^2
        assert_abs_diff_eq!(psi0_at(0.5, 0.8, 0.0).unwrap(), 3.0 / (PI * PI), epsilon = 1e-15);
        // beyond support
        assert_eq!(psi0_at(0.5, 2.0, 0.0).unwrap(), 0.0);
        // symmetry is bit-exact
        assert_eq!(
            psi0_at(0.3, 0.5, 0.7).unwrap().to_bits(),
            psi0_at(0.7, 0.5, 0.3).unwrap().to_bits()
        );
    }

    #[test]
    fn psi0_rejects_invalid() {
        assert!(psi0_at(1.0, 0.5, 0.0).is_err());
        assert!(psi0_at(0.5, 0.0, 0.0).is_err());
        assert!(psi0_at(0.5, -1.0, 0.0).is_err());
        assert!(psi0_at(0.5, 0.5, -1.0).is_err());
        assert!(psi0_at(f64::NAN, 0.5, 0.0).is_err());
        assert!(KernelArgs::new(0.5, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn support_examples() {
        assert_abs_diff_eq!(support_x0(0.5, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(support_x0(-0.3, -0.2).unwrap(), 1.0 / 1.2, epsilon = 1e-15);
        assert_abs_diff_eq!(support_x0(0.0, 0.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn support_matches_positivity() {
        // the branch-read support formula agrees with pointwise positivity
        // of the kernel on a dense grid
        let mut rng = crate::rng::stream(11, 0);
        for _ in 0..20_000 {
            let w = rng.random_range(-0.999..0.999);
            let z = rng.random_range(-0.999..0.999);
            let x0 = support_x0(w, z).unwrap();
            for frac in [0.1, 0.5, 0.9, 0.999] {
                assert!(psi0_at(w, x0 * frac, z).unwrap() > 0.0);
            }
            assert_eq!(psi0_at(w, x0, z).unwrap(), 0.0);
            assert_eq!(psi0_at(w, x0 * 1.001, z).unwrap(), 0.0);
        }
    }

    #[test]
    fn moment_closed_forms_at_examples() {
        // (0.5, 0): K0 = (6/pi^2) * 2 ln 1.5, K1 = 2/pi^2, K2 = (1/pi^2)*2.5/2.25
        let m = moments(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(m.k0, 6.0 / (PI * PI) * 2.0 * 1.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(m.k0, 0.49298645615025194, epsilon = 1e-15);
        assert_abs_diff_eq!(m.k1, 2.0 / (PI * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(m.k1, 0.20264236728467555, epsilon = 1e-15);
        assert_abs_diff_eq!(m.k2, 2.5 / (2.25 * PI * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(m.k2, 0.11257909293593087, epsilon = 1e-15);
        // point reflection: same K0 on the other branch
        let m2 = moments(-0.5, 0.0).unwrap();
        assert_eq!(m.k0.to_bits(), m2.k0.to_bits());
    }

    #[test]
    fn truncated_moment_examples() {
        assert_eq!(moments_truncated(0.5, 0.0, 0.0).unwrap(), (0.0, 0.0));
        let m = moments(0.5, 0.0).unwrap();
        let (k1r, k2r) = moments_truncated(0.5, 0.0, 10.0).unwrap();
        assert_abs_diff_eq!(k1r, m.k1, epsilon = 1e-15);
        assert_abs_diff_eq!(k2r, m.k2, epsilon = 1e-15);
        // constant branch only: k1r = (6/pi^2) (2/3)^2 / 2
        let (k1c, _) = moments_truncated(0.5, 0.0, 2.0 / 3.0).unwrap();
        assert_abs_diff_eq!(k1c, 6.0 / (PI * PI) * (2.0 / 3.0f64).powi(2) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k1c, 0.13509491152311703, epsilon = 1e-15);
        assert!(moments_truncated(0.5, 0.0, -1.0).is_err());
    }

    #[test]
    fn branch_formulas_agree_on_the_boundary() {
        // raw textbook branch forms evaluated on w + z = 0
        for w in [0.1f64, 0.33, 0.5, 0.77, 0.95] {
            let z = -w;
            let pos = 6.0 / (PI * PI) * ((1.0 + w) / (1.0 + z)).ln() / (w - z);
            let neg = 6.0 / (PI * PI) * ((1.0 - w) / (1.0 - z)).ln() / (z - w);
            assert_abs_diff_eq!(pos, neg, epsilon = 1e-12);
            assert_abs_diff_eq!(moments(w, z).unwrap().k0, pos, epsilon = 1e-12);
            let k1pos = 3.0 / (PI * PI) / ((1.0 + w) * (1.0 + z));
            assert_abs_diff_eq!(moments(w, z).unwrap().k1, k1pos, epsilon = 1e-12);
            let k2pos = (2.0 + w + z) / ((PI * PI) * (1.0 + w).powi(2) * (1.0 + z).powi(2));
            assert_abs_diff_eq!(moments(w, z).unwrap().k2, k2pos, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_diagonal_uses_analytic_limit() {
        // K0 -> (6/pi^2)/(1+w) as z -> w
        for w in [-0.9, -0.3, 0.0, 0.4, 0.8] {
            let m = moments(w, w).unwrap();
            assert_abs_diff_eq!(m.k0, 6.0 / (PI * PI) / (1.0 + w.abs()), epsilon = 1e-14);
            let m2 = moments(w, w + 1e-9).unwrap();
            assert_abs_diff_eq!(m.k0, m2.k0, epsilon = 1e-9);
        }
    }

    /// Quadrature oracle: moments and truncated moments against adaptive
    /// integration of the pointwise kernel.
    #[test]
    fn moments_match_quadrature() {
        let mut rng = crate::rng::stream(202, 0);
        for _ in 0..120 {
            let w: f64 = rng.random_range(-0.98..0.98);
            let z: f64 = rng.random_range(-0.98..0.98);
            let x0 = support_x0(w, z).unwrap();
            let r: f64 = rng.random_range(0.0..x0 * 1.2);
            let c = canon(w, z);
            let m = moments(w, z).unwrap();
            for (p, closed, trunc) in [
                (0, m.k0, k0_truncated(w, z, r).unwrap()),
                (1, m.k1, moments_truncated(w, z, r).unwrap().0),
                (2, m.k2, moments_truncated(w, z, r).unwrap().1),
            ] {
                let full = quad::integrate_with_breakpoints(
                    |x| x.powi(p) * c.psi0(x),
                    0.0,
                    x0,
                    &[c.x1],
                    1e-12,
                )
                .unwrap();
                assert_abs_diff_eq!(closed, full, epsilon = 1e-9);
                let part = quad::integrate_with_breakpoints(
                    |x| x.powi(p) * c.psi0(x),
                    0.0,
                    r.min(x0),
                    &[c.x1],
                    1e-12,
                )
                .unwrap();
                assert_abs_diff_eq!(trunc, part, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn xi_cdf_examples() {
        assert_eq!(xi_cdf(0.5, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(xi_cdf(0.5, 0.0, 1.0).unwrap(), 1.0);
        let f = xi_cdf(0.5, 0.0, 2.0 / 3.0).unwrap();
        let expect = 6.0 / (PI * PI) * (2.0 / 3.0) / 0.49298645615025194;
        assert_abs_diff_eq!(f, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 0.8221011541254772, epsilon = 1e-12);
    }

    #[test]
    fn xi_sampler_in_support_and_mean() {
        let mut rng = crate::rng::stream(7, 3);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = sample_xi_given(0.5, 0.0, &mut rng).unwrap();
            assert!(x > 0.0 && x < 1.0);
            sum += x;
        }
        let mean = sum / n as f64;
        let expect = 0.20264236728467555 / 0.49298645615025194; // K1/K0
        assert!((mean - expect).abs() < 0.01 * expect, "mean {mean} vs {expect}");
    }

    proptest! {
        #[test]
        fn kernel_bounds_and_symmetries(w in -0.999f64..0.999, z in -0.999f64..0.999,
                                        x in 1e-6f64..5.0) {
            let v = psi0_at(w, x, z).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v <= PSI0_MAX + 1e-12);
            // lower bound (1 - 4x) * 6/pi^2 where positive
            let lower = (1.0 - 4.0 * x) * PSI0_MAX;
            if lower > 0.0 {
                prop_assert!(v >= lower - 1e-12);
            }
            prop_assert_eq!(psi0_at(z, x, w).unwrap().to_bits(), v.to_bits());
            prop_assert_eq!(psi0_at(-w, x, -z).unwrap().to_bits(), v.to_bits());
        }

        #[test]
        fn moment_triple_invariants(w in -0.995f64..0.995, z in -0.995f64..0.995) {
            let m = moments(w, z).unwrap();
            prop_assert!(m.k0 > 0.0 && m.k1 > 0.0 && m.k2 > 0.0);
            // Cauchy-Schwarz for the positive measure psi0 dx
            prop_assert!(m.k2 * m.k0 >= m.k1 * m.k1 * (1.0 - 1e-12));
        }

        #[test]
        fn truncated_monotone_in_r(w in -0.99f64..0.99, z in -0.99f64..0.99,
                                   r1 in 0.0f64..3.0, dr in 0.0f64..3.0) {
            let (a1, b1) = moments_truncated(w, z, r1).unwrap();
            let (a2, b2) = moments_truncated(w, z, r1 + dr).unwrap();
            prop_assert!(a2 >= a1 - 1e-15);
            prop_assert!(b2 >= b1 - 1e-15);
        }

        #[test]
        fn cdf_quantile_round_trip(w in -0.99f64..0.99, z in -0.99f64..0.99,
                                   q in 1e-6f64..0.999999) {
            let x = xi_quantile(&canon(w, z), q);
            let back = xi_cdf(w, z, x).unwrap();
            prop_assert!((back - q).abs() < 1e-10, "q {} back {}", q, back);
        }
    }

    #[test]
    fn row_normalization() {
        // ∫ K0(w, z) dz = 1 for Gauss-Legendre sampled w
        let (nodes, _) = quad::gauss_legendre(100);
        for &w in &nodes {
            let v = quad::integrate_with_breakpoints(
                |z| moments(w, z).unwrap().k0,
                -1.0,
                1.0,
                &[-w],
                1e-12,
            )
            .unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
        }
    }
}
