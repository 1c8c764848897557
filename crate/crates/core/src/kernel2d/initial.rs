//! Initial-condition samplers for the flight process.
//!
//! * `StationaryDiscrete` draws the first pair (xi_1, eta_1) from the
//!   stationary collision law: eta_0 uniform on (-1, 1), then eta_1 | eta_0,
//!   then xi_1 | (eta_0, eta_1).
//! * `StationaryContinuous` draws from the length-biased law that describes
//!   a particle observed at a uniformly random time: the pair (w, z) has
//!   density K1 (a probability density on the square), the full flight x'
//!   is size-biased, and the remaining flight is a uniform fraction of x'.
//! * `Custom(w)` conditions the first step on eta_0 = w.

use rand::distr::Open01;
use rand::Rng;

use super::table::ZTable;
use super::{canon, check_w, prev_f64, xi_quantile, Canon};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    StationaryDiscrete,
    StationaryContinuous,
    Custom(f64),
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        if let InitialLaw::Custom(w) = self {
            check_w(*w)?;
        }
        Ok(())
    }
}

/// First chain step: previous exit parameter, flight length, next exit
/// parameter.
#[derive(Debug, Clone, Copy)]
pub struct InitialDraw {
    pub eta0: f64,
    pub xi1: f64,
    pub eta1: f64,
}

pub fn sample_initial<R: Rng + ?Sized>(
    law: InitialLaw,
    table: &ZTable,
    rng: &mut R,
) -> Result<InitialDraw> {
    law.validate()?;
    match law {
        InitialLaw::StationaryDiscrete => {
            let w = rng.random_range(-1.0..1.0);
            let z = table.sample(w, rng);
            let q: f64 = rng.sample(Open01);
            Ok(InitialDraw { eta0: w, xi1: xi_quantile(&canon(w, z), q), eta1: z })
        }
        InitialLaw::Custom(w) => {
            let z = table.sample(w, rng);
            let q: f64 = rng.sample(Open01);
            Ok(InitialDraw { eta0: w, xi1: xi_quantile(&canon(w, z), q), eta1: z })
        }
        InitialLaw::StationaryContinuous => {
            let (w, z) = sample_pair_k1(rng);
            let c = canon(w, z);
            let q: f64 = rng.sample(Open01);
            let full = size_biased_quantile(&c, q);
            let frac: f64 = rng.sample(Open01);
            Ok(InitialDraw { eta0: w, xi1: (frac * full).max(f64::MIN_POSITIVE), eta1: z })
        }
    }
}

/// Draws (w, z) with density K1 on the square.
///
/// A fair sign flip reduces to the half {w + z >= 0}, where K1 is
/// proportional to 1/((1+w)(1+z)). Under u = ln(1+w), v = ln(1+z) that law
/// is uniform on {u, v <= ln 2, e^u + e^v >= 2}; rejection from the box
/// [ln 2 - 30, ln 2]^2 discards mass < e^-30 ~ 9.4e-14 of the target.
pub fn sample_pair_k1<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    const LN2: f64 = std::f64::consts::LN_2;
    let (w, z) = loop {
        let u = rng.random_range(LN2 - 30.0..LN2);
        let v = rng.random_range(LN2 - 30.0..LN2);
        if u.exp() + v.exp() >= 2.0 {
            break (u.exp_m1(), v.exp_m1());
        }
    };
    if rng.random::<bool>() {
        (-w, -z)
    } else {
        (w, z)
    }
}

/// Inverts the CDF of the size-biased flight density x psi0 / K1; closed
/// form on both branches (the sloped piece integrates to a quadratic in the
/// offset from x1).
fn size_biased_quantile(c: &Canon, q: f64) -> f64 {
    let k1 = c.k1_reduced();
    let target = q * k1;
    let const_mass = 0.5 * c.x1 * c.x1;
    if target <= const_mass {
        return (2.0 * target).sqrt().max(f64::MIN_POSITIVE);
    }
    let l = c.x2 - c.x1;
    if l <= 0.0 {
        return prev_f64(c.x2);
    }
    let t2 = target - const_mass;
    // solve (x1/l) u (l - u/2) = t2  =>  u = l (1 - sqrt(1 - y)), y = 2 t2/(x1 l)
    let y = (2.0 * t2 / (c.x1 * l)).min(1.0);
    let u = l * y / (1.0 + (1.0 - y).sqrt());
    (c.x1 + u).min(prev_f64(c.x2))
}

/// Probability that a continuous-law flight exceeds `x`, by quadrature over
/// the closed-form tail mass (oracle for the sampler tests).
pub fn continuous_tail_oracle(x: f64, tol: f64) -> Result<f64> {
    // For fixed (w, z), ∫_x^∞ (K0 - K0_trunc(s)) ds telescopes to
    // (K1 - K1_trunc(x)) - x (K0 - K0_trunc(x)); the normalizations
    // (1/mean free path) * (1/v1) = 2 * 1/2 cancel.
    //
    // The inner z integral gets breakpoints at the branch kink -w and at
    // the support boundary +-(1/x - 1); otherwise its quadrature noise
    // stalls the outer loop. The outer integrand grows like ln(1/(1-|w|))
    // toward the endpoints, so the outer integral runs on exponentially
    // substituted coordinates there (w = 1 - e^-s), truncated at e^-30
    // from the endpoint (omitted mass below 1e-11).
    let bx = 1.0 / x - 1.0;
    let inner = |w: f64| {
        crate::quad::integrate_with_breakpoints(
            |z: f64| {
                let c = canon(w, z);
                let tail1 = (c.k1_reduced() - c.k1_trunc_reduced(x)).max(0.0);
                let tail0 = (c.k0_reduced() - c.k0_trunc_reduced(x)).max(0.0);
                super::PSI0_MAX * (tail1 - x * tail0).max(0.0)
            },
            -1.0,
            1.0,
            &[-w, bx, -bx],
            1e-9,
        )
        .unwrap()
    };
    const LN2: f64 = std::f64::consts::LN_2;
    let mid = crate::quad::integrate_with_breakpoints(&inner, -0.5, 0.5, &[bx, -bx], tol / 3.0)?;
    let right =
        crate::quad::integrate(|s: f64| inner(1.0 - (-s).exp()) * (-s).exp(), LN2, 30.0, tol / 3.0)?;
    let left =
        crate::quad::integrate(|s: f64| inner(-1.0 + (-s).exp()) * (-s).exp(), LN2, 30.0, tol / 3.0)?;
    Ok(mid + left + right)
}

impl std::str::FromStr for InitialLaw {
    type Err = Error;

    /// Accepts `stationary-discrete`, `stationary-continuous`, `custom:<w>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary-discrete" => Ok(InitialLaw::StationaryDiscrete),
            "stationary-continuous" => Ok(InitialLaw::StationaryContinuous),
            other => {
                if let Some(w) = other.strip_prefix("custom:") {
                    let w: f64 =
                        w.parse().map_err(|_| Error::Parse(format!("bad custom law: {other}")))?;
                    check_w(w)?;
                    Ok(InitialLaw::Custom(w))
                } else {
                    Err(Error::Parse(format!("unknown initial law: {other}")))
                }
            }
        }
    }
}
