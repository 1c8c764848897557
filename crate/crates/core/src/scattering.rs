//! Scattering angles, scattering matrices S(w), frame rotations R(v), and
//! the deterministic velocity chain.
//!
//! A spherically symmetric, angular-momentum-preserving scatterer is fully
//! described by its scattering angle theta(w) for impact parameters
//! w in [0, 1). Hard spheres have theta(w) = pi - 2 arcsin(w). A model is
//! admissible when theta is strictly monotone with theta(0) = +-pi and does
//! not change sign (hypotheses A/B below).
//!
//! Velocities after successive collisions follow from accumulated matrix
//! products: V_n = R(v0) S(eta_1) ... S(eta_n) e1, where R(v) is any smooth
//! rotation field with R(v) e1 = v. The per-collision impact coordinates
//! eta_j depend on the choice of R; the transition law of the limit chain
//! does not.

use crate::geom::{add, dot, norm, rot2, scale, sub, Direction, Rotation, Vec2, Vec3};
use crate::{Error, Result};

/// Hard-sphere scattering angle, theta(w) = pi - 2 arcsin(w).
pub fn theta_hard_sphere(w: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::domain(format!("impact parameter {w} outside [0, 1)")));
    }
    Ok(std::f64::consts::PI - 2.0 * w.asin())
}

/// Scattering model: analytic hard sphere or a tabulated angle function.
#[derive(Debug, Clone)]
pub enum ScatterModel {
    HardSphere,
    Table(ThetaTable),
}

impl ScatterModel {
    /// theta(|w|) for |w| in [0, 1).
    pub fn theta(&self, w: f64) -> Result<f64> {
        match self {
            ScatterModel::HardSphere => theta_hard_sphere(w),
            ScatterModel::Table(t) => t.eval(w),
        }
    }
}

/// Classification of a scattering-angle function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaClass {
    /// Strictly decreasing from theta(0) = pi, positive.
    HypothesisA,
    /// Strictly increasing from theta(0) = -pi, negative.
    HypothesisB,
    Neither,
}

/// Samples theta on a grid and checks sign, endpoint, and strict
/// monotonicity (tolerance 1e-9). Returns the class and the minimal
/// deflection angle inf |theta| over the grid.
pub fn classify_theta(model: &ScatterModel) -> Result<(ThetaClass, f64)> {
    const N: usize = 10_000;
    const TOL: f64 = 1e-9;
    let mut vals = Vec::with_capacity(N);
    for i in 0..N {
        let w = i as f64 / N as f64;
        vals.push(model.theta(w)?);
    }
    let b_theta = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let dec = vals.windows(2).all(|p| p[1] < p[0] + TOL);
    let inc = vals.windows(2).all(|p| p[1] > p[0] - TOL);
    let strict_dec = dec && vals.windows(2).any(|p| p[1] < p[0] - TOL);
    let strict_inc = inc && vals.windows(2).any(|p| p[1] > p[0] + TOL) && !strict_dec;
    let class = if strict_dec
        && (vals[0] - std::f64::consts::PI).abs() <= TOL
        && vals.iter().all(|v| *v > -TOL)
    {
        ThetaClass::HypothesisA
    } else if strict_inc
        && (vals[0] + std::f64::consts::PI).abs() <= TOL
        && vals.iter().all(|v| *v < TOL)
    {
        ThetaClass::HypothesisB
    } else {
        ThetaClass::Neither
    };
    Ok((class, b_theta))
}

/// Tabulated scattering angle with monotone cubic interpolation
/// (Fritsch-Carlson), so tabulated models keep the monotonicity the
/// classifier checks.
#[derive(Debug, Clone)]
pub struct ThetaTable {
    w: Vec<f64>,
    theta: Vec<f64>,
    slope: Vec<f64>,
}

impl ThetaTable {
    pub fn new(w: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if w.len() != theta.len() || w.len() < 2 {
            return Err(Error::Parse("theta table needs >= 2 matching rows".into()));
        }
        if w[0] != 0.0 {
            return Err(Error::Parse("theta table must start at w = 0".into()));
        }
        for p in w.windows(2) {
            if !(p[1] > p[0]) {
                return Err(Error::Parse("theta table w values must be strictly increasing".into()));
            }
        }
        if *w.last().unwrap() >= 1.0 {
            return Err(Error::Parse("theta table w values must stay below 1".into()));
        }
        let slope = fritsch_carlson_slopes(&w, &theta);
        Ok(ThetaTable { w, theta, slope })
    }

    /// Two-column CSV `w,theta` (radians), strictly increasing w in [0, 1).
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        let mut ws = Vec::new();
        let mut ts = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if ln == 0 && line.chars().any(|c| c.is_alphabetic()) {
                continue; // header row
            }
            let mut cols = line.split(',');
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse(format!("line {}: expected two columns", ln + 1)));
            };
            let w: f64 = a
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad w value {a:?}", ln + 1)))?;
            let t: f64 = b
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad theta value {b:?}", ln + 1)))?;
            ws.push(w);
            ts.push(t);
        }
        ThetaTable::new(ws, ts)
    }

    pub fn eval(&self, w: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&w) {
            return Err(Error::domain(format!("impact parameter {w} outside [0, 1)")));
        }
        let n = self.w.len();
        if w >= self.w[n - 1] {
            // extrapolate the last segment linearly
            let h = w - self.w[n - 1];
            return Ok(self.theta[n - 1] + h * self.slope[n - 1]);
        }
        let i = match self.w.binary_search_by(|p| p.partial_cmp(&w).unwrap()) {
            Ok(i) => return Ok(self.theta[i]),
            Err(i) => i - 1,
        };
        let h = self.w[i + 1] - self.w[i];
        let t = (w - self.w[i]) / h;
        let (y0, y1) = (self.theta[i], self.theta[i + 1]);
        let (m0, m1) = (self.slope[i], self.slope[i + 1]);
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        Ok(h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1)
    }
}

/// Monotonicity-preserving segment slopes (Fritsch-Carlson limiter).
fn fritsch_carlson_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        d.push((y[i + 1] - y[i]) / (x[i + 1] - x[i]));
    }
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            m[i] = 0.5 * (d[i - 1] + d[i]);
        }
    }
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / d[i];
        let b = m[i + 1] / d[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * d[i];
            m[i + 1] = tau * b * d[i];
        }
    }
    m
}

/// exp of the antisymmetric generator pairing e1 with `x` (d = 3): rotation
/// by |x| about the axis orthogonal to both e1 and (0, x).
pub fn exp_rotation3(x: Vec2) -> Rotation<3> {
    let alpha = norm(&x);
    if alpha == 0.0 {
        return Rotation::identity();
    }
    // generator K = [[0, -x1, -x2], [x1, 0, 0], [x2, 0, 0]] / alpha
    let k =
        [[0.0, -x[0] / alpha, -x[1] / alpha], [x[0] / alpha, 0.0, 0.0], [x[1] / alpha, 0.0, 0.0]];
    let (s, c) = alpha.sin_cos();
    let mut k2 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for l in 0..3 {
                acc += k[i][l] * k[l][j];
            }
            k2[i][j] = acc;
        }
    }
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = if i == j { 1.0 } else { 0.0 } + s * k[i][j] + (1.0 - c) * k2[i][j];
        }
    }
    Rotation(m)
}

/// Scattering matrix for d = 2: plane rotation by sign(w) theta(|w|);
/// S(0) = -I (theta(0) = pi under hypothesis A gives the same matrix).
pub fn scatter_matrix2(w: f64, model: &ScatterModel) -> Result<Rotation<2>> {
    if !(w.abs() < 1.0) {
        return Err(Error::domain(format!("impact parameter {w} outside (-1, 1)")));
    }
    let theta = model.theta(w.abs())?;
    Ok(rot2(w.signum() * theta))
}

/// Scattering matrix for d = 3 from the block form
/// [[cos t, -w^ sin t], [w^ sin t, I - w^ (x) w^ (1 - cos t)]].
pub fn scatter_matrix3(w: Vec2, model: &ScatterModel) -> Result<Rotation<3>> {
    let r = norm(&w);
    if !(r < 1.0) {
        return Err(Error::domain(format!("impact parameter |w| = {r} outside [0, 1)")));
    }
    if r == 0.0 {
        // d odd: diag(-1, -1, 1), which sends e1 to -e1
        return Ok(Rotation([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]));
    }
    let theta = model.theta(r)?;
    let (wh1, wh2) = (w[0] / r, w[1] / r);
    let (s, c) = theta.sin_cos();
    Ok(Rotation([
        [c, -wh1 * s, -wh2 * s],
        [wh1 * s, 1.0 - wh1 * wh1 * (1.0 - c), -wh1 * wh2 * (1.0 - c)],
        [wh2 * s, -wh1 * wh2 * (1.0 - c), 1.0 - wh2 * wh2 * (1.0 - c)],
    ]))
}

/// Frame rotation for d = 2: the unique plane rotation with R(v) e1 = v.
pub fn frame_rotation2(v: Direction<2>) -> Rotation<2> {
    let [x, y] = v.0;
    Rotation([[x, -y], [y, x]])
}

/// Frame rotation for d = 3: rotation by the angle between e1 and v in
/// their common plane. R(e1) = I; R(-e1) := diag(-1, 1, -1), a rotation by
/// pi about e2 (the smooth exponential formula has no limit at -e1, and -I
/// is not in SO(3); this gauge choice is fixed once and used everywhere).
pub fn frame_rotation3(v: Direction<3>) -> Rotation<3> {
    let vp: Vec2 = [v.0[1], v.0[2]];
    let p = norm(&vp);
    if p < 1e-14 {
        return if v.0[0] >= 0.0 {
            Rotation::identity()
        } else {
            Rotation([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
        };
    }
    let diff: Vec3 = sub(&v.0, &[1.0, 0.0, 0.0]);
    let angle = 2.0 * ((norm(&diff) / 2.0).min(1.0)).asin();
    exp_rotation3(scale(&vp, angle / p))
}

/// The full scattering map on (velocity, impact parameter) pairs for d = 2:
/// returns (outgoing velocity, exit parameter vector).
pub fn scatter_map2(v_in: Direction<2>, b: Vec2, model: &ScatterModel) -> Result<(Vec2, Vec2)> {
    if dot(&v_in.0, &b).abs() > 1e-9 {
        return Err(Error::domain("impact parameter must be orthogonal to velocity"));
    }
    let r = frame_rotation2(v_in);
    let w = crate::geom::cross2(&v_in.0, &b); // second component of R^-1 b
    let s = scatter_matrix2(w, model)?;
    let rs = r.mul(&s);
    Ok((rs.col0(), rs.apply(&[0.0, w])))
}

/// Velocity chain V_0 = v0, V_n = R(v0) S(eta_1) ... S(eta_n) e1 for d = 2,
/// accumulated incrementally with periodic re-orthonormalization.
pub fn velocity_chain(v0: Direction<2>, etas: &[f64], model: &ScatterModel) -> Result<Vec<Vec2>> {
    let mut out = Vec::with_capacity(etas.len() + 1);
    out.push(v0.0);
    let mut acc = VelocityAccumulator::new(frame_rotation2(v0));
    for &eta in etas {
        let s = scatter_matrix2(eta, model)?;
        out.push(acc.advance(&s));
    }
    Ok(out)
}

/// Incremental accumulator for R_n = R_0 S(eta_1) ... S(eta_n) with
/// re-orthonormalization every 10^4 products to bound drift in long chains.
#[derive(Debug, Clone)]
pub struct VelocityAccumulator<const D: usize> {
    r: Rotation<D>,
    count: u64,
}

pub const REORTHONORMALIZE_EVERY: u64 = 10_000;

impl<const D: usize> VelocityAccumulator<D> {
    pub fn new(r0: Rotation<D>) -> Self {
        VelocityAccumulator { r: r0, count: 0 }
    }

    /// Multiplies by one scattering matrix and returns the new velocity.
    pub fn advance(&mut self, s: &Rotation<D>) -> [f64; D] {
        self.r = self.r.mul(s);
        self.count += 1;
        if self.count % REORTHONORMALIZE_EVERY == 0 {
            self.r.reorthonormalize();
        }
        let v = self.r.col0();
        Direction::renormalized(v).0
    }

    pub fn rotation(&self) -> &Rotation<D> {
        &self.r
    }
}

/// Specular reflection v - 2 (v.n) n at unit normal n.
pub fn specular<const D: usize>(v: &[f64; D], n: &[f64; D]) -> [f64; D] {
    add(v, &scale(n, -2.0 * dot(v, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn theta_examples() {
        assert_abs_diff_eq!(theta_hard_sphere(0.0).unwrap(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(
            theta_hard_sphere(std::f64::consts::FRAC_1_SQRT_2).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-12
        );
        // strictly decreasing toward 0
        let mut prev = PI;
        for i in 1..100 {
            let t = theta_hard_sphere(i as f64 / 100.0).unwrap();
            assert!(t < prev && t > 0.0);
            prev = t;
        }
        assert!(theta_hard_sphere(1.0).is_err());
        assert!(theta_hard_sphere(-0.1).is_err());
    }

    #[test]
    fn scatter_matrix_examples() {
        // w = 1/sqrt(2): rotation by +pi/2
        let s =
            scatter_matrix2(std::f64::consts::FRAC_1_SQRT_2, &ScatterModel::HardSphere).unwrap();
        assert_abs_diff_eq!(s.0[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.0[0][1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.0[1][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.0[1][1], 0.0, epsilon = 1e-12);
        // w = 0: -I
        let s0 = scatter_matrix2(0.0, &ScatterModel::HardSphere).unwrap();
        assert_abs_diff_eq!(s0.0[0][0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s0.0[1][1], -1.0, epsilon = 1e-15);
        assert!(scatter_matrix2(1.0, &ScatterModel::HardSphere).is_err());
    }

    #[test]
    fn scatter_matrices_orthogonal() {
        let mut rng = crate::rng::stream(31, 0);
        for _ in 0..1000 {
            let w: f64 = rng.random_range(-0.999..0.999);
            let s = scatter_matrix2(w, &ScatterModel::HardSphere).unwrap();
            assert!(s.orthogonality_defect() < 1e-12);
            assert_abs_diff_eq!(s.det(), 1.0, epsilon = 1e-12);
            let wv = [rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)];
            let s3 = scatter_matrix3(wv, &ScatterModel::HardSphere).unwrap();
            assert!(s3.orthogonality_defect() < 1e-12);
            assert_abs_diff_eq!(s3.det(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn frame_rotation_examples() {
        let r = frame_rotation2(Direction::new([1.0, 0.0]).unwrap());
        assert_eq!(r.0, Rotation::<2>::identity().0);
        // v = e2: rotation by pi/2
        let r = frame_rotation2(Direction::new([0.0, 1.0]).unwrap());
        assert_abs_diff_eq!(r.0[0][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.0[1][0], 1.0, epsilon = 1e-15);
        // v = -e1: -I
        let r = frame_rotation2(Direction::new([-1.0, 0.0]).unwrap());
        assert_abs_diff_eq!(r.0[0][0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.0[1][1], -1.0, epsilon = 1e-15);

        // d = 3
        let r = frame_rotation3(Direction::new([1.0, 0.0, 0.0]).unwrap());
        assert_eq!(r.0, Rotation::<3>::identity().0);
        let r = frame_rotation3(Direction::new([-1.0, 0.0, 0.0]).unwrap());
        assert_abs_diff_eq!(r.det(), 1.0, epsilon = 1e-15);
        let im = r.apply(&[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(im[0], -1.0, epsilon = 1e-15);
        let mut rng = crate::rng::stream(32, 0);
        for _ in 0..2000 {
            let v = Direction::renormalized([
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let r = frame_rotation3(v);
            let e = r.apply(&[1.0, 0.0, 0.0]);
            let d = norm(&sub(&e, &v.0));
            assert!(d <= 1e-10, "R(v) e1 != v, err {d}");
            assert!(r.orthogonality_defect() < 1e-12);
        }
    }

    #[test]
    fn velocity_chain_examples() {
        let v0 = Direction::new([1.0, 0.0]).unwrap();
        let chain = velocity_chain(v0, &[], &ScatterModel::HardSphere).unwrap();
        assert_eq!(chain, vec![[1.0, 0.0]]);
        // eta = 0 backscatters
        let chain = velocity_chain(v0, &[0.0], &ScatterModel::HardSphere).unwrap();
        assert_abs_diff_eq!(chain[1][0], -1.0, epsilon = 1e-15);
        assert!(velocity_chain(v0, &[1.0], &ScatterModel::HardSphere).is_err());
    }

    #[test]
    fn long_chain_stays_unit() {
        let v0 = Direction::new([1.0, 0.0]).unwrap();
        let mut rng = crate::rng::stream(33, 0);
        let mut acc = VelocityAccumulator::new(frame_rotation2(v0));
        for i in 0..1_000_000u64 {
            let w: f64 = rng.random_range(-0.9999..0.9999);
            let s = scatter_matrix2(w, &ScatterModel::HardSphere).unwrap();
            let v = acc.advance(&s);
            if i % 100_000 == 0 || i == 999_999 {
                assert!((norm(&v) - 1.0).abs() <= 1e-10);
            }
        }
        assert!(acc.rotation().orthogonality_defect() < 1e-12);
    }

    #[test]
    fn group_action_consistency() {
        let m = ScatterModel::HardSphere;
        let s1 = scatter_matrix2(0.3, &m).unwrap();
        let s2 = scatter_matrix2(-0.6, &m).unwrap();
        let prod = s1.mul(&s2);
        let v0 = Direction::new([0.6, 0.8]).unwrap();
        let chain = velocity_chain(v0, &[0.3, -0.6], &m).unwrap();
        let direct = frame_rotation2(v0).mul(&prod).col0();
        for i in 0..2 {
            assert_abs_diff_eq!(chain[2][i], direct[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn angular_momentum_preserved() {
        // full map (v, b) -> (v', s): |s| = |b|
        let m = ScatterModel::HardSphere;
        let mut rng = crate::rng::stream(34, 0);
        for _ in 0..1000 {
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let v = Direction::new([phi.cos(), phi.sin()]).unwrap();
            let w: f64 = rng.random_range(-0.999..0.999);
            let b = scale(&crate::geom::rot90(&v.0), w);
            let (v_out, s) = scatter_map2(v, b, &m).unwrap();
            assert_abs_diff_eq!(norm(&s), norm(&b), epsilon = 1e-12);
            assert_abs_diff_eq!(norm(&v_out), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn classify_models() {
        let (class, b) = classify_theta(&ScatterModel::HardSphere).unwrap();
        assert_eq!(class, ThetaClass::HypothesisA);
        assert!(b < 0.03 && b > 0.0);

        // mirror of hard sphere: hypothesis B
        let n = 64;
        let ws: Vec<f64> = (0..n).map(|i| 0.999 * i as f64 / (n - 1) as f64).collect();
        let ts: Vec<f64> = ws.iter().map(|w| -(PI - 2.0 * w.asin())).collect();
        let table = ScatterModel::Table(ThetaTable::new(ws.clone(), ts).unwrap());
        let (class, _) = classify_theta(&table).unwrap();
        assert_eq!(class, ThetaClass::HypothesisB);

        // constant theta: neither
        let ts: Vec<f64> = ws.iter().map(|_| PI / 3.0).collect();
        let table = ScatterModel::Table(ThetaTable::new(ws, ts).unwrap());
        let (class, b) = classify_theta(&table).unwrap();
        assert_eq!(class, ThetaClass::Neither);
        assert_abs_diff_eq!(b, PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn theta_table_interpolates_hard_sphere() {
        let n = 256;
        let ws: Vec<f64> = (0..n).map(|i| 0.9999 * i as f64 / (n - 1) as f64).collect();
        let ts: Vec<f64> = ws.iter().map(|w| PI - 2.0 * w.asin()).collect();
        let t = ThetaTable::new(ws, ts).unwrap();
        let mut rng = crate::rng::stream(35, 0);
        for _ in 0..1000 {
            // away from the arcsin endpoint singularity the interpolant is
            // accurate; near w = 1 only monotonicity is guaranteed
            let w: f64 = rng.random_range(0.0..0.9);
            let exact = PI - 2.0 * w.asin();
            assert!((t.eval(w).unwrap() - exact).abs() < 1e-6);
        }
        let mut prev = t.eval(0.0).unwrap();
        for i in 1..2000 {
            let v = t.eval(0.9999 * i as f64 / 2000.0).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn theta_table_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.csv");
        std::fs::write(&path, "w,theta\n0.0,3.14159265358979\n0.5,1.5\n0.9,0.2\n").unwrap();
        let t = ThetaTable::from_csv(&path).unwrap();
        assert_abs_diff_eq!(t.eval(0.5).unwrap(), 1.5, epsilon = 1e-12);
        // malformed: non-increasing w
        std::fs::write(&path, "0.0,3.1\n0.0,1.5\n").unwrap();
        assert!(ThetaTable::from_csv(&path).is_err());
        // malformed: w out of range
        std::fs::write(&path, "0.0,3.1\n1.0,1.5\n").unwrap();
        assert!(ThetaTable::from_csv(&path).is_err());
    }
}
