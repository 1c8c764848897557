//! Small fixed-dimension vector and rotation helpers (d = 2 or 3).

use crate::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Vec3 = [f64; 3];

pub fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

pub fn norm<const D: usize>(a: &[f64; D]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale<const D: usize>(a: &[f64; D], c: f64) -> [f64; D] {
    let mut r = *a;
    for x in &mut r {
        *x *= c;
    }
    r
}

pub fn add<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut r = *a;
    for i in 0..D {
        r[i] += b[i];
    }
    r
}

pub fn sub<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut r = *a;
    for i in 0..D {
        r[i] -= b[i];
    }
    r
}

/// z-component of the 2D cross product `a x b`.
pub fn cross2(a: &Vec2, b: &Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Counterclockwise quarter turn of `a`.
pub fn rot90(a: &Vec2) -> Vec2 {
    [-a[1], a[0]]
}

/// A unit vector; constructors reject non-normalized input, and chain code
/// renormalizes after every matrix application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<const D: usize>(pub [f64; D]);

impl<const D: usize> Direction<D> {
    pub fn new(v: [f64; D]) -> Result<Self> {
        let n = norm(&v);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("direction not unit: |v| = {n}")));
        }
        Ok(Direction(v))
    }

    /// Normalizes exactly (used after rotations to bound drift).
    pub fn renormalized(v: [f64; D]) -> Self {
        let n = norm(&v);
        Direction(scale(&v, 1.0 / n))
    }

    pub fn e1() -> Self {
        let mut v = [0.0; D];
        v[0] = 1.0;
        Direction(v)
    }
}

/// A d x d rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<const D: usize>(pub [[f64; D]; D]);

impl<const D: usize> Rotation<D> {
    pub fn identity() -> Self {
        let mut m = [[0.0; D]; D];
        for i in 0..D {
            m[i][i] = 1.0;
        }
        Rotation(m)
    }

    pub fn apply(&self, v: &[f64; D]) -> [f64; D] {
        let mut r = [0.0; D];
        for i in 0..D {
            r[i] = dot(&self.0[i], v);
        }
        r
    }

    pub fn mul(&self, other: &Rotation<D>) -> Rotation<D> {
        let mut m = [[0.0; D]; D];
        for i in 0..D {
            for j in 0..D {
                let mut s = 0.0;
                for k in 0..D {
                    s += self.0[i][k] * other.0[k][j];
                }
                m[i][j] = s;
            }
        }
        Rotation(m)
    }

    pub fn transpose(&self) -> Rotation<D> {
        let mut m = [[0.0; D]; D];
        for i in 0..D {
            for j in 0..D {
                m[i][j] = self.0[j][i];
            }
        }
        Rotation(m)
    }

    /// First column, i.e. the image of e1.
    pub fn col0(&self) -> [f64; D] {
        let mut v = [0.0; D];
        for i in 0..D {
            v[i] = self.0[i][0];
        }
        v
    }

    /// Max-norm departure from orthogonality, `max |R^T R - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let g = self.transpose().mul(self);
        let mut worst = 0.0f64;
        for i in 0..D {
            for j in 0..D {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.0[i][j] - target).abs());
            }
        }
        worst
    }

    /// Gram-Schmidt on columns; keeps long products of rotations orthogonal.
    pub fn reorthonormalize(&mut self) {
        let mut cols = [[0.0; D]; D];
        for j in 0..D {
            for i in 0..D {
                cols[j][i] = self.0[i][j];
            }
        }
        for j in 0..D {
            for k in 0..j {
                let proj = dot(&cols[j], &cols[k]);
                for i in 0..D {
                    cols[j][i] -= proj * cols[k][i];
                }
            }
            let n = norm(&cols[j]);
            for i in 0..D {
                cols[j][i] /= n;
            }
        }
        for j in 0..D {
            for i in 0..D {
                self.0[i][j] = cols[j][i];
            }
        }
    }

    pub fn det(&self) -> f64 {
        match D {
            2 => self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0],
            3 => {
                let m = &self.0;
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
            _ => unreachable!("only d = 2, 3 supported"),
        }
    }
}

/// Plane rotation by `phi` (counterclockwise).
pub fn rot2(phi: f64) -> Rotation<2> {
    let (s, c) = phi.sin_cos();
    Rotation([[c, -s], [s, c]])
}
