//! 2×2 complex matrix helpers and the Pauli basis.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Vec2 = Vector2<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// Raising operator (σ_x + iσ_y)/2.
pub fn sigma_plus() -> Mat2 {
    Mat2::new(ZERO, ONE, ZERO, ZERO)
}

/// Lowering operator (σ_x − iσ_y)/2.
pub fn sigma_minus() -> Mat2 {
    Mat2::new(ZERO, ZERO, ONE, ZERO)
}

pub fn commutator(a: &Mat2, b: &Mat2) -> Mat2 {
    a * b - b * a
}

pub fn max_abs(m: &Mat2) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn det(m: &Mat2) -> C64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Inverse of a 2×2 matrix through its adjugate.
pub fn inverse(m: &Mat2) -> Mat2 {
    let d = det(m);
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / d
}

/// Coefficients of a traceless operator in the Pauli basis, M = zσ_z + xσ_x + yσ_y.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pauli {
    pub z: C64,
    pub x: C64,
    pub y: C64,
}

impl Pauli {
    pub fn new(z: C64, x: C64, y: C64) -> Self {
        Self { z, x, y }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Projects the traceless part of `m` onto σ_z, σ_x, σ_y.
    pub fn from_matrix(m: &Mat2) -> Self {
        Self {
            z: (m[(0, 0)] - m[(1, 1)]) * 0.5,
            x: (m[(0, 1)] + m[(1, 0)]) * 0.5,
            y: (m[(1, 0)] - m[(0, 1)]) * (-I * 0.5),
        }
    }

    pub fn to_matrix(&self) -> Mat2 {
        Mat2::new(
            self.z,
            self.x - I * self.y,
            self.x + I * self.y,
            -self.z,
        )
    }

    pub fn scale(&self, k: C64) -> Self {
        Self::new(self.z * k, self.x * k, self.y * k)
    }

    pub fn norm(&self) -> f64 {
        (self.z.norm_sqr() + self.x.norm_sqr() + self.y.norm_sqr()).sqrt()
    }

    pub fn components(&self) -> [C64; 3] {
        [self.z, self.x, self.y]
    }
}

impl std::ops::Add for Pauli {
    type Output = Pauli;
    fn add(self, o: Pauli) -> Pauli {
        Pauli::new(self.z + o.z, self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Pauli {
    type Output = Pauli;
    fn sub(self, o: Pauli) -> Pauli {
        Pauli::new(self.z - o.z, self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<C64> for Pauli {
    type Output = Pauli;
    fn mul(self, k: C64) -> Pauli {
        self.scale(k)
    }
}
