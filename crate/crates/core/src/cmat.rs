use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

/// Dense 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat2(pub [[Complex64; 2]; 2]);

impl CMat2 {
    pub fn new(m11: Complex64, m12: Complex64, m21: Complex64, m22: Complex64) -> Self {
        CMat2([[m11, m12], [m21, m22]])
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        CMat2::new(one, zero, zero, one)
    }

    pub fn scaled_identity(d: Complex64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        CMat2::new(d, zero, zero, d)
    }

    /// Symmetric matrix with eigenvectors (1, 1) and (1, -1) and the given eigenvalues.
    pub fn from_symmetric_modes(plus: Complex64, minus: Complex64) -> Self {
        let diag = (plus + minus) * 0.5;
        let off = (plus - minus) * 0.5;
        CMat2::new(diag, off, off, diag)
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[row][col]
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn adjugate(&self) -> Self {
        let m = &self.0;
        CMat2::new(m[1][1], -m[0][1], -m[1][0], m[0][0])
    }

    pub fn scale(&self, k: Complex64) -> Self {
        let m = &self.0;
        CMat2::new(m[0][0] * k, m[0][1] * k, m[1][0] * k, m[1][1] * k)
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }
}

impl Add for CMat2 {
    type Output = CMat2;
    fn add(self, rhs: CMat2) -> CMat2 {
        let (a, b) = (self.0, rhs.0);
        CMat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for CMat2 {
    type Output = CMat2;
    fn sub(self, rhs: CMat2) -> CMat2 {
        let (a, b) = (self.0, rhs.0);
        CMat2::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }
}

impl Mul for CMat2 {
    type Output = CMat2;
    fn mul(self, rhs: CMat2) -> CMat2 {
        let (a, b) = (self.0, rhs.0);
        CMat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}
