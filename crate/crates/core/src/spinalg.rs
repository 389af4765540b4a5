//! Complex 2x2 algebra for the pseudospin-1/2 system.
//!
//! Basis ordering is `[|m_S = 0>, |m_S = -1>]`. Hamiltonians are in angular
//! frequency units (rad/s) with hbar = 1.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance on `|H - H^dagger|`, relative to the largest entry (floored at 1).
pub const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub const fn identity() -> Self {
        Mat2::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Mat2::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Mat2::new(a, ZERO, ZERO, d)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[row][col]
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        Mat2::new(s * m[0][0], s * m[0][1], s * m[1][0], s * m[1][1])
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn dagger(&self) -> Self {
        let m = &self.0;
        Mat2::new(
            m[0][0].conj(),
            m[1][0].conj(),
            m[0][1].conj(),
            m[1][1].conj(),
        )
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> C64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Largest entry-wise deviation from `other`.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    /// Largest entry of `|M - M^dagger|`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.dagger())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_asymmetry() <= tol
    }

    /// Largest entry of `|U U^dagger - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        (*self * self.dagger()).max_abs_diff(&Mat2::identity())
    }

    /// Decompose a Hermitian matrix as `a 1 + b . sigma`.
    pub fn pauli_components(&self) -> (f64, [f64; 3]) {
        let m = &self.0;
        let a = 0.5 * (m[0][0].re + m[1][1].re);
        let bz = 0.5 * (m[0][0].re - m[1][1].re);
        // m01 = bx - i by
        let off = 0.5 * (m[0][1] + m[1][0].conj());
        (a, [off.re, -off.im, bz])
    }

    pub fn from_pauli_components(a: f64, b: [f64; 3]) -> Self {
        Mat2::new(
            C64::new(a + b[2], 0.0),
            C64::new(b[0], -b[1]),
            C64::new(b[0], b[1]),
            C64::new(a - b[2], 0.0),
        )
    }

    /// Spectral norm of a Hermitian matrix, `|a| + |b|`.
    pub fn hermitian_norm(&self) -> f64 {
        let (a, b) = self.pauli_components();
        a.abs() + norm3(&b)
    }

    pub fn apply(&self, s: &SpinState) -> SpinState {
        let m = &self.0;
        SpinState {
            c0: m[0][0] * s.c0 + m[0][1] * s.c1,
            c1: m[1][0] * s.c0 + m[1][1] * s.c1,
        }
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + (-rhs)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale_re(-1.0)
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Pauli matrix for the given axis.
pub fn pauli(axis: Axis) -> Mat2 {
    match axis {
        Axis::X => Mat2::new(ZERO, ONE, ONE, ZERO),
        Axis::Y => Mat2::new(ZERO, -I, I, ZERO),
        Axis::Z => Mat2::new(ONE, ZERO, ZERO, -ONE),
    }
}

/// Spin-1/2 operator `S_axis = sigma_axis / 2`.
pub fn spin(axis: Axis) -> Mat2 {
    pauli(axis).scale_re(0.5)
}

/// `R_axis(angle) = exp(-i S_axis angle)`.
pub fn rotation(axis: Axis, angle: f64) -> Mat2 {
    let (s, c) = (0.5 * angle).sin_cos();
    let cos = C64::new(c, 0.0);
    // exp(-i theta sigma / 2) = cos(theta/2) 1 - i sin(theta/2) sigma
    Mat2::identity().scale(cos) + pauli(axis).scale(C64::new(0.0, -s))
}

/// Rotation by `angle` about the unit axis `n`.
pub fn rotation_about(n: [f64; 3], angle: f64) -> Mat2 {
    let len = norm3(&n);
    let n = [n[0] / len, n[1] / len, n[2] / len];
    let (s, c) = (0.5 * angle).sin_cos();
    let gen = Mat2::from_pauli_components(0.0, n);
    Mat2::identity().scale_re(c) + gen.scale(C64::new(0.0, -s))
}

/// Closed-form `exp(-i H t)` for Hermitian `H`.
///
/// With `H = a 1 + b n.sigma` the result is
/// `exp(-i a t) (cos(|b| t) 1 - i sin(|b| t) n.sigma)`.
pub fn expm_skew_hermitian(h: &Mat2, t: f64) -> Result<Mat2> {
    let asym = h.hermitian_asymmetry();
    if asym > HERMITIAN_TOL * h.max_abs().max(1.0) {
        return Err(Error::NonHermitian { asymmetry: asym });
    }
    Ok(expm_hermitian_unchecked(h, t))
}

/// As [`expm_skew_hermitian`] without the Hermiticity check; for hot loops
/// whose generators are Hermitian by construction.
pub(crate) fn expm_hermitian_unchecked(h: &Mat2, t: f64) -> Mat2 {
    let (a, b) = h.pauli_components();
    let bn = norm3(&b);
    let global = C64::from_polar(1.0, -a * t);
    if bn == 0.0 {
        return Mat2::identity().scale(global);
    }
    let (s, c) = (bn * t).sin_cos();
    let n = [b[0] / bn, b[1] / bn, b[2] / bn];
    let u =
        Mat2::identity().scale_re(c) + Mat2::from_pauli_components(0.0, n).scale(C64::new(0.0, -s));
    u.scale(global)
}

/// Normalized two-component amplitude vector `(c0, c1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub c0: C64,
    pub c1: C64,
}

impl SpinState {
    /// `|m_S = 0>`, the optically pumped state.
    pub fn ms0() -> Self {
        SpinState { c0: ONE, c1: ZERO }
    }

    pub fn ms_minus1() -> Self {
        SpinState { c0: ZERO, c1: ONE }
    }

    pub fn new(c0: C64, c1: C64) -> Result<Self> {
        let n = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput("spin state has zero norm".into()));
        }
        Ok(SpinState {
            c0: c0 / n,
            c1: c1 / n,
        })
    }

    pub fn norm(&self) -> f64 {
        (self.c0.norm_sqr() + self.c1.norm_sqr()).sqrt()
    }

    pub fn population_ms0(&self) -> f64 {
        self.c0.norm_sqr()
    }

    pub fn inner(&self, other: &SpinState) -> C64 {
        self.c0.conj() * other.c0 + self.c1.conj() * other.c1
    }

    /// Projective fidelity `|<self|other>|^2`; insensitive to global phase.
    pub fn fidelity(&self, other: &SpinState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// `(<sigma_x>, <sigma_y>, <sigma_z>)`.
    pub fn bloch(&self) -> [f64; 3] {
        let x = 2.0 * (self.c0.conj() * self.c1).re;
        let y = 2.0 * (self.c0.conj() * self.c1).im;
        let z = self.c0.norm_sqr() - self.c1.norm_sqr();
        [x, y, z]
    }
}
