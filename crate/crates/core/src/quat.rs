//! Quaternion arithmetic, imaginary units and spheres.
//!
//! The basis is fixed once and for all as `1, I, J, K` with `K = IJ`. Every
//! quaternion `x` can be written as `x = x0 + I_x x1` with `x1 >= 0` and an
//! imaginary unit `I_x`; the set of all `x0 + u x1` for arbitrary units `u`
//! is the sphere `[x]`, stored as a [`Sphere`].

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Default componentwise tolerance used by [`Quaternion::approx_eq`] callers.
pub const DEFAULT_TOL: f64 = 1e-12;

/// An element of the quaternions `H`, stored against the basis `1, I, J, K`.
///
/// Serializes as the 4-tuple `[w, x, y, z]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quaternion {
    fn from(c: [f64; 4]) -> Self {
        Quaternion::new(c[0], c[1], c[2], c[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl From<f64> for Quaternion {
    fn from(r: f64) -> Self {
        Quaternion::real(r)
    }
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };
    pub const ONE: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };
    pub const I: Quaternion = Quaternion { w: 0.0, x: 1.0, y: 0.0, z: 0.0 };
    pub const J: Quaternion = Quaternion { w: 0.0, x: 0.0, y: 1.0, z: 0.0 };
    pub const K: Quaternion = Quaternion { w: 0.0, x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub const fn real(r: f64) -> Self {
        Quaternion::new(r, 0.0, 0.0, 0.0)
    }

    /// The point `re + im * unit` of the complex plane `C_unit`.
    pub fn in_plane(c: Complex64, unit: ImaginaryUnit) -> Self {
        Quaternion::real(c.re) + unit.as_quaternion() * c.im
    }

    pub fn to_array(self) -> [f64; 4] {
        self.into()
    }

    pub fn re(self) -> f64 {
        self.w
    }

    /// Vector part `(x - conj(x)) / 2`.
    pub fn vector(self) -> Quaternion {
        Quaternion::new(0.0, self.x, self.y, self.z)
    }

    pub fn vector_norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conj(self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_sqr(self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Multiplicative inverse `conj(x) / |x|^2`; `None` for zero.
    pub fn try_inv(self) -> Option<Quaternion> {
        let n = self.norm_sqr();
        if n == 0.0 || !n.is_finite() {
            None
        } else {
            Some(self.conj() / n)
        }
    }

    /// Multiplicative inverse. Panics on zero; use [`Quaternion::try_inv`]
    /// where zero is a legitimate input.
    pub fn inv(self) -> Quaternion {
        self.try_inv().expect("inverse of zero quaternion")
    }

    pub fn is_real(self, tol: f64) -> bool {
        self.vector_norm() <= tol
    }

    pub fn max_abs_diff(self, other: Quaternion) -> f64 {
        let d = self - other;
        d.w.abs().max(d.x.abs()).max(d.y.abs()).max(d.z.abs())
    }

    /// Componentwise comparison with absolute tolerance `tol`.
    pub fn approx_eq(self, other: Quaternion, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// The imaginary unit `I_x` of `x = x0 + I_x x1`. Real quaternions get
    /// the global `I` by convention.
    pub fn imaginary_unit(self) -> ImaginaryUnit {
        ImaginaryUnit::new(self.x, self.y, self.z).unwrap_or(ImaginaryUnit::I)
    }

    pub fn sphere(self) -> Sphere {
        sphere_of(self)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Coordinates `(a, b)` of the splitting `x = a + b J` with `a, b` in
    /// the complex plane spanned by `1, I`.
    pub fn split_ij(self) -> (Complex64, Complex64) {
        (Complex64::new(self.w, self.x), Complex64::new(self.y, self.z))
    }

    /// Inverse of [`Quaternion::split_ij`].
    pub fn from_split_ij(a: Complex64, b: Complex64) -> Self {
        Quaternion::new(a.re, a.im, b.re, b.im)
    }

    pub fn powi(self, k: u32) -> Quaternion {
        (0..k).fold(Quaternion::ONE, |acc, _| acc * self)
    }
}

/// Hamilton product with `I J = K`, `J K = I`, `K I = J`.
pub fn quat_mul(a: Quaternion, b: Quaternion) -> Quaternion {
    Quaternion::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )
}

/// Returns `(Re x, |Vec x|)`.
pub fn sphere_of(x: Quaternion) -> Sphere {
    Sphere { s0: x.w, s1: x.vector_norm() }
}

/// Returns `s0 + u s1`.
pub fn slice_embed(s: Sphere, u: ImaginaryUnit) -> Quaternion {
    Quaternion::real(s.s0) + u.as_quaternion() * s.s1
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, o: Quaternion) -> Quaternion {
        quat_mul(self, o)
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, r: f64) -> Quaternion {
        Quaternion::new(self.w * r, self.x * r, self.y * r, self.z * r)
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        q * self
    }
}

impl Div<f64> for Quaternion {
    type Output = Quaternion;
    fn div(self, r: f64) -> Quaternion {
        Quaternion::new(self.w / r, self.x / r, self.y / r, self.z / r)
    }
}

impl AddAssign for Quaternion {
    fn add_assign(&mut self, o: Quaternion) {
        *self = *self + o;
    }
}

impl SubAssign for Quaternion {
    fn sub_assign(&mut self, o: Quaternion) {
        *self = *self - o;
    }
}

impl MulAssign for Quaternion {
    fn mul_assign(&mut self, o: Quaternion) {
        *self = *self * o;
    }
}

impl std::iter::Sum for Quaternion {
    fn sum<It: Iterator<Item = Quaternion>>(iter: It) -> Quaternion {
        iter.fold(Quaternion::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.w, self.x, self.y, self.z)
    }
}

/// A purely imaginary unit quaternion `a I + b J + c K` with `a² + b² + c² = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct ImaginaryUnit {
    a: f64,
    b: f64,
    c: f64,
}

impl ImaginaryUnit {
    pub const I: ImaginaryUnit = ImaginaryUnit { a: 1.0, b: 0.0, c: 0.0 };
    pub const J: ImaginaryUnit = ImaginaryUnit { a: 0.0, b: 1.0, c: 0.0 };
    pub const K: ImaginaryUnit = ImaginaryUnit { a: 0.0, b: 0.0, c: 1.0 };

    /// Normalizes `(a, b, c)`; `None` for a (numerically) zero vector.
    pub fn new(a: f64, b: f64, c: f64) -> Option<Self> {
        let n = (a * a + b * b + c * c).sqrt();
        if n <= 1e-300 || !n.is_finite() {
            None
        } else {
            Some(ImaginaryUnit { a: a / n, b: b / n, c: c / n })
        }
    }

    pub fn coords(self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn as_quaternion(self) -> Quaternion {
        Quaternion::new(0.0, self.a, self.b, self.c)
    }

    /// A unit anticommuting with `self`, i.e. orthogonal to it.
    pub fn orthogonal(self) -> ImaginaryUnit {
        let v = [self.a, self.b, self.c];
        // cross with the basis axis least aligned with v
        let axis = if v[0].abs() <= v[1].abs() && v[0].abs() <= v[2].abs() {
            [1.0, 0.0, 0.0]
        } else if v[1].abs() <= v[2].abs() {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let cx = v[1] * axis[2] - v[2] * axis[1];
        let cy = v[2] * axis[0] - v[0] * axis[2];
        let cz = v[0] * axis[1] - v[1] * axis[0];
        ImaginaryUnit::new(cx, cy, cz).expect("nonzero cross product")
    }
}

impl TryFrom<[f64; 3]> for ImaginaryUnit {
    type Error = String;
    fn try_from(c: [f64; 3]) -> Result<Self, String> {
        ImaginaryUnit::new(c[0], c[1], c[2]).ok_or_else(|| "zero vector is not an imaginary unit".into())
    }
}

impl From<ImaginaryUnit> for [f64; 3] {
    fn from(u: ImaginaryUnit) -> Self {
        u.coords()
    }
}

/// The sphere `[x] = { s0 + u s1 : u imaginary unit }`; a single real point
/// when `s1 == 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Sphere {
    pub s0: f64,
    pub s1: f64,
}

impl Sphere {
    /// Builds a sphere, folding a negative `s1` onto its absolute value.
    pub fn new(s0: f64, s1: f64) -> Self {
        Sphere { s0, s1: s1.abs() }
    }

    pub fn is_real(self, tol: f64) -> bool {
        self.s1 <= tol
    }

    /// Euclidean distance of the representatives in the `(x0, x1)` half-plane.
    pub fn distance(self, other: Sphere) -> f64 {
        (self.s0 - other.s0).hypot(self.s1 - other.s1)
    }

    /// Upper half-plane representative `s0 + i s1`.
    pub fn as_complex(self) -> Complex64 {
        Complex64::new(self.s0, self.s1)
    }

    pub fn embed(self, u: ImaginaryUnit) -> Quaternion {
        slice_embed(self, u)
    }
}

impl From<[f64; 2]> for Sphere {
    fn from(c: [f64; 2]) -> Self {
        Sphere::new(c[0], c[1])
    }
}

impl From<Sphere> for [f64; 2] {
    fn from(s: Sphere) -> Self {
        [s.s0, s.s1]
    }
}

impl fmt::Display for Sphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.s0, self.s1)
    }
}

/// Hausdorff distance between two finite sphere sets in the half-plane
/// metric. Two empty sets are at distance zero; one empty set is at
/// infinite distance from a nonempty one.
pub fn hausdorff(a: &[Sphere], b: &[Sphere]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let directed = |p: &[Sphere], q: &[Sphere]| {
        p.iter()
            .map(|x| q.iter().map(|y| x.distance(*y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}
