//! Slice functions given by stem pairs `(alpha, beta)` on half-plane regions.
//!
//! A point `x = x0 + I_x x1` (with `x1 = |Vec x| >= 0`) is evaluated as
//! `alpha(x0, x1) + I_x beta(x0, x1)` for left functions and
//! `alpha(x0, x1) + beta(x0, x1) I_x` for right functions. Stems are only
//! stored for `x1 >= 0`; negative `x1` uses the even/odd extension
//! `alpha(x0, -x1) = alpha(x0, x1)`, `beta(x0, -x1) = -beta(x0, x1)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlinalg::complex_eigenvalues;
use crate::quat::{sphere_of, ImaginaryUnit, Quaternion, Sphere};

/// Stem map `(x0, x1) -> H`, called with `x1 >= 0`.
pub type Stem = Arc<dyn Fn(f64, f64) -> Quaternion + Send + Sync>;

/// Tolerance of [`is_intrinsic`] and [`split_left_right`].
pub const INTRINSIC_TOL: f64 = 1e-10;

/// Default sample count of [`is_intrinsic`].
pub const INTRINSIC_SAMPLES: usize = 200;

/// Open set in the closed upper half-plane `{(x0, x1) : x1 >= 0}`, standing
/// for the axially symmetric set of all `x` with `(Re x, |Vec x|)` inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Distance from `(c0, c1)` strictly between `inner` and `outer`; a disk
    /// when `inner == 0`.
    Annulus { c0: f64, c1: f64, inner: f64, outer: f64 },
    /// Distance from `(c0, 0)` greater than `radius`.
    Exterior { c0: f64, radius: f64 },
    /// `x1 < eps`, a neighbourhood of the whole real axis.
    Strip { eps: f64 },
    Rect { x0: (f64, f64), x1: (f64, f64) },
    Whole,
    Union { parts: Vec<Region> },
    Intersection { parts: Vec<Region> },
}

impl Region {
    pub fn disk(c0: f64, radius: f64) -> Region {
        Region::Annulus { c0, c1: 0.0, inner: 0.0, outer: radius }
    }

    /// Disk centred at the sphere `(c0, c1)`.
    pub fn sphere_disk(c: Sphere, radius: f64) -> Region {
        Region::Annulus { c0: c.s0, c1: c.s1, inner: 0.0, outer: radius }
    }

    pub fn annulus(c0: f64, inner: f64, outer: f64) -> Region {
        Region::Annulus { c0, c1: 0.0, inner, outer }
    }

    /// A single sphere as a degenerate (empty) region; only useful as an
    /// obstacle through [`Region::distance`].
    pub fn point(p: Sphere) -> Region {
        Region::sphere_disk(p, 0.0)
    }

    /// Strip of half-width `eps` together with the exterior of the disk
    /// of radius `length` around 0.
    pub fn tube(eps: f64, length: f64) -> Region {
        Region::Union { parts: vec![Region::Strip { eps }, Region::Exterior { c0: 0.0, radius: length }] }
    }

    pub fn union(parts: Vec<Region>) -> Region {
        Region::Union { parts }
    }

    pub fn contains(&self, x0: f64, x1: f64) -> bool {
        let x1 = x1.abs();
        match self {
            Region::Annulus { c0, c1, inner, outer } => {
                let d = (x0 - c0).hypot(x1 - c1);
                d < *outer && (d > *inner || *inner == 0.0)
            }
            Region::Exterior { c0, radius } => (x0 - c0).hypot(x1) > *radius,
            Region::Strip { eps } => x1 < *eps,
            Region::Rect { x0: (a, b), x1: (c, d) } => *a < x0 && x0 < *b && *c < x1 && x1 < *d,
            Region::Whole => true,
            Region::Union { parts } => parts.iter().any(|r| r.contains(x0, x1)),
            Region::Intersection { parts } => parts.iter().all(|r| r.contains(x0, x1)),
        }
    }

    pub fn contains_sphere(&self, p: Sphere) -> bool {
        self.contains(p.s0, p.s1)
    }

    /// Distance from `(x0, x1)` to the region (zero inside). Exact for the
    /// basic shapes, a lower bound for intersections.
    pub fn distance(&self, x0: f64, x1: f64) -> f64 {
        let x1 = x1.abs();
        match self {
            Region::Annulus { c0, c1, inner, outer } => {
                let d = (x0 - c0).hypot(x1 - c1);
                (inner - d).max(d - outer).max(0.0)
            }
            Region::Exterior { c0, radius } => (radius - (x0 - c0).hypot(x1)).max(0.0),
            Region::Strip { eps } => (x1 - eps).max(0.0),
            Region::Rect { x0: (a, b), x1: (c, d) } => {
                let dx = (a - x0).max(x0 - b).max(0.0);
                let dy = (c - x1).max(x1 - d).max(0.0);
                dx.hypot(dy)
            }
            Region::Whole => 0.0,
            Region::Union { parts } => parts.iter().map(|r| r.distance(x0, x1)).fold(f64::INFINITY, f64::min),
            Region::Intersection { parts } => parts.iter().map(|r| r.distance(x0, x1)).fold(0.0, f64::max),
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            Region::Annulus { outer, .. } => outer.is_finite(),
            Region::Rect { x0, x1 } => x0.0.is_finite() && x0.1.is_finite() && x1.1.is_finite(),
            Region::Exterior { .. } | Region::Strip { .. } | Region::Whole => false,
            Region::Union { parts } => parts.iter().all(Region::is_bounded),
            Region::Intersection { parts } => parts.iter().any(Region::is_bounded),
        }
    }

    /// Grows the region by `d` in every direction.
    pub fn inflate(&self, d: f64) -> Region {
        match self {
            Region::Annulus { c0, c1, inner, outer } => {
                Region::Annulus { c0: *c0, c1: *c1, inner: (inner - d).max(0.0), outer: outer + d }
            }
            Region::Exterior { c0, radius } => Region::Exterior { c0: *c0, radius: (radius - d).max(0.0) },
            Region::Strip { eps } => Region::Strip { eps: eps + d },
            Region::Rect { x0, x1 } => Region::Rect { x0: (x0.0 - d, x0.1 + d), x1: (x1.0 - d, x1.1 + d) },
            Region::Whole => Region::Whole,
            Region::Union { parts } => Region::Union { parts: parts.iter().map(|r| r.inflate(d)).collect() },
            Region::Intersection { parts } => {
                Region::Intersection { parts: parts.iter().map(|r| r.inflate(d)).collect() }
            }
        }
    }

    /// Bounding box `[(x0 range), (x1 range)]` of a bounded region.
    pub fn bounding_box(&self) -> Option<[(f64, f64); 2]> {
        match self {
            Region::Annulus { c0, c1, outer, .. } if outer.is_finite() => {
                Some([(c0 - outer, c0 + outer), ((c1 - outer).max(0.0), c1 + outer)])
            }
            Region::Rect { x0, x1 } if self.is_bounded() => Some([*x0, (x1.0.max(0.0), x1.1)]),
            Region::Union { parts } => {
                let boxes: Option<Vec<_>> = parts.iter().map(Region::bounding_box).collect();
                boxes?.into_iter().reduce(|a, b| {
                    [(a[0].0.min(b[0].0), a[0].1.max(b[0].1)), (a[1].0.min(b[1].0), a[1].1.max(b[1].1))]
                })
            }
            Region::Intersection { parts } => parts.iter().filter_map(Region::bounding_box).reduce(|a, b| {
                [(a[0].0.max(b[0].0), a[0].1.min(b[0].1)), (a[1].0.max(b[1].0), a[1].1.min(b[1].1))]
            }),
            _ => None,
        }
    }

    fn atoms(&self) -> Vec<Atom> {
        match self {
            Region::Annulus { c0, c1, inner, outer } => vec![Atom::Ring { c: (*c0, *c1), inner: *inner, outer: *outer }],
            Region::Exterior { c0, radius } => vec![Atom::Ring { c: (*c0, 0.0), inner: *radius, outer: f64::INFINITY }],
            Region::Whole => vec![Atom::Ring { c: (0.0, 0.0), inner: 0.0, outer: f64::INFINITY }],
            Region::Strip { eps } => vec![Atom::Strip(*eps)],
            Region::Rect { x0, x1 } => vec![Atom::Rect(*x0, *x1)],
            Region::Union { parts } => parts.iter().flat_map(Region::atoms).collect(),
            // over-approximated by its most restrictive bounded part
            Region::Intersection { parts } => parts
                .iter()
                .find(|r| r.is_bounded())
                .or(parts.first())
                .map(Region::atoms)
                .unwrap_or_default(),
        }
    }

    /// Whether the two regions may intersect. Exact for disks, annuli,
    /// strips and rectangles up to the reflection across the real axis;
    /// conservative otherwise.
    pub fn overlaps(&self, other: &Region) -> bool {
        let (a, b) = (self.atoms(), other.atoms());
        a.iter().any(|x| b.iter().any(|y| x.overlaps(y)))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Annulus { c0, c1, inner, outer } if *inner == 0.0 => write!(f, "disk(({c0}, {c1}), {outer})"),
            Region::Annulus { c0, c1, inner, outer } => write!(f, "annulus(({c0}, {c1}), {inner}, {outer})"),
            Region::Exterior { c0, radius } => write!(f, "exterior({c0}, {radius})"),
            Region::Strip { eps } => write!(f, "strip({eps})"),
            Region::Rect { x0, x1 } => write!(f, "rect([{}, {}] x [{}, {}])", x0.0, x0.1, x1.0, x1.1),
            Region::Whole => write!(f, "whole"),
            Region::Union { parts } => {
                let p: Vec<String> = parts.iter().map(|r| r.to_string()).collect();
                write!(f, "union({})", p.join(", "))
            }
            Region::Intersection { parts } => {
                let p: Vec<String> = parts.iter().map(|r| r.to_string()).collect();
                write!(f, "intersection({})", p.join(", "))
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Atom {
    Ring { c: (f64, f64), inner: f64, outer: f64 },
    Strip(f64),
    Rect((f64, f64), (f64, f64)),
}

impl Atom {
    fn overlaps(&self, other: &Atom) -> bool {
        use Atom::*;
        match (*self, *other) {
            (Ring { c: ca, inner: ia, outer: oa }, Ring { c: cb, inner: ib, outer: ob }) => {
                if oa <= 0.0 || ob <= 0.0 {
                    return false;
                }
                // distances from cb reached by the ring around ca
                let d = (ca.0 - cb.0).hypot(ca.1 - cb.1);
                let lo = (ia - d).max(d - oa).max(0.0);
                let hi = d + oa;
                lo < ob && hi > ib
            }
            (Ring { c, outer, .. }, Strip(eps)) | (Strip(eps), Ring { c, outer, .. }) => outer > 0.0 && c.1 - outer < eps,
            (Ring { c, inner, outer }, Rect(x0, x1)) | (Rect(x0, x1), Ring { c, inner, outer }) => {
                let dx = (x0.0 - c.0).max(c.0 - x0.1).max(0.0);
                let dy = (x1.0 - c.1).max(c.1 - x1.1).max(0.0);
                let far_x = (c.0 - x0.0).abs().max((c.0 - x0.1).abs());
                let far_y = (c.1 - x1.0).abs().max((c.1 - x1.1).abs());
                dx.hypot(dy) < outer && far_x.hypot(far_y) > inner
            }
            (Strip(_), Strip(_)) => true,
            (Strip(eps), Rect(_, x1)) | (Rect(_, x1), Strip(eps)) => x1.0 < eps,
            (Rect(a0, a1), Rect(b0, b1)) => a0.0 < b0.1 && b0.0 < a0.1 && a1.0 < b1.1 && b1.0 < a1.1,
        }
    }
}

/// Which side the imaginary unit multiplies `beta` on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chirality {
    Left,
    Right,
    /// Real-valued stems; left and right at once and mapping each slice
    /// into itself.
    Intrinsic,
    /// Real `beta` with quaternionic `alpha`: both left and right slice
    /// hyperholomorphic, e.g. locally constant quaternions.
    Bilateral,
}

impl Chirality {
    pub fn is_left(self) -> bool {
        self != Chirality::Right
    }

    pub fn is_right(self) -> bool {
        self != Chirality::Left
    }
}

/// One stem pair on one region.
#[derive(Clone)]
pub struct Piece {
    pub region: Region,
    pub alpha: Stem,
    pub beta: Stem,
}

impl Piece {
    pub fn new(
        region: Region,
        alpha: impl Fn(f64, f64) -> Quaternion + Send + Sync + 'static,
        beta: impl Fn(f64, f64) -> Quaternion + Send + Sync + 'static,
    ) -> Self {
        Piece { region, alpha: Arc::new(alpha), beta: Arc::new(beta) }
    }

    /// Stems from a holomorphic `F` with `F(conj z) = conj F(z)` on the
    /// upper half-plane: `alpha + i beta = F(x0 + i x1)`.
    pub fn from_complex(region: Region, f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> Self {
        let f = Arc::new(f);
        let g = f.clone();
        Piece::new(
            region,
            move |a, b| Quaternion::real(f(Complex64::new(a, b)).re),
            move |a, b| Quaternion::real(g(Complex64::new(a, b)).im),
        )
    }

    pub fn constant(region: Region, value: Quaternion) -> Self {
        Piece::new(region, move |_, _| value, |_, _| Quaternion::ZERO)
    }
}

/// A slice function assembled from stem pieces.
#[derive(Clone)]
pub struct SliceFunction {
    name: String,
    pieces: Vec<Piece>,
    chirality: Chirality,
    at_infinity: Option<Quaternion>,
    singular: Vec<Sphere>,
}

impl fmt::Debug for SliceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SliceFunction")
            .field("name", &self.name)
            .field("regions", &self.pieces.iter().map(|p| p.region.to_string()).collect::<Vec<_>>())
            .field("chirality", &self.chirality)
            .field("at_infinity", &self.at_infinity)
            .field("singular", &self.singular)
            .finish()
    }
}

impl SliceFunction {
    pub fn new(name: impl Into<String>, pieces: Vec<Piece>, chirality: Chirality, at_infinity: Option<Quaternion>) -> Self {
        SliceFunction { name: name.into(), pieces, chirality, at_infinity, singular: Vec::new() }
    }

    /// Declares isolated singular spheres (poles) excluded from the domain.
    pub fn with_singularities(mut self, spheres: Vec<Sphere>) -> Self {
        self.singular = spheres;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn chirality(&self) -> Chirality {
        self.chirality
    }

    pub fn value_at_infinity(&self) -> Option<Quaternion> {
        self.at_infinity
    }

    pub fn singularities(&self) -> &[Sphere] {
        &self.singular
    }

    /// Union of piece regions.
    pub fn domain(&self) -> Region {
        if self.pieces.len() == 1 {
            self.pieces[0].region.clone()
        } else {
            Region::union(self.pieces.iter().map(|p| p.region.clone()).collect())
        }
    }

    /// Obstacles a contour must avoid: singular spheres.
    pub fn obstacles(&self) -> Option<Region> {
        if self.singular.is_empty() {
            None
        } else {
            Some(Region::union(self.singular.iter().map(|s| Region::point(*s)).collect()))
        }
    }

    pub fn piece_index(&self, x0: f64, x1: f64) -> Option<usize> {
        let p = Sphere::new(x0, x1);
        if self.singular.iter().any(|s| s.distance(p) <= 1e-12 * (1.0 + s.s0.hypot(s.s1))) {
            return None;
        }
        self.pieces.iter().position(|pc| pc.region.contains(x0, x1))
    }

    pub fn is_defined_at(&self, x0: f64, x1: f64) -> bool {
        self.piece_index(x0, x1).is_some()
    }

    /// Stem values, using the even/odd extension for `x1 < 0`.
    pub fn stems(&self, x0: f64, x1: f64) -> Result<(Quaternion, Quaternion)> {
        let k = self
            .piece_index(x0, x1)
            .ok_or_else(|| Error::Domain(format!("({x0}, {x1}) lies outside the domain of {}", self.name)))?;
        let p = &self.pieces[k];
        let (a, b) = ((p.alpha)(x0, x1.abs()), (p.beta)(x0, x1.abs()));
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("{} is not finite at ({x0}, {x1})", self.name)));
        }
        Ok((a, if x1 < 0.0 { -b } else { b }))
    }

    pub fn eval(&self, x: Quaternion) -> Result<Quaternion> {
        let s = sphere_of(x);
        let (a, b) = self.stems(s.s0, s.s1)?;
        let u = x.imaginary_unit().as_quaternion();
        Ok(match self.chirality {
            Chirality::Right => a + b * u,
            _ => a + u * b,
        })
    }
}

/// Real polynomial `a0 + a1 s + ... + am s^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntrinsicPolynomial {
    coeffs: Vec<f64>,
}

impl IntrinsicPolynomial {
    /// Coefficients in ascending order; trailing zeros are dropped.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        IntrinsicPolynomial { coeffs }
    }

    pub fn constant(a: f64) -> Self {
        Self::new(vec![a])
    }

    pub fn monomial(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Self::new(c)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::ZERO, |acc, &a| acc * z + a)
    }

    pub fn eval(&self, q: Quaternion) -> Quaternion {
        self.coeffs.iter().rev().fold(Quaternion::ZERO, |acc, &a| acc * q + Quaternion::real(a))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Self::new(c)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        Self::new((0..n).map(|i| get(&self.coeffs, i) + get(&other.coeffs, i)).collect())
    }

    pub fn pow(&self, k: usize) -> Self {
        (0..k).fold(Self::constant(1.0), |acc, _| acc.mul(self))
    }

    /// `self(other(s))`.
    pub fn compose(&self, other: &Self) -> Self {
        self.coeffs
            .iter()
            .rev()
            .fold(Self::constant(0.0), |acc, &a| acc.mul(other).add(&Self::constant(a)))
    }

    /// Complex roots from the eigenvalues of the companion matrix.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let c: Vec<Complex64> = self.coeffs.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        complex_roots(&c)
    }

    /// Image sphere `[P(s0 + I s1)]`.
    pub fn map_sphere(&self, s: Sphere) -> Sphere {
        let w = self.eval_complex(s.as_complex());
        Sphere::new(w.re, w.im)
    }
}

/// Roots of `c0 + c1 z + ... + cm z^m` (trailing zeros ignored).
pub fn complex_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = match coeffs.iter().rposition(|c| *c != Complex64::ZERO) {
        Some(m) => m,
        None => return Err(Error::Domain("roots of the zero polynomial".into())),
    };
    if m == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[m];
    let mut c = DMatrix::<Complex64>::zeros(m, m);
    for i in 1..m {
        c[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..m {
        c[(i, m - 1)] = -coeffs[i] / lead;
    }
    complex_eigenvalues(c)
}

/// Quotient `num / den` of real polynomials, kept exact so that zeros,
/// poles and preimages are available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicRational {
    num: IntrinsicPolynomial,
    den: IntrinsicPolynomial,
}

impl IntrinsicRational {
    pub fn new(num: IntrinsicPolynomial, den: IntrinsicPolynomial) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Domain("zero denominator".into()));
        }
        Ok(IntrinsicRational { num, den })
    }

    pub fn polynomial(p: IntrinsicPolynomial) -> Self {
        IntrinsicRational { num: p, den: IntrinsicPolynomial::constant(1.0) }
    }

    /// `(s - a)^{-1}`.
    pub fn shifted_inverse(a: f64) -> Self {
        IntrinsicRational { num: IntrinsicPolynomial::constant(1.0), den: IntrinsicPolynomial::new(vec![-a, 1.0]) }
    }

    pub fn num(&self) -> &IntrinsicPolynomial {
        &self.num
    }

    pub fn den(&self) -> &IntrinsicPolynomial {
        &self.den
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.num.eval_complex(z) / self.den.eval_complex(z)
    }

    pub fn value_at_infinity(&self) -> Option<f64> {
        match self.num.degree().cmp(&self.den.degree()) {
            std::cmp::Ordering::Less => Some(0.0),
            std::cmp::Ordering::Equal => Some(self.num.leading() / self.den.leading()),
            std::cmp::Ordering::Greater => None,
        }
    }

    pub fn poles(&self) -> Result<Vec<Sphere>> {
        Ok(self.den.roots()?.iter().map(|z| Sphere::new(z.re, z.im)).collect())
    }

    pub fn zeros(&self) -> Result<Vec<Sphere>> {
        if self.num.is_zero() {
            return Err(Error::Domain("zero function has no isolated zeros".into()));
        }
        Ok(self.num.roots()?.iter().map(|z| Sphere::new(z.re, z.im)).collect())
    }

    /// Spheres mapped onto `[c]`.
    pub fn preimage(&self, c: Sphere) -> Result<Vec<Sphere>> {
        let c = c.as_complex();
        let n = self.num.coeffs.len().max(self.den.coeffs.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let coeffs: Vec<Complex64> =
            (0..n).map(|i| Complex64::new(get(&self.num.coeffs, i), 0.0) - c * get(&self.den.coeffs, i)).collect();
        if coeffs.iter().all(|z| *z == Complex64::ZERO) {
            return Err(Error::Domain("constant function takes the value everywhere".into()));
        }
        Ok(complex_roots(&coeffs)?.iter().map(|z| Sphere::new(z.re, z.im)).collect())
    }

    pub fn map_sphere(&self, s: Sphere) -> Sphere {
        let w = self.eval_complex(s.as_complex());
        Sphere::new(w.re, w.im)
    }

    pub fn mul(&self, other: &Self) -> Self {
        IntrinsicRational { num: self.num.mul(&other.num), den: self.den.mul(&other.den) }
    }

    pub fn reciprocal(&self) -> Result<Self> {
        Self::new(self.den.clone(), self.num.clone())
    }

    /// `self(inner(s))`.
    pub fn compose(&self, inner: &Self) -> Self {
        let m = self.num.degree().max(self.den.degree());
        // homogenise: sum a_k p^k q^(m-k)
        let hom = |c: &[f64]| {
            (0..=m).fold(IntrinsicPolynomial::constant(0.0), |acc, k| {
                let a = c.get(k).copied().unwrap_or(0.0);
                let term = inner.num.pow(k).mul(&inner.den.pow(m - k)).mul(&IntrinsicPolynomial::constant(a));
                acc.add(&term)
            })
        };
        IntrinsicRational { num: hom(&self.num.coeffs), den: hom(&self.den.coeffs) }
    }

    pub fn to_function(&self) -> SliceFunction {
        rational(&self.num, &self.den).expect("nonzero denominator").with_name(self.to_string())
    }
}

impl fmt::Display for IntrinsicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.degree() == 0 && self.den.coeffs[0] == 1.0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({}) / ({})", self.num, self.den)
        }
    }
}

impl fmt::Display for IntrinsicPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(k, a)| **a != 0.0 || (*k == 0 && self.coeffs.len() == 1))
            .map(|(k, a)| match k {
                0 => format!("{a}"),
                1 => format!("{a}*s"),
                _ => format!("{a}*s^{k}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

/// `a` on the whole space; intrinsic for real `a`.
pub fn constant(a: Quaternion) -> SliceFunction {
    let ch = if a.is_real(0.0) { Chirality::Intrinsic } else { Chirality::Bilateral };
    SliceFunction::new(format!("constant {a}"), vec![Piece::constant(Region::Whole, a)], ch, Some(a))
}

/// Intrinsic polynomial on the whole space. Non-constant polynomials carry
/// no value at infinity.
pub fn polynomial(p: &IntrinsicPolynomial) -> SliceFunction {
    let q = p.clone();
    let at_inf = (p.degree() == 0).then(|| Quaternion::real(p.coeffs[0]));
    SliceFunction::new(
        format!("polynomial {p}"),
        vec![Piece::from_complex(Region::Whole, move |z| q.eval_complex(z))],
        Chirality::Intrinsic,
        at_inf,
    )
}

/// `num(s) / den(s)` with poles at the roots of `den`.
pub fn rational(num: &IntrinsicPolynomial, den: &IntrinsicPolynomial) -> Result<SliceFunction> {
    if den.is_zero() {
        return Err(Error::Domain("zero denominator".into()));
    }
    let poles: Vec<Sphere> = den.roots()?.iter().map(|z| Sphere::new(z.re, z.im)).collect();
    let at_inf = match num.degree().cmp(&den.degree()) {
        std::cmp::Ordering::Less => Some(Quaternion::ZERO),
        std::cmp::Ordering::Equal => Some(Quaternion::real(num.leading() / den.leading())),
        std::cmp::Ordering::Greater => None,
    };
    let (n, d) = (num.clone(), den.clone());
    Ok(SliceFunction::new(
        format!("rational ({num}) / ({den})"),
        vec![Piece::from_complex(Region::Whole, move |z| n.eval_complex(z) / d.eval_complex(z))],
        Chirality::Intrinsic,
        at_inf,
    )
    .with_singularities(poles))
}

/// `(s - a)^{-1}` for real `a`.
pub fn shifted_inverse(a: f64) -> SliceFunction {
    rational(&IntrinsicPolynomial::constant(1.0), &IntrinsicPolynomial::new(vec![-a, 1.0]))
        .expect("nonzero denominator")
        .with_name(format!("(s - {a})^-1"))
}

/// Exponential; entire, no value at infinity.
pub fn exp() -> SliceFunction {
    SliceFunction::new("exp", vec![Piece::from_complex(Region::Whole, |z| z.exp())], Chirality::Intrinsic, None)
}

/// Intrinsic function from a holomorphic `F` with `F(conj z) = conj F(z)`.
pub fn intrinsic_from_complex(
    name: impl Into<String>,
    region: Region,
    f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    at_infinity: Option<Quaternion>,
) -> SliceFunction {
    SliceFunction::new(name, vec![Piece::from_complex(region, f)], Chirality::Intrinsic, at_infinity)
}

fn check_disjoint(regions: &[&Region]) -> Result<()> {
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            if regions[i].overlaps(regions[j]) {
                return Err(Error::Domain(format!("regions {} and {} overlap", regions[i], regions[j])));
            }
        }
    }
    Ok(())
}

/// Constant `value_k` on each (pairwise disjoint) region.
pub fn locally_constant(parts: Vec<(Region, Quaternion)>, at_infinity: Option<Quaternion>) -> Result<SliceFunction> {
    check_disjoint(&parts.iter().map(|(r, _)| r).collect::<Vec<_>>())?;
    let real = parts.iter().all(|(_, q)| q.is_real(0.0)) && at_infinity.is_none_or(|q| q.is_real(0.0));
    let ch = if real { Chirality::Intrinsic } else { Chirality::Bilateral };
    let name = parts.iter().map(|(r, q)| format!("{q} on {r}")).collect::<Vec<_>>().join(", ");
    let pieces = parts.into_iter().map(|(r, q)| Piece::constant(r, q)).collect();
    Ok(SliceFunction::new(format!("locally constant [{name}]"), pieces, ch, at_infinity))
}

/// Characteristic function of the selected regions among pairwise disjoint
/// `regions`. The value at infinity is the selection state of the unbounded
/// region if there is one, otherwise 1 exactly when everything is selected.
pub fn char_function(regions: &[Region], selected: &[bool]) -> Result<SliceFunction> {
    if regions.len() != selected.len() {
        return Err(Error::Domain("selection length does not match region count".into()));
    }
    check_disjoint(&regions.iter().collect::<Vec<_>>())?;
    if selected.iter().all(|&s| s) {
        return Ok(constant(Quaternion::ONE).with_name("char(all)"));
    }
    if selected.iter().all(|&s| !s) {
        return Ok(constant(Quaternion::ZERO).with_name("char(none)"));
    }
    let at_inf = regions
        .iter()
        .zip(selected)
        .find(|(r, _)| !r.is_bounded())
        .map(|(_, &s)| if s { 1.0 } else { 0.0 })
        .unwrap_or(0.0);
    let parts = regions
        .iter()
        .zip(selected)
        .map(|(r, &s)| (r.clone(), Quaternion::real(if s { 1.0 } else { 0.0 })))
        .collect();
    let f = locally_constant(parts, Some(Quaternion::real(at_inf)))?;
    let names: Vec<String> = regions.iter().zip(selected).filter(|(_, s)| **s).map(|(r, _)| r.to_string()).collect();
    Ok(f.with_name(format!("char({})", names.join(", "))))
}

fn intersect(a: &Region, b: &Region) -> Region {
    match (a, b) {
        (Region::Whole, r) | (r, Region::Whole) => r.clone(),
        _ => Region::Intersection { parts: vec![a.clone(), b.clone()] },
    }
}

/// Pointwise product `f g` for `f` intrinsic, or `g` intrinsic and `f`
/// right; the result inherits the non-intrinsic side's chirality.
pub fn product(f: &SliceFunction, g: &SliceFunction) -> Result<SliceFunction> {
    use Chirality::*;
    let ch = match (f.chirality, g.chirality) {
        (Intrinsic, c) => c,
        (Right, Intrinsic) => Right,
        (Bilateral, Intrinsic) => Bilateral,
        (a, b) => {
            return Err(Error::Precondition(format!(
                "product of {a:?} and {b:?} functions is not slice hyperholomorphic"
            )))
        }
    };
    let mut pieces = Vec::new();
    for p in &f.pieces {
        for q in &g.pieces {
            let (a1, b1, a2, b2) = (p.alpha.clone(), p.beta.clone(), q.alpha.clone(), q.beta.clone());
            let (a1b, b1b, a2b, b2b) = (a1.clone(), b1.clone(), a2.clone(), b2.clone());
            pieces.push(Piece::new(
                intersect(&p.region, &q.region),
                move |x, y| a1(x, y) * a2(x, y) - b1(x, y) * b2(x, y),
                move |x, y| a1b(x, y) * b2b(x, y) + b1b(x, y) * a2b(x, y),
            ));
        }
    }
    let at_inf = match (f.at_infinity, g.at_infinity) {
        (Some(a), Some(b)) => Some(a * b),
        _ => None,
    };
    let mut sing = f.singular.clone();
    sing.extend_from_slice(&g.singular);
    Ok(SliceFunction::new(format!("({}) * ({})", f.name, g.name), pieces, ch, at_inf).with_singularities(sing))
}

/// Pointwise sum of two functions of compatible chirality.
pub fn sum(f: &SliceFunction, g: &SliceFunction) -> Result<SliceFunction> {
    use Chirality::*;
    let ch = match (f.chirality, g.chirality) {
        (a, b) if a == b => a,
        (Intrinsic, c) | (c, Intrinsic) => c,
        (Bilateral, c) | (c, Bilateral) => c,
        (a, b) => return Err(Error::Precondition(format!("cannot add {a:?} and {b:?} functions"))),
    };
    let mut pieces = Vec::new();
    for p in &f.pieces {
        for q in &g.pieces {
            let (a1, b1, a2, b2) = (p.alpha.clone(), p.beta.clone(), q.alpha.clone(), q.beta.clone());
            pieces.push(Piece::new(
                intersect(&p.region, &q.region),
                move |x, y| a1(x, y) + a2(x, y),
                move |x, y| b1(x, y) + b2(x, y),
            ));
        }
    }
    let at_inf = match (f.at_infinity, g.at_infinity) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    let mut sing = f.singular.clone();
    sing.extend_from_slice(&g.singular);
    Ok(SliceFunction::new(format!("({}) + ({})", f.name, g.name), pieces, ch, at_inf).with_singularities(sing))
}

/// `g(f(x))` for intrinsic `f`. Points where `f(x)` leaves the domain of
/// `g` evaluate to a domain error.
pub fn compose(g: &SliceFunction, f: &SliceFunction) -> Result<SliceFunction> {
    if f.chirality != Chirality::Intrinsic {
        return Err(Error::Precondition("inner function of a composition must be intrinsic".into()));
    }
    let pieces = f
        .pieces
        .iter()
        .map(|p| {
            let (fa, fb, fa2, fb2) = (p.alpha.clone(), p.beta.clone(), p.alpha.clone(), p.beta.clone());
            let (g1, g2) = (g.clone(), g.clone());
            Piece::new(
                p.region.clone(),
                move |x, y| match g1.stems(fa(x, y).w, fb(x, y).w) {
                    Ok((a, _)) => a,
                    Err(_) => Quaternion::new(f64::NAN, 0.0, 0.0, 0.0),
                },
                move |x, y| match g2.stems(fa2(x, y).w, fb2(x, y).w) {
                    Ok((_, b)) => b,
                    Err(_) => Quaternion::new(f64::NAN, 0.0, 0.0, 0.0),
                },
            )
        })
        .collect();
    let at_inf = match f.at_infinity {
        Some(v) => g.eval(v).ok(),
        None => None,
    };
    Ok(SliceFunction::new(format!("({}) o ({})", g.name, f.name), pieces, g.chirality, at_inf)
        .with_singularities(f.singular.clone()))
}

/// `1 / f` for intrinsic `f`; zeros of `f` surface as domain errors.
pub fn reciprocal(f: &SliceFunction) -> Result<SliceFunction> {
    if f.chirality != Chirality::Intrinsic {
        return Err(Error::Precondition("reciprocal needs an intrinsic function".into()));
    }
    let pieces = f
        .pieces
        .iter()
        .map(|p| {
            let (a, b, a2, b2) = (p.alpha.clone(), p.beta.clone(), p.alpha.clone(), p.beta.clone());
            Piece::new(
                p.region.clone(),
                move |x, y| Quaternion::real((1.0 / Complex64::new(a(x, y).w, b(x, y).w)).re),
                move |x, y| Quaternion::real((1.0 / Complex64::new(a2(x, y).w, b2(x, y).w)).im),
            )
        })
        .collect();
    let at_inf = f.at_infinity.and_then(|v| v.try_inv());
    Ok(SliceFunction::new(format!("1 / ({})", f.name), pieces, Chirality::Intrinsic, at_inf)
        .with_singularities(f.singular.clone()))
}

/// A region of one complex plane `C_u`, as a union of disks or the whole
/// plane.
#[derive(Clone, Debug, PartialEq)]
pub enum PlaneRegion {
    Whole,
    Disks(Vec<(Complex64, f64)>),
}

/// Holomorphic data on the plane `C_u`.
#[derive(Clone)]
pub struct SliceSamples {
    pub unit: ImaginaryUnit,
    pub region: PlaneRegion,
    pub h: Arc<dyn Fn(Quaternion) -> Quaternion + Send + Sync>,
}

impl SliceSamples {
    pub fn new(unit: ImaginaryUnit, region: PlaneRegion, h: impl Fn(Quaternion) -> Quaternion + Send + Sync + 'static) -> Self {
        SliceSamples { unit, region, h: Arc::new(h) }
    }
}

/// Extends `h` from `C_u` to an axially symmetric domain by the
/// representation formula:
/// `alpha = (h(x_u) + h(conj x_u)) / 2`, `beta = u^{-1} (h(x_u) - h(conj x_u)) / 2`
/// (with `u^{-1}` on the right for right chirality).
pub fn extend_from_slice(samples: &SliceSamples, chirality: Chirality) -> Result<SliceFunction> {
    let region = match &samples.region {
        PlaneRegion::Whole => Region::Whole,
        PlaneRegion::Disks(disks) => {
            for (c, r) in disks {
                let mirrored = disks
                    .iter()
                    .any(|(d, q)| (d.re - c.re).abs() < 1e-12 && (d.im + c.im).abs() < 1e-12 && (q - r).abs() < 1e-12);
                if !mirrored {
                    return Err(Error::Domain(format!(
                        "sample region is not symmetric about the real axis: disk ({c}, {r}) has no mirror image"
                    )));
                }
            }
            let parts: Vec<Region> = disks
                .iter()
                .filter(|(c, _)| c.im >= 0.0)
                .map(|(c, r)| Region::sphere_disk(Sphere::new(c.re, c.im), *r))
                .collect();
            if parts.len() == 1 { parts[0].clone() } else { Region::union(parts) }
        }
    };
    let (u, h) = (samples.unit, samples.h.clone());
    let h2 = h.clone();
    let ui = u.as_quaternion().inv();
    let alpha = move |x0: f64, x1: f64| {
        let z = Sphere::new(x0, x1).embed(u);
        (h(z) + h(z.conj())) * 0.5
    };
    let beta = move |x0: f64, x1: f64| {
        let z = Sphere::new(x0, x1).embed(u);
        let d = (h2(z) - h2(z.conj())) * 0.5;
        match chirality {
            Chirality::Right => d * ui,
            _ => ui * d,
        }
    };
    let ch = match chirality {
        Chirality::Intrinsic | Chirality::Bilateral => Chirality::Left,
        c => c,
    };
    Ok(SliceFunction::new("extension from slice", vec![Piece::new(region, alpha, beta)], ch, None))
}

/// `S_L^{-1}(s, x) = -(x² - 2 Re(s) x + |s|²)^{-1} (x - conj(s))`.
pub fn cauchy_kernel_left(s: Quaternion, x: Quaternion) -> Result<Quaternion> {
    let q = kernel_quadratic(s, x)?;
    Ok(-(q * (x - s.conj())))
}

/// `S_R^{-1}(s, x) = -(x - conj(s)) (x² - 2 Re(s) x + |s|²)^{-1}`.
pub fn cauchy_kernel_right(s: Quaternion, x: Quaternion) -> Result<Quaternion> {
    let q = kernel_quadratic(s, x)?;
    Ok(-((x - s.conj()) * q))
}

fn kernel_quadratic(s: Quaternion, x: Quaternion) -> Result<Quaternion> {
    let (ps, px) = (sphere_of(s), sphere_of(x));
    if ps.distance(px) <= 1e-12 * (1.0 + s.norm()) {
        return Err(Error::Singular { sphere: ps, detail: format!("kernel evaluated at x = {x} on [s]") });
    }
    (x * x - x * (2.0 * s.re()) + Quaternion::real(s.norm_sqr()))
        .try_inv()
        .ok_or_else(|| Error::Singular { sphere: ps, detail: "vanishing kernel denominator".into() })
}

/// Van der Corput radical inverse.
pub(crate) fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut r, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f /= base as f64;
    }
    r
}

/// Halton points `(x0, x1, unit)` inside the domain of `f`, away from its
/// singularities. Unbounded pieces are sampled on `[-4, 4] x [0, 4]`.
pub fn sample_points(f: &SliceFunction, count: usize) -> Vec<(f64, f64, ImaginaryUnit)> {
    const PRIMES: [u64; 4] = [2, 3, 5, 7];
    let boxes: Vec<[(f64, f64); 2]> = f
        .pieces
        .iter()
        .map(|p| p.region.bounding_box().unwrap_or([(-4.0, 4.0), (0.0, 4.0)]))
        .collect();
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    let limit = 200 * count as u64 + 1000;
    while out.len() < count && i < limit {
        let k = (i as usize) % boxes.len();
        let b = boxes[k];
        let h: Vec<f64> = PRIMES.iter().map(|&p| radical_inverse(i, p)).collect();
        i += 1;
        let x0 = b[0].0 + (b[0].1 - b[0].0) * h[0];
        let x1 = b[1].0 + (b[1].1 - b[1].0) * h[1];
        if f.piece_index(x0, x1) != Some(k) || f.singular.iter().any(|s| s.distance(Sphere::new(x0, x1)) < 1e-3) {
            continue;
        }
        let z = 2.0 * h[2] - 1.0;
        let phi = 2.0 * PI * h[3];
        let rho = (1.0 - z * z).max(0.0).sqrt();
        let u = ImaginaryUnit::new(rho * phi.cos(), rho * phi.sin(), z).unwrap_or(ImaginaryUnit::I);
        out.push((x0, x1, u));
    }
    out
}

/// Checks `f(conj x) = conj f(x)` and real stems on quasi-random samples.
/// Returns whether the worst deviation is within [`INTRINSIC_TOL`] and the
/// deviation itself.
pub fn is_intrinsic(f: &SliceFunction, samples: usize) -> (bool, f64) {
    let mut worst: f64 = 0.0;
    for (x0, x1, u) in sample_points(f, samples) {
        let Ok((a, b)) = f.stems(x0, x1) else { continue };
        worst = worst.max(a.vector_norm()).max(b.vector_norm());
        let x = Sphere::new(x0, x1).embed(u);
        if let (Ok(fx), Ok(fxb)) = (f.eval(x), f.eval(x.conj())) {
            worst = worst.max(fxb.max_abs_diff(fx.conj()));
        }
    }
    (worst <= INTRINSIC_TOL, worst)
}

/// Splits a left-and-right function (real `beta`) as `c + f_tilde` with `c`
/// the locally constant vector part of `alpha` and `f_tilde` intrinsic.
pub fn split_left_right(f: &SliceFunction) -> Result<(SliceFunction, SliceFunction)> {
    if f.chirality == Chirality::Intrinsic {
        return Ok((constant(Quaternion::ZERO), f.clone()));
    }
    let violation = sample_points(f, INTRINSIC_SAMPLES)
        .into_iter()
        .filter_map(|(x0, x1, _)| f.stems(x0, x1).ok())
        .map(|(_, b)| b.vector_norm())
        .fold(0.0, f64::max);
    if violation > INTRINSIC_TOL {
        return Err(Error::NotSplittable { violation });
    }
    let mut c_pieces = Vec::new();
    let mut t_pieces = Vec::new();
    for p in &f.pieces {
        let (a1, a2, b) = (p.alpha.clone(), p.alpha.clone(), p.beta.clone());
        c_pieces.push(Piece::new(p.region.clone(), move |x, y| a1(x, y).vector(), |_, _| Quaternion::ZERO));
        t_pieces.push(Piece::new(
            p.region.clone(),
            move |x, y| Quaternion::real(a2(x, y).w),
            move |x, y| Quaternion::real(b(x, y).w),
        ));
    }
    let c = SliceFunction::new(
        format!("vector part of {}", f.name),
        c_pieces,
        Chirality::Bilateral,
        f.at_infinity.map(|q| q.vector()),
    )
    .with_singularities(f.singular.clone());
    let t = SliceFunction::new(
        format!("intrinsic part of {}", f.name),
        t_pieces,
        Chirality::Intrinsic,
        f.at_infinity.map(|q| Quaternion::real(q.w)),
    )
    .with_singularities(f.singular.clone());
    Ok((c, t))
}

/// Largest central-difference Cauchy-Riemann residual
/// `max(|d0 alpha - d1 beta|, |d1 alpha + d0 beta|)` over the given points,
/// skipping points within `h` of a piece boundary.
pub fn cr_residual(f: &SliceFunction, points: &[(f64, f64)], h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for &(x0, x1) in points {
        let Some(k) = f.piece_index(x0, x1) else { continue };
        let nbrs = [(x0 + h, x1), (x0 - h, x1), (x0, x1 + h), (x0, x1 - h)];
        if nbrs.iter().any(|&(a, b)| f.piece_index(a, b) != Some(k)) {
            continue;
        }
        let st: Vec<(Quaternion, Quaternion)> = match nbrs.iter().map(|&(a, b)| f.stems(a, b)).collect() {
            Ok(v) => v,
            Err(_) => continue,
        };
        let d0a = (st[0].0 - st[1].0) / (2.0 * h);
        let d0b = (st[0].1 - st[1].1) / (2.0 * h);
        let d1a = (st[2].0 - st[3].0) / (2.0 * h);
        let d1b = (st[2].1 - st[3].1) / (2.0 * h);
        worst = worst.max((d0a - d1b).norm()).max((d1a + d0b).norm());
    }
    worst
}

/// Central difference of `f` in the real direction at `x`.
pub fn slice_derivative(f: &SliceFunction, x: Quaternion, h: f64) -> Result<Quaternion> {
    let e = Quaternion::real(h);
    Ok((f.eval(x + e)? - f.eval(x - e)?) / (2.0 * h))
}
