//! Quaternionic matrices acting right-linearly on `H^n`, the complex adjoint
//! embedding, S-spectra, pseudo-resolvents and the two S-resolvent operators.
//!
//! A matrix acts on column vectors from the left, scalars act on vectors from
//! the right: `M(v a + w) = M(v) a + M(w)`. All solves and eigenvalue
//! problems go through the complex adjoint
//! `chi(A + B J) = [[A, B], [-conj(B), conj(A)]]`, which is an injective
//! algebra homomorphism from `n x n` quaternionic matrices into
//! `2n x 2n` complex matrices.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{sphere_of, Quaternion, Sphere};

/// Absolute tolerance used when merging eigenvalues into spheres.
pub const SPHERE_MERGE_TOL: f64 = 1e-8;

/// Reciprocal condition estimates below this trigger a warning.
pub const CONDITION_WARN: f64 = 1e12;

/// Minimal distance, relative to scale, below which `Q_s(T)` counts as singular.
pub const SINGULAR_CLEARANCE: f64 = 1e-10;

/// Square quaternionic matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct QMatrix {
    n: usize,
    data: Vec<Quaternion>,
}

/// Wire form: dimension plus row-major 4-tuples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixRepr {
    pub dim: usize,
    pub entries: Vec<Quaternion>,
}

impl TryFrom<MatrixRepr> for QMatrix {
    type Error = String;
    fn try_from(r: MatrixRepr) -> std::result::Result<Self, String> {
        QMatrix::from_row_major(r.dim, r.entries)
            .ok_or_else(|| "entry count does not match dim * dim".to_string())
    }
}

impl From<QMatrix> for MatrixRepr {
    fn from(m: QMatrix) -> Self {
        MatrixRepr { dim: m.n, entries: m.data }
    }
}

impl QMatrix {
    pub fn zeros(n: usize) -> Self {
        QMatrix { n, data: vec![Quaternion::ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, Quaternion::ONE)
    }

    /// `a * Identity`.
    pub fn scalar(n: usize, a: Quaternion) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = a;
        }
        m
    }

    pub fn diagonal(entries: &[Quaternion]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &q) in entries.iter().enumerate() {
            m[(i, i)] = q;
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<Quaternion>) -> Option<Self> {
        (data.len() == n * n).then_some(QMatrix { n, data })
    }

    pub fn from_rows(rows: Vec<Vec<Quaternion>>) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(QMatrix { n, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Quaternion) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        QMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Quaternion] {
        &self.data
    }

    pub fn column(&self, j: usize) -> QVector {
        QVector((0..self.n).map(|i| self[(i, j)]).collect())
    }

    /// Entrywise `a * m_ij`.
    pub fn scale_left(&self, a: Quaternion) -> Self {
        QMatrix { n: self.n, data: self.data.iter().map(|&q| a * q).collect() }
    }

    /// Entrywise `m_ij * a`.
    pub fn scale_right(&self, a: Quaternion) -> Self {
        QMatrix { n: self.n, data: self.data.iter().map(|&q| q * a).collect() }
    }

    pub fn scale(&self, r: f64) -> Self {
        QMatrix { n: self.n, data: self.data.iter().map(|&q| q * r).collect() }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        QMatrix::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|q| q.norm()).fold(0.0, f64::max)
    }

    pub fn dist(&self, other: &QMatrix) -> f64 {
        (self - other).max_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|q| q.is_finite())
    }

    pub fn apply(&self, v: &QVector) -> QVector {
        assert_eq!(v.len(), self.n, "dimension mismatch");
        QVector(
            (0..self.n)
                .map(|i| (0..self.n).map(|j| self[(i, j)] * v.0[j]).sum())
                .collect(),
        )
    }

    pub fn inverse(&self) -> Result<QMatrix> {
        let inv = invert_complex(complex_adjoint(self), "matrix inverse")?;
        Ok(from_complex_adjoint(&inv))
    }

    pub fn powi(&self, k: u32) -> QMatrix {
        (0..k).fold(QMatrix::identity(self.n), |acc, _| &acc * self)
    }
}

impl Index<(usize, usize)> for QMatrix {
    type Output = Quaternion;
    fn index(&self, (i, j): (usize, usize)) -> &Quaternion {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for QMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Quaternion {
        &mut self.data[i * self.n + j]
    }
}

impl Mul for &QMatrix {
    type Output = QMatrix;
    fn mul(self, rhs: &QMatrix) -> QMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        let n = self.n;
        let mut out = QMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == Quaternion::ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &QMatrix {
    type Output = QMatrix;
    fn add(self, rhs: &QMatrix) -> QMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        QMatrix { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a + *b).collect() }
    }
}

impl Sub for &QMatrix {
    type Output = QMatrix;
    fn sub(self, rhs: &QMatrix) -> QMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        QMatrix { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect() }
    }
}

impl Neg for &QMatrix {
    type Output = QMatrix;
    fn neg(self) -> QMatrix {
        self.scale(-1.0)
    }
}

impl fmt::Display for QMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format_quaternion(self[(i, j)])).collect();
            writeln!(f, "  {}", row.join("  "))?;
        }
        Ok(())
    }
}

fn format_quaternion(q: Quaternion) -> String {
    format!("[{:>9.6}, {:>9.6}, {:>9.6}, {:>9.6}]", q.w, q.x, q.y, q.z)
}

/// Column vector in `H^n` (a right `H`-module).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QVector(pub Vec<Quaternion>);

impl QVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `<u, v> = sum conj(u_i) v_i`; right-linear in `v`.
    pub fn inner(&self, v: &QVector) -> Quaternion {
        self.0.iter().zip(&v.0).map(|(a, b)| a.conj() * *b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|q| q.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale_right(&self, a: Quaternion) -> QVector {
        QVector(self.0.iter().map(|&q| q * a).collect())
    }

    pub fn sub(&self, other: &QVector) -> QVector {
        QVector(self.0.iter().zip(&other.0).map(|(a, b)| *a - *b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|q| q.norm()).fold(0.0, f64::max)
    }
}

/// Complex adjoint `[[A, B], [-conj(B), conj(A)]]` of `T = A + B J`.
pub fn complex_adjoint(t: &QMatrix) -> DMatrix<Complex64> {
    let n = t.dim();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = t[(i, j)].split_ij();
            m[(i, j)] = a;
            m[(i, n + j)] = b;
            m[(n + i, j)] = -b.conj();
            m[(n + i, n + j)] = a.conj();
        }
    }
    m
}

/// Reads `T` back from the top block row of a complex adjoint.
pub fn from_complex_adjoint(m: &DMatrix<Complex64>) -> QMatrix {
    let n = m.nrows() / 2;
    QMatrix::from_fn(n, |i, j| Quaternion::from_split_ij(m[(i, j)], m[(i, n + j)]))
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Partial-pivot LU inverse; warns when the 1-norm condition number exceeds
/// [`CONDITION_WARN`].
fn invert_complex(m: DMatrix<Complex64>, what: &str) -> Result<DMatrix<Complex64>> {
    let norm = one_norm(&m);
    let inv = m.lu().try_inverse().ok_or_else(|| {
        Error::Precondition(format!("{what}: matrix is singular"))
    })?;
    let cond = norm * one_norm(&inv);
    if !cond.is_finite() {
        return Err(Error::Precondition(format!("{what}: inverse is not finite")));
    }
    if cond > CONDITION_WARN {
        warn!("{what}: condition number {cond:e} exceeds {CONDITION_WARN:e}");
    }
    Ok(inv)
}

/// Matrix with entries drawn uniformly from the cube `[-1, 1]^4`.
pub fn random_matrix<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> QMatrix {
    QMatrix::from_fn(n, |_, _| {
        Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    })
}

/// Eigenvalues of a complex square matrix via the complex Schur form.
pub fn complex_eigenvalues(m: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenSolver("matrix has non-finite entries".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenSolver("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Finite set of spectral spheres, optional real intervals (for declared
/// closures of diagonal models) and the point at infinity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SSpectrum {
    pub spheres: Vec<Sphere>,
    /// Closed real intervals `[a, b]`; endpoints may be infinite.
    #[serde(default)]
    pub intervals: Vec<(f64, f64)>,
    #[serde(default)]
    pub includes_infinity: bool,
}

impl SSpectrum {
    pub fn from_spheres(spheres: Vec<Sphere>) -> Self {
        SSpectrum { spheres, intervals: Vec::new(), includes_infinity: false }
    }

    /// The whole real axis plus infinity.
    pub fn real_axis() -> Self {
        SSpectrum {
            spheres: Vec::new(),
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            includes_infinity: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty() && self.intervals.is_empty() && !self.includes_infinity
    }

    /// Whether the spectrum reaches infinity, either explicitly or through
    /// an unbounded real interval.
    pub fn is_unbounded(&self) -> bool {
        self.includes_infinity || self.intervals.iter().any(|(a, b)| a.is_infinite() || b.is_infinite())
    }

    /// Half-plane distance from the sphere `p` to the finite part of the set.
    pub fn distance_to(&self, p: Sphere) -> f64 {
        let ds = self.spheres.iter().map(|s| s.distance(p));
        let di = self.intervals.iter().map(|&(a, b)| {
            let x = p.s0.clamp(a, b);
            (p.s0 - x).hypot(p.s1)
        });
        ds.chain(di).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Sphere, tol: f64) -> bool {
        self.distance_to(p) <= tol
    }

    /// Largest modulus of a finite point; infinite if unbounded.
    pub fn radius(&self) -> f64 {
        if self.is_unbounded() {
            return f64::INFINITY;
        }
        let rs = self.spheres.iter().map(|s| s.s0.hypot(s.s1));
        let ri = self.intervals.iter().map(|(a, b)| a.abs().max(b.abs()));
        rs.chain(ri).fold(0.0, f64::max)
    }
}

impl fmt::Display for SSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.spheres.iter().map(|s| s.to_string()).collect();
        parts.extend(self.intervals.iter().map(|(a, b)| format!("[{a}, {b}]")));
        if self.includes_infinity {
            parts.push("inf".into());
        }
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Groups eigenvalues into spheres `(Re, |Im|)`, merging points closer than
/// `tol` and snapping tiny imaginary parts to the real axis.
pub fn spheres_from_eigenvalues(eigs: &[Complex64], tol: f64) -> Vec<Sphere> {
    let mut pts: Vec<Sphere> = eigs
        .iter()
        .map(|z| {
            let s1 = z.im.abs();
            Sphere::new(z.re, if s1 <= tol { 0.0 } else { s1 })
        })
        .collect();
    pts.sort_by(|a, b| a.s0.total_cmp(&b.s0).then(a.s1.total_cmp(&b.s1)));
    // single-linkage clustering
    let mut clusters: Vec<Vec<Sphere>> = Vec::new();
    for p in pts {
        match clusters.iter_mut().find(|c| c.iter().any(|q| q.distance(p) <= tol)) {
            Some(c) => c.push(p),
            None => clusters.push(vec![p]),
        }
    }
    let mut out: Vec<Sphere> = clusters
        .into_iter()
        .map(|c| {
            let k = c.len() as f64;
            let s0 = c.iter().map(|s| s.s0).sum::<f64>() / k;
            let s1 = c.iter().map(|s| s.s1).sum::<f64>() / k;
            Sphere::new(s0, s1)
        })
        .collect();
    out.sort_by(|a, b| a.s0.total_cmp(&b.s0).then(a.s1.total_cmp(&b.s1)));
    out
}

/// The S-spectrum of a matrix, i.e. its spheres of right eigenvalues.
pub fn s_spectrum(t: &QMatrix) -> Result<SSpectrum> {
    s_spectrum_with_tol(t, SPHERE_MERGE_TOL)
}

pub fn s_spectrum_with_tol(t: &QMatrix, tol: f64) -> Result<SSpectrum> {
    let eigs = complex_eigenvalues(complex_adjoint(t))?;
    Ok(SSpectrum::from_spheres(spheres_from_eigenvalues(&eigs, tol)))
}

/// `Q_s(T) = T² - 2 Re(s) T + |s|² Identity`, given a precomputed `T²`.
pub fn q_operator(t: &QMatrix, t_sq: &QMatrix, s: Quaternion) -> QMatrix {
    let mut q = t_sq - &t.scale(2.0 * s.re());
    let r = s.norm_sqr();
    for i in 0..t.dim() {
        q[(i, i)] += Quaternion::real(r);
    }
    q
}

/// Pseudo-resolvent context: caches `T²` and the spectrum used for the
/// clearance check.
#[derive(Clone, Debug)]
pub struct Resolvent<'a> {
    t: &'a QMatrix,
    t_sq: QMatrix,
    spectrum: SSpectrum,
    scale: f64,
}

impl<'a> Resolvent<'a> {
    pub fn new(t: &'a QMatrix) -> Result<Self> {
        let spectrum = s_spectrum(t)?;
        Ok(Self::with_spectrum(t, spectrum))
    }

    pub fn with_spectrum(t: &'a QMatrix, spectrum: SSpectrum) -> Self {
        let scale = 1.0 + t.max_norm();
        Resolvent { t, t_sq: t * t, spectrum, scale }
    }

    pub fn operator(&self) -> &QMatrix {
        self.t
    }

    pub fn spectrum(&self) -> &SSpectrum {
        &self.spectrum
    }

    fn check(&self, s: Quaternion) -> Result<()> {
        let p = sphere_of(s);
        let d = self.spectrum.distance_to(p);
        if d <= SINGULAR_CLEARANCE * self.scale {
            return Err(Error::Singular {
                sphere: p,
                detail: format!("distance {d:e} to the S-spectrum"),
            });
        }
        Ok(())
    }

    /// `Q_s(T)^{-1}`.
    pub fn pseudo(&self, s: Quaternion) -> Result<QMatrix> {
        self.check(s)?;
        let q = q_operator(self.t, &self.t_sq, s);
        let inv = invert_complex(complex_adjoint(&q), "pseudo-resolvent").map_err(|e| Error::Singular {
            sphere: sphere_of(s),
            detail: e.to_string(),
        })?;
        Ok(from_complex_adjoint(&inv))
    }

    /// `S_L^{-1}(s,T) = Q_s(T)^{-1} conj(s) - T Q_s(T)^{-1}` from a given `Q^{-1}`.
    pub fn left_from_pseudo(&self, q_inv: &QMatrix, s: Quaternion) -> QMatrix {
        &q_inv.scale_right(s.conj()) - &(self.t * q_inv)
    }

    /// `S_R^{-1}(s,T) = conj(s) Q_s(T)^{-1} - T Q_s(T)^{-1}` from a given `Q^{-1}`.
    pub fn right_from_pseudo(&self, q_inv: &QMatrix, s: Quaternion) -> QMatrix {
        &q_inv.scale_left(s.conj()) - &(self.t * q_inv)
    }

    pub fn left(&self, s: Quaternion) -> Result<QMatrix> {
        Ok(self.left_from_pseudo(&self.pseudo(s)?, s))
    }

    pub fn right(&self, s: Quaternion) -> Result<QMatrix> {
        Ok(self.right_from_pseudo(&self.pseudo(s)?, s))
    }

    /// `|S_L^{-1}(s,T) s - T S_L^{-1}(s,T) - Id|`.
    pub fn left_equation_residual(&self, s: Quaternion) -> Result<f64> {
        let sl = self.left(s)?;
        Ok((&sl.scale_right(s) - &(self.t * &sl)).dist(&QMatrix::identity(self.t.dim())))
    }

    /// `|s S_R^{-1}(s,T) - S_R^{-1}(s,T) T - Id|`.
    pub fn right_equation_residual(&self, s: Quaternion) -> Result<f64> {
        let sr = self.right(s)?;
        Ok((&sr.scale_left(s) - &(&sr * self.t)).dist(&QMatrix::identity(self.t.dim())))
    }

    /// Residual of the resolvent equation linking `S_R^{-1}(s,T)` and
    /// `S_L^{-1}(p,T)`; needs `p` off the sphere of `s`.
    pub fn two_variable_residual(&self, s: Quaternion, p: Quaternion) -> Result<f64> {
        let sr = self.right(s)?;
        let sl = self.left(p)?;
        let denom = (p * p - p * (2.0 * s.re()) + Quaternion::real(s.norm_sqr()))
            .try_inv()
            .ok_or_else(|| Error::Singular { sphere: sphere_of(s), detail: format!("p = {p} lies on [s]") })?;
        let diff = &sr - &sl;
        let rhs = (&diff.scale_right(p) - &diff.scale_left(s.conj())).scale_right(denom);
        Ok((&sr * &sl).dist(&rhs))
    }
}

/// `Q_s(T)^{-1}`; errors when `[s]` is (numerically) in the S-spectrum.
pub fn pseudo_resolvent(t: &QMatrix, s: Quaternion) -> Result<QMatrix> {
    Resolvent::new(t)?.pseudo(s)
}

/// Left S-resolvent `Q_s(T)^{-1} conj(s) - T Q_s(T)^{-1}`.
pub fn s_resolvent_left(t: &QMatrix, s: Quaternion) -> Result<QMatrix> {
    Resolvent::new(t)?.left(s)
}

/// Right S-resolvent `-(T - Identity conj(s)) Q_s(T)^{-1}`.
pub fn s_resolvent_right(t: &QMatrix, s: Quaternion) -> Result<QMatrix> {
    Resolvent::new(t)?.right(s)
}

/// Entrywise model of a diagonal operator with a declared spectrum closure.
///
/// Only finitely many symbols are stored; the closure may contain more
/// (e.g. the whole real axis together with infinity).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalOperator {
    symbols: Vec<Quaternion>,
    closure: SSpectrum,
}

impl DiagonalOperator {
    /// Checks that every symbol lies in the declared closure within `1e-9`.
    pub fn new(symbols: Vec<Quaternion>, closure: SSpectrum) -> Result<Self> {
        for q in &symbols {
            let p = sphere_of(*q);
            if !closure.contains(p, 1e-9) {
                return Err(Error::Precondition(format!(
                    "symbol {q} (sphere {p}) lies outside the declared spectrum closure"
                )));
            }
        }
        Ok(DiagonalOperator { symbols, closure })
    }

    pub fn symbols(&self) -> &[Quaternion] {
        &self.symbols
    }

    pub fn closure(&self) -> &SSpectrum {
        &self.closure
    }

    pub fn max_symbol_re(&self) -> f64 {
        self.symbols.iter().map(|q| q.re().abs()).fold(0.0, f64::max)
    }
}

/// `Q_s(q) = q² - 2 Re(s) q + |s|²` for a scalar symbol.
pub fn q_scalar(q: Quaternion, s: Quaternion) -> Quaternion {
    q * q - q * (2.0 * s.re()) + Quaternion::real(s.norm_sqr())
}

/// Entrywise `(q_k² - 2 Re(s) q_k + |s|²)^{-1}`.
pub fn diag_pseudo_resolvent(d: &DiagonalOperator, s: Quaternion) -> Result<Vec<Quaternion>> {
    let p = sphere_of(s);
    if d.closure.contains(p, SINGULAR_CLEARANCE) {
        return Err(Error::Singular { sphere: p, detail: "inside the declared spectrum closure".into() });
    }
    d.symbols
        .iter()
        .map(|&q| {
            let v = q_scalar(q, s);
            if v.norm() <= SINGULAR_CLEARANCE * (1.0 + q.norm_sqr()) {
                Err(Error::Singular { sphere: p, detail: format!("symbol {q}") })
            } else {
                Ok(v.inv())
            }
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::quat::ImaginaryUnit;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 0.5;

    pub(crate) fn example_t() -> QMatrix {
        QMatrix::from_rows(vec![
            vec![Quaternion::new(0.0, -H, 0.0, 0.0), Quaternion::real(H)],
            vec![Quaternion::real(-H), Quaternion::new(0.0, -H, 0.0, 0.0)],
        ])
        .unwrap()
    }

    fn rand_q(rng: &mut ChaCha8Rng) -> Quaternion {
        Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    }

    fn rand_matrix(rng: &mut ChaCha8Rng, n: usize) -> QMatrix {
        QMatrix::from_fn(n, |_, _| rand_q(rng))
    }

    /// A point at least `margin` away from the spectrum.
    fn rand_resolvent_point(rng: &mut ChaCha8Rng, spec: &SSpectrum, margin: f64) -> Quaternion {
        loop {
            let s = rand_q(rng) * 3.0;
            if spec.distance_to(sphere_of(s)) > margin {
                return s;
            }
        }
    }

    /// Smallest singular value of the complex adjoint of `Q_s(T)`; the
    /// invertibility-scan oracle.
    fn q_sigma_min(t: &QMatrix, s: Quaternion) -> f64 {
        let q = q_operator(t, &(t * t), s);
        complex_adjoint(&q).singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Local minima of `sigma_min(Q_s(T))` on a grid that fall below `thresh`.
    fn scan_minima(t: &QMatrix, n_grid: usize, thresh: f64) -> (Vec<(Sphere, f64)>, f64) {
        let r = 1.0 + (0..t.dim()).map(|i| (0..t.dim()).map(|j| t[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
        let h0 = 2.0 * r / (n_grid - 1) as f64;
        let h1 = r / (n_grid - 1) as f64;
        let grid: Vec<Vec<f64>> = (0..n_grid)
            .map(|i| {
                (0..n_grid)
                    .map(|j| q_sigma_min(t, Sphere::new(-r + h0 * i as f64, h1 * j as f64).embed(ImaginaryUnit::I)))
                    .collect()
            })
            .collect();
        let mut mins = Vec::new();
        for i in 0..n_grid {
            for j in 0..n_grid {
                let v = grid[i][j];
                let mut is_min = v < thresh;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if (di, dj) != (0, 0) && a >= 0 && b >= 0 && (a as usize) < n_grid && (b as usize) < n_grid {
                            is_min &= v <= grid[a as usize][b as usize];
                        }
                    }
                }
                if is_min {
                    mins.push((Sphere::new(-r + h0 * i as f64, h1 * j as f64), v));
                }
            }
        }
        (mins, h0.max(h1))
    }

    #[test]
    fn adjoint_of_identity_and_j() {
        let id = complex_adjoint(&QMatrix::identity(3));
        assert_eq!(id, DMatrix::identity(6, 6));
        let j = complex_adjoint(&QMatrix::diagonal(&[Quaternion::J]));
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[Complex64::ZERO, one, -one, Complex64::ZERO]));
    }

    #[test]
    fn adjoint_is_multiplicative_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..5 {
            let a = rand_matrix(&mut rng, n);
            let b = rand_matrix(&mut rng, n);
            let lhs = complex_adjoint(&(&a * &b));
            let rhs = complex_adjoint(&a) * complex_adjoint(&b);
            assert!((lhs - rhs).camax() < 1e-13);
            assert_eq!(from_complex_adjoint(&complex_adjoint(&a)), a);
            let inv = a.inverse().unwrap();
            assert!((&a * &inv).dist(&QMatrix::identity(n)) < 1e-11);
            let cinv = complex_adjoint(&a).try_inverse().unwrap();
            assert!((complex_adjoint(&inv) - cinv).camax() < 1e-10);
        }
    }

    #[test]
    fn example_spectrum() {
        let spec = s_spectrum(&example_t()).unwrap();
        assert_eq!(spec.spheres.len(), 2);
        assert!(spec.spheres[0].distance(Sphere::new(0.0, 0.0)) < 1e-10);
        assert!(spec.spheres[1].distance(Sphere::new(0.0, 1.0)) < 1e-10);
        assert!(!spec.includes_infinity);
    }

    #[test]
    fn zero_matrix_spectrum() {
        let spec = s_spectrum(&QMatrix::zeros(3)).unwrap();
        assert_eq!(spec.spheres, vec![Sphere::new(0.0, 0.0)]);
    }

    #[test]
    fn diag_one_i_spectrum_matches_scan() {
        let t = QMatrix::diagonal(&[Quaternion::ONE, Quaternion::I]);
        let spec = s_spectrum(&t).unwrap();
        assert_eq!(spec.spheres.len(), 2);
        assert!(spec.spheres[0].distance(Sphere::new(0.0, 1.0)) < 1e-12);
        assert!(spec.spheres[1].distance(Sphere::new(1.0, 0.0)) < 1e-12);
        let (mins, h) = scan_minima(&t, 41, 0.5);
        assert_eq!(mins.len(), 2, "{mins:?}");
        for (m, _) in &mins {
            assert!(spec.distance_to(*m) < 1.5 * h);
        }
    }

    #[test]
    fn random_spectra_match_invertibility_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 3] {
            for _ in 0..3 {
                let t = rand_matrix(&mut rng, n);
                let spec = s_spectrum(&t).unwrap();
                // each sphere is a genuine singularity of Q_s(T), for any unit
                for s in &spec.spheres {
                    for u in [ImaginaryUnit::I, ImaginaryUnit::J, ImaginaryUnit::new(1.0, -2.0, 0.5).unwrap()] {
                        assert!(q_sigma_min(&t, s.embed(u)) < 1e-10, "{s} not singular");
                    }
                }
                // every grid local minimum lies next to a computed sphere
                let (mins, h) = scan_minima(&t, 40, f64::INFINITY);
                for (m, _) in mins.iter().filter(|(_, v)| *v < 0.05) {
                    assert!(spec.distance_to(*m) < 1.5 * h, "scan minimum {m} far from {spec}");
                }
                // and every sphere is seen by the scan
                for s in &spec.spheres {
                    let d = mins.iter().map(|(m, _)| m.distance(*s)).fold(f64::INFINITY, f64::min);
                    let isolated = spec.spheres.iter().all(|o| o == s || o.distance(*s) > 3.0 * h);
                    if isolated {
                        assert!(d < 1.5 * h, "sphere {s} missed by scan");
                    }
                }
            }
        }
    }

    #[test]
    fn example_pseudo_resolvent_closed_form() {
        let t = example_t();
        let s = Quaternion::new(0.3, 0.7, 0.0, 0.0);
        let q_inv = pseudo_resolvent(&t, s).unwrap();
        let (s0, ns) = (s.re(), s.norm_sqr());
        let i = Quaternion::I;
        let pre = (Quaternion::real(-1.0 + ns) + i * (2.0 * s0)).inv() * (1.0 / ns);
        let d = Quaternion::real(-0.5 + ns) + i * s0;
        let o = i * 0.5 + Quaternion::real(s0);
        let closed = QMatrix::from_rows(vec![vec![pre * d, pre * o], vec![-(pre * o), pre * d]]).unwrap();
        assert!(q_inv.dist(&closed) < 1e-13, "{q_inv}\nvs\n{closed}");
    }

    #[test]
    fn example_left_resolvent_closed_form() {
        let t = example_t();
        let s = Quaternion::new(0.4, -0.2, 0.0, 0.0) + Quaternion::I * 0.9;
        let sl = s_resolvent_left(&t, s).unwrap();
        let (s0, ns, sb) = (s.re(), s.norm_sqr(), s.conj());
        let i = Quaternion::I;
        let pre = (Quaternion::real(-1.0 + ns) + i * (2.0 * s0)).inv() * (0.5 / ns);
        let d = (i + sb * 2.0) * ns + sb * (Quaternion::real(-1.0) + i * (2.0 * s0));
        let o = Quaternion::real(-ns) + sb * (i + Quaternion::real(2.0 * s0));
        let closed = QMatrix::from_rows(vec![vec![pre * d, pre * o], vec![-(pre * o), pre * d]]).unwrap();
        assert!(sl.dist(&closed) < 1e-13, "{sl}\nvs\n{closed}");
    }

    #[test]
    fn real_diagonal_commuting_case() {
        let t = QMatrix::diagonal(&[Quaternion::real(1.0), Quaternion::real(-2.0), Quaternion::real(0.5)]);
        let s = Quaternion::real(3.0);
        let q_inv = pseudo_resolvent(&t, s).unwrap();
        let expect = QMatrix::diagonal(&[1.0, -2.0, 0.5].map(|x: f64| Quaternion::real(1.0 / (x - 3.0).powi(2))));
        assert!(q_inv.dist(&expect) < 1e-15);
    }

    #[test]
    fn real_s_reduces_to_classical_resolvent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..5 {
            let t = rand_matrix(&mut rng, n);
            let s = Quaternion::real(4.5);
            let classical = (&QMatrix::scalar(n, s) - &t).inverse().unwrap();
            assert!(s_resolvent_left(&t, s).unwrap().dist(&classical) < 1e-12);
            assert!(s_resolvent_right(&t, s).unwrap().dist(&classical) < 1e-12);
        }
    }

    #[test]
    fn one_by_one_matches_scalar_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let q = rand_q(&mut rng);
            let s = rand_q(&mut rng) * 2.0;
            if sphere_of(s).distance(sphere_of(q)) < 0.1 {
                continue;
            }
            let t = QMatrix::diagonal(&[q]);
            // scalar kernels written out independently
            let qs = (q * q - q * (2.0 * s.re()) + Quaternion::real(s.norm_sqr())).inv();
            let kl = -(qs * (q - s.conj()));
            let kr = -((q - s.conj()) * qs);
            assert!(s_resolvent_left(&t, s).unwrap()[(0, 0)].approx_eq(kl, 1e-12));
            assert!(s_resolvent_right(&t, s).unwrap()[(0, 0)].approx_eq(kr, 1e-12));
        }
    }

    #[test]
    fn identity_right_resolvent_at_2j() {
        let sr = s_resolvent_right(&QMatrix::identity(2), Quaternion::J * 2.0).unwrap();
        let expect = QMatrix::scalar(2, (Quaternion::ONE + Quaternion::J * 2.0) * (-0.2));
        assert!(sr.dist(&expect) < 1e-15);
    }

    #[test]
    fn singular_point_is_reported() {
        let err = pseudo_resolvent(&example_t(), Quaternion::J).unwrap_err();
        match err {
            Error::Singular { sphere, .. } => assert_eq!(sphere, Sphere::new(0.0, 1.0)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn diag_pseudo_examples() {
        let d = DiagonalOperator::new(
            vec![Quaternion::ZERO, Quaternion::ONE],
            SSpectrum::from_spheres(vec![Sphere::new(0.0, 0.0), Sphere::new(1.0, 0.0)]),
        )
        .unwrap();
        let v = diag_pseudo_resolvent(&d, Quaternion::I).unwrap();
        assert_eq!(v[0], Quaternion::ONE);
        let v = diag_pseudo_resolvent(&d, Quaternion::real(2.0)).unwrap();
        assert!(v[1].approx_eq(Quaternion::ONE, 1e-15));
        assert!(diag_pseudo_resolvent(&d, Quaternion::ONE).is_err());
    }

    #[test]
    fn diag_symbols_must_lie_in_closure() {
        let err = DiagonalOperator::new(vec![Quaternion::J], SSpectrum::real_axis());
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn serde_matrix_repr() {
        let t = example_t();
        let js = serde_json::to_string(&t).unwrap();
        assert!(js.starts_with("{\"dim\":2,\"entries\":[[0.0,-0.5,0.0,0.0]"));
        let back: QMatrix = serde_json::from_str(&js).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<QMatrix>("{\"dim\":2,\"entries\":[[1,0,0,0]]}").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pseudo_resolvent_residual(seed in 0u64..1000, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = rand_matrix(&mut rng, n);
            let res = Resolvent::new(&t).unwrap();
            let s = rand_resolvent_point(&mut rng, res.spectrum(), 0.05);
            let q = q_operator(&t, &(&t * &t), s);
            let q_inv = res.pseudo(s).unwrap();
            prop_assert!((&q * &q_inv).dist(&QMatrix::identity(n)) < 1e-10);
            prop_assert!((&q_inv * &q).dist(&QMatrix::identity(n)) < 1e-10);
        }

        #[test]
        fn diag_pseudo_residual(q in prop::array::uniform4(-2.0f64..2.0), s in prop::array::uniform4(-2.0f64..2.0)) {
            let (q, s) = (Quaternion::from(q), Quaternion::from(s));
            prop_assume!(sphere_of(q).distance(sphere_of(s)) > 0.05);
            let d = DiagonalOperator::new(vec![q], SSpectrum::from_spheres(vec![sphere_of(q)])).unwrap();
            let v = diag_pseudo_resolvent(&d, s).unwrap()[0];
            prop_assert!((v * q_scalar(q, s)).approx_eq(Quaternion::ONE, 1e-10));
        }

        #[test]
        fn s_resolvent_equations(seed in 0u64..1000, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = rand_matrix(&mut rng, n);
            let res = Resolvent::new(&t).unwrap();
            let s = rand_resolvent_point(&mut rng, res.spectrum(), 0.1);
            let id = QMatrix::identity(n);
            // S_L s - T S_L = I
            let sl = res.left(s).unwrap();
            prop_assert!((&sl.scale_right(s) - &(&t * &sl)).dist(&id) < 1e-10);
            // s S_R - S_R T = I
            let sr = res.right(s).unwrap();
            prop_assert!((&sr.scale_left(s) - &(&sr * &t)).dist(&id) < 1e-10);
        }

        #[test]
        fn two_variable_resolvent_equation(seed in 0u64..1000, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = rand_matrix(&mut rng, n);
            let res = Resolvent::new(&t).unwrap();
            let s = rand_resolvent_point(&mut rng, res.spectrum(), 0.1);
            let p = rand_resolvent_point(&mut rng, res.spectrum(), 0.1);
            prop_assume!(sphere_of(s).distance(sphere_of(p)) > 0.1);
            let sr = res.right(s).unwrap();
            let sl = res.left(p).unwrap();
            let lhs = &sr * &sl;
            let diff = &sr - &sl;
            let denom = (p * p - p * (2.0 * s.re()) + Quaternion::real(s.norm_sqr())).inv();
            let rhs = (&diff.scale_right(p) - &diff.scale_left(s.conj())).scale_right(denom);
            prop_assert!(lhs.dist(&rhs) < 1e-9, "residual {}", lhs.dist(&rhs));
        }

        #[test]
        fn spectrum_independent_of_similarity_by_unit(seed in 0u64..1000, n in 1usize..4) {
            // conjugating by a scalar unit matrix u maps spheres to themselves
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = rand_matrix(&mut rng, n);
            let u = rand_q(&mut rng);
            prop_assume!(u.norm() > 0.1);
            let tu = QMatrix::scalar(n, u.inv());
            let conj = &(&tu * &t) * &QMatrix::scalar(n, u);
            let a = s_spectrum(&t).unwrap();
            let b = s_spectrum(&conj).unwrap();
            prop_assert!(crate::quat::hausdorff(&a.spheres, &b.spheres) < 1e-8);
        }
    }
}
