//! Slice Cauchy domains described by their boundary in the upper half-plane,
//! and quadrature rules for integrals over that boundary.
//!
//! A domain lives in the `(x0, x1)` half-plane; its intersection with any
//! complex plane `C_I` is the region together with its mirror image. Only the
//! upper boundary curves are stored. Each upper node `z` with weight `w`
//! implies a mirrored lower node `conj(z)` with weight `conj(w)`.

use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlinalg::SSpectrum;
use crate::quat::{sphere_of, ImaginaryUnit, Quaternion, Sphere};
use crate::slicefn::{char_function, Region, SliceFunction};

/// Default number of quadrature nodes per curve.
pub const DEFAULT_NODES: usize = 256;

/// Sphere neighbourhood radius relative to the clearance.
pub const RADIUS_FACTOR: f64 = 0.75;

/// Minimal gap between neighbouring boundaries, relative to the clearance.
pub const GAP_FACTOR: f64 = 0.25;

const GL_ORDER: usize = 8;

/// A piece of upper boundary, parametrised over `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    /// Full circle around `(c0, c1)`, which must stay above the real axis.
    Circle { c0: f64, c1: f64, radius: f64, ccw: bool },
    /// Arc of the circle of `radius` around the real point `c0`, from angle
    /// `from` to angle `to`.
    Arc { c0: f64, radius: f64, from: f64, to: f64 },
    /// Segment from `a` to `b`; `truncated` marks a cut-off infinite line.
    Segment { a: (f64, f64), b: (f64, f64), truncated: bool },
}

/// How a curve is discretised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rule {
    /// Equispaced nodes `k / N`.
    Periodic,
    /// Nodes `(k + 1/2) / N`; together with the mirrored half this is the
    /// periodic rule with `2N` nodes on the full circle.
    Midpoint,
    /// Composite Gauss-Legendre panels.
    Panels,
}

impl Curve {
    pub fn point(&self, t: f64) -> Complex64 {
        match *self {
            Curve::Circle { c0, c1, radius, ccw } => {
                let th = if ccw { 2.0 * PI * t } else { -2.0 * PI * t };
                Complex64::new(c0, c1) + radius * Complex64::from_polar(1.0, th)
            }
            Curve::Arc { c0, radius, from, to } => {
                Complex64::new(c0, 0.0) + radius * Complex64::from_polar(1.0, from + (to - from) * t)
            }
            Curve::Segment { a, b, .. } => Complex64::new(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t),
        }
    }

    /// `d point / dt`.
    pub fn tangent(&self, t: f64) -> Complex64 {
        let i = Complex64::i();
        match *self {
            Curve::Circle { radius, ccw, .. } => {
                let (sgn, th) = if ccw { (1.0, 2.0 * PI * t) } else { (-1.0, -2.0 * PI * t) };
                i * sgn * 2.0 * PI * radius * Complex64::from_polar(1.0, th)
            }
            Curve::Arc { radius, from, to, .. } => {
                i * (to - from) * radius * Complex64::from_polar(1.0, from + (to - from) * t)
            }
            Curve::Segment { a, b, .. } => Complex64::new(b.0 - a.0, b.1 - a.1),
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, Curve::Circle { .. })
    }

    pub fn length(&self) -> f64 {
        match *self {
            Curve::Circle { radius, .. } => 2.0 * PI * radius,
            Curve::Arc { radius, from, to, .. } => radius * (to - from).abs(),
            Curve::Segment { a, b, .. } => (b.0 - a.0).hypot(b.1 - a.1),
        }
    }

    /// Panels no longer than half the height of the lower endpoint, so
    /// that the real axis stays well resolved.
    fn min_panels(&self) -> usize {
        let (a, b) = (self.point(0.0), self.point(1.0));
        let h = a.im.min(b.im);
        if h > 0.0 {
            (2.0 * self.length() / h).ceil() as usize
        } else {
            0
        }
    }

    fn rule(&self) -> Rule {
        match *self {
            Curve::Circle { .. } => Rule::Periodic,
            Curve::Arc { from, to, .. } if from.sin().abs() < 1e-14 && to.sin().abs() < 1e-14 => Rule::Midpoint,
            _ => Rule::Panels,
        }
    }

    /// Parameters and parameter weights for about `n` nodes.
    fn parameter_rule(&self, n: usize, gl: &GaussLegendre) -> Vec<(f64, f64)> {
        match self.rule() {
            Rule::Periodic => (0..n).map(|k| (k as f64 / n as f64, 1.0 / n as f64)).collect(),
            Rule::Midpoint => (0..n).map(|k| ((k as f64 + 0.5) / n as f64, 1.0 / n as f64)).collect(),
            Rule::Panels => {
                let panels = n.div_ceil(GL_ORDER).max(self.min_panels());
                let h = 1.0 / panels as f64;
                (0..panels)
                    .flat_map(|p| {
                        let a = p as f64 * h;
                        gl.as_node_weight_pairs().iter().map(move |&(x, w)| (a + 0.5 * h * (x + 1.0), 0.5 * h * w))
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Curve::Circle { c0, c1, radius, ccw } => {
                write!(f, "circle(({c0}, {c1}), {radius}, {})", if *ccw { "ccw" } else { "cw" })
            }
            Curve::Arc { c0, radius, from, to } => write!(f, "arc({c0}, {radius}, {from:.6} -> {to:.6})"),
            Curve::Segment { a, b, truncated } => {
                let k = if *truncated { "truncated line" } else { "segment" };
                write!(f, "{k}(({}, {}) -> ({}, {}))", a.0, a.1, b.0, b.1)
            }
        }
    }
}

/// How the tube around the real axis is closed off at distance `length`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TubeClosure {
    /// Strip joined with the exterior of the disk of radius `length`: an
    /// exact unbounded slice Cauchy domain with a closed boundary.
    #[default]
    Closed,
    /// The two lines of the strip cut off at `|x0| = length`; the missing
    /// tails are reported as a truncation estimate.
    Open,
}

/// Parameters of a tube component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub eps: f64,
    pub length: f64,
    pub closure: TubeClosure,
}

/// One connected piece of a slice Cauchy domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub region: Region,
    /// Upper boundary, oriented so that the region lies to the left.
    pub curves: Vec<Curve>,
    /// Spectral spheres the component was built around.
    pub spheres: Vec<Sphere>,
    /// Interior point used by the orientation check.
    pub probe: Sphere,
}

impl Component {
    /// Disk around a real point.
    pub fn disk(c0: f64, radius: f64) -> Self {
        Component {
            region: Region::disk(c0, radius),
            curves: vec![Curve::Arc { c0, radius, from: 0.0, to: PI }],
            spheres: Vec::new(),
            probe: Sphere::new(c0, 0.5 * radius),
        }
    }

    /// Disk around the sphere `c`, which must lie above the axis by more
    /// than `radius`.
    pub fn sphere_disk(c: Sphere, radius: f64) -> Result<Self> {
        if c.s1 <= radius {
            return Err(Error::Construction(format!("disk of radius {radius} around {c} meets the real axis")));
        }
        Ok(Component {
            region: Region::sphere_disk(c, radius),
            curves: vec![Curve::Circle { c0: c.s0, c1: c.s1, radius, ccw: true }],
            spheres: Vec::new(),
            probe: c,
        })
    }

    /// Annulus around a real point.
    pub fn annulus(c0: f64, inner: f64, outer: f64) -> Result<Self> {
        if !(0.0 < inner && inner < outer) {
            return Err(Error::Construction(format!("annulus radii {inner}, {outer} are not increasing")));
        }
        Ok(Component {
            region: Region::annulus(c0, inner, outer),
            curves: vec![
                Curve::Arc { c0, radius: outer, from: 0.0, to: PI },
                Curve::Arc { c0, radius: inner, from: PI, to: 0.0 },
            ],
            spheres: Vec::new(),
            probe: Sphere::new(c0, 0.5 * (inner + outer)),
        })
    }

    /// Annulus around the sphere `c`, entirely above the axis.
    pub fn sphere_annulus(c: Sphere, inner: f64, outer: f64) -> Result<Self> {
        if !(0.0 < inner && inner < outer) || c.s1 <= outer {
            return Err(Error::Construction(format!("invalid annulus ({inner}, {outer}) around {c}")));
        }
        Ok(Component {
            region: Region::Annulus { c0: c.s0, c1: c.s1, inner, outer },
            curves: vec![
                Curve::Circle { c0: c.s0, c1: c.s1, radius: outer, ccw: true },
                Curve::Circle { c0: c.s0, c1: c.s1, radius: inner, ccw: false },
            ],
            spheres: Vec::new(),
            probe: Sphere::new(c.s0, c.s1 + 0.5 * (inner + outer)),
        })
    }

    /// Neighbourhood `{x1 < eps}` of the real axis, closed or cut off at
    /// `length`.
    pub fn tube(t: Tube) -> Result<Self> {
        let Tube { eps, length, closure } = t;
        if !(eps > 0.0 && length > 2.0 * eps) {
            return Err(Error::Construction(format!("tube needs 0 < 2 eps < length, got eps {eps}, length {length}")));
        }
        let (region, curves) = match closure {
            TubeClosure::Closed => {
                let a = (length * length - eps * eps).sqrt();
                let th = (eps / length).asin();
                (
                    Region::tube(eps, length),
                    vec![
                        Curve::Segment { a: (a, eps), b: (-a, eps), truncated: false },
                        Curve::Arc { c0: 0.0, radius: length, from: PI - th, to: th },
                    ],
                )
            }
            TubeClosure::Open => (
                Region::Strip { eps },
                vec![Curve::Segment { a: (length, eps), b: (-length, eps), truncated: true }],
            ),
        };
        Ok(Component { region, curves, spheres: Vec::new(), probe: Sphere::new(0.0, 0.0) })
    }

    pub fn with_spheres(mut self, spheres: Vec<Sphere>) -> Self {
        self.spheres = spheres;
        self
    }
}

/// An axially symmetric domain given by its components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceCauchyDomain {
    components: Vec<Component>,
    tube: Option<Tube>,
    /// Smallest distance between boundaries of different components.
    gap: f64,
}

impl SliceCauchyDomain {
    /// Checks disjointness and orientation of the given components.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        Self::build(components, None)
    }

    fn build(components: Vec<Component>, tube: Option<Tube>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Construction("domain without components".into()));
        }
        for i in 0..components.len() {
            for j in i + 1..components.len() {
                if components[i].region.overlaps(&components[j].region) {
                    return Err(Error::Construction(format!(
                        "components {} and {} intersect",
                        components[i].region, components[j].region
                    )));
                }
            }
        }
        let mut d = SliceCauchyDomain { components, tube, gap: f64::INFINITY };
        d.gap = d.boundary_gap();
        if d.gap <= 0.0 {
            return Err(Error::Construction("component boundaries touch".into()));
        }
        d.check_orientation(ImaginaryUnit::I, DEFAULT_NODES)?;
        Ok(d)
    }

    pub fn disk(c0: f64, radius: f64) -> Result<Self> {
        Self::new(vec![Component::disk(c0, radius)])
    }

    pub fn annulus(c0: f64, inner: f64, outer: f64) -> Result<Self> {
        Self::new(vec![Component::annulus(c0, inner, outer)?])
    }

    pub fn tube(eps: f64, length: f64, closure: TubeClosure) -> Result<Self> {
        let t = Tube { eps, length, closure };
        Self::build(vec![Component::tube(t)?], Some(t))
    }

    /// Like `new`, for component lists holding exactly one tube built
    /// from `t`.
    pub fn with_tube(components: Vec<Component>, t: Tube) -> Result<Self> {
        let region = Component::tube(t)?.region;
        if components.iter().filter(|c| c.region == region).count() != 1 {
            return Err(Error::Construction(format!("expected exactly one component {region}")));
        }
        Self::build(components, Some(t))
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn tube_params(&self) -> Option<Tube> {
        self.tube
    }

    pub fn is_unbounded(&self) -> bool {
        self.components.iter().any(|c| !c.region.is_bounded())
    }

    /// Whether the boundary integral omits infinite tails.
    pub fn is_truncated(&self) -> bool {
        self.tube.is_some_and(|t| t.closure == TubeClosure::Open)
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn contains(&self, x: Quaternion) -> bool {
        self.contains_sphere(sphere_of(x))
    }

    pub fn contains_sphere(&self, p: Sphere) -> bool {
        self.components.iter().any(|c| c.region.contains_sphere(p))
    }

    pub fn component_of(&self, p: Sphere) -> Option<usize> {
        self.components.iter().position(|c| c.region.contains_sphere(p))
    }

    /// Largest modulus of a boundary point.
    pub fn extent(&self) -> f64 {
        let rule = self.quadrature_unchecked(ImaginaryUnit::I, 64);
        rule.points.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Checks that every point of `spec` lies inside the domain.
    pub fn encloses(&self, spec: &SSpectrum) -> Result<()> {
        for s in &spec.spheres {
            if !self.contains_sphere(*s) {
                return Err(Error::Precondition(format!("spectral sphere {s} is not enclosed by the domain")));
            }
        }
        for &(a, b) in &spec.intervals {
            let unbounded_end = a.is_infinite() || b.is_infinite();
            if unbounded_end && !self.is_unbounded() {
                return Err(Error::Precondition(format!("unbounded interval [{a}, {b}] needs an unbounded domain")));
            }
            let span = 2.0 * self.extent() + 1.0;
            let (lo, hi) = (a.max(-span), b.min(span));
            for k in 0..=200 {
                let x = lo + (hi - lo) * k as f64 / 200.0;
                if !self.contains_sphere(Sphere::new(x, 0.0)) {
                    return Err(Error::Precondition(format!("point {x} of [{a}, {b}] is not enclosed")));
                }
            }
        }
        if spec.includes_infinity && !self.is_unbounded() {
            return Err(Error::Precondition("infinity is in the spectrum but the domain is bounded".into()));
        }
        Ok(())
    }

    /// Characteristic function of the selected components.
    pub fn char_function(&self, selected: &[bool]) -> Result<SliceFunction> {
        let d = if self.gap.is_finite() { self.gap / 3.0 } else { 1e-6 * (1.0 + self.extent()) };
        let regions: Vec<Region> = self.components.iter().map(|c| c.region.inflate(d)).collect();
        char_function(&regions, selected)
    }

    /// Selection mask of the components built around `spheres`.
    pub fn select(&self, spheres: &[Sphere], tol: f64) -> Result<Vec<bool>> {
        let chosen = |s: &Sphere| spheres.iter().any(|t| t.distance(*s) <= tol);
        self.components
            .iter()
            .map(|c| {
                let n = c.spheres.iter().filter(|s| chosen(s)).count();
                if n > 0 && n < c.spheres.len() {
                    Err(Error::Construction(format!(
                        "component {} holds selected and unselected spheres",
                        c.region
                    )))
                } else {
                    Ok(n > 0)
                }
            })
            .collect()
    }

    pub fn describe(&self) -> String {
        self.components
            .iter()
            .map(|c| {
                let cs: Vec<String> = c.curves.iter().map(|k| k.to_string()).collect();
                format!("{} [{}]", c.region, cs.join(", "))
            })
            .collect::<Vec<_>>()
            .join("; ")
    }

    fn boundary_gap(&self) -> f64 {
        if self.components.len() < 2 {
            return f64::INFINITY;
        }
        let gl = gl_rule();
        let mut gap = f64::INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            for curve in &c.curves {
                for (t, _) in curve.parameter_rule(128, &gl) {
                    let z = curve.point(t);
                    for (j, o) in self.components.iter().enumerate() {
                        if i != j {
                            gap = gap.min(o.region.distance(z.re, z.im));
                        }
                    }
                }
            }
        }
        gap
    }

    /// A point well outside the closure of the domain, if one is found on
    /// a coarse grid.
    fn outside_point(&self) -> Option<Complex64> {
        let r = self.extent() + 2.0;
        let mut best: Option<(f64, Complex64)> = None;
        for i in 0..=60 {
            for j in 0..=30 {
                let z = Complex64::new(-r + 2.0 * r * i as f64 / 60.0, r * j as f64 / 30.0);
                let d = self.components.iter().map(|c| c.region.distance(z.re, z.im)).fold(f64::INFINITY, f64::min);
                if d > 0.0 && best.is_none_or(|(b, _)| d > b) {
                    best = Some((d, z));
                }
            }
        }
        best.map(|(_, z)| z)
    }

    /// For each component, the error of reproducing `g(x) = 1/(x - p)` at
    /// its probe point by the boundary integral, with `p` outside the
    /// domain. A reversed orientation gives about `2 |g(x)|`.
    pub fn probe_errors(&self, unit: ImaginaryUnit, nodes: usize) -> Vec<f64> {
        let Some(p) = self.outside_point() else { return Vec::new() };
        let rule = self.quadrature_unchecked(unit, nodes);
        self.components
            .iter()
            .map(|c| {
                let x = c.probe.as_complex();
                let v = rule.integrate_complex(|s| 1.0 / ((s - x) * (s - p))) / (2.0 * PI);
                (v - 1.0 / (x - p)).norm()
            })
            .collect()
    }

    fn check_orientation(&self, unit: ImaginaryUnit, nodes: usize) -> Result<()> {
        let tol = if self.is_truncated() { 1e-2 } else { 1e-8 };
        for (c, e) in self.components.iter().zip(self.probe_errors(unit, nodes)) {
            if !(e <= tol) {
                return Err(Error::Construction(format!(
                    "orientation probe of component {} fails (error {e:e})",
                    c.region
                )));
            }
        }
        Ok(())
    }

    fn quadrature_unchecked(&self, unit: ImaginaryUnit, nodes: usize) -> QuadratureRule {
        let gl = gl_rule();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mi = Complex64::new(0.0, -1.0);
        for c in &self.components {
            for curve in &c.curves {
                for (t, dt) in curve.parameter_rule(nodes, &gl) {
                    points.push(curve.point(t));
                    weights.push(mi * curve.tangent(t) * dt);
                }
            }
        }
        QuadratureRule { unit, points, weights, nodes_per_curve: nodes }
    }

    /// Boundary rule with about `nodes_per_curve` nodes on every upper
    /// curve; `nodes_per_curve` must be at least 16.
    pub fn quadrature(&self, unit: ImaginaryUnit, nodes_per_curve: usize) -> Result<QuadratureRule> {
        if nodes_per_curve < 16 {
            return Err(Error::Precondition(format!("at least 16 nodes per curve required, got {nodes_per_curve}")));
        }
        Ok(self.quadrature_unchecked(unit, nodes_per_curve))
    }
}

impl fmt::Display for SliceCauchyDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

fn gl_rule() -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(GL_ORDER).expect("nonzero order"))
}

/// Upper boundary nodes `z_k` and weights `w_k = (-i) z'(t_k) dt_k` in the
/// coordinates of a plane `C_I`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub unit: ImaginaryUnit,
    pub points: Vec<Complex64>,
    pub weights: Vec<Complex64>,
    pub nodes_per_curve: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Node `k` as a quaternion of `C_I`.
    pub fn node(&self, k: usize) -> Quaternion {
        Quaternion::in_plane(self.points[k], self.unit)
    }

    /// Weight `k` as a quaternion of `C_I`.
    pub fn weight(&self, k: usize) -> Quaternion {
        Quaternion::in_plane(self.weights[k], self.unit)
    }

    /// `sum_k w_k g(z_k) + conj(w_k) g(conj z_k)`: the full boundary integral
    /// of `g(s) ds_I` for a `C_I`-valued integrand.
    pub fn integrate_complex(&self, g: impl Fn(Complex64) -> Complex64) -> Complex64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * g(z) + w.conj() * g(z.conj()))
            .sum()
    }

    /// The same rule with upper and lower halves exchanged.
    pub fn mirrored(&self) -> QuadratureRule {
        QuadratureRule {
            unit: self.unit,
            points: self.points.iter().map(|z| z.conj()).collect(),
            weights: self.weights.iter().map(|w| w.conj()).collect(),
            nodes_per_curve: self.nodes_per_curve,
        }
    }
}

/// Options of [`enclose_with`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncloseOptions {
    /// Tube length; defaults to `max(10, 5 max |Re|)` over the finite part.
    pub tube_length: Option<f64>,
    pub closure: TubeClosure,
}

impl Default for EncloseOptions {
    fn default() -> Self {
        EncloseOptions { tube_length: None, closure: TubeClosure::Closed }
    }
}

#[derive(Clone, Debug)]
struct Blob {
    c0: f64,
    c1: f64,
    r: f64,
    spheres: Vec<Sphere>,
}

impl Blob {
    /// Moves a disk that nearly meets its mirror image onto the axis.
    fn normalized(mut self, min_gap: f64) -> Blob {
        if self.c1 > 0.0 && 2.0 * (self.c1 - self.r) < min_gap {
            self.r += self.c1;
            self.c1 = 0.0;
        }
        self
    }

    fn merge(a: &Blob, b: &Blob) -> Blob {
        let d = (a.c0 - b.c0).hypot(a.c1 - b.c1);
        let mut spheres = a.spheres.clone();
        spheres.extend_from_slice(&b.spheres);
        let (c0, c1, r) = if d + b.r <= a.r {
            (a.c0, a.c1, a.r)
        } else if d + a.r <= b.r {
            (b.c0, b.c1, b.r)
        } else {
            let r = 0.5 * (d + a.r + b.r);
            let t = (r - a.r) / d;
            (a.c0 + t * (b.c0 - a.c0), a.c1 + t * (b.c1 - a.c1), r)
        };
        Blob { c0, c1, r, spheres }
    }

    fn gap(&self, o: &Blob) -> f64 {
        (self.c0 - o.c0).hypot(self.c1 - o.c1) - self.r - o.r
    }
}

/// Domain around the finite spheres and intervals of `spec`: disks of
/// radius `0.75 clearance` around spheres (merged when closer than
/// `0.25 clearance`), plus a tube of half-width `clearance` when the
/// spectrum is unbounded.
pub fn enclose(spec: &SSpectrum, clearance: f64, avoid: Option<&Region>) -> Result<SliceCauchyDomain> {
    enclose_with(spec, clearance, avoid, EncloseOptions::default())
}

pub fn enclose_with(
    spec: &SSpectrum,
    clearance: f64,
    avoid: Option<&Region>,
    opts: EncloseOptions,
) -> Result<SliceCauchyDomain> {
    if spec.is_empty() {
        return Err(Error::Construction("empty spectrum: nothing to enclose".into()));
    }
    if !(clearance > 0.0 && clearance.is_finite()) {
        return Err(Error::Construction(format!("clearance must be positive, got {clearance}")));
    }
    let r = RADIUS_FACTOR * clearance;
    let min_gap = GAP_FACTOR * clearance;

    if let Some(av) = avoid {
        for s in &spec.spheres {
            let d = av.distance(s.s0, s.s1);
            if d < 2.0 * clearance {
                return Err(Error::Construction(format!(
                    "sphere {s} is within {d} of the avoided region (needs {})",
                    2.0 * clearance
                )));
            }
        }
        for &(a, b) in &spec.intervals {
            for x in [a, b].into_iter().filter(|x| x.is_finite()) {
                if av.distance(x, 0.0) < 2.0 * clearance {
                    return Err(Error::Construction(format!("interval end {x} is too close to the avoided region")));
                }
            }
        }
    }

    let tube = if spec.is_unbounded() {
        let finite_re = spec
            .spheres
            .iter()
            .map(|s| s.s0.abs())
            .chain(spec.intervals.iter().flat_map(|&(a, b)| [a, b]).filter(|x| x.is_finite()).map(f64::abs))
            .fold(0.0, f64::max);
        let length = opts.tube_length.unwrap_or((5.0 * finite_re).max(10.0));
        Some(Tube { eps: clearance, length, closure: opts.closure })
    } else {
        None
    };

    let mut blobs: Vec<Blob> = Vec::new();
    let mut covered: Vec<Sphere> = Vec::new();
    for s in &spec.spheres {
        if let Some(t) = tube {
            if s.s1 <= t.eps - 0.5 * clearance || s.s0.hypot(s.s1) >= t.length + 0.5 * clearance {
                covered.push(*s);
                continue;
            }
        }
        blobs.push(Blob { c0: s.s0, c1: s.s1, r, spheres: vec![*s] }.normalized(min_gap));
    }
    if tube.is_none() {
        for &(a, b) in &spec.intervals {
            blobs.push(Blob { c0: 0.5 * (a + b), c1: 0.0, r: 0.5 * (b - a) + r, spheres: Vec::new() });
        }
    }

    // merge until all neighbouring boundaries are at least min_gap apart
    'outer: loop {
        for i in 0..blobs.len() {
            for j in i + 1..blobs.len() {
                if blobs[i].gap(&blobs[j]) < min_gap {
                    let m = Blob::merge(&blobs[i], &blobs[j]).normalized(min_gap);
                    blobs.swap_remove(j);
                    blobs[i] = m;
                    continue 'outer;
                }
            }
        }
        break;
    }
    blobs.sort_by(|a, b| a.c0.total_cmp(&b.c0).then(a.c1.total_cmp(&b.c1)));

    let mut components = Vec::new();
    if let Some(t) = tube {
        for b in &blobs {
            if b.c1 - b.r < t.eps + min_gap || b.c0.hypot(b.c1) + b.r > t.length - min_gap {
                return Err(Error::Construction(format!(
                    "neighbourhood of {:?} partially overlaps the tube (eps {}, length {})",
                    b.spheres, t.eps, t.length
                )));
            }
        }
        components.push(Component::tube(t)?.with_spheres(covered));
    }
    for b in blobs {
        let c = if b.c1 == 0.0 {
            Component::disk(b.c0, b.r)
        } else {
            Component::sphere_disk(Sphere::new(b.c0, b.c1), b.r)?
        };
        components.push(c.with_spheres(b.spheres));
    }

    if let Some(av) = avoid {
        for c in &components {
            let grown = c.region.inflate(min_gap);
            for part in region_parts(av) {
                let hit = match part {
                    Region::Annulus { c0, c1, outer, .. } if *outer == 0.0 => grown.contains(*c0, *c1),
                    other => grown.overlaps(other),
                };
                if hit {
                    return Err(Error::Construction(format!("component {} reaches the avoided region {part}", c.region)));
                }
            }
        }
    }

    SliceCauchyDomain::build(components, tube)
}

fn region_parts(r: &Region) -> Vec<&Region> {
    match r {
        Region::Union { parts } => parts.iter().flat_map(region_parts).collect(),
        other => vec![other],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cex_spectrum() -> SSpectrum {
        SSpectrum::from_spheres(vec![Sphere::new(0.0, 0.0), Sphere::new(0.0, 1.0)])
    }

    #[test]
    fn unit_circle_calibration() {
        let d = SliceCauchyDomain::disk(0.0, 1.0).unwrap();
        let rule = d.quadrature(ImaginaryUnit::I, 64).unwrap();
        let v = rule.integrate_complex(|s| 1.0 / s);
        assert!((v - 2.0 * PI).norm() < 1e-10, "{v}");
        assert!(rule.integrate_complex(|s| s).norm() < 1e-12);
    }

    #[test]
    fn annulus_winding() {
        let d = SliceCauchyDomain::annulus(0.0, 1.0, 2.0).unwrap();
        let rule = d.quadrature(ImaginaryUnit::J, 128).unwrap();
        let wind = |c: Complex64| rule.integrate_complex(|s| 1.0 / (s - c)) / (2.0 * PI);
        assert!((wind(Complex64::new(0.0, 1.5)) - 1.0).norm() < 1e-10);
        assert!((wind(Complex64::new(-1.5, 0.0)) - 1.0).norm() < 1e-10);
        assert!(wind(Complex64::new(0.2, 0.3)).norm() < 1e-10);
        assert!(wind(Complex64::new(3.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn sphere_disk_winding_includes_mirror() {
        let d = SliceCauchyDomain::new(vec![Component::sphere_disk(Sphere::new(1.0, 2.0), 0.5).unwrap()]).unwrap();
        let rule = d.quadrature(ImaginaryUnit::I, 64).unwrap();
        let wind = |c: Complex64| rule.integrate_complex(|s| 1.0 / (s - c)) / (2.0 * PI);
        assert!((wind(Complex64::new(1.0, 2.0)) - 1.0).norm() < 1e-10);
        assert!((wind(Complex64::new(1.2, -2.1)) - 1.0).norm() < 1e-10);
        assert!(wind(Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn containment_examples() {
        let b = SliceCauchyDomain::disk(0.0, 0.5).unwrap();
        assert!(b.contains(Quaternion::I * 0.3));
        assert!(!b.contains(Quaternion::J));
        let t = SliceCauchyDomain::tube(0.5, 10.0, TubeClosure::Closed).unwrap();
        assert!(t.contains(Quaternion::new(3.0, 0.0, 0.0, 0.2)));
        assert!(!t.contains(Quaternion::new(3.0, 0.0, 0.0, 2.0)));
        let o = SliceCauchyDomain::tube(0.5, 10.0, TubeClosure::Open).unwrap();
        assert!(o.contains(Quaternion::new(3.0, 0.0, 0.0, 0.2)));
    }

    #[test]
    fn example_spectrum_enclosure() {
        let d = enclose(&cex_spectrum(), 0.5, None).unwrap();
        assert_eq!(d.components().len(), 2);
        assert!(!d.is_unbounded());
        let c0 = &d.components()[0];
        assert_eq!(c0.region, Region::disk(0.0, 0.375));
        assert_eq!(c0.spheres, vec![Sphere::new(0.0, 0.0)]);
        let c1 = &d.components()[1];
        assert_eq!(c1.region, Region::sphere_disk(Sphere::new(0.0, 1.0), 0.375));
        assert!(d.contains(Quaternion::ZERO) && d.contains(Quaternion::K));
        assert!(!d.contains(Quaternion::J * 0.5));
        assert_eq!(d.select(&[Sphere::new(0.0, 0.0)], 1e-8).unwrap(), vec![true, false]);
        assert!(d.encloses(&cex_spectrum()).is_ok());
    }

    #[test]
    fn empty_spectrum_rejected() {
        assert!(matches!(enclose(&SSpectrum::default(), 0.5, None), Err(Error::Construction(_))));
    }

    #[test]
    fn real_axis_closure_gives_tube() {
        let d = enclose(&SSpectrum::real_axis(), 0.5, None).unwrap();
        assert!(d.is_unbounded());
        let t = d.tube_params().unwrap();
        assert_eq!((t.eps, t.length), (0.5, 10.0));
        for k in 0..50 {
            let x = -9.9 + 19.8 * radical(k);
            assert!(d.contains(Quaternion::real(x)));
        }
        assert!(d.encloses(&SSpectrum::real_axis()).is_ok());
    }

    fn radical(k: u64) -> f64 {
        crate::slicefn::radical_inverse(k + 1, 2)
    }

    #[test]
    fn tube_with_off_axis_spheres() {
        let mut spec = SSpectrum::real_axis();
        spec.spheres = vec![Sphere::new(1.0, 3.0), Sphere::new(0.0, 0.1), Sphere::new(50.0, 0.0)];
        let d = enclose_with(&spec, 0.5, None, EncloseOptions { tube_length: Some(20.0), ..Default::default() }).unwrap();
        assert_eq!(d.components().len(), 2);
        assert_eq!(d.components()[0].spheres.len(), 2);
        assert!(d.contains_sphere(Sphere::new(1.0, 3.0)));
        // a sphere at the strip's edge cannot be separated from it
        spec.spheres = vec![Sphere::new(1.0, 0.6)];
        assert!(matches!(enclose(&spec, 0.5, None), Err(Error::Construction(_))));
    }

    #[test]
    fn close_spheres_merge() {
        let spec = SSpectrum::from_spheres(vec![Sphere::new(0.0, 2.0), Sphere::new(0.5, 2.0), Sphere::new(5.0, 0.0)]);
        let d = enclose(&spec, 0.5, None).unwrap();
        assert_eq!(d.components().len(), 2);
        let merged = d.components().iter().find(|c| c.spheres.len() == 2).unwrap();
        assert!(matches!(merged.curves[0], Curve::Circle { .. }));
        assert!(matches!(d.select(&[Sphere::new(0.0, 2.0)], 1e-8), Err(Error::Construction(_))));
        // spheres close to the axis fall back to axis-centred disks
        let low = enclose(&SSpectrum::from_spheres(vec![Sphere::new(1.0, 0.3)]), 0.5, None).unwrap();
        assert_eq!(low.components()[0].region, Region::disk(1.0, 0.675));
    }

    #[test]
    fn avoid_region_checks() {
        let spec = SSpectrum::from_spheres(vec![Sphere::new(0.0, 0.0)]);
        let near = Region::point(Sphere::new(0.7, 0.0));
        assert!(matches!(enclose(&spec, 0.5, Some(&near)), Err(Error::Construction(_))));
        let far = Region::point(Sphere::new(1.5, 0.0));
        assert!(enclose(&spec, 0.5, Some(&far)).is_ok());
    }

    #[test]
    fn overlapping_components_rejected() {
        let r = SliceCauchyDomain::new(vec![Component::disk(0.0, 1.0), Component::disk(1.5, 1.0)]);
        assert!(matches!(r, Err(Error::Construction(_))));
    }

    #[test]
    fn reversed_orientation_is_caught() {
        let mut c = Component::disk(0.0, 1.0);
        c.curves = vec![Curve::Arc { c0: 0.0, radius: 1.0, from: PI, to: 0.0 }];
        assert!(matches!(SliceCauchyDomain::new(vec![c]), Err(Error::Construction(_))));
    }

    #[test]
    fn tube_probes() {
        for closure in [TubeClosure::Closed, TubeClosure::Open] {
            let d = SliceCauchyDomain::tube(0.5, 40.0, closure).unwrap();
            let errs = d.probe_errors(ImaginaryUnit::K, 1024);
            let tol = if closure == TubeClosure::Closed { 1e-10 } else { 1e-3 };
            assert!(errs.iter().all(|&e| e < tol), "{closure:?}: {errs:?}");
        }
    }

    #[test]
    fn mirrored_rule_gives_same_real_integrals() {
        let d = enclose(&cex_spectrum(), 0.5, None).unwrap();
        let rule = d.quadrature(ImaginaryUnit::I, 64).unwrap();
        let g = |s: Complex64| 1.0 / (s - Complex64::new(0.1, 0.05)) + s * s;
        let a = rule.integrate_complex(g);
        let b = rule.mirrored().integrate_complex(g);
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn doubling_nodes_improves_calibration() {
        // circle: geometric convergence
        let d = SliceCauchyDomain::disk(0.0, 1.0).unwrap();
        let f = |s: Complex64| 1.0 / (s - 1.5);
        let err = |n| d.quadrature(ImaginaryUnit::I, n).unwrap().integrate_complex(f).norm();
        let (e16, e32) = (err(16), err(32));
        assert!(e32 < e16 * e16.sqrt() || e32 < 1e-14, "{e16} {e32}");
        // panels on the tube boundary
        let t = SliceCauchyDomain::tube(0.5, 10.0, TubeClosure::Closed).unwrap();
        let p = Complex64::new(0.0, 3.0);
        let g = |s: Complex64| 1.0 / ((s - p) * (s - p.conj()) * (s - 0.2));
        let e = |n| (t.quadrature(ImaginaryUnit::I, n).unwrap().integrate_complex(g) / (2.0 * PI)
            - 1.0 / ((0.2 - p) * (0.2 - p.conj())))
        .norm();
        let (a, b) = (e(16), e(1024));
        assert!(a < 1e-8, "{a}");
        assert!(b <= a / 4.0 || b < 1e-13, "{a} {b}");
    }

    #[test]
    fn quadrature_needs_sixteen_nodes() {
        let d = SliceCauchyDomain::disk(0.0, 1.0).unwrap();
        assert!(matches!(d.quadrature(ImaginaryUnit::I, 8), Err(Error::Precondition(_))));
    }

    #[test]
    fn char_function_of_components() {
        let d = enclose(&cex_spectrum(), 0.5, None).unwrap();
        let chi = d.char_function(&[true, false]).unwrap();
        let rule = d.quadrature(ImaginaryUnit::I, 64).unwrap();
        for k in 0..rule.len() {
            let z = rule.node(k);
            let expect = if d.components()[0].region.inflate(1e-9).contains_sphere(sphere_of(z)) { 1.0 } else { 0.0 };
            assert_eq!(chi.eval(z).unwrap(), Quaternion::real(expect));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn enclosed_domains_are_positively_oriented(
            pts in prop::collection::vec((-3.0f64..3.0, 0.0f64..3.0), 1..6),
            clearance in 0.2f64..0.8,
            unbounded in any::<bool>(),
        ) {
            let mut spec = SSpectrum::from_spheres(pts.iter().map(|&(a, b)| Sphere::new(a, b)).collect());
            if unbounded {
                spec.intervals.push((f64::NEG_INFINITY, f64::INFINITY));
                spec.includes_infinity = true;
            }
            match enclose(&spec, clearance, None) {
                Ok(d) => {
                    for s in &spec.spheres {
                        prop_assert!(d.contains_sphere(*s));
                    }
                    for u in [ImaginaryUnit::I, ImaginaryUnit::new(0.3, -1.0, 2.0).unwrap()] {
                        for e in d.probe_errors(u, 256) {
                            prop_assert!(e < 1e-8, "probe error {e}");
                        }
                    }
                }
                Err(Error::Construction(msg)) => prop_assert!(unbounded, "unexpected failure: {msg}"),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
