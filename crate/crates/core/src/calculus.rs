//! The left, right and intrinsic S-functional calculi by boundary quadrature.
//!
//! For a slice Cauchy domain `U` containing the S-spectrum,
//!
//! ```text
//! f(T) = f(inf) Id + 1/(2 pi) * integral over boundary of U in C_I of S_L^{-1}(s,T) ds_I f(s)
//! ```
//!
//! and symmetrically on the right. Only the upper half of the boundary is
//! discretised: the mirrored node `conj(s)` shares `Q_s(T)^{-1}` with `s`, so
//! each upper node costs one `n x n` inverse. The `f(inf)` term appears
//! exactly when the domain is unbounded.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contour::{enclose, QuadratureRule, SliceCauchyDomain, TubeClosure, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::qlinalg::{q_scalar, s_spectrum, DiagonalOperator, QMatrix, QVector, Resolvent, SSpectrum};
use crate::quat::{hausdorff, sphere_of, ImaginaryUnit, Quaternion, Sphere};
use crate::slicefn::{compose, product, Chirality, IntrinsicPolynomial, IntrinsicRational, Region, SliceFunction};

/// Floor of every verification tolerance.
pub const TOLERANCE_FLOOR: f64 = 1e-9;

/// Pivot threshold used by [`restrict`].
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalcOptions {
    /// Nodes per upper boundary curve; the error estimate also runs twice
    /// as many.
    pub nodes: usize,
    pub unit: ImaginaryUnit,
    pub execution: Execution,
}

impl Default for CalcOptions {
    fn default() -> Self {
        CalcOptions { nodes: DEFAULT_NODES, unit: ImaginaryUnit::I, execution: Execution::default() }
    }
}

impl CalcOptions {
    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn with_unit(mut self, unit: ImaginaryUnit) -> Self {
        self.unit = unit;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub nodes_per_curve: usize,
    /// Upper-half nodes actually evaluated at `nodes_per_curve`.
    pub upper_nodes: usize,
    /// Max-norm difference between the `N` and `2N` node results.
    pub estimated_error: f64,
    /// Bound on the omitted tails of a cut-off tube.
    pub truncation_error: Option<f64>,
    pub contour: String,
    pub unit: ImaginaryUnit,
}

impl Diagnostics {
    pub fn error_bound(&self) -> f64 {
        self.estimated_error + self.truncation_error.unwrap_or(0.0)
    }

    /// `max(1e-9, 10 * error bound)`.
    pub fn tolerance(&self) -> f64 {
        TOLERANCE_FLOOR.max(10.0 * self.error_bound())
    }
}

/// `f(T)` at `nodes_per_curve` nodes with diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalcResult {
    pub operator: QMatrix,
    pub diagnostics: Diagnostics,
}

/// Entrywise `f(q_k)` for a diagonal operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalResult {
    pub values: Vec<Quaternion>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Left,
    Right,
    Intrinsic,
}

fn check_chirality(f: &SliceFunction, side: Side) -> Result<()> {
    let ok = match side {
        Side::Left => f.chirality().is_left(),
        Side::Right => f.chirality().is_right(),
        Side::Intrinsic => f.chirality() == Chirality::Intrinsic,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "{} has chirality {:?}, not usable for the {side:?} calculus",
            f.name(),
            f.chirality()
        )))
    }
}

/// `f(inf)` if the domain is unbounded, `None` if bounded.
fn infinity_term(f: &SliceFunction, domain: &SliceCauchyDomain) -> Result<Option<Quaternion>> {
    if !domain.is_unbounded() {
        return Ok(None);
    }
    f.value_at_infinity().map(Some).ok_or_else(|| {
        Error::Precondition(format!("{} has no value at infinity but the domain is unbounded", f.name()))
    })
}

fn check_function_domain(f: &SliceFunction, domain: &SliceCauchyDomain) -> Result<()> {
    for s in f.singularities() {
        if domain.contains_sphere(*s) {
            return Err(Error::Precondition(format!("singularity {s} of {} lies inside the domain", f.name())));
        }
    }
    for c in domain.components() {
        if !f.is_defined_at(c.probe.s0, c.probe.s1) {
            return Err(Error::Precondition(format!("{} is undefined inside component {}", f.name(), c.region)));
        }
    }
    Ok(())
}

/// Cut-off tail bound `(2 eps / pi) max|f(+-L + I eps)| / (L - r)` of an
/// open tube, where `r` bounds the spectrum.
fn truncation_bound(f: &SliceFunction, domain: &SliceCauchyDomain, r: f64) -> Option<f64> {
    let tube = domain.tube_params().filter(|t| t.closure == TubeClosure::Open)?;
    if tube.length <= r {
        return Some(f64::INFINITY);
    }
    let m = [tube.length, -tube.length]
        .iter()
        .map(|&x| f.eval(Quaternion::new(x, tube.eps, 0.0, 0.0)).map(|v| v.norm()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    Some(2.0 * tube.eps / PI * m / (tube.length - r))
}

/// One quadrature pass over the upper nodes of `rule`.
fn integrate(side: Side, f: &SliceFunction, res: &Resolvent, rule: &QuadratureRule, exec: Execution) -> Result<QMatrix> {
    let t = res.operator();
    let n = t.dim();
    let idx: Vec<usize> = (0..rule.len()).collect();
    let terms = par::map(exec, &idx, |&k| -> Result<(QMatrix, QMatrix)> {
        let (s, w) = (rule.node(k), rule.weight(k));
        let (sb, wb) = (s.conj(), w.conj());
        let q = res.pseudo(s)?;
        let fs = f.eval(s)?;
        Ok(match side {
            Side::Left => {
                let fb = f.eval(sb)?;
                (q.scale_right(sb * w * fs + s * wb * fb), q.scale_right(w * fs + wb * fb))
            }
            Side::Right => {
                let fb = f.eval(sb)?;
                (q.scale_left(fs * w * sb + fb * wb * s), q.scale_left(fs * w + fb * wb))
            }
            Side::Intrinsic => (q.scale(2.0 * (sb * w * fs).re()), q.scale(2.0 * (w * fs).re())),
        })
    });
    let (mut a, mut b) = (QMatrix::zeros(n), QMatrix::zeros(n));
    for term in terms {
        let (ta, tb) = term?;
        a = &a + &ta;
        b = &b + &tb;
    }
    let m = match side {
        Side::Right => &a - &(&b * t),
        _ => &a - &(t * &b),
    };
    Ok(m.scale(1.0 / (2.0 * PI)))
}

fn calc(side: Side, f: &SliceFunction, t: &QMatrix, domain: &SliceCauchyDomain, opts: &CalcOptions) -> Result<CalcResult> {
    check_chirality(f, side)?;
    let res = Resolvent::new(t)?;
    domain.encloses(res.spectrum())?;
    check_function_domain(f, domain)?;
    let at_inf = infinity_term(f, domain)?;
    let rule = domain.quadrature(opts.unit, opts.nodes)?;
    let fine = domain.quadrature(opts.unit, 2 * opts.nodes)?;
    let mut coarse_op = integrate(side, f, &res, &rule, opts.execution)?;
    let mut fine_op = integrate(side, f, &res, &fine, opts.execution)?;
    if let Some(v) = at_inf {
        let shift = QMatrix::scalar(t.dim(), v);
        coarse_op = &coarse_op + &shift;
        fine_op = &fine_op + &shift;
    }
    let diagnostics = Diagnostics {
        nodes_per_curve: opts.nodes,
        upper_nodes: rule.len(),
        estimated_error: coarse_op.dist(&fine_op),
        truncation_error: truncation_bound(f, domain, res.spectrum().radius()),
        contour: domain.describe(),
        unit: opts.unit,
    };
    Ok(CalcResult { operator: coarse_op, diagnostics })
}

/// Left S-functional calculus.
pub fn apply_left(f: &SliceFunction, t: &QMatrix, domain: &SliceCauchyDomain, opts: &CalcOptions) -> Result<CalcResult> {
    calc(Side::Left, f, t, domain, opts)
}

/// Right S-functional calculus.
pub fn apply_right(f: &SliceFunction, t: &QMatrix, domain: &SliceCauchyDomain, opts: &CalcOptions) -> Result<CalcResult> {
    calc(Side::Right, f, t, domain, opts)
}

/// Intrinsic calculus with real weights. The result is checked against
/// both [`apply_left`] and [`apply_right`].
pub fn apply_intrinsic(
    f: &SliceFunction,
    t: &QMatrix,
    domain: &SliceCauchyDomain,
    opts: &CalcOptions,
) -> Result<CalcResult> {
    let r = calc(Side::Intrinsic, f, t, domain, opts)?;
    let left = calc(Side::Left, f, t, domain, opts)?;
    let right = calc(Side::Right, f, t, domain, opts)?;
    let residual = r.operator.dist(&left.operator).max(r.operator.dist(&right.operator));
    let bound = r.diagnostics.error_bound() + left.diagnostics.error_bound() + right.diagnostics.error_bound();
    let tolerance = TOLERANCE_FLOOR.max(10.0 * bound);
    if !(residual <= tolerance) {
        return Err(Error::Inconsistent { residual, tolerance });
    }
    Ok(r)
}

/// Intrinsic calculus for a diagonal operator, symbol by symbol.
pub fn apply_intrinsic_diagonal(
    f: &SliceFunction,
    d: &DiagonalOperator,
    domain: &SliceCauchyDomain,
    opts: &CalcOptions,
) -> Result<DiagonalResult> {
    check_chirality(f, Side::Intrinsic)?;
    domain.encloses(d.closure())?;
    for q in d.symbols() {
        if !domain.contains(*q) {
            return Err(Error::Precondition(format!("symbol {q} is not enclosed by the domain")));
        }
    }
    check_function_domain(f, domain)?;
    let at_inf = infinity_term(f, domain)?.unwrap_or(Quaternion::ZERO);
    let pass = |rule: &QuadratureRule| -> Result<Vec<Quaternion>> {
        let idx: Vec<usize> = (0..rule.len()).collect();
        let nodes = par::map(opts.execution, &idx, |&k| -> Result<(Quaternion, f64, f64)> {
            let (s, w) = (rule.node(k), rule.weight(k));
            let p = sphere_of(s);
            if d.closure().distance_to(p) <= 1e-10 {
                return Err(Error::Singular { sphere: p, detail: "node inside the declared spectrum closure".into() });
            }
            let fs = f.eval(s)?;
            Ok((s, 2.0 * (s.conj() * w * fs).re(), 2.0 * (w * fs).re()))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        par::map(opts.execution, d.symbols(), |&q| -> Result<Quaternion> {
            let mut acc = Quaternion::ZERO;
            for &(s, a, b) in &nodes {
                let qi = q_scalar(q, s).try_inv().ok_or_else(|| Error::Singular {
                    sphere: sphere_of(s),
                    detail: format!("symbol {q}"),
                })?;
                acc = acc + qi * (Quaternion::real(a) - q * b);
            }
            Ok(acc / (2.0 * PI) + at_inf)
        })
        .into_iter()
        .collect()
    };
    let rule = domain.quadrature(opts.unit, opts.nodes)?;
    let fine = domain.quadrature(opts.unit, 2 * opts.nodes)?;
    let values = pass(&rule)?;
    let fine_values = pass(&fine)?;
    let estimated_error = values.iter().zip(&fine_values).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
    let r = d.symbols().iter().map(|q| q.norm()).fold(0.0, f64::max);
    Ok(DiagonalResult {
        values,
        diagnostics: Diagnostics {
            nodes_per_curve: opts.nodes,
            upper_nodes: rule.len(),
            estimated_error,
            truncation_error: truncation_bound(f, domain, r),
            contour: domain.describe(),
            unit: opts.unit,
        },
    })
}

/// Riesz projection `E_sigma` onto the part of the spectrum given by
/// `selected`, which must be separated from the rest by `2 clearance`.
pub fn spectral_projection(t: &QMatrix, selected: &[Sphere], clearance: f64, opts: &CalcOptions) -> Result<CalcResult> {
    let spec = s_spectrum(t)?;
    let tol = 1e-8 * (1.0 + spec.radius());
    for s in selected {
        if !spec.contains(*s, tol) {
            return Err(Error::Precondition(format!("{s} is not in the S-spectrum {spec}")));
        }
    }
    let chosen = |p: &Sphere| selected.iter().any(|s| s.distance(*p) <= tol);
    for a in spec.spheres.iter().filter(|p| chosen(p)) {
        for b in spec.spheres.iter().filter(|p| !chosen(p)) {
            if a.distance(*b) < 2.0 * clearance - tol {
                return Err(Error::Construction(format!(
                    "selected sphere {a} is within {} of unselected {b} (needs {})",
                    a.distance(*b),
                    2.0 * clearance
                )));
            }
        }
    }
    let domain = enclose(&spec, clearance, None)?;
    let mask = domain.select(selected, tol)?;
    let chi = domain.char_function(&mask)?;
    apply_intrinsic(&chi, t, &domain, opts)
}

/// Operator of `T` on the range of the projection `e`, in an orthonormal
/// basis of that range (columns of `e`, Gram-Schmidt with pivoting).
pub fn restrict(t: &QMatrix, e: &QMatrix) -> Result<(QMatrix, Vec<QVector>)> {
    let n = t.dim();
    if e.dim() != n {
        return Err(Error::Precondition(format!("dimension mismatch: T is {n}, E is {}", e.dim())));
    }
    let scale = 1.0 + e.max_norm();
    let idem = (e * e).dist(e);
    if idem > 1e-8 * scale {
        return Err(Error::Precondition(format!("E is not idempotent (residual {idem:e})")));
    }
    let comm = (e * t).dist(&(t * e));
    if comm > 1e-8 * scale * (1.0 + t.max_norm()) {
        return Err(Error::Precondition(format!("E does not commute with T (residual {comm:e})")));
    }
    let mut cols: Vec<QVector> = (0..n).map(|j| e.column(j)).collect();
    let mut basis: Vec<QVector> = Vec::new();
    let threshold = RANK_TOL * scale;
    while basis.len() < n {
        let (k, norm) = cols
            .iter()
            .enumerate()
            .map(|(k, c)| (k, c.norm()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if norm <= threshold {
            break;
        }
        let b = cols[k].scale_right(Quaternion::real(1.0 / norm));
        for c in cols.iter_mut() {
            let proj = b.inner(c);
            *c = c.sub(&b.scale_right(proj));
        }
        basis.push(b);
    }
    let m = QMatrix::from_fn(basis.len(), |i, j| basis[i].inner(&t.apply(&basis[j])));
    Ok((m, basis))
}

/// `P(T)` by Horner's scheme.
pub fn poly_apply(p: &IntrinsicPolynomial, t: &QMatrix) -> QMatrix {
    let n = t.dim();
    p.coeffs().iter().rev().fold(QMatrix::zeros(n), |acc, &a| &(&acc * t) + &QMatrix::scalar(n, Quaternion::real(a)))
}

/// `f(x)` reproduced from boundary values through the left (or right)
/// Cauchy kernel.
pub fn scalar_cauchy(
    f: &SliceFunction,
    x: Quaternion,
    domain: &SliceCauchyDomain,
    opts: &CalcOptions,
    left: bool,
) -> Result<Quaternion> {
    use crate::slicefn::{cauchy_kernel_left, cauchy_kernel_right};
    if !domain.contains(x) {
        return Err(Error::Precondition(format!("{x} is not inside the domain")));
    }
    let at_inf = infinity_term(f, domain)?.unwrap_or(Quaternion::ZERO);
    let rule = domain.quadrature(opts.unit, opts.nodes)?;
    let mut acc = Quaternion::ZERO;
    for k in 0..rule.len() {
        let (s, w) = (rule.node(k), rule.weight(k));
        for (s, w) in [(s, w), (s.conj(), w.conj())] {
            let fs = f.eval(s)?;
            acc = acc
                + if left {
                    cauchy_kernel_left(s, x)? * w * fs
                } else {
                    fs * w * cauchy_kernel_right(s, x)?
                };
        }
    }
    Ok(acc / (2.0 * PI) + at_inf)
}

/// Outcome of one identity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn measured(name: &str, residual: f64, tolerance: f64) -> Check {
        Check { name: name.into(), residual: Some(residual), tolerance, passed: residual <= tolerance, detail: String::new() }
    }

    pub fn failed(name: &str, err: &Error) -> Check {
        Check { name: name.into(), residual: None, tolerance: 0.0, passed: false, detail: err.to_string() }
    }

    pub fn skipped(name: &str, why: impl Into<String>) -> Check {
        Check { name: name.into(), residual: None, tolerance: 0.0, passed: true, detail: format!("skipped: {}", why.into()) }
    }

    fn from_result(name: &str, r: Result<Check>) -> Check {
        r.unwrap_or_else(|e| Check::failed(name, &e))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        match self.residual {
            Some(r) => write!(f, "{status} {:<28} residual {r:.3e} <= {:.3e}", self.name, self.tolerance)?,
            None => write!(f, "{status} {:<28}", self.name)?,
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub clearance: f64,
    /// Second clearance for the contour-independence check.
    pub alt_clearance: f64,
    pub nodes: usize,
    pub units: [ImaginaryUnit; 2],
    pub execution: Execution,
    /// Polynomial `P` of the check `P(T) f(T) = (P f)(T)`.
    pub poly: IntrinsicPolynomial,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            clearance: 0.4,
            alt_clearance: 0.25,
            nodes: DEFAULT_NODES,
            units: [ImaginaryUnit::I, ImaginaryUnit::new(1.0, 2.0, 3.0).expect("nonzero")],
            execution: Execution::default(),
            poly: IntrinsicPolynomial::new(vec![0.0, -2.0, 0.0, 1.0]),
        }
    }
}

fn union_of(regions: impl IntoIterator<Item = Option<Region>>) -> Option<Region> {
    let parts: Vec<Region> = regions.into_iter().flatten().collect();
    (!parts.is_empty()).then(|| Region::union(parts))
}

fn points_region(spheres: &[Sphere]) -> Option<Region> {
    (!spheres.is_empty()).then(|| Region::union(spheres.iter().map(|s| Region::point(*s)).collect()))
}

/// Resolvent equations at a few points off the spectrum, then the
/// identities of the calculus for an intrinsic rational `f` and a left
/// function `g`. Every failure becomes a report entry.
pub fn verify_identities(t: &QMatrix, f: &IntrinsicRational, g: &SliceFunction, cfg: &VerifyConfig) -> VerifyReport {
    let mut report = VerifyReport::default();
    let res = match Resolvent::new(t) {
        Ok(r) => r,
        Err(e) => {
            report.checks.push(Check::failed("spectrum", &e));
            return report;
        }
    };
    let spec = res.spectrum().clone();
    resolvent_checks(&res, &spec, cfg, &mut report);

    let fs = f.to_function();
    let opts = CalcOptions { nodes: cfg.nodes, unit: cfg.units[0], execution: cfg.execution };
    let avoid = union_of([fs.obstacles(), g.obstacles()]);
    let domain = match enclose(&spec, cfg.clearance, avoid.as_ref()) {
        Ok(d) => d,
        Err(e) => {
            report.checks.push(Check::failed("domain", &e));
            return report;
        }
    };
    let ff = apply_left(&fs, t, &domain, &opts);
    let gg = apply_left(g, t, &domain, &opts);
    let (ff, gg) = match (ff, gg) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            report.checks.push(Check::failed("calculus", &e));
            return report;
        }
    };
    let (fm, gm) = (&ff.operator, &gg.operator);
    let (ef, eg) = (ff.diagnostics.error_bound(), gg.diagnostics.error_bound());

    report.checks.push(Check::from_result("product_rule", (|| {
        let fg = apply_left(&product(&fs, g)?, t, &domain, &opts)?;
        let bound = fg.diagnostics.error_bound() + fm.max_norm() * eg + gm.max_norm() * ef;
        Ok(Check::measured("product_rule", fg.operator.dist(&(fm * gm)), 1e-8_f64.max(10.0 * bound)))
    })()));

    report.checks.push(Check::from_result("intrinsic_left_right", (|| {
        let r = apply_right(&fs, t, &domain, &opts)?;
        let tol = TOLERANCE_FLOOR.max(10.0 * (ef + r.diagnostics.error_bound()));
        Ok(Check::measured("intrinsic_left_right", fm.dist(&r.operator), tol))
    })()));

    report.checks.push(Check::from_result("unit_independence", (|| {
        let other = apply_left(g, t, &domain, &opts.with_unit(cfg.units[1]))?;
        let tol = TOLERANCE_FLOOR.max(10.0 * eg.max(other.diagnostics.error_bound()));
        Ok(Check::measured("unit_independence", gm.dist(&other.operator), tol))
    })()));

    report.checks.push(Check::from_result("contour_independence", (|| {
        let d2 = enclose(&spec, cfg.alt_clearance, avoid.as_ref())?;
        let other = apply_left(g, t, &d2, &opts)?;
        let tol = TOLERANCE_FLOOR.max(10.0 * eg.max(other.diagnostics.error_bound()));
        Ok(Check::measured("contour_independence", gm.dist(&other.operator), tol))
    })()));

    report.checks.push(Check::from_result("polynomial_product", (|| {
        let pf = IntrinsicRational::polynomial(cfg.poly.clone()).mul(f).to_function();
        let rhs = apply_left(&pf, t, &domain, &opts)?;
        let p = poly_apply(&cfg.poly, t);
        let bound = rhs.diagnostics.error_bound() + p.max_norm() * ef;
        Ok(Check::measured("polynomial_product", (&p * fm).dist(&rhs.operator), 1e-8_f64.max(10.0 * bound)))
    })()));

    report.checks.push(Check::from_result("spectral_mapping", (|| {
        let image: Vec<Sphere> = spec.spheres.iter().map(|s| f.map_sphere(*s)).collect();
        let got = s_spectrum(fm)?;
        Ok(Check::measured("spectral_mapping", hausdorff(&got.spheres, &image), 1e-8_f64.max(10.0 * ef)))
    })()));

    report.checks.push(composition_check(t, f, &fs, g, fm, ef, &spec, cfg, &opts));
    report.checks.push(inverse_check(t, f, &fs, &spec, cfg, &opts));
    report
}

fn resolvent_checks(res: &Resolvent, spec: &SSpectrum, cfg: &VerifyConfig, report: &mut VerifyReport) {
    let r = spec.radius() + 1.0;
    let pts: Vec<Quaternion> = [0.3, 1.1, 2.0, 2.9]
        .iter()
        .enumerate()
        .map(|(k, &th)| {
            let u = cfg.units[k % 2].as_quaternion();
            Quaternion::real(r * f64::cos(th)) + u * (r * f64::sin(th))
        })
        .collect();
    let mut run = |name: &str, eval: &dyn Fn() -> Result<f64>| {
        report.checks.push(Check::from_result(name, eval().map(|v| Check::measured(name, v, TOLERANCE_FLOOR))));
    };
    run("resolvent_left", &|| pts.iter().map(|&s| res.left_equation_residual(s)).try_fold(0.0, |m, v| Ok(f64::max(m, v?))));
    run("resolvent_right", &|| pts.iter().map(|&s| res.right_equation_residual(s)).try_fold(0.0, |m, v| Ok(f64::max(m, v?))));
    run("resolvent_two_variable", &|| {
        (0..pts.len())
            .map(|k| res.two_variable_residual(pts[k], pts[(k + 1) % pts.len()]))
            .try_fold(0.0, |m, v| Ok(f64::max(m, v?)))
    });
}

#[allow(clippy::too_many_arguments)]
fn composition_check(
    t: &QMatrix,
    f: &IntrinsicRational,
    fs: &SliceFunction,
    g: &SliceFunction,
    fm: &QMatrix,
    ef: f64,
    spec: &SSpectrum,
    cfg: &VerifyConfig,
    opts: &CalcOptions,
) -> Check {
    const NAME: &str = "composition";
    let mut bad = fs.singularities().to_vec();
    for c in g.singularities() {
        match f.preimage(*c) {
            Ok(p) => bad.extend(p),
            Err(e) => return Check::failed(NAME, &e),
        }
    }
    let gf = match compose(g, fs) {
        Ok(h) => h.with_singularities(bad.clone()),
        Err(e) => return Check::failed(NAME, &e),
    };
    let Ok(d_t) = enclose(spec, cfg.clearance, points_region(&bad).as_ref()) else {
        return Check::skipped(NAME, "f maps a point near the spectrum onto a singularity of g");
    };
    let spec_f = match s_spectrum(fm) {
        Ok(s) => s,
        Err(e) => return Check::failed(NAME, &e),
    };
    let Ok(d_f) = enclose(&spec_f, cfg.clearance, g.obstacles().as_ref()) else {
        return Check::skipped(NAME, "the spectrum of f(T) is too close to a singularity of g");
    };
    Check::from_result(NAME, (|| {
        let lhs = apply_left(&gf, t, &d_t, opts)?;
        let rhs = apply_left(g, fm, &d_f, opts)?;
        let bound = lhs.diagnostics.error_bound() + rhs.diagnostics.error_bound() + ef;
        Ok(Check::measured(NAME, lhs.operator.dist(&rhs.operator), 1e-8_f64.max(100.0 * bound)))
    })())
}

fn inverse_check(
    t: &QMatrix,
    f: &IntrinsicRational,
    fs: &SliceFunction,
    spec: &SSpectrum,
    cfg: &VerifyConfig,
    opts: &CalcOptions,
) -> Check {
    const NAME: &str = "inverse";
    let (inv, zeros) = match (f.reciprocal(), f.zeros()) {
        (Ok(i), Ok(z)) => (i, z),
        (Err(e), _) | (_, Err(e)) => return Check::failed(NAME, &e),
    };
    let mut bad = zeros;
    bad.extend_from_slice(fs.singularities());
    let Ok(domain) = enclose(spec, cfg.clearance, points_region(&bad).as_ref()) else {
        return Check::skipped(NAME, "f has a zero near the spectrum");
    };
    Check::from_result(NAME, (|| {
        let a = apply_left(fs, t, &domain, opts)?;
        let b = apply_left(&inv.to_function(), t, &domain, opts)?;
        let bound = a.operator.max_norm() * b.diagnostics.error_bound() + b.operator.max_norm() * a.diagnostics.error_bound();
        let r = (&a.operator * &b.operator).dist(&QMatrix::identity(t.dim()));
        Ok(Check::measured(NAME, r, 1e-8_f64.max(10.0 * bound)))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::Component;
    use crate::qlinalg::tests::example_t;
    use crate::slicefn::{char_function, constant, locally_constant, polynomial, shifted_inverse};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 0.5;

    fn q(w: f64, x: f64, y: f64, z: f64) -> Quaternion {
        Quaternion::new(w, x, y, z)
    }

    fn m2(a: [Quaternion; 4]) -> QMatrix {
        QMatrix::from_row_major(2, a.to_vec()).unwrap()
    }

    fn e0() -> QMatrix {
        m2([Quaternion::real(H), q(0.0, -H, 0.0, 0.0), q(0.0, H, 0.0, 0.0), Quaternion::real(H)])
    }

    fn es() -> QMatrix {
        m2([Quaternion::real(H), q(0.0, H, 0.0, 0.0), q(0.0, -H, 0.0, 0.0), Quaternion::real(H)])
    }

    fn example_domain() -> SliceCauchyDomain {
        enclose(&s_spectrum(&example_t()).unwrap(), 0.5, None).unwrap()
    }

    fn rand_matrix(rng: &mut ChaCha8Rng, n: usize) -> QMatrix {
        QMatrix::from_fn(n, |_, _| {
            q(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn opts() -> CalcOptions {
        CalcOptions::default().with_execution(Execution::Sequential)
    }

    #[test]
    fn constants_give_multiples_of_identity() {
        let t = example_t();
        let d = example_domain();
        let a = q(0.5, -1.0, 2.0, 0.25);
        let id_a = QMatrix::scalar(2, a);
        let l = apply_left(&constant(a), &t, &d, &opts()).unwrap();
        let r = apply_right(&constant(a), &t, &d, &opts()).unwrap();
        assert!(l.operator.dist(&id_a) < 1e-12, "{}", l.operator);
        assert!(r.operator.dist(&id_a) < 1e-12);
    }

    #[test]
    fn example_projections() {
        let t = example_t();
        let d = example_domain();
        let p0 = apply_intrinsic(&d.char_function(&[true, false]).unwrap(), &t, &d, &opts()).unwrap();
        let ps = apply_intrinsic(&d.char_function(&[false, true]).unwrap(), &t, &d, &opts()).unwrap();
        assert!(p0.operator.dist(&e0()) < 1e-10, "{}", p0.operator);
        assert!(ps.operator.dist(&es()) < 1e-10, "{}", ps.operator);
        let via = spectral_projection(&t, &[Sphere::new(0.0, 0.0)], 0.5, &opts()).unwrap();
        assert!(via.operator.dist(&e0()) < 1e-10);
    }

    #[test]
    fn example_left_right_discrepancy() {
        let t = example_t();
        let d = example_domain();
        let f = locally_constant(vec![(d.components()[0].region.inflate(0.05), Quaternion::J), (d.components()[1].region.inflate(0.05), Quaternion::ZERO)], None).unwrap();
        let l = apply_left(&f, &t, &d, &opts()).unwrap().operator;
        let r = apply_right(&f, &t, &d, &opts()).unwrap().operator;
        let hj = q(0.0, 0.0, H, 0.0);
        let hk = q(0.0, 0.0, 0.0, H);
        assert!(l.dist(&m2([hj, -hk, hk, hj])) < 1e-10, "{l}");
        assert!(r.dist(&m2([hj, hk, -hk, hj])) < 1e-10, "{r}");
    }

    #[test]
    fn shifted_inverse_is_matrix_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = rand_matrix(&mut rng, 3);
        let spec = s_spectrum(&t).unwrap();
        let a = spec.radius() + 1.0;
        let f = shifted_inverse(a);
        let d = enclose(&spec, 0.4, f.obstacles().as_ref()).unwrap();
        // (s - a)^{-1} = -(a - s)^{-1}
        let want = (&QMatrix::scalar(3, Quaternion::real(a)) - &t).inverse().unwrap().scale(-1.0);
        for r in [apply_left(&f, &t, &d, &opts()), apply_right(&f, &t, &d, &opts())] {
            let r = r.unwrap();
            assert!(r.operator.dist(&want) < 1e-10, "{}", r.operator.dist(&want));
        }
    }

    #[test]
    fn square_matches_product_and_poly_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = rand_matrix(&mut rng, 3);
        let d = enclose(&s_spectrum(&t).unwrap(), 0.4, None).unwrap();
        let p = IntrinsicPolynomial::monomial(2);
        let r = apply_right(&polynomial(&p), &t, &d, &opts()).unwrap();
        assert!(r.operator.dist(&(&t * &t)) < 1e-10);
        assert!(poly_apply(&p, &t).dist(&(&t * &t)) < 1e-14);
    }

    #[test]
    fn poly_apply_examples() {
        assert_eq!(poly_apply(&IntrinsicPolynomial::constant(1.0), &example_t()), QMatrix::identity(2));
        let want = m2([Quaternion::real(-H), q(0.0, -H, 0.0, 0.0), q(0.0, H, 0.0, 0.0), Quaternion::real(-H)]);
        assert!(poly_apply(&IntrinsicPolynomial::monomial(2), &example_t()).dist(&want) < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let t = example_t();
        let all = spectral_projection(&t, &[Sphere::new(0.0, 0.0), Sphere::new(0.0, 1.0)], 0.5, &opts()).unwrap();
        assert!(all.operator.dist(&QMatrix::identity(2)) < 1e-10);
        let d = QMatrix::diagonal(&[Quaternion::ONE, Quaternion::I, q(3.0, 0.0, 2.0, 0.0)]);
        let p = spectral_projection(&d, &[Sphere::new(1.0, 0.0)], 0.5, &opts()).unwrap();
        let want = QMatrix::diagonal(&[Quaternion::ONE, Quaternion::ZERO, Quaternion::ZERO]);
        assert!(p.operator.dist(&want) < 1e-10, "{}", p.operator);
        assert!(matches!(
            spectral_projection(&t, &[Sphere::new(0.0, 0.0)], 0.6, &opts()),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn restrict_example() {
        let t = example_t();
        let (m0, b0) = restrict(&t, &e0()).unwrap();
        assert_eq!((m0.dim(), b0.len()), (1, 1));
        assert!(m0[(0, 0)].norm() < 1e-12);
        let (ms, _) = restrict(&t, &es()).unwrap();
        let sp = s_spectrum(&ms).unwrap();
        assert_eq!(sp.spheres.len(), 1);
        assert!(sp.spheres[0].distance(Sphere::new(0.0, 1.0)) < 1e-10);
        let (mi, _) = restrict(&t, &QMatrix::identity(2)).unwrap();
        assert!(hausdorff(&s_spectrum(&mi).unwrap().spheres, &s_spectrum(&t).unwrap().spheres) < 1e-10);
        let not_proj = QMatrix::scalar(2, Quaternion::real(2.0));
        assert!(matches!(restrict(&t, &not_proj), Err(Error::Precondition(_))));
    }

    #[test]
    fn non_intrinsic_rejected_by_intrinsic_calculus() {
        let d = example_domain();
        assert!(matches!(apply_intrinsic(&constant(Quaternion::J), &example_t(), &d, &opts()), Err(Error::Precondition(_))));
    }

    #[test]
    fn unbounded_domain_needs_value_at_infinity() {
        let t = QMatrix::identity(1);
        let d = SliceCauchyDomain::tube(0.5, 10.0, TubeClosure::Closed).unwrap();
        let p = polynomial(&IntrinsicPolynomial::monomial(2));
        assert!(matches!(apply_left(&p, &t, &d, &opts()), Err(Error::Precondition(_))));
    }

    #[test]
    fn unenclosed_spectrum_rejected() {
        let d = SliceCauchyDomain::disk(0.0, 0.5).unwrap();
        let t = QMatrix::scalar(1, Quaternion::real(2.0));
        assert!(matches!(apply_left(&constant(Quaternion::ONE), &t, &d, &opts()), Err(Error::Precondition(_))));
    }

    #[test]
    fn bounded_and_unbounded_domains_agree() {
        // f = (s^2 + 9)^{-1}, poles on the sphere of 3I
        let f = crate::slicefn::rational(&IntrinsicPolynomial::constant(1.0), &IntrinsicPolynomial::new(vec![9.0, 0.0, 1.0])).unwrap();
        let t = m2([Quaternion::real(0.2), Quaternion::J * 0.1, Quaternion::ZERO, Quaternion::real(-0.3)]);
        let bounded = enclose(&s_spectrum(&t).unwrap(), 0.4, f.obstacles().as_ref()).unwrap();
        let tube = SliceCauchyDomain::tube(0.5, 10.0, TubeClosure::Closed).unwrap();
        let a = apply_intrinsic(&f, &t, &bounded, &opts()).unwrap();
        let b = apply_intrinsic(&f, &t, &tube, &opts().with_nodes(512)).unwrap();
        assert!(a.operator.dist(&b.operator) < 1e-9, "{}", a.operator.dist(&b.operator));
        let direct = (&(&t * &t) + &QMatrix::scalar(2, Quaternion::real(9.0))).inverse().unwrap();
        assert!(a.operator.dist(&direct) < 1e-10);
    }

    #[test]
    fn diagonal_operator_entrywise() {
        let symbols: Vec<Quaternion> = (0..7).map(|k| Quaternion::real(-3.0 + k as f64)).collect();
        let d = DiagonalOperator::new(symbols.clone(), SSpectrum::real_axis()).unwrap();
        let f = crate::slicefn::rational(&IntrinsicPolynomial::constant(1.0), &IntrinsicPolynomial::new(vec![1.0, 0.0, 1.0])).unwrap();
        let dom = SliceCauchyDomain::tube(0.5, 20.0, TubeClosure::Closed).unwrap();
        let r = apply_intrinsic_diagonal(&f, &d, &dom, &opts().with_nodes(512)).unwrap();
        for (v, q) in r.values.iter().zip(&symbols) {
            assert!((*v - Quaternion::real(1.0 / (q.w * q.w + 1.0))).norm() < 1e-9);
        }
        // P(s) = s against (P f)(T) entrywise
        let sf = crate::slicefn::rational(&IntrinsicPolynomial::monomial(1), &IntrinsicPolynomial::new(vec![1.0, 0.0, 1.0])).unwrap();
        let r2 = apply_intrinsic_diagonal(&sf, &d, &dom, &opts().with_nodes(512)).unwrap();
        for ((a, b), q) in r2.values.iter().zip(&r.values).zip(&symbols) {
            assert!((*a - *q * *b).norm() < 1e-9);
        }
    }

    #[test]
    fn open_tube_reports_truncation() {
        let d = DiagonalOperator::new(vec![Quaternion::real(1.0)], SSpectrum::real_axis()).unwrap();
        let f = crate::slicefn::rational(&IntrinsicPolynomial::constant(1.0), &IntrinsicPolynomial::new(vec![1.0, 0.0, 1.0])).unwrap();
        let dom = SliceCauchyDomain::tube(0.5, 40.0, TubeClosure::Open).unwrap();
        let r = apply_intrinsic_diagonal(&f, &d, &dom, &opts().with_nodes(1024)).unwrap();
        let tb = r.diagnostics.truncation_error.unwrap();
        let err = (r.values[0] - Quaternion::real(0.5)).norm();
        assert!(err <= tb, "{err} {tb}");
    }

    #[test]
    fn scalar_cauchy_reproduces_values() {
        let f = shifted_inverse(3.0);
        let d = SliceCauchyDomain::disk(0.0, 2.0).unwrap();
        for x in [q(0.5, 0.3, -0.2, 0.7), q(-1.0, 0.0, 0.0, 0.0), q(0.0, 0.1, 1.2, 0.0)] {
            let want = f.eval(x).unwrap();
            for left in [true, false] {
                let v = scalar_cauchy(&f, x, &d, &opts(), left).unwrap();
                assert!((v - want).norm() < 1e-12, "{v} {want}");
            }
        }
    }

    #[test]
    fn parallel_equals_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = rand_matrix(&mut rng, 4);
        let d = enclose(&s_spectrum(&t).unwrap(), 0.4, None).unwrap();
        let f = polynomial(&IntrinsicPolynomial::monomial(3));
        let a = apply_left(&f, &t, &d, &opts()).unwrap();
        let b = apply_left(&f, &t, &d, &opts().with_execution(Execution::Parallel)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verify_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = rand_matrix(&mut rng, 3);
        let f = IntrinsicRational::polynomial(IntrinsicPolynomial::monomial(2));
        let g = polynomial(&IntrinsicPolynomial::monomial(3));
        let report = verify_identities(&t, &f, &g, &VerifyConfig { execution: Execution::Sequential, ..Default::default() });
        assert!(report.all_passed(), "{report}");
        assert!(report.get("product_rule").unwrap().residual.unwrap() < 1e-8);
    }

    #[test]
    fn square_spectrum_example() {
        let t = QMatrix::diagonal(&[Quaternion::ONE, Quaternion::I]);
        let f = IntrinsicRational::polynomial(IntrinsicPolynomial::monomial(2));
        let g = polynomial(&IntrinsicPolynomial::monomial(1));
        let report = verify_identities(&t, &f, &g, &VerifyConfig::default());
        assert!(report.all_passed(), "{report}");
        let sq = poly_apply(f.num(), &t);
        let sp = s_spectrum(&sq).unwrap();
        assert!(hausdorff(&sp.spheres, &[Sphere::new(1.0, 0.0), Sphere::new(-1.0, 0.0)]) < 1e-12);
    }

    #[test]
    fn inconsistent_report_entry_for_bad_identity() {
        // a left non-intrinsic g makes the product rule hold, but a wrong
        // tolerance never hides a residual
        let c = Check::measured("x", 1e-3, 1e-9);
        assert!(!c.passed);
        assert!(c.to_string().starts_with("FAIL"));
    }

    #[test]
    fn char_function_of_single_component_is_identity() {
        let t = example_t();
        let d = SliceCauchyDomain::new(vec![Component::disk(0.0, 1.5)]).unwrap();
        let chi = char_function(&[d.components()[0].region.clone()], &[true]).unwrap();
        let r = apply_intrinsic(&chi, &t, &d, &opts()).unwrap();
        assert!(r.operator.dist(&QMatrix::identity(2)) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn intrinsic_left_equals_right(seed in 0u64..10_000, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = rand_matrix(&mut rng, n);
            let f = IntrinsicRational::shifted_inverse(s_spectrum(&t).unwrap().radius() + 1.0).to_function();
            let d = enclose(&s_spectrum(&t).unwrap(), 0.4, f.obstacles().as_ref()).unwrap();
            let l = apply_left(&f, &t, &d, &opts()).unwrap();
            let r = apply_right(&f, &t, &d, &opts()).unwrap();
            prop_assert!(l.operator.dist(&r.operator) < 1e-9);
        }

        #[test]
        fn projections_are_idempotent_and_complementary(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = rand_matrix(&mut rng, 3);
            let spec = s_spectrum(&t).unwrap();
            let d = enclose(&spec, 0.2, None).unwrap();
            prop_assume!(d.components().len() >= 2);
            let mask: Vec<bool> = (0..d.components().len()).map(|k| k == 0).collect();
            let inv: Vec<bool> = mask.iter().map(|b| !b).collect();
            let e = apply_intrinsic(&d.char_function(&mask).unwrap(), &t, &d, &opts()).unwrap().operator;
            let e2 = apply_intrinsic(&d.char_function(&inv).unwrap(), &t, &d, &opts()).unwrap().operator;
            prop_assert!((&e * &e).dist(&e) < 1e-9);
            prop_assert!((&e + &e2).dist(&QMatrix::identity(3)) < 1e-9);
            prop_assert!((&e * &e2).dist(&QMatrix::zeros(3)) < 1e-9);
            prop_assert!((&e * &t).dist(&(&t * &e)) < 1e-9);
            // restricted spectra partition the spectrum
            let (m1, _) = restrict(&t, &e).unwrap();
            let (m2, _) = restrict(&t, &e2).unwrap();
            let mut parts = s_spectrum(&m1).unwrap().spheres;
            parts.extend(s_spectrum(&m2).unwrap().spheres);
            prop_assert!(hausdorff(&parts, &spec.spheres) < 1e-8);
            prop_assert_eq!(m1.dim() + m2.dim(), 3);
        }
    }
}
