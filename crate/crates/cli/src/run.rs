//! Task execution.

use anyhow::{bail, Context, Result};
use sfcalc::calculus::{
    apply_intrinsic, apply_intrinsic_diagonal, apply_left, apply_right, restrict, spectral_projection, verify_identities,
    CalcOptions, CalcResult, Check, VerifyConfig,
};
use sfcalc::contour::{enclose_with, SliceCauchyDomain};
use sfcalc::qlinalg::s_spectrum;
use sfcalc::quat::hausdorff;
use sfcalc::slicefn::{constant, product, IntrinsicPolynomial, IntrinsicRational, Region};
use sfcalc::{ImaginaryUnit, QMatrix, Quaternion, SSpectrum, Sphere};

use crate::config::{example_matrix, matrix_from_rows, FunctionSpec, JobSpec, Operator, OperatorSpec, Task};
use crate::report::Report;

/// Command-line values that take precedence over the job file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub output: Option<String>,
    pub nodes: Option<usize>,
    pub clearance: Option<f64>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub unit: Option<[f64; 3]>,
}

impl Overrides {
    pub fn apply(&self, mut job: JobSpec) -> JobSpec {
        job.task = self.task.or(job.task);
        job.output = self.output.clone().or(job.output);
        job.seed = self.seed.or(job.seed);
        job.tolerance = self.tolerance.or(job.tolerance);
        if let Some(n) = self.nodes {
            job.contour.nodes = n;
        }
        if let Some(c) = self.clearance {
            job.contour.clearance = c;
        }
        if let Some(u) = self.unit {
            job.contour.unit = u;
        }
        job
    }
}

const EXAMPLE_TOLERANCE: f64 = 1e-10;
const DEFAULT_TOLERANCE: f64 = 1e-9;

pub fn run(job: &JobSpec) -> Result<Report> {
    let task = job.task.context("no task given (set `task` in the job file or pass it on the command line)")?;
    let seed = job.seed.unwrap_or(0);
    let tol = job.tolerance.unwrap_or(match task {
        Task::ReproduceExample => EXAMPLE_TOLERANCE,
        _ => DEFAULT_TOLERANCE,
    });
    if !(tol > 0.0) {
        bail!("tolerance must be positive, got {tol}");
    }
    let mut report = Report::new(&task.to_string(), seed, tol, job.clone());
    let ctx = Ctx { job, seed, tol };
    match task {
        Task::Spectrum => ctx.spectrum(&mut report)?,
        Task::ApplyLeft | Task::ApplyRight | Task::ApplyIntrinsic => ctx.apply(task, &mut report)?,
        Task::Project => ctx.project(&mut report)?,
        Task::Verify => ctx.verify(&mut report)?,
        Task::ReproduceExample => ctx.example(&mut report)?,
    }
    Ok(report)
}

struct Ctx<'a> {
    job: &'a JobSpec,
    seed: u64,
    tol: f64,
}

impl Ctx<'_> {
    fn operator(&self) -> Result<Operator> {
        self.job.operator.as_ref().context("the job has no [operator] table")?.build(self.seed)
    }

    fn dense(&self) -> Result<QMatrix> {
        match self.operator()? {
            Operator::Dense(t) => Ok(t),
            Operator::Diagonal(_) => bail!("this task needs a dense operator"),
        }
    }

    fn opts(&self) -> Result<CalcOptions> {
        Ok(CalcOptions::default().with_nodes(self.job.contour.nodes).with_unit(self.job.contour.unit()?))
    }

    fn function(&self) -> Result<&FunctionSpec> {
        self.job.function.as_ref().context("the job has no [function] table")
    }

    /// A domain around `spec` that keeps clear of the function's poles.
    fn domain(&self, spec: &SSpectrum, f: Option<&FunctionSpec>) -> Result<SliceCauchyDomain> {
        let sing = match f {
            Some(f) => f.singularities()?,
            None => Vec::new(),
        };
        let c = &self.job.contour;
        if let Some(d) = c.explicit_domain(spec)? {
            if let Some(s) = sing.iter().find(|s| d.contains_sphere(**s)) {
                bail!("the function is singular at {s}, inside contour.domain");
            }
            return Ok(d);
        }
        let avoid = (!sing.is_empty()).then(|| Region::union(sing.iter().map(|s| Region::point(*s)).collect()));
        Ok(enclose_with(spec, c.clearance, avoid.as_ref(), c.enclose_options())?)
    }

    fn expect_spheres(&self, report: &mut Report, got: &[Sphere]) {
        if let Some(want) = self.job.expected.as_ref().and_then(|e| e.spheres.as_ref()) {
            let want: Vec<Sphere> = want.iter().map(|&[a, b]| Sphere::new(a, b)).collect();
            let r = if want.len() == got.len() { hausdorff(&want, got) } else { f64::INFINITY };
            report.add_check(Check::measured("expected_spheres", r, self.tol));
        }
    }

    fn expect_matrix(&self, report: &mut Report, got: &QMatrix) -> Result<()> {
        if let Some(rows) = self.job.expected.as_ref().and_then(|e| e.matrix.as_ref()) {
            let want = matrix_from_rows(rows).context("expected.matrix")?;
            let r = if want.dim() == got.dim() { want.dist(got) } else { f64::INFINITY };
            report.add_check(Check::measured("expected_matrix", r, self.tol));
        }
        Ok(())
    }

    fn spectrum(&self, report: &mut Report) -> Result<()> {
        match self.operator()? {
            Operator::Dense(t) => {
                let spec = s_spectrum(&t)?;
                report.add_spheres("spectrum", &spec.spheres);
                self.expect_spheres(report, &spec.spheres);
            }
            Operator::Diagonal(d) => {
                let symbols: Vec<Sphere> = d.symbols().iter().map(|q| q.sphere()).collect();
                report.add_spheres("point spectrum", &symbols);
                report.add_spheres("declared closure spheres", &d.closure().spheres);
                report.contour = Some(format!("declared closure {}", d.closure()));
                self.expect_spheres(report, &symbols);
            }
        }
        Ok(())
    }

    fn record(&self, report: &mut Report, name: &str, r: &CalcResult) {
        report.add_matrix(name, &r.operator);
        report.add_diagnostics(name, &r.diagnostics);
        report.add_check(Check::measured("quadrature_error", r.diagnostics.error_bound(), self.tol));
    }

    fn apply(&self, task: Task, report: &mut Report) -> Result<()> {
        let fspec = self.function()?;
        let opts = self.opts()?;
        match self.operator()? {
            Operator::Dense(t) => {
                let spec = s_spectrum(&t)?;
                let d = self.domain(&spec, Some(fspec))?;
                report.add_spheres("spectrum", &spec.spheres);
                report.contour = Some(d.describe());
                let f = fspec.build(Some(&d))?;
                let r = match task {
                    Task::ApplyLeft => apply_left(&f, &t, &d, &opts)?,
                    Task::ApplyRight => apply_right(&f, &t, &d, &opts)?,
                    _ => apply_intrinsic(&f, &t, &d, &opts)?,
                };
                self.record(report, "f(T)", &r);
                self.expect_matrix(report, &r.operator)?;
            }
            Operator::Diagonal(op) => {
                if task != Task::ApplyIntrinsic {
                    bail!("diagonal operators only support apply-intrinsic");
                }
                let d = self.domain(op.closure(), Some(fspec))?;
                report.contour = Some(d.describe());
                let f = fspec.build(Some(&d))?;
                let r = apply_intrinsic_diagonal(&f, &op, &d, &opts)?;
                report.add_values(&r.values);
                report.add_diagnostics("f(T)", &r.diagnostics);
                report.add_check(Check::measured("quadrature_error", r.diagnostics.error_bound(), self.tol));
                if let Some(want) = self.job.expected.as_ref().and_then(|e| e.values.as_ref()) {
                    let res = if want.len() == r.values.len() {
                        want.iter().zip(&r.values).map(|(w, v)| (Quaternion::from(*w) - *v).norm()).fold(0.0, f64::max)
                    } else {
                        f64::INFINITY
                    };
                    report.add_check(Check::measured("expected_values", res, self.tol));
                }
            }
        }
        Ok(())
    }

    fn project(&self, report: &mut Report) -> Result<()> {
        let t = self.dense()?;
        let sel: Vec<Sphere> = self
            .job
            .project
            .as_ref()
            .context("the project task needs a [project] table listing spheres")?
            .spheres
            .iter()
            .map(|&[a, b]| Sphere::new(a, b))
            .collect();
        let spec = s_spectrum(&t)?;
        report.add_spheres("spectrum", &spec.spheres);
        report.add_spheres("selected", &sel);
        let opts = self.opts()?;
        let r = match self.job.contour.explicit_domain(&spec)? {
            Some(d) => {
                report.contour = Some(d.describe());
                apply_intrinsic(&d.char_function(&d.select(&sel, 1e-8)?)?, &t, &d, &opts)?
            }
            None => spectral_projection(&t, &sel, self.job.contour.clearance, &opts)?,
        };
        let e = &r.operator;
        self.record(report, "E", &r);
        report.add_check(Check::measured("idempotent", (e * e).dist(e), self.tol));
        report.add_check(Check::measured("commutes", (&t * e).dist(&(e * &t)), self.tol));
        let (ts, _) = restrict(&t, e)?;
        report.add_matrix("T restricted to ran E", &ts);
        // eigenvalues of a defective block are only good to sqrt(eps)
        let sub = if ts.dim() == 0 { Vec::new() } else { s_spectrum(&ts)?.spheres };
        report.add_spheres("spectrum of restriction", &sub);
        let r = if sub.is_empty() { f64::INFINITY } else { hausdorff(&sub, &sel) };
        report.add_check(Check::measured("restricted_spectrum", r, self.tol.max(1e-7)));
        self.expect_matrix(report, e)
    }

    fn verify(&self, report: &mut Report) -> Result<()> {
        let t = match &self.job.operator {
            Some(_) => self.dense()?,
            None => OperatorSpec::Random { dim: 3 }.build(self.seed).map(|op| match op {
                Operator::Dense(t) => t,
                Operator::Diagonal(_) => unreachable!(),
            })?,
        };
        let f = match &self.job.function {
            Some(spec) => spec.rational().context("verify needs a polynomial or rational function")?,
            None => IntrinsicRational::polynomial(IntrinsicPolynomial::monomial(2)),
        };
        let g = match &self.job.second {
            Some(spec) => spec.build(None)?,
            None => sfcalc::slicefn::polynomial(&IntrinsicPolynomial::monomial(3)),
        };
        let unit = self.job.contour.unit()?;
        let c = self.job.contour.clearance;
        let cfg = VerifyConfig {
            clearance: c,
            alt_clearance: 0.6 * c,
            nodes: self.job.contour.nodes,
            units: [unit, alt_unit(unit)],
            ..VerifyConfig::default()
        };
        report.add_matrix("T", &t);
        report.add_spheres("spectrum", &s_spectrum(&t)?.spheres);
        for check in verify_identities(&t, &f, &g, &cfg).checks {
            report.add_check(check);
        }
        Ok(())
    }

    fn example(&self, report: &mut Report) -> Result<()> {
        let t = example_matrix();
        let spec = s_spectrum(&t)?;
        report.add_spheres("spectrum", &spec.spheres);
        let want = [Sphere::new(0.0, 0.0), Sphere::new(0.0, 1.0)];
        let r = if spec.spheres.len() == 2 { hausdorff(&spec.spheres, &want) } else { f64::INFINITY };
        report.add_check(Check::measured("spectrum", r, self.tol));

        let d = self.domain(&spec, None)?;
        report.contour = Some(d.describe());
        let opts = self.opts()?;
        let zero = d.select(&[want[0]], 1e-8)?;
        let e0 = apply_intrinsic(&d.char_function(&zero)?, &t, &d, &opts)?;
        let es = apply_intrinsic(&d.char_function(&zero.iter().map(|b| !b).collect::<Vec<_>>())?, &t, &d, &opts)?;
        let h = 0.5;
        let (i, j, k) = (Quaternion::new(0.0, h, 0.0, 0.0), Quaternion::new(0.0, 0.0, h, 0.0), Quaternion::new(0.0, 0.0, 0.0, h));
        let m2 = |a: [Quaternion; 4]| QMatrix::from_row_major(2, a.to_vec()).expect("2x2");
        let half = Quaternion::real(h);
        self.record(report, "E0", &e0);
        report.add_check(Check::measured("E0", e0.operator.dist(&m2([half, -i, i, half])), self.tol));
        self.record(report, "E_S", &es);
        report.add_check(Check::measured("E_S", es.operator.dist(&m2([half, i, -i, half])), self.tol));

        // J on the component of 0, zero on the other one
        let jchi = product(&d.char_function(&zero)?, &constant(Quaternion::J))?;
        let l = apply_left(&jchi, &t, &d, &opts)?;
        let r = apply_right(&jchi, &t, &d, &opts)?;
        self.record(report, "left f(T), f = J on U0", &l);
        report.add_check(Check::measured("left_example", l.operator.dist(&m2([j, -k, k, j])), self.tol));
        self.record(report, "right f(T), f = J on U0", &r);
        report.add_check(Check::measured("right_example", r.operator.dist(&m2([j, k, -k, j])), self.tol));
        let diff = &l.operator - &r.operator;
        let smallest = diff.entries().iter().map(|e| e.norm()).filter(|&n| n > 1e-6).fold(f64::INFINITY, f64::min);
        report.add_check(Check::measured("left_right_gap", (smallest - 1.0).abs(), self.tol));
        Ok(())
    }
}

/// A second unit for the unit-independence check, away from `u` and `-u`.
fn alt_unit(u: ImaginaryUnit) -> ImaginaryUnit {
    let q = u.as_quaternion();
    let o = u.orthogonal().as_quaternion();
    ImaginaryUnit::new(q.x + o.x, q.y + o.y, q.z + o.z).unwrap_or_else(|| u.orthogonal())
}
