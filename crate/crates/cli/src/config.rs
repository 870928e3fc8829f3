//! Job specification files (TOML) and their translation into library
//! objects.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sfcalc::contour::{Component, EncloseOptions, SliceCauchyDomain, Tube, TubeClosure};
use sfcalc::qlinalg::random_matrix;
use sfcalc::slicefn::{self, IntrinsicPolynomial, IntrinsicRational, SliceFunction};
use sfcalc::{DiagonalOperator, ImaginaryUnit, QMatrix, Quaternion, SSpectrum, Sphere};

pub type Quat = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spectrum,
    ApplyLeft,
    ApplyRight,
    ApplyIntrinsic,
    Project,
    Verify,
    ReproduceExample,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.to_possible_value().expect("no skipped variants");
        f.write_str(s.get_name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub task: Option<Task>,
    /// Base path of the report files (`.txt` and `.json` are appended).
    pub output: Option<String>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub operator: Option<OperatorSpec>,
    pub function: Option<FunctionSpec>,
    /// Second function of the `verify` task (defaults to `s^3`).
    pub second: Option<FunctionSpec>,
    #[serde(default)]
    pub contour: ContourSpec,
    pub project: Option<ProjectSpec>,
    pub expected: Option<ExpectedSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Dense matrix, one array of quaternions per row.
    Matrix { rows: Vec<Vec<Quat>> },
    /// Entries uniform in `[-1, 1]^4`, drawn from the job seed.
    Random { dim: usize },
    /// `diag(q_1, ..., q_n)` with a declared spectrum closure.
    Diagonal {
        symbols: Vec<Quat>,
        #[serde(default)]
        closure: ClosureSpec,
    },
    /// The 2x2 example `1/2 [[-I, 1], [-1, -I]]`.
    Example,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosureSpec {
    #[serde(default)]
    pub spheres: Vec<[f64; 2]>,
    /// Closed real intervals; `inf` and `-inf` are allowed.
    #[serde(default)]
    pub intervals: Vec<[f64; 2]>,
    #[serde(default)]
    pub infinity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant { value: Quat },
    Polynomial { coeffs: Vec<f64> },
    Rational { num: Vec<f64>, den: Vec<f64> },
    ShiftedInverse { a: f64 },
    Exp,
    /// One value per listed sphere's domain component; other components
    /// get `default`.
    LocallyConstant {
        parts: Vec<PartSpec>,
        #[serde(default)]
        default: Quat,
    },
    /// Characteristic function of the components holding `spheres`.
    Char { spheres: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub sphere: [f64; 2],
    pub value: Quat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    #[serde(default = "default_clearance")]
    pub clearance: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    pub tube_length: Option<f64>,
    #[serde(default)]
    pub closure: TubeClosure,
    #[serde(default = "default_unit")]
    pub unit: [f64; 3],
    /// Explicit domain; when absent one is built around the spectrum
    /// with the given clearance.
    pub domain: Option<Vec<RegionSpec>>,
}

/// One component of an explicit domain. Centres are `[s0, s1]` in the
/// upper half-plane; `s1 = 0` puts the component on the real axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegionSpec {
    Disk { center: [f64; 2], radius: f64 },
    Annulus { center: [f64; 2], inner: f64, outer: f64 },
    /// `{x1 < eps}`, closed by an arc of radius `length` or cut off there.
    Tube { eps: f64, length: f64 },
}

fn default_clearance() -> f64 {
    0.5
}

fn default_nodes() -> usize {
    sfcalc::contour::DEFAULT_NODES
}

fn default_unit() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

impl Default for ContourSpec {
    fn default() -> Self {
        ContourSpec {
            clearance: default_clearance(),
            nodes: default_nodes(),
            tube_length: None,
            closure: TubeClosure::Closed,
            unit: default_unit(),
            domain: None,
        }
    }
}

impl ContourSpec {
    pub fn unit(&self) -> Result<ImaginaryUnit> {
        let [a, b, c] = self.unit;
        ImaginaryUnit::new(a, b, c).with_context(|| format!("contour.unit {:?} is not a nonzero vector", self.unit))
    }

    pub fn enclose_options(&self) -> EncloseOptions {
        EncloseOptions { tube_length: self.tube_length, closure: self.closure }
    }

    /// The explicit domain, if one is given, after checking that it holds
    /// `spec`. Each component records the spectral spheres it contains.
    pub fn explicit_domain(&self, spec: &SSpectrum) -> Result<Option<SliceCauchyDomain>> {
        let Some(regions) = &self.domain else { return Ok(None) };
        let mut parts = Vec::new();
        let mut tube = None;
        for r in regions {
            let c = match *r {
                RegionSpec::Disk { center: [c0, c1], radius } if c1 == 0.0 => Component::disk(c0, radius),
                RegionSpec::Disk { center: [c0, c1], radius } => Component::sphere_disk(Sphere::new(c0, c1), radius)?,
                RegionSpec::Annulus { center: [c0, c1], inner, outer } if c1 == 0.0 => Component::annulus(c0, inner, outer)?,
                RegionSpec::Annulus { center: [c0, c1], inner, outer } => {
                    Component::sphere_annulus(Sphere::new(c0, c1), inner, outer)?
                }
                RegionSpec::Tube { eps, length } => {
                    let t = Tube { eps, length, closure: self.closure };
                    if tube.replace(t).is_some() {
                        bail!("contour.domain lists more than one tube");
                    }
                    Component::tube(t)?
                }
            };
            let inside = spec.spheres.iter().filter(|s| c.region.contains_sphere(**s)).copied().collect();
            parts.push(c.with_spheres(inside));
        }
        let d = match tube {
            Some(t) => SliceCauchyDomain::with_tube(parts, t)?,
            None => SliceCauchyDomain::new(parts)?,
        };
        d.encloses(spec)?;
        Ok(Some(d))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSpec {
    pub spheres: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedSpec {
    pub spheres: Option<Vec<[f64; 2]>>,
    pub matrix: Option<Vec<Vec<Quat>>>,
    pub values: Option<Vec<Quat>>,
}

pub fn load(path: &Path) -> Result<JobSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse(&text).with_context(|| format!("invalid job spec {}", path.display()))
}

pub fn parse(text: &str) -> Result<JobSpec> {
    Ok(toml::from_str(text)?)
}

pub fn matrix_from_rows(rows: &[Vec<Quat>]) -> Result<QMatrix> {
    let rows: Vec<Vec<Quaternion>> = rows.iter().map(|r| r.iter().map(|&q| Quaternion::from(q)).collect()).collect();
    let n = rows.len();
    QMatrix::from_rows(rows).with_context(|| format!("matrix rows must form a square {n}x{n} array"))
}

pub fn example_matrix() -> QMatrix {
    let h = 0.5;
    QMatrix::from_row_major(
        2,
        vec![Quaternion::new(0.0, -h, 0.0, 0.0), Quaternion::real(h), Quaternion::real(-h), Quaternion::new(0.0, -h, 0.0, 0.0)],
    )
    .expect("2x2")
}

pub enum Operator {
    Dense(QMatrix),
    Diagonal(DiagonalOperator),
}

impl OperatorSpec {
    pub fn build(&self, seed: u64) -> Result<Operator> {
        Ok(match self {
            OperatorSpec::Matrix { rows } => Operator::Dense(matrix_from_rows(rows)?),
            OperatorSpec::Random { dim } => {
                if *dim == 0 {
                    bail!("operator.dim must be positive");
                }
                Operator::Dense(random_matrix(&mut ChaCha8Rng::seed_from_u64(seed), *dim))
            }
            OperatorSpec::Example => Operator::Dense(example_matrix()),
            OperatorSpec::Diagonal { symbols, closure } => {
                let symbols: Vec<Quaternion> = symbols.iter().map(|&q| Quaternion::from(q)).collect();
                let closure = if closure == &ClosureSpec::default() {
                    SSpectrum::from_spheres(symbols.iter().map(|q| q.sphere()).collect())
                } else {
                    SSpectrum {
                        spheres: closure.spheres.iter().map(|&[a, b]| Sphere::new(a, b)).collect(),
                        intervals: closure.intervals.iter().map(|&[a, b]| (a, b)).collect(),
                        includes_infinity: closure.infinity,
                    }
                };
                Operator::Diagonal(DiagonalOperator::new(symbols, closure)?)
            }
        })
    }
}

/// Whether the function can be built before the domain is known.
fn needs_domain(f: &FunctionSpec) -> bool {
    matches!(f, FunctionSpec::LocallyConstant { .. } | FunctionSpec::Char { .. })
}

impl FunctionSpec {
    /// The exact rational form, for polynomial and rational descriptors.
    pub fn rational(&self) -> Option<IntrinsicRational> {
        match self {
            FunctionSpec::Polynomial { coeffs } => Some(IntrinsicRational::polynomial(IntrinsicPolynomial::new(coeffs.clone()))),
            FunctionSpec::Rational { num, den } => {
                IntrinsicRational::new(IntrinsicPolynomial::new(num.clone()), IntrinsicPolynomial::new(den.clone())).ok()
            }
            FunctionSpec::ShiftedInverse { a } => Some(IntrinsicRational::shifted_inverse(*a)),
            _ => None,
        }
    }

    /// Singular spheres the contour has to avoid.
    pub fn singularities(&self) -> Result<Vec<Sphere>> {
        match self {
            FunctionSpec::Rational { den, .. } => Ok(IntrinsicPolynomial::new(den.clone())
                .roots()?
                .iter()
                .map(|z| Sphere::new(z.re, z.im))
                .collect()),
            FunctionSpec::ShiftedInverse { a } => Ok(vec![Sphere::new(*a, 0.0)]),
            _ => Ok(Vec::new()),
        }
    }

    pub fn build(&self, domain: Option<&SliceCauchyDomain>) -> Result<SliceFunction> {
        if needs_domain(self) && domain.is_none() {
            bail!("function {self:?} needs a contour domain");
        }
        Ok(match self {
            FunctionSpec::Constant { value } => slicefn::constant(Quaternion::from(*value)),
            FunctionSpec::Polynomial { coeffs } => slicefn::polynomial(&IntrinsicPolynomial::new(coeffs.clone())),
            FunctionSpec::Rational { num, den } => {
                slicefn::rational(&IntrinsicPolynomial::new(num.clone()), &IntrinsicPolynomial::new(den.clone()))?
            }
            FunctionSpec::ShiftedInverse { a } => slicefn::shifted_inverse(*a),
            FunctionSpec::Exp => slicefn::exp(),
            FunctionSpec::LocallyConstant { parts, default } => {
                let d = domain.expect("checked");
                let margin = if d.gap().is_finite() { d.gap() / 3.0 } else { 1e-6 };
                let mut at_inf = None;
                let pieces = d
                    .components()
                    .iter()
                    .map(|c| {
                        let v = parts
                            .iter()
                            .find(|p| c.spheres.iter().any(|s| s.distance(Sphere::new(p.sphere[0], p.sphere[1])) <= 1e-8))
                            .map_or(*default, |p| p.value);
                        if !c.region.is_bounded() {
                            at_inf = Some(Quaternion::from(v));
                        }
                        (c.region.inflate(margin), Quaternion::from(v))
                    })
                    .collect();
                slicefn::locally_constant(pieces, at_inf)?
            }
            FunctionSpec::Char { spheres } => {
                let d = domain.expect("checked");
                let sel: Vec<Sphere> = spheres.iter().map(|&[a, b]| Sphere::new(a, b)).collect();
                d.char_function(&d.select(&sel, 1e-8)?)?
            }
        })
    }
}
