//! Reports: one serialisable structure rendered both as text and JSON.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sfcalc::calculus::{Check, Diagnostics};
use sfcalc::{QMatrix, Quaternion, Sphere};

use crate::config::{JobSpec, Quat};

#[derive(Clone, Debug, Serialize)]
pub struct NamedMatrix {
    pub name: String,
    pub dim: usize,
    pub rows: Vec<Vec<Quat>>,
}

impl NamedMatrix {
    pub fn new(name: &str, m: &QMatrix) -> Self {
        let n = m.dim();
        NamedMatrix {
            name: name.into(),
            dim: n,
            rows: (0..n).map(|i| (0..n).map(|j| m[(i, j)].to_array()).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NamedSpheres {
    pub name: String,
    pub spheres: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NamedDiagnostics {
    pub name: String,
    #[serde(flatten)]
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub task: String,
    pub seed: u64,
    pub tolerance: f64,
    pub inputs: JobSpec,
    pub contour: Option<String>,
    pub spheres: Vec<NamedSpheres>,
    pub matrices: Vec<NamedMatrix>,
    pub values: Option<Vec<Quat>>,
    pub diagnostics: Vec<NamedDiagnostics>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(task: &str, seed: u64, tolerance: f64, inputs: JobSpec) -> Self {
        Report {
            task: task.into(),
            seed,
            tolerance,
            inputs,
            contour: None,
            spheres: Vec::new(),
            matrices: Vec::new(),
            values: None,
            diagnostics: Vec::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn add_spheres(&mut self, name: &str, spheres: &[Sphere]) {
        self.spheres.push(NamedSpheres { name: name.into(), spheres: spheres.iter().map(|s| [s.s0, s.s1]).collect() });
    }

    pub fn add_matrix(&mut self, name: &str, m: &QMatrix) {
        self.matrices.push(NamedMatrix::new(name, m));
    }

    pub fn add_values(&mut self, v: &[Quaternion]) {
        self.values = Some(v.iter().map(|q| q.to_array()).collect());
    }

    pub fn add_diagnostics(&mut self, name: &str, d: &Diagnostics) {
        self.diagnostics.push(NamedDiagnostics { name: name.into(), diagnostics: d.clone() });
    }

    pub fn add_check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task: {}", self.task);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "tolerance: {:e}", self.tolerance);
        if let Ok(inputs) = toml::to_string(&self.inputs) {
            if !inputs.trim().is_empty() {
                let _ = writeln!(s, "inputs:");
                for line in inputs.lines().filter(|l| !l.is_empty()) {
                    let _ = writeln!(s, "    {line}");
                }
            }
        }
        if let Some(c) = &self.contour {
            let _ = writeln!(s, "contour: {c}");
        }
        for sp in &self.spheres {
            let list: Vec<String> = sp.spheres.iter().map(|&[a, b]| format!("({}, {})", round12(a), round12(b))).collect();
            let _ = writeln!(s, "{}: {{{}}}", sp.name, list.join(", "));
        }
        for m in &self.matrices {
            let _ = writeln!(s, "{} ({}x{}):", m.name, m.dim, m.dim);
            for row in &m.rows {
                let cells: Vec<String> = row.iter().map(|q| fmt_quat(*q)).collect();
                let _ = writeln!(s, "    {}", cells.join("  "));
            }
        }
        if let Some(v) = &self.values {
            let _ = writeln!(s, "values:");
            for (k, q) in v.iter().enumerate() {
                let _ = writeln!(s, "    {k:>4}  {}", fmt_quat(*q));
            }
        }
        for NamedDiagnostics { name, diagnostics: d } in &self.diagnostics {
            let _ = write!(
                s,
                "diagnostics {name}: nodes/curve {}, upper nodes {}, estimated error {:.3e}",
                d.nodes_per_curve, d.upper_nodes, d.estimated_error
            );
            if let Some(t) = d.truncation_error {
                let _ = write!(s, ", truncation bound {t:.3e}");
            }
            let _ = writeln!(s, ", unit {}", d.unit.as_quaternion());
        }
        for c in &self.checks {
            let _ = writeln!(s, "{c}");
        }
        let _ = writeln!(s, "result: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }

    /// Writes `<base>.txt` and `<base>.json`.
    pub fn write(&self, base: &Path) -> Result<()> {
        let txt = base.with_extension("txt");
        let json = base.with_extension("json");
        if let Some(dir) = base.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        std::fs::write(&txt, self.to_text()).with_context(|| format!("cannot write {}", txt.display()))?;
        std::fs::write(&json, self.to_json()?).with_context(|| format!("cannot write {}", json.display()))?;
        Ok(())
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12 + 0.0
}

fn fmt_quat(q: Quat) -> String {
    // round-off below 1e-14 is shown as zero to keep reports readable
    let c: Vec<String> = q.iter().map(|&x| format!("{:+.12}", if x.abs() < 1e-14 { 0.0 } else { x })).collect();
    format!("[{}]", c.join(", "))
}
