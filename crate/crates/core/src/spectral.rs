//! Spectral data of the 1-D Dirac operator: discrete poles with norming
//! constants plus an optional sampled reflection coefficient. Validation,
//! the mKdV flow action, and the text file format live here.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance for reality checks on exactly specified data.
pub const EPS_REAL_EXACT: f64 = 1e-12;
/// Tolerance for reality checks on data produced by numerical scattering.
pub const EPS_REAL_NUMERIC: f64 = 1e-8;
/// Poles closer than this are treated as a repeated pole and rejected.
pub const POLE_DISTINCT_TOL: f64 = 1e-10;

/// One sample of the reflection coefficient at real wavenumber k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionSample {
    pub k: f64,
    pub value: Complex64,
}

/// Complete inverse-scattering input: poles kappa_j in the upper half-plane,
/// one norming constant lambda_j per pole, and an optional reflection table.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub poles: Vec<Complex64>,
    pub normings: Vec<Complex64>,
    pub reflection: Option<Vec<ReflectionSample>>,
}

/// A pole of the form kappa = i(2n+1)/2; the only poles that contribute to
/// the kernel of the cylinder Dirac operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfIntegerLevel {
    pub n: u32,
}

impl HalfIntegerLevel {
    pub fn pole(self) -> Complex64 {
        Complex64::new(0.0, (2.0 * self.n as f64 + 1.0) / 2.0)
    }

    /// Classify a pole as a half-odd-integer level, within tolerance.
    pub fn classify(kappa: Complex64, tol: f64) -> Option<Self> {
        if kappa.re.abs() > tol {
            return None;
        }
        let v = 2.0 * kappa.im; // should be an odd positive integer
        let rounded = v.round();
        if (v - rounded).abs() > 2.0 * tol {
            return None;
        }
        let m = rounded as i64;
        if m > 0 && m % 2 == 1 {
            Some(Self { n: ((m - 1) / 2) as u32 })
        } else {
            None
        }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub what: String,
    pub index: Option<usize>,
    pub residual: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index {
            Some(i) => write!(f, "{} (index {}, residual {:.3e})", self.what, i, self.residual),
            None => write!(f, "{} (residual {:.3e})", self.what, self.residual),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl SpectralData {
    pub fn reflectionless(poles: Vec<Complex64>, normings: Vec<Complex64>) -> Self {
        Self { poles, normings, reflection: None }
    }

    pub fn empty() -> Self {
        Self::reflectionless(vec![], vec![])
    }

    pub fn n_poles(&self) -> usize {
        self.poles.len()
    }

    pub fn is_reflectionless(&self) -> bool {
        self.reflection.is_none()
    }

    /// Number of half-odd-integer levels among the poles; the quaternionic
    /// dimension of the Dirac kernel on the cylinder.
    pub fn kernel_dimension(&self) -> usize {
        self.poles
            .iter()
            .filter(|&&k| HalfIntegerLevel::classify(k, 1e-9).is_some())
            .count()
    }

    /// Check all structural and reality invariants.
    pub fn validate(&self, eps_real: f64) -> Result<ValidationReport> {
        if self.poles.len() != self.normings.len() {
            return Err(Error::Structural(format!(
                "{} poles but {} norming constants",
                self.poles.len(),
                self.normings.len()
            )));
        }
        let mut report = ValidationReport::default();
        for (j, kappa) in self.poles.iter().enumerate() {
            if kappa.im <= 0.0 {
                report.violations.push(Violation {
                    what: "Im kappa must be positive".into(),
                    index: Some(j),
                    residual: -kappa.im,
                });
            }
            if self.normings[j].norm() == 0.0 {
                report.violations.push(Violation {
                    what: "lambda must be nonzero".into(),
                    index: Some(j),
                    residual: 0.0,
                });
            }
        }
        for j in 0..self.poles.len() {
            for l in j + 1..self.poles.len() {
                let sep = (self.poles[j] - self.poles[l]).norm();
                if sep <= POLE_DISTINCT_TOL {
                    report.violations.push(Violation {
                        what: "poles must be distinct (simple poles only)".into(),
                        index: Some(l),
                        residual: sep,
                    });
                }
            }
        }
        self.check_r1(eps_real, &mut report);
        self.check_r2(eps_real, &mut report);
        Ok(report)
    }

    /// R1: pole set symmetric under kappa -> -conj(kappa) with conjugate
    /// norming constants, real lambda on the imaginary axis.
    fn check_r1(&self, eps: f64, report: &mut ValidationReport) {
        for (j, &kappa) in self.poles.iter().enumerate() {
            if kappa.re.abs() <= eps {
                if self.normings[j].im.abs() > eps {
                    report.violations.push(Violation {
                        what: "Re kappa = 0 requires lambda real".into(),
                        index: Some(j),
                        residual: self.normings[j].im.abs(),
                    });
                }
                continue;
            }
            let mirror = -kappa.conj();
            match self
                .poles
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - mirror).norm().total_cmp(&(b.1 - mirror).norm()))
            {
                Some((l, &pl)) if (pl - mirror).norm() <= eps.max(POLE_DISTINCT_TOL) => {
                    let res = (self.normings[j] - self.normings[l].conj()).norm();
                    if res > eps {
                        report.violations.push(Violation {
                            what: "symmetric pair must carry conjugate lambdas".into(),
                            index: Some(j),
                            residual: res,
                        });
                    }
                }
                _ => report.violations.push(Violation {
                    what: "pole set must be symmetric about the imaginary axis".into(),
                    index: Some(j),
                    residual: kappa.re.abs(),
                }),
            }
        }
    }

    /// R2: R(k) = conj(R(-k)) on the sampled grid.
    fn check_r2(&self, eps: f64, report: &mut ValidationReport) {
        let Some(table) = &self.reflection else { return };
        for (i, s) in table.iter().enumerate() {
            if s.k == 0.0 {
                report.violations.push(Violation {
                    what: "reflection sampled at k = 0".into(),
                    index: Some(i),
                    residual: 0.0,
                });
                continue;
            }
            // find the sample closest to -k
            let Some(mirror) = table
                .iter()
                .min_by(|a, b| (a.k + s.k).abs().total_cmp(&(b.k + s.k).abs()))
            else {
                continue;
            };
            if (mirror.k + s.k).abs() > 1e-9 * (1.0 + s.k.abs()) {
                report.violations.push(Violation {
                    what: "reflection grid not symmetric about k = 0".into(),
                    index: Some(i),
                    residual: (mirror.k + s.k).abs(),
                });
                continue;
            }
            let res = (s.value - mirror.value.conj()).norm();
            if res > eps {
                report.violations.push(Violation {
                    what: "R(k) must equal conj(R(-k))".into(),
                    index: Some(i),
                    residual: res,
                });
            }
        }
    }

    /// Apply the m-th mKdV flow for time t: poles fixed, lambda and R picked
    /// up phase factors exp(i 2^(2m-1) kappa t) and exp(i 2^(2m-1) k t).
    pub fn mkdv_deform(&self, m: u32, t: f64) -> Result<SpectralData> {
        if m < 1 {
            return Err(Error::Parameter("mKdV flow index m must be >= 1".into()));
        }
        let rate = 2f64.powi(2 * m as i32 - 1);
        let normings = self
            .poles
            .iter()
            .zip(&self.normings)
            .map(|(&kappa, &lam)| lam * (Complex64::i() * rate * kappa * t).exp())
            .collect();
        let reflection = self.reflection.as_ref().map(|table| {
            table
                .iter()
                .map(|s| ReflectionSample {
                    k: s.k,
                    value: s.value * (Complex64::i() * rate * s.k * t).exp(),
                })
                .collect()
        });
        Ok(SpectralData { poles: self.poles.clone(), normings, reflection })
    }

    /// Serialize to the line-oriented `solitonspec v1` format. A reflection
    /// table, when present, is written next to `path` with extension `.refl`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::from("solitonspec v1\n");
        for (kappa, lam) in self.poles.iter().zip(&self.normings) {
            writeln!(
                text,
                "pole {:.17e} {:.17e} lambda {:.17e} {:.17e}",
                kappa.re, kappa.im, lam.re, lam.im
            )
            .expect("write to string");
        }
        match &self.reflection {
            None => text.push_str("reflection none\n"),
            Some(table) => {
                let refl_path = path.with_extension("refl");
                let mut rt = String::new();
                for s in table {
                    writeln!(rt, "{:.17e} {:.17e} {:.17e}", s.k, s.value.re, s.value.im)
                        .expect("write to string");
                }
                std::fs::write(&refl_path, rt)?;
                let name = refl_path
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default();
                writeln!(text, "reflection table {name}").expect("write to string");
            }
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Parse the `solitonspec v1` format; relative reflection table paths
    /// resolve against the spec file's directory.
    pub fn load(path: &Path) -> Result<SpectralData> {
        let text = std::fs::read_to_string(path)?;
        let mut poles = Vec::new();
        let mut normings = Vec::new();
        let mut reflection = None;
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "solitonspec v1" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected header `solitonspec v1`, found `{line}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["pole", re, im, "lambda", lre, lim] => {
                    let kappa = Complex64::new(parse_f64(re, line_no)?, parse_f64(im, line_no)?);
                    if kappa.im <= 0.0 {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "Im kappa must be positive".into(),
                        });
                    }
                    poles.push(kappa);
                    normings.push(Complex64::new(parse_f64(lre, line_no)?, parse_f64(lim, line_no)?));
                }
                ["reflection", "none"] => reflection = None,
                ["reflection", "table", name] => {
                    let table_path = path.parent().map(|d| d.join(name)).unwrap_or_else(|| name.into());
                    reflection = Some(load_reflection_table(&table_path)?);
                }
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unrecognized line `{line}`"),
                    })
                }
            }
        }
        if !saw_header {
            return Err(Error::Parse { line: 1, message: "missing `solitonspec v1` header".into() });
        }
        Ok(SpectralData { poles, normings, reflection })
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse { line, message: format!("not a number: `{s}`") })
}

/// Reflection table: whitespace- or comma-separated columns k, Re R, Im R,
/// sorted ascending in k.
pub fn load_reflection_table(path: &Path) -> Result<Vec<ReflectionSample>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 columns (k, Re R, Im R), found {}", fields.len()),
            });
        }
        out.push(ReflectionSample {
            k: parse_f64(fields[0], line_no)?,
            value: Complex64::new(parse_f64(fields[1], line_no)?, parse_f64(fields[2], line_no)?),
        });
    }
    if out.windows(2).any(|w| w[0].k >= w[1].k) {
        return Err(Error::Structural("reflection table must be sorted ascending in k".into()));
    }
    Ok(out)
}
