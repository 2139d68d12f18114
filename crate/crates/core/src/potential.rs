//! Real potential sampled on a uniform grid, with the exponential-decay
//! truncation check and the plain-text table format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{self, UniformGrid};

pub const DEFAULT_HALF_WIDTH: f64 = 20.0;
pub const DECAY_TOL: f64 = 1e-8;

/// Real potential U on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPotential {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

impl GridPotential {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Self {
        assert_eq!(grid.n, values.len());
        Self { grid, values }
    }

    /// Default truncation x in [-20, 20] with dx = 1/256.
    pub fn default_grid() -> UniformGrid {
        UniformGrid::new(-DEFAULT_HALF_WIDTH, 1.0 / 256.0, (2.0 * DEFAULT_HALF_WIDTH * 256.0) as usize + 1)
    }

    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn zero(grid: UniformGrid) -> Self {
        let values = vec![0.0; grid.n];
        Self { grid, values }
    }

    /// Check the truncation is far enough out that |U| at both ends is
    /// below `decay_tol`.
    pub fn check_decay(&self, decay_tol: f64) -> Result<()> {
        let left = self.values[0].abs();
        let right = self.values[self.values.len() - 1].abs();
        if left >= decay_tol || right >= decay_tol {
            return Err(Error::Parameter(format!(
                "potential not decayed at truncation: |U(x0)| = {left:.3e}, |U(xmax)| = {right:.3e}"
            )));
        }
        Ok(())
    }

    /// Quintic interpolation off the grid; values outside are clamped to 0.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.grid.x0 || x >= self.grid.xmax() {
            return 0.0;
        }
        numeric::quintic_interp(&self.grid, &self.values, x)
    }

    /// Trapezoid integral of U^2 over the grid.
    pub fn l2_squared(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|u| u * u).collect();
        numeric::trapezoid(&sq, self.grid.dx)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Write a two-column table `x U`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for (x, u) in self.grid.nodes().zip(&self.values) {
            writeln!(text, "{x:.17e} {u:.17e}").expect("write to string");
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Read a two-column table; the grid must be uniform.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 2 columns (x, U), found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("not a number: `{s}`"),
                })
            };
            xs.push(parse(fields[0])?);
            us.push(parse(fields[1])?);
        }
        if xs.len() < 2 {
            return Err(Error::Structural("potential table needs at least 2 rows".into()));
        }
        let dx = xs[1] - xs[0];
        if dx <= 0.0 {
            return Err(Error::Structural("potential table must be ascending in x".into()));
        }
        for (i, w) in xs.windows(2).enumerate() {
            if ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.max(1.0) {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "non-uniform grid spacing".into(),
                });
            }
        }
        Ok(Self::new(UniformGrid::new(xs[0], dx, xs.len()), us))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sech_potential_passes_decay_check() {
        let grid = UniformGrid::symmetric(20.0, 2049);
        let u = GridPotential::from_fn(grid, |x| 1.0 / (2.0 * x.cosh()));
        u.check_decay(DECAY_TOL).unwrap();
        assert_abs_diff_eq!(u.l2_squared(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn wide_gaussian_fails_decay_check_on_narrow_grid() {
        let grid = UniformGrid::symmetric(3.0, 100);
        let u = GridPotential::from_fn(grid, |x| (-x * x / 20.0).exp());
        assert!(u.check_decay(DECAY_TOL).is_err());
    }

    #[test]
    fn table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.dat");
        let grid = UniformGrid::symmetric(5.0, 33);
        let u = GridPotential::from_fn(grid, |x| (-x * x).exp());
        u.save(&path).unwrap();
        let u2 = GridPotential::load(&path).unwrap();
        assert_eq!(u.values, u2.values);
        assert_abs_diff_eq!(u.grid.dx, u2.grid.dx, epsilon = 1e-15);
    }
}
