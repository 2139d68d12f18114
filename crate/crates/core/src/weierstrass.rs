//! Spinor fields on the cylinder and their Weierstrass immersions.
//!
//! A field psi = (psi1, psi2) in the kernel of the cylinder Dirac operator
//! is a combination of level fields psi_j = phi+_1(x, kappa_j) e^{kappa_j y}
//! (kappa_j = i(2n+1)/2) and their star transforms. The immersion comes
//! from path integrals of the three coordinate 1-forms; with z = x + iy
//! the real derivative fields are
//!
//!   dX/dx = (  Im(psi2^2 - psi1^2),  Re(psi2^2 - psi1^2),  2 Re(psi1 conj(psi2)) ),
//!   dX/dy = ( -Re(psi1^2 + psi2^2),  Im(psi1^2 + psi2^2), -2 Im(psi1 conj(psi2)) ).
//!
//! The induced metric is D^2 (dx^2 + dy^2) with D = |psi1|^2 + |psi2|^2,
//! the mean curvature is H = 2U/D, and K = -(1/D^2) Lap log D.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RLu, RMatrix};
use crate::numeric::{self, UniformGrid};
use crate::potential::GridPotential;
use crate::reflectionless;
use crate::spectral::{HalfIntegerLevel, SpectralData, EPS_REAL_NUMERIC};

/// Default cylinder discretization: x in [-20, 20], y in [0, 2pi).
pub const DEFAULT_NX: usize = 2049;
pub const DEFAULT_NY: usize = 256;
/// Ceiling on the sampled Dirac-equation residual of a built field.
pub const ODE_RES_TOL: f64 = 1e-6;
/// Branch-point threshold relative to the global maximum of D.
pub const D_FLOOR_FACTOR: f64 = 1e-8;
/// A regular infinity has |psi|^2 ~ e^{-|x|}; decay faster than this rate
/// flags a branch point at that infinity.
pub const BRANCH_RATE_THRESHOLD: f64 = 1.5;

pub fn default_x_grid() -> UniformGrid {
    UniformGrid::symmetric(20.0, DEFAULT_NX)
}

/// Spinor field sampled on the cylinder grid, together with the level
/// combination it was built from (level, coefficient of psi_j, coefficient
/// of psi*_j) and the generating potential samples per x-node.
#[derive(Debug, Clone)]
pub struct SpinorField {
    pub x_grid: UniformGrid,
    pub n_y: usize,
    pub psi1: Vec<Complex64>,
    pub psi2: Vec<Complex64>,
    pub levels: Vec<(HalfIntegerLevel, Complex64, Complex64)>,
    pub u: Vec<f64>,
}

impl SpinorField {
    pub fn dy(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_y as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_y + j
    }

    /// Metric density D = |psi1|^2 + |psi2|^2 at a node.
    pub fn density(&self, i: usize, j: usize) -> f64 {
        let n = self.idx(i, j);
        self.psi1[n].norm_sqr() + self.psi2[n].norm_sqr()
    }

    /// Mean of D over each y-circle.
    pub fn density_profile(&self) -> Vec<f64> {
        (0..self.x_grid.n)
            .map(|i| (0..self.n_y).map(|j| self.density(i, j)).sum::<f64>() / self.n_y as f64)
            .collect()
    }
}

/// psi = sum_j a_j psi_j + a_{L+j} psi*_j over the half-odd-integer levels
/// of `data` (sorted by level), with the level eigenfunctions taken from
/// the closed-form Jost solutions of the reflectionless data.
pub fn build_spinor(
    data: &SpectralData,
    x_grid: &UniformGrid,
    n_y: usize,
    coeffs: &[Complex64],
) -> Result<SpinorField> {
    let report = data.validate(EPS_REAL_NUMERIC)?;
    if !report.is_valid() {
        return Err(Error::InvalidData(
            report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    let mut levels: Vec<(HalfIntegerLevel, Complex64)> = data
        .poles
        .iter()
        .filter_map(|&kappa| HalfIntegerLevel::classify(kappa, 1e-9).map(|lv| (lv, kappa)))
        .collect();
    levels.sort_by_key(|(lv, _)| lv.n);
    let l = levels.len();
    if l == 0 {
        return Err(Error::Parameter("data carries no half-odd-integer level".into()));
    }
    if coeffs.len() != 2 * l {
        return Err(Error::Structural(format!(
            "need 2L = {} coefficients for L = {l} levels, got {}",
            2 * l,
            coeffs.len()
        )));
    }
    if coeffs.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::Parameter("zero coefficient vector".into()));
    }

    let waves: Result<Vec<Vec<[Complex64; 2]>>> = levels
        .par_iter()
        .map(|&(_, kappa)| Ok(reflectionless::jost_from_data(data, kappa, x_grid)?.samples))
        .collect();
    let waves = waves?;
    let u = reflectionless::potential_from_data(data, x_grid)?;

    let n_x = x_grid.n;
    let dy = 2.0 * std::f64::consts::PI / n_y as f64;
    let mut psi1 = vec![Complex64::new(0.0, 0.0); n_x * n_y];
    let mut psi2 = vec![Complex64::new(0.0, 0.0); n_x * n_y];
    for (m, (lv, _)) in levels.iter().enumerate() {
        let nu = lv.pole().im;
        let (a, b) = (coeffs[m], coeffs[l + m]);
        if a.norm() == 0.0 && b.norm() == 0.0 {
            continue;
        }
        for i in 0..n_x {
            let [phi1, phi2] = waves[m][i];
            for j in 0..n_y {
                let phase = Complex64::from_polar(1.0, nu * j as f64 * dy);
                // a * phi e^{i nu y} + b * (phi e^{i nu y})^*
                let p1 = a * phi1 * phase + b * (phi2 * phase).conj();
                let p2 = a * phi2 * phase - b * (phi1 * phase).conj();
                psi1[i * n_y + j] += p1;
                psi2[i * n_y + j] += p2;
            }
        }
    }
    let levels = levels
        .iter()
        .enumerate()
        .map(|(m, &(lv, _))| (lv, coeffs[m], coeffs[l + m]))
        .collect();
    Ok(SpinorField { x_grid: x_grid.clone(), n_y, psi1, psi2, levels, u: u.values })
}

/// psi = phi+_1(x, kappa) e^{kappa y} for an arbitrary pole of `data`,
/// bypassing the level classification. For kappa not of the form i(2n+1)/2
/// the result is not a section over the cylinder, which the closure
/// diagnostic detects; that is this function's main purpose.
pub fn pure_exponent_spinor(
    data: &SpectralData,
    kappa: Complex64,
    x_grid: &UniformGrid,
    n_y: usize,
) -> Result<SpinorField> {
    let wave = reflectionless::jost_from_data(data, kappa, x_grid)?.samples;
    let u = reflectionless::potential_from_data(data, x_grid)?;
    let dy = 2.0 * std::f64::consts::PI / n_y as f64;
    let mut psi1 = Vec::with_capacity(x_grid.n * n_y);
    let mut psi2 = Vec::with_capacity(x_grid.n * n_y);
    for sample in &wave {
        for j in 0..n_y {
            let phase = (kappa * (j as f64 * dy)).exp();
            psi1.push(sample[0] * phase);
            psi2.push(sample[1] * phase);
        }
    }
    Ok(SpinorField { x_grid: x_grid.clone(), n_y, psi1, psi2, levels: vec![], u: u.values })
}

/// The star transform psi* = (conj(psi2), -conj(psi1)); an anti-involution
/// with (psi*)* = -psi that preserves the Dirac equation.
pub fn star_transform(psi: &SpinorField) -> SpinorField {
    let psi1 = psi.psi2.iter().map(|v| v.conj()).collect();
    let psi2 = psi.psi1.iter().map(|v| -v.conj()).collect();
    // (a psi + b psi*)* = -conj(b) psi + conj(a) psi*
    let levels = psi
        .levels
        .iter()
        .map(|&(lv, a, b)| (lv, -b.conj(), a.conj()))
        .collect();
    SpinorField { x_grid: psi.x_grid.clone(), n_y: psi.n_y, psi1, psi2, levels, u: psi.u.clone() }
}

/// Psi = lambda psi + mu psi*.
pub fn rotate_frame(psi: &SpinorField, lambda: Complex64, mu: Complex64) -> Result<SpinorField> {
    if lambda.norm_sqr() + mu.norm_sqr() == 0.0 {
        return Err(Error::Parameter("rotate_frame requires (lambda, mu) != (0, 0)".into()));
    }
    let psi1 = psi
        .psi1
        .iter()
        .zip(&psi.psi2)
        .map(|(p1, p2)| lambda * p1 + mu * p2.conj())
        .collect();
    let psi2 = psi
        .psi2
        .iter()
        .zip(&psi.psi1)
        .map(|(p2, p1)| lambda * p2 - mu * p1.conj())
        .collect();
    let levels = psi
        .levels
        .iter()
        .map(|&(lv, a, b)| (lv, lambda * a - mu * b.conj(), lambda * b + mu * a.conj()))
        .collect();
    Ok(SpinorField { x_grid: psi.x_grid.clone(), n_y: psi.n_y, psi1, psi2, levels, u: psi.u.clone() })
}

/// Rotation matrix of the frame change, built from the coefficient block of
/// the derivative transformation and re-orthonormalized to remove O(1e-12)
/// drift. Requires |lambda|^2 + |mu|^2 = 1 for a proper rotation.
pub fn rho_matrix(lambda: Complex64, mu: Complex64) -> [[f64; 3]; 3] {
    let l2 = lambda * lambda;
    let m2 = mu * mu;
    let lm = lambda * mu;
    let lmc = lambda * mu.conj();
    let mut r = [
        [l2.re + m2.re, l2.im - m2.im, -2.0 * lm.im],
        [-(l2.im + m2.im), l2.re - m2.re, -2.0 * lm.re],
        [-2.0 * lmc.im, 2.0 * lmc.re, lambda.norm_sqr() - mu.norm_sqr()],
    ];
    // Gram-Schmidt on rows
    for i in 0..3 {
        for p in 0..i {
            let dot: f64 = (0..3).map(|c| r[i][c] * r[p][c]).sum();
            for c in 0..3 {
                r[i][c] -= dot * r[p][c];
            }
        }
        let norm: f64 = (0..3).map(|c| r[i][c] * r[i][c]).sum::<f64>().sqrt();
        for c in 0..3 {
            r[i][c] /= norm;
        }
    }
    r
}

fn deriv_x(psi: &SpinorField, i: usize, j: usize) -> [f64; 3] {
    let n = psi.idx(i, j);
    let (p1, p2) = (psi.psi1[n], psi.psi2[n]);
    let s = p2 * p2 - p1 * p1;
    let c = p1 * p2.conj();
    [s.im, s.re, 2.0 * c.re]
}

fn deriv_y(psi: &SpinorField, i: usize, j: usize) -> [f64; 3] {
    let n = psi.idx(i, j);
    let (p1, p2) = (psi.psi1[n], psi.psi2[n]);
    let s = p1 * p1 + p2 * p2;
    let c = p1 * p2.conj();
    [-s.re, s.im, -2.0 * c.im]
}

/// Immersed surface samples with metric density, curvatures and
/// branch-point diagnostics.
#[derive(Debug, Clone)]
pub struct ImmersedSurface {
    pub x_grid: UniformGrid,
    pub n_y: usize,
    pub points: Vec<[f64; 3]>,
    pub d: Vec<f64>,
    pub h: Vec<f64>,
    pub k_curv: Vec<f64>,
    pub u: Vec<f64>,
    pub d_floor: f64,
    pub branch_nodes: Vec<(usize, usize)>,
}

impl ImmersedSurface {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_y + j
    }

    pub fn dy(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_y as f64
    }

    pub fn max_d(&self) -> f64 {
        self.d.iter().fold(0.0, |m, v| m.max(*v))
    }
}

/// Integrate the coordinate 1-forms: first along x at the basepoint's
/// y-circle, then along y up each column, and normalize X(basepoint) = 0.
pub fn immerse(psi: &SpinorField, basepoint: (f64, f64)) -> Result<ImmersedSurface> {
    let n_x = psi.x_grid.n;
    let n_y = psi.n_y;
    let dy = psi.dy();
    let (x0, y0) = basepoint;
    if x0 < psi.x_grid.x0 || x0 > psi.x_grid.xmax() {
        return Err(Error::Parameter(format!("basepoint x = {x0} outside the grid")));
    }
    let i0 = ((x0 - psi.x_grid.x0) / psi.x_grid.dx).round() as usize;
    let j0 = (y0.rem_euclid(2.0 * std::f64::consts::PI) / dy).round() as usize % n_y;

    // spine along x at y = y_{j0}
    let mut spine = [vec![0.0; n_x], vec![0.0; n_x], vec![0.0; n_x]];
    for c in 0..3 {
        let samples: Vec<f64> = (0..n_x).map(|i| deriv_x(psi, i, j0)[c]).collect();
        spine[c] = numeric::cumulative_simpson(&samples, psi.x_grid.dx);
    }

    let points: Vec<Vec<[f64; 3]>> = (0..n_x)
        .into_par_iter()
        .map(|i| {
            let mut cols = [vec![0.0; n_y], vec![0.0; n_y], vec![0.0; n_y]];
            for c in 0..3 {
                let samples: Vec<f64> = (0..n_y).map(|j| deriv_y(psi, i, j)[c]).collect();
                cols[c] = numeric::cumulative_simpson(&samples, dy);
            }
            (0..n_y)
                .map(|j| {
                    let mut p = [0.0; 3];
                    for c in 0..3 {
                        p[c] = spine[c][i] - spine[c][i0] + cols[c][j] - cols[c][j0];
                    }
                    p
                })
                .collect()
        })
        .collect();
    let points: Vec<[f64; 3]> = points.into_iter().flatten().collect();

    let d: Vec<f64> = (0..n_x)
        .flat_map(|i| (0..n_y).map(move |j| (i, j)))
        .map(|(i, j)| psi.density(i, j))
        .collect();
    let max_d = d.iter().fold(0.0f64, |m, v| m.max(*v));
    let d_floor = D_FLOOR_FACTOR * max_d;
    let h: Vec<f64> = (0..n_x * n_y)
        .map(|n| {
            let i = n / n_y;
            if d[n] > d_floor { 2.0 * psi.u[i] / d[n] } else { 0.0 }
        })
        .collect();

    // K = -(1/D^2) Lap log D, 5-point stencil; endpoint x-rows excluded.
    let log_d: Vec<f64> = d.iter().map(|v| v.max(1e-300).ln()).collect();
    let dx2 = psi.x_grid.dx * psi.x_grid.dx;
    let dy2 = dy * dy;
    let mut k_curv = vec![0.0; n_x * n_y];
    for i in 1..n_x - 1 {
        for j in 0..n_y {
            let n = i * n_y + j;
            if d[n] <= d_floor {
                continue;
            }
            let jp = (j + 1) % n_y;
            let jm = (j + n_y - 1) % n_y;
            let lap = (log_d[(i + 1) * n_y + j] + log_d[(i - 1) * n_y + j] - 2.0 * log_d[n]) / dx2
                + (log_d[i * n_y + jp] + log_d[i * n_y + jm] - 2.0 * log_d[n]) / dy2;
            k_curv[n] = -lap / (d[n] * d[n]);
        }
    }

    let mut surface = ImmersedSurface {
        x_grid: psi.x_grid.clone(),
        n_y,
        points,
        d,
        h,
        k_curv,
        u: psi.u.clone(),
        d_floor,
        branch_nodes: vec![],
    };
    surface.branch_nodes = scan_branch_nodes(&surface);
    Ok(surface)
}

/// Nodes with D below the floor, restricted to the x-span where the
/// y-averaged density still sits well above it — the exponential tails
/// always dive under any fixed floor and are diagnosed by their decay
/// rate instead.
fn scan_branch_nodes(surface: &ImmersedSurface) -> Vec<(usize, usize)> {
    let n_y = surface.n_y;
    let means: Vec<f64> = (0..surface.x_grid.n)
        .map(|i| surface.d[i * n_y..(i + 1) * n_y].iter().sum::<f64>() / n_y as f64)
        .collect();
    let lo = means.iter().position(|m| *m >= 10.0 * surface.d_floor);
    let hi = means.iter().rposition(|m| *m >= 10.0 * surface.d_floor);
    let (Some(lo), Some(hi)) = (lo, hi) else { return vec![] };
    let mut nodes = Vec::new();
    for i in lo..=hi {
        for j in 0..n_y {
            if surface.d[i * n_y + j] < surface.d_floor {
                nodes.push((i, j));
            }
        }
    }
    nodes
}

/// Closure diagnostics: y-period integrals of the coordinate forms, the
/// diameters of the two extreme x-circles, and the fitted decay rates of
/// the y-averaged density against e^{-rate |x|} on each side.
#[derive(Debug, Clone, Serialize)]
pub struct ClosureReport {
    pub max_period_norm: f64,
    pub left_diameter: f64,
    pub right_diameter: f64,
    pub left_decay_rate: f64,
    pub right_decay_rate: f64,
}

pub fn closure_check(psi: &SpinorField, surface: &ImmersedSurface) -> ClosureReport {
    let n_x = psi.x_grid.n;
    let n_y = psi.n_y;
    let dy = psi.dy();
    // full-period trapezoid over each circle is exact for trigonometric
    // polynomials, which the 1-forms of a genuine section are
    let max_period_norm = (0..n_x)
        .map(|i| {
            let mut p = [0.0f64; 3];
            for j in 0..n_y {
                let v = deriv_y(psi, i, j);
                for c in 0..3 {
                    p[c] += v[c] * dy;
                }
            }
            (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
        })
        .fold(0.0, f64::max);

    let circle_diameter = |i: usize| -> f64 {
        let mut best = 0.0f64;
        for j in 0..n_y {
            let a = surface.points[surface.idx(i, j)];
            for l in j + 1..n_y {
                let b = surface.points[surface.idx(i, l)];
                let d2 = (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum::<f64>();
                best = best.max(d2);
            }
        }
        best.sqrt()
    };

    let (left_decay_rate, right_decay_rate) = density_decay_rates(psi);
    ClosureReport {
        max_period_norm,
        left_diameter: circle_diameter(0),
        right_diameter: circle_diameter(n_x - 1),
        left_decay_rate,
        right_decay_rate,
    }
}

/// Log-linear fit of the y-averaged density on the outer windows
/// [xmax - 6, xmax - 2] of each side; returns the rates r with D ~ e^{-r|x|}.
fn density_decay_rates(psi: &SpinorField) -> (f64, f64) {
    let profile = psi.density_profile();
    let grid = &psi.x_grid;
    let window = |a: f64, b: f64| -> (Vec<f64>, Vec<f64>) {
        grid.nodes()
            .zip(&profile)
            .filter(|&(x, &p)| x >= a && x <= b && p > 0.0)
            .map(|(x, &p)| (x, p.ln()))
            .unzip()
    };
    let (xr, lr) = window(grid.xmax() - 6.0, grid.xmax() - 2.0);
    let (xl, ll) = window(grid.x0 + 2.0, grid.x0 + 6.0);
    let right = if xr.len() > 3 { -numeric::linear_fit(&xr, &lr).1 } else { f64::NAN };
    let left = if xl.len() > 3 { numeric::linear_fit(&xl, &ll).1 } else { f64::NAN };
    (left, right)
}

/// Branch-point report: interior nodes below the density floor plus the
/// endpoint decay exponents (rate > BRANCH_RATE_THRESHOLD marks a branch
/// point at that infinity; a regular end has rate 1).
#[derive(Debug, Clone, Serialize)]
pub struct BranchReport {
    pub nodes: Vec<(usize, usize)>,
    pub min_d: f64,
    pub left_decay_rate: f64,
    pub right_decay_rate: f64,
    pub left_infinity_branched: bool,
    pub right_infinity_branched: bool,
}

pub fn detect_branch_points(psi: &SpinorField, surface: &ImmersedSurface) -> BranchReport {
    let (left, right) = density_decay_rates(psi);
    BranchReport {
        nodes: scan_branch_nodes(surface),
        min_d: surface.d.iter().fold(f64::INFINITY, |m, v| m.min(*v)),
        left_decay_rate: left,
        right_decay_rate: right,
        left_infinity_branched: left > BRANCH_RATE_THRESHOLD,
        right_infinity_branched: right > BRANCH_RATE_THRESHOLD,
    }
}

/// W = int H^2 dmu over the mesh, with dmu = D^2 dx dy.
pub fn willmore_mesh(surface: &ImmersedSurface) -> f64 {
    let n_y = surface.n_y;
    let dy = surface.dy();
    let row: Vec<f64> = (0..surface.x_grid.n)
        .map(|i| {
            (0..n_y)
                .map(|j| {
                    let n = i * n_y + j;
                    surface.h[n] * surface.h[n] * surface.d[n] * surface.d[n] * dy
                })
                .sum()
        })
        .collect();
    numeric::trapezoid(&row, surface.x_grid.dx)
}

/// W = 4 int U^2 dx dy = 8 pi int U^2 dx for a one-dimensional potential.
pub fn willmore_from_potential(u: &GridPotential) -> f64 {
    8.0 * std::f64::consts::PI * u.l2_squared()
}

/// int K dmu over the mesh (4 pi for a closed sphere, Gauss-Bonnet).
pub fn gauss_bonnet_total(surface: &ImmersedSurface) -> f64 {
    let n_y = surface.n_y;
    let dy = surface.dy();
    let row: Vec<f64> = (0..surface.x_grid.n)
        .map(|i| {
            (0..n_y)
                .map(|j| {
                    let n = i * n_y + j;
                    surface.k_curv[n] * surface.d[n] * surface.d[n] * dy
                })
                .sum()
        })
        .collect();
    numeric::trapezoid(&row, surface.x_grid.dx)
}

/// Sampled residual of the cylinder Dirac equation
///   d psi2 + U psi1 = 0,  -dbar psi1 + U psi2 = 0
/// with d = (d_x - i d_y)/2; sixth-order differences, antiperiodic wrap
/// in y, interior x-rows only.
pub fn dirac_residual(psi: &SpinorField) -> f64 {
    let n_x = psi.x_grid.n;
    let n_y = psi.n_y as isize;
    let get = |field: &[Complex64], i: usize, j: isize| -> Complex64 {
        let wraps = j.div_euclid(n_y);
        let jj = j.rem_euclid(n_y) as usize;
        let sign = if wraps.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sign * field[i * n_y as usize + jj]
    };
    let stencil = [1.0, -9.0, 45.0]; // f' ~ (sum c_m (f[+m] - f[-m]))/(60 h), m = 3,2,1
    let mut worst = 0.0f64;
    for i in 3..n_x - 3 {
        let u = psi.u[i];
        for j in 0..psi.n_y {
            let j = j as isize;
            let mut dx1 = Complex64::new(0.0, 0.0);
            let mut dx2 = Complex64::new(0.0, 0.0);
            let mut dy1 = Complex64::new(0.0, 0.0);
            let mut dy2 = Complex64::new(0.0, 0.0);
            for (m, c) in (1..=3).rev().zip(stencil) {
                dx1 += c * (psi.psi1[psi.idx(i + m, j as usize)] - psi.psi1[psi.idx(i - m, j as usize)]);
                dx2 += c * (psi.psi2[psi.idx(i + m, j as usize)] - psi.psi2[psi.idx(i - m, j as usize)]);
                dy1 += c * (get(&psi.psi1, i, j + m as isize) - get(&psi.psi1, i, j - m as isize));
                dy2 += c * (get(&psi.psi2, i, j + m as isize) - get(&psi.psi2, i, j - m as isize));
            }
            dx1 /= 60.0 * psi.x_grid.dx;
            dx2 /= 60.0 * psi.x_grid.dx;
            dy1 /= 60.0 * psi.dy();
            dy2 /= 60.0 * psi.dy();
            let jj = psi.idx(i, j as usize);
            let r1 = 0.5 * (dx2 - Complex64::i() * dy2) + u * psi.psi1[jj];
            let r2 = -0.5 * (dx1 + Complex64::i() * dy1) + u * psi.psi2[jj];
            worst = worst.max(r1.norm()).max(r2.norm());
        }
    }
    worst
}

/// Plane-representation field Psi(Z, Zbar) on Z = e^{x+iy}.
#[derive(Debug, Clone)]
pub struct PlaneField {
    pub x_grid: UniformGrid,
    pub n_y: usize,
    pub psi1: Vec<Complex64>,
    pub psi2: Vec<Complex64>,
}

impl PlaneField {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_y + j
    }

    pub fn z(&self, i: usize, j: usize) -> Complex64 {
        let y = 2.0 * std::f64::consts::PI * j as f64 / self.n_y as f64;
        Complex64::new(self.x_grid.x(i), y).exp()
    }
}

/// Psi1 = e^{-(x+iy)/2} psi1, Psi2 = e^{-(x-iy)/2} psi2; single-valued on
/// the punctured plane because the antiperiodicity of psi cancels the
/// half-integer branch of the square root of Z.
pub fn to_plane(psi: &SpinorField) -> PlaneField {
    let n_y = psi.n_y;
    let mut psi1 = Vec::with_capacity(psi.x_grid.n * n_y);
    let mut psi2 = Vec::with_capacity(psi.x_grid.n * n_y);
    for i in 0..psi.x_grid.n {
        let x = psi.x_grid.x(i);
        for j in 0..n_y {
            let y = 2.0 * std::f64::consts::PI * j as f64 / n_y as f64;
            let half = Complex64::new(0.5 * x, 0.5 * y);
            psi1.push((-half).exp() * psi.psi1[psi.idx(i, j)]);
            psi2.push((-half.conj()).exp() * psi.psi2[psi.idx(i, j)]);
        }
    }
    PlaneField { x_grid: psi.x_grid.clone(), n_y, psi1, psi2 }
}

/// Fit |Psi|^2 |Z|^2 -> C+ on the outer window; returns (C+, max relative
/// deviation over the window).
pub fn plane_tail_constant(plane: &PlaneField) -> (f64, f64) {
    let n_y = plane.n_y;
    let lo = plane.x_grid.xmax() - 8.0;
    let hi = plane.x_grid.xmax() - 4.0;
    let mut vals = Vec::new();
    for i in 0..plane.x_grid.n {
        let x = plane.x_grid.x(i);
        if x < lo || x > hi {
            continue;
        }
        for j in 0..n_y {
            let n = plane.idx(i, j);
            let mag = plane.psi1[n].norm_sqr() + plane.psi2[n].norm_sqr();
            vals.push(mag * (2.0 * x).exp());
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let dev = vals.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    (mean, dev / mean.abs().max(1e-300))
}

/// Least-squares rational fit Psi_c ~ P(Z, Zbar)/Q(Z, Zbar) with total
/// degree <= deg in each of numerator and denominator (constant term of Q
/// normalized to 1); returns the worst relative residual |Psi Q - P| over
/// the sampled band, maximized over both components.
pub fn rational_fit_residual(plane: &PlaneField, deg: usize) -> Result<f64> {
    let monomials: Vec<(i32, i32)> = (0..=deg as i32)
        .flat_map(|p| (0..=deg as i32 - p).map(move |q| (p, q)))
        .collect();
    let n_mono = monomials.len();
    // sample a band of moderate |Z| with a stride to keep the system small
    let mut nodes = Vec::new();
    for i in (0..plane.x_grid.n).step_by((plane.x_grid.n / 120).max(1)) {
        if plane.x_grid.x(i).abs() > 1.2 {
            continue;
        }
        for j in (0..plane.n_y).step_by((plane.n_y / 16).max(1)) {
            nodes.push((i, j));
        }
    }
    if nodes.len() < 4 * n_mono {
        return Err(Error::Parameter("plane grid too coarse for a rational fit".into()));
    }
    let mut worst = 0.0f64;
    for component in 0..2 {
        let field = if component == 0 { &plane.psi1 } else { &plane.psi2 };
        let scale = nodes
            .iter()
            .fold(0.0f64, |m, &(i, j)| m.max(field[plane.idx(i, j)].norm()));
        if scale == 0.0 {
            continue;
        }
        // unknowns: P coefficients, then Q coefficients without the constant
        let n_cols = 2 * n_mono - 1;
        let mut a = CMatrix::zeros(nodes.len(), n_cols);
        let mut b = vec![Complex64::new(0.0, 0.0); nodes.len()];
        for (r, &(i, j)) in nodes.iter().enumerate() {
            let z = plane.z(i, j);
            let v = field[plane.idx(i, j)];
            for (c, &(p, q)) in monomials.iter().enumerate() {
                let mono = z.powi(p) * z.conj().powi(q);
                a[(r, c)] = mono;
                if c > 0 {
                    a[(r, n_mono - 1 + c)] = -v * mono;
                }
            }
            b[r] = v; // v * Q0 with Q0 = 1
        }
        // normalize columns so the normal equations stay well conditioned
        let mut col_scale = vec![1.0f64; n_cols];
        for c in 0..n_cols {
            let m = (0..nodes.len()).fold(0.0f64, |m, r| m.max(a[(r, c)].norm()));
            if m > 0.0 {
                col_scale[c] = m;
                for r in 0..nodes.len() {
                    a[(r, c)] /= m;
                }
            }
        }
        let mut x = linalg::least_squares(&a, &b)?;
        for c in 0..n_cols {
            x[c] /= col_scale[c];
        }
        for &(i, j) in &nodes {
            let z = plane.z(i, j);
            let v = field[plane.idx(i, j)];
            let mut p_val = Complex64::new(0.0, 0.0);
            let mut q_val = Complex64::new(1.0, 0.0);
            for (c, &(p, q)) in monomials.iter().enumerate() {
                let mono = z.powi(p) * z.conj().powi(q);
                p_val += x[c] * mono;
                if c > 0 {
                    q_val += x[n_mono - 1 + c] * mono;
                }
            }
            worst = worst.max((v * q_val - p_val).norm() / scale);
        }
    }
    Ok(worst)
}

/// Spinor recovered from surface geometry via psi1 = sqrt(-d Phi),
/// psi2 = sqrt(dbar Phi), Phi = X^2 + i X^1; defined up to local signs.
#[derive(Debug, Clone)]
pub struct RecoveredSpinor {
    pub x_grid: UniformGrid,
    pub n_y: usize,
    /// interior x-range covered by the difference stencil
    pub i_lo: usize,
    pub i_hi: usize,
    pub psi1: Vec<Complex64>,
    pub psi2: Vec<Complex64>,
    pub flagged: Vec<(usize, usize)>,
}

impl RecoveredSpinor {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_y + j
    }

    pub fn density(&self, i: usize, j: usize) -> f64 {
        let n = self.idx(i, j);
        self.psi1[n].norm_sqr() + self.psi2[n].norm_sqr()
    }
}

pub fn spinor_from_immersion(surface: &ImmersedSurface) -> Result<RecoveredSpinor> {
    let n_x = surface.x_grid.n;
    let n_y = surface.n_y;
    let dy = surface.dy();
    let phi: Vec<Complex64> = surface
        .points
        .iter()
        .map(|p| Complex64::new(p[1], p[0]))
        .collect();
    let scale = phi.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if scale < 1e-12 {
        return Err(Error::InvalidData("degenerate surface: X is constant".into()));
    }

    // d_y Phi spectrally per x-row (positions are periodic in y),
    // d_x Phi by sixth-order central differences on interior rows
    let dphi_y: Vec<Vec<Complex64>> = (0..n_x)
        .map(|i| numeric::fft_derivative_complex(&phi[i * n_y..(i + 1) * n_y], dy))
        .collect();
    let stencil = [1.0, -9.0, 45.0];
    let (i_lo, i_hi) = (3, n_x - 4);
    let mut psi1 = vec![Complex64::new(0.0, 0.0); n_x * n_y];
    let mut psi2 = vec![Complex64::new(0.0, 0.0); n_x * n_y];
    let mut flagged = Vec::new();
    let mut max_dphi = 0.0f64;
    for i in i_lo..=i_hi {
        for j in 0..n_y {
            let mut dx = Complex64::new(0.0, 0.0);
            for (m, c) in (1..=3).rev().zip(stencil) {
                dx += c * (phi[(i + m) * n_y + j] - phi[(i - m) * n_y + j]);
            }
            dx /= 60.0 * surface.x_grid.dx;
            let dyv = dphi_y[i][j];
            let d_phi = 0.5 * (dx - Complex64::i() * dyv);
            let dbar_phi = 0.5 * (dx + Complex64::i() * dyv);
            max_dphi = max_dphi.max(d_phi.norm());
            if d_phi.norm() < 1e-14 * scale {
                flagged.push((i, j));
            }
            psi1[i * n_y + j] = (-d_phi).sqrt();
            psi2[i * n_y + j] = dbar_phi.sqrt();
        }
    }
    if max_dphi < 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidData("degenerate surface: dPhi vanishes".into()));
    }
    Ok(RecoveredSpinor { x_grid: surface.x_grid.clone(), n_y, i_lo, i_hi, psi1, psi2, flagged })
}

/// True iff the nonzero support of the coefficient vector sits inside a
/// single pair {j, j + L}: only such combinations give revolution surfaces.
pub fn is_revolution(coeffs: &[Complex64], l: usize) -> Result<bool> {
    if coeffs.len() != 2 * l {
        return Err(Error::Structural(format!(
            "coefficient vector has length {}, expected 2L = {}",
            coeffs.len(),
            2 * l
        )));
    }
    let support: Vec<usize> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(i, _)| i)
        .collect();
    if support.is_empty() {
        return Err(Error::Parameter("zero coefficient vector".into()));
    }
    Ok((0..l).any(|j| support.iter().all(|&s| s == j || s == j + l)))
}

/// Deviation from rotational symmetry: per y-circle distances from the
/// fitted axis should not depend on y. Returns the worst deviation
/// normalized by the surface scale.
pub fn revolution_defect(surface: &ImmersedSurface) -> f64 {
    let n_x = surface.x_grid.n;
    let n_y = surface.n_y;
    // circle centers
    let centers: Vec<[f64; 3]> = (0..n_x)
        .map(|i| {
            let mut c = [0.0; 3];
            for j in 0..n_y {
                let p = surface.points[surface.idx(i, j)];
                for k in 0..3 {
                    c[k] += p[k] / n_y as f64;
                }
            }
            c
        })
        .collect();
    // axis through the mean center, direction from the extreme centers
    let mean = {
        let mut m = [0.0; 3];
        for c in &centers {
            for k in 0..3 {
                m[k] += c[k] / n_x as f64;
            }
        }
        m
    };
    let mut dir = [0.0; 3];
    for k in 0..3 {
        dir[k] = centers[n_x - 1][k] - centers[0][k];
    }
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if norm < 1e-12 {
        return f64::INFINITY;
    }
    for k in 0..3 {
        dir[k] /= norm;
    }
    let scale = surface
        .points
        .iter()
        .fold(0.0f64, |m, p| m.max((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()));
    let mut worst = 0.0f64;
    for i in 0..n_x {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for j in 0..n_y {
            let p = surface.points[surface.idx(i, j)];
            let rel = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
            let along = rel[0] * dir[0] + rel[1] * dir[1] + rel[2] * dir[2];
            let perp2 = rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2] - along * along;
            let r = perp2.max(0.0).sqrt();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        worst = worst.max(hi - lo);
    }
    worst / scale.max(1e-300)
}

/// Least-squares sphere fit: returns (center, radius, max | |X-c| - r | / r).
pub fn sphere_fit(surface: &ImmersedSurface) -> Result<([f64; 3], f64, f64)> {
    // |X|^2 = 2 c . X + (r^2 - |c|^2): linear in (c, k)
    let mut ata = RMatrix::zeros(4, 4);
    let mut atb = [0.0f64; 4];
    for p in &surface.points {
        let row = [2.0 * p[0], 2.0 * p[1], 2.0 * p[2], 1.0];
        let rhs = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        for i in 0..4 {
            for j in 0..4 {
                ata[(i, j)] += row[i] * row[j];
            }
            atb[i] += row[i] * rhs;
        }
    }
    let lu = RLu::factor(ata)?;
    let sol = lu.solve(&atb);
    let c = [sol[0], sol[1], sol[2]];
    let r2 = sol[3] + c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
    if r2 <= 0.0 {
        return Err(Error::Numerical("sphere fit collapsed to a point".into()));
    }
    let r = r2.sqrt();
    let worst = surface
        .points
        .iter()
        .map(|p| {
            let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
            (d - r).abs()
        })
        .fold(0.0f64, f64::max);
    Ok((c, r, worst / r))
}

/// Wavefront OBJ export: vertices in row-major order, quad faces over the
/// grid cells with the y-seam closed; an end circle whose diameter is below
/// `weld_tol` is welded to its centroid vertex with a triangle fan.
pub fn export_obj(surface: &ImmersedSurface, path: &Path, weld_tol: f64) -> Result<()> {
    let n_x = surface.x_grid.n;
    let n_y = surface.n_y;
    let mut text = String::new();
    for p in &surface.points {
        writeln!(text, "v {:.9e} {:.9e} {:.9e}", p[0], p[1], p[2]).expect("write to string");
    }
    let vid = |i: usize, j: usize| i * n_y + (j % n_y) + 1;
    for i in 0..n_x - 1 {
        for j in 0..n_y {
            writeln!(
                text,
                "f {} {} {} {}",
                vid(i, j),
                vid(i + 1, j),
                vid(i + 1, j + 1),
                vid(i, j + 1)
            )
            .expect("write to string");
        }
    }
    let mut next_vertex = n_x * n_y + 1;
    for (i, reverse) in [(0usize, true), (n_x - 1, false)] {
        let mut diam2 = 0.0f64;
        let mut centroid = [0.0; 3];
        for j in 0..n_y {
            let a = surface.points[surface.idx(i, j)];
            for k in 0..3 {
                centroid[k] += a[k] / n_y as f64;
            }
            for l in j + 1..n_y {
                let b = surface.points[surface.idx(i, l)];
                let d2 = (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum::<f64>();
                diam2 = diam2.max(d2);
            }
        }
        if diam2.sqrt() < weld_tol {
            writeln!(text, "v {:.9e} {:.9e} {:.9e}", centroid[0], centroid[1], centroid[2])
                .expect("write to string");
            for j in 0..n_y {
                if reverse {
                    writeln!(text, "f {} {} {}", next_vertex, vid(i, j + 1), vid(i, j))
                        .expect("write to string");
                } else {
                    writeln!(text, "f {} {} {}", next_vertex, vid(i, j), vid(i, j + 1))
                        .expect("write to string");
                }
            }
            next_vertex += 1;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Structured geometry summary of one field/surface pair.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub willmore_mesh: f64,
    pub willmore_potential: f64,
    pub gauss_bonnet: f64,
    pub kernel_dimension: usize,
    pub closure: ClosureReport,
    pub branch: BranchReport,
    pub dirac_residual: f64,
}

impl GeometryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

pub fn geometry_report(
    data: &SpectralData,
    psi: &SpinorField,
    surface: &ImmersedSurface,
) -> GeometryReport {
    let u = GridPotential::new(psi.x_grid.clone(), psi.u.clone());
    GeometryReport {
        willmore_mesh: willmore_mesh(surface),
        willmore_potential: willmore_from_potential(&u),
        gauss_bonnet: gauss_bonnet_total(surface),
        kernel_dimension: data.kernel_dimension(),
        closure: closure_check(psi, surface),
        branch: detect_branch_points(psi, surface),
        dirac_residual: dirac_residual(psi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn coeffs(vals: &[(f64, f64)]) -> Vec<Complex64> {
        vals.iter().map(|&(re, im)| c(re, im)).collect()
    }

    fn sphere_field(n_x: usize, n_y: usize) -> SpinorField {
        let data = reflectionless::dirac_sphere_data(1).unwrap();
        let grid = UniformGrid::symmetric(20.0, n_x);
        build_spinor(&data, &grid, n_y, &coeffs(&[(1.0, 0.0), (0.0, 0.0)])).unwrap()
    }

    fn mixed_field(n_x: usize, n_y: usize) -> SpinorField {
        let data = reflectionless::dirac_sphere_data(2).unwrap();
        let grid = UniformGrid::symmetric(20.0, n_x);
        build_spinor(
            &data,
            &grid,
            n_y,
            &coeffs(&[(1.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]),
        )
        .unwrap()
    }

    #[test]
    fn round_sphere_field_factorizes_and_solves_dirac() {
        let psi = sphere_field(513, 64);
        // D = |psi|^2 should equal 1/(2 cosh x), the potential itself
        for (i, x) in [(256usize, 0.0f64), (281, 281.0 * 40.0 / 512.0 - 20.0)] {
            let want = 1.0 / (2.0 * x.cosh());
            assert!(
                (psi.density(i, 5) - want).abs() < 1e-9,
                "density at x = {x}: {} vs {want}",
                psi.density(i, 5)
            );
        }
        // separable structure psi(x, y) = phi(x) e^{iy/2}
        let ratio = psi.psi1[psi.idx(200, 7)] / psi.psi1[psi.idx(200, 0)];
        let want = Complex64::from_polar(1.0, 0.5 * psi.y(7));
        assert!((ratio - want).norm() < 1e-10);
        assert!(dirac_residual(&psi) < ODE_RES_TOL, "residual {}", dirac_residual(&psi));
    }

    #[test]
    fn mixed_field_solves_dirac_equation() {
        let psi = mixed_field(513, 64);
        let res = dirac_residual(&psi);
        assert!(res < ODE_RES_TOL, "residual {res}");
    }

    #[test]
    fn star_transform_is_an_anti_involution() {
        let psi = mixed_field(513, 64);
        let star = star_transform(&psi);
        assert!(dirac_residual(&star) < ODE_RES_TOL);
        let twice = star_transform(&star);
        for n in 0..psi.psi1.len() {
            assert!((twice.psi1[n] + psi.psi1[n]).norm() < 1e-14);
            assert!((twice.psi2[n] + psi.psi2[n]).norm() < 1e-14);
            assert!((star.psi1[n].norm_sqr() + star.psi2[n].norm_sqr()
                - psi.psi1[n].norm_sqr()
                - psi.psi2[n].norm_sqr())
            .abs()
                < 1e-13);
        }
    }

    #[test]
    fn build_spinor_rejects_bad_coefficient_vectors() {
        let data = reflectionless::dirac_sphere_data(1).unwrap();
        let grid = UniformGrid::symmetric(10.0, 65);
        assert!(build_spinor(&data, &grid, 16, &coeffs(&[(1.0, 0.0)])).is_err());
        assert!(build_spinor(&data, &grid, 16, &coeffs(&[(0.0, 0.0), (0.0, 0.0)])).is_err());
        // no half-odd-integer level at all
        let off = SpectralData::reflectionless(vec![c(0.0, 0.7)], vec![c(1.0, 0.0)]);
        assert!(build_spinor(&off, &grid, 16, &coeffs(&[(1.0, 0.0), (0.0, 0.0)])).is_err());
    }

    #[test]
    fn round_sphere_immersion_is_a_round_sphere() {
        let psi = sphere_field(2049, 128);
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let (_, r, defect) = sphere_fit(&surface).unwrap();
        assert!(defect < 1e-5, "sphere defect {defect}");
        assert!((r - 0.5).abs() < 1e-4, "radius {r}");
        assert!(surface.branch_nodes.is_empty());

        let report = closure_check(&psi, &surface);
        assert!(report.max_period_norm < 1e-6, "period {}", report.max_period_norm);
        assert!(report.left_diameter < 1e-5 && report.right_diameter < 1e-5);
        assert!((report.left_decay_rate - 1.0).abs() < 0.05);
        assert!((report.right_decay_rate - 1.0).abs() < 0.05);

        let gb = gauss_bonnet_total(&surface);
        assert!((gb - 4.0 * std::f64::consts::PI).abs() < 1e-3, "gauss-bonnet {gb}");
        let w_mesh = willmore_mesh(&surface);
        let w_pot = willmore_from_potential(&GridPotential::new(psi.x_grid.clone(), psi.u.clone()));
        assert!((w_mesh - w_pot).abs() < 1e-4 * w_pot);
        assert!((w_pot - 4.0 * std::f64::consts::PI).abs() < 1e-5 * w_pot);
    }

    #[test]
    fn immersion_is_conformal_with_density_metric() {
        let psi = mixed_field(2049, 128);
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let n_y = psi.n_y;
        let dy = psi.dy();
        let dx = psi.x_grid.dx;
        let p = |i: usize, j: usize| surface.points[surface.idx(i, j % n_y)];
        let stencil = [1.0, -9.0, 45.0];
        for i in (3..psi.x_grid.n - 3).step_by(17) {
            for j in 0..n_y {
                // sixth-order central differences; y wraps
                let mut xs = [0.0; 3];
                let mut ys = [0.0; 3];
                for comp in 0..3 {
                    for (m, cf) in (1..=3).rev().zip(stencil) {
                        xs[comp] += cf * (p(i + m, j)[comp] - p(i - m, j)[comp]);
                        ys[comp] += cf * (p(i, j + m)[comp] - p(i, (j + n_y) - m)[comp]);
                    }
                    xs[comp] /= 60.0 * dx;
                    ys[comp] /= 60.0 * dy;
                }
                let d2 = surface.d[surface.idx(i, j)].powi(2);
                let dot: f64 = (0..3).map(|cp| xs[cp] * ys[cp]).sum();
                let nx: f64 = xs.iter().map(|v| v * v).sum();
                let ny_: f64 = ys.iter().map(|v| v * v).sum();
                assert!(dot.abs() < 1e-5 * d2, "non-orthogonal at ({i}, {j}): {dot} vs {d2}");
                assert!(
                    (nx - ny_).abs() < 1e-5 * d2,
                    "anisotropy at ({i}, {j}) x = {}: {} vs {} (D^2 = {d2})",
                    psi.x_grid.x(i),
                    nx,
                    ny_
                );
                assert!((nx - d2).abs() < 1e-5 * d2, "metric defect {} vs {}", nx, d2);
                // H D = 2 U
                let hd = surface.h[surface.idx(i, j)] * surface.d[surface.idx(i, j)];
                assert!((hd - 2.0 * psi.u[i]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn scaling_the_spinor_scales_the_surface_quadratically() {
        let psi = sphere_field(513, 64);
        let scaled = rotate_frame(&psi, c(1.3, 0.0), c(0.0, 0.0)).unwrap();
        let s0 = immerse(&psi, (0.0, 0.0)).unwrap();
        let s1 = immerse(&scaled, (0.0, 0.0)).unwrap();
        for n in 0..s0.points.len() {
            for comp in 0..3 {
                assert!((s1.points[n][comp] - 1.69 * s0.points[n][comp]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rho_matrix_special_values() {
        let th = 0.37;
        let r = rho_matrix(Complex64::from_polar(1.0, th), c(0.0, 0.0));
        let (s2, c2) = (2.0 * th).sin_cos();
        let want = [[c2, s2, 0.0], [-s2, c2, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
        // (cos phi, sin phi) rotates the (2,3)-plane by -2 phi; the
        // bottom-right entry is cos 2 phi
        let phi = 0.81f64;
        let r = rho_matrix(c(phi.cos(), 0.0), c(phi.sin(), 0.0));
        let (s2, c2) = (2.0 * phi).sin_cos();
        let want = [[1.0, 0.0, 0.0], [0.0, c2, -s2], [0.0, s2, c2]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frame_rotations_rotate_the_surface() {
        let psi = mixed_field(1025, 128);
        let base = immerse(&psi, (0.0, 0.0)).unwrap();
        let scale = base
            .points
            .iter()
            .fold(0.0f64, |m, p| m.max((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..6 {
            let raw = [
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ];
            let norm = (raw[0].norm_sqr() + raw[1].norm_sqr()).sqrt();
            let (lambda, mu) = (raw[0] / norm, raw[1] / norm);
            let rotated = rotate_frame(&psi, lambda, mu).unwrap();
            let got = immerse(&rotated, (0.0, 0.0)).unwrap();
            let rho = rho_matrix(lambda, mu);
            let mut worst = 0.0f64;
            for n in 0..base.points.len() {
                for row in 0..3 {
                    let want: f64 = (0..3).map(|cc| rho[row][cc] * base.points[n][cc]).sum();
                    worst = worst.max((got.points[n][row] - want).abs());
                }
            }
            assert!(worst < 1e-5 * scale, "equivariance defect {worst} for ({lambda}, {mu})");
        }
    }

    #[test]
    fn willmore_energies_of_dirac_spheres_saturate_the_bound() {
        for n in 1..=3u32 {
            let data = reflectionless::dirac_sphere_data(n).unwrap();
            let u = reflectionless::potential_from_data(&data, &GridPotential::default_grid())
                .unwrap();
            let w = willmore_from_potential(&u);
            let bound = 4.0 * std::f64::consts::PI * (n as f64) * (n as f64);
            assert!(w >= bound - 1e-6);
            assert!((w - bound).abs() < 1e-5 * bound, "N = {n}: W = {w}");
        }
        // mesh route on an N = 2 surface
        let psi = mixed_field(1025, 128);
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let w_mesh = willmore_mesh(&surface);
        let w_pot = willmore_from_potential(&GridPotential::new(psi.x_grid.clone(), psi.u.clone()));
        assert!((w_mesh - w_pot).abs() < 1e-4 * w_pot);
        assert!(w_mesh >= 4.0 * std::f64::consts::PI * 4.0 - 1e-6);
    }

    #[test]
    fn non_level_pole_breaks_closure() {
        let data = SpectralData::reflectionless(vec![c(0.0, 0.7)], vec![c(1.0, 0.0)]);
        let grid = UniformGrid::symmetric(20.0, 513);
        let psi = pure_exponent_spinor(&data, c(0.0, 0.7), &grid, 64).unwrap();
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let report = closure_check(&psi, &surface);
        assert!(report.max_period_norm > 1e-3, "period {}", report.max_period_norm);
    }

    #[test]
    fn fast_decay_flags_branch_points_at_infinity() {
        let data = reflectionless::dirac_sphere_data(2).unwrap();
        let grid = UniformGrid::symmetric(20.0, 513);
        let psi = pure_exponent_spinor(&data, c(0.0, 1.5), &grid, 64).unwrap();
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let report = detect_branch_points(&psi, &surface);
        assert!((report.left_decay_rate - 3.0).abs() < 0.1, "rate {}", report.left_decay_rate);
        assert!((report.right_decay_rate - 3.0).abs() < 0.1);
        assert!(report.left_infinity_branched && report.right_infinity_branched);

        // the regular round sphere decays at the critical rate and is clean
        let psi = sphere_field(513, 64);
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let report = detect_branch_points(&psi, &surface);
        assert!(!report.left_infinity_branched && !report.right_infinity_branched);
        assert!(report.nodes.is_empty());
    }

    #[test]
    fn windowed_zero_is_reported_as_a_branch_node() {
        let mut psi = sphere_field(513, 64);
        let x_zero = psi.x_grid.x(300);
        for i in 0..psi.x_grid.n {
            let f = psi.x_grid.x(i) - x_zero;
            for j in 0..psi.n_y {
                let n = psi.idx(i, j);
                psi.psi1[n] *= f;
                psi.psi2[n] *= f;
            }
        }
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        assert!(surface.branch_nodes.iter().any(|&(i, _)| i == 300));
    }

    #[test]
    fn plane_representation_has_rational_structure() {
        let psi = sphere_field(513, 64);
        let plane = to_plane(&psi);
        let (c_plus, dev) = plane_tail_constant(&plane);
        assert!((c_plus - 1.0).abs() < 1e-6, "C+ = {c_plus}");
        assert!(dev < 1e-6);
        let res = rational_fit_residual(&plane, 2).unwrap();
        assert!(res < 1e-6, "rational fit residual {res}");

        let plane = to_plane(&mixed_field(513, 64));
        let res = rational_fit_residual(&plane, 4).unwrap();
        assert!(res < 1e-6, "rational fit residual {res}");
    }

    #[test]
    fn immersion_round_trips_back_to_the_spinor_moduli() {
        let psi = sphere_field(1025, 128);
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let rec = spinor_from_immersion(&surface).unwrap();
        let mut worst_psi = 0.0f64;
        let mut worst_u = 0.0f64;
        for i in rec.i_lo..=rec.i_hi {
            for j in 0..psi.n_y {
                let n = psi.idx(i, j);
                worst_psi = worst_psi
                    .max((rec.psi1[n].norm() - psi.psi1[n].norm()).abs())
                    .max((rec.psi2[n].norm() - psi.psi2[n].norm()).abs());
                // U = H D / 2 with the recovered density
                let u_rec = 0.5 * surface.h[n] * rec.density(i, j);
                worst_u = worst_u.max((u_rec - psi.u[i]).abs());
            }
        }
        assert!(worst_psi < 1e-4, "spinor modulus defect {worst_psi}");
        assert!(worst_u < 1e-4, "potential defect {worst_u}");
    }

    #[test]
    fn degenerate_surface_is_rejected() {
        let psi = sphere_field(257, 32);
        let mut surface = immerse(&psi, (0.0, 0.0)).unwrap();
        for p in surface.points.iter_mut() {
            *p = [1.0, 2.0, 3.0];
        }
        assert!(spinor_from_immersion(&surface).is_err());
    }

    #[test]
    fn revolution_support_rule() {
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        assert!(is_revolution(&[one, zero, zero, zero], 2).unwrap());
        assert!(is_revolution(&[one, zero, c(0.3, 0.1), zero], 2).unwrap());
        assert!(!is_revolution(&[one, one, zero, zero], 2).unwrap());
        assert!(!is_revolution(&[one, zero, zero, one], 2).unwrap());
        assert!(is_revolution(&[one], 1).is_err());
        assert!(is_revolution(&[zero, zero], 1).is_err());
    }

    #[test]
    fn single_level_surfaces_are_revolution_surfaces() {
        let data = reflectionless::dirac_sphere_data(2).unwrap();
        let grid = UniformGrid::symmetric(20.0, 4097);
        let pure = build_spinor(
            &data,
            &grid,
            256,
            &coeffs(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]),
        )
        .unwrap();
        let surface = immerse(&pure, (0.0, 0.0)).unwrap();
        let defect = revolution_defect(&surface);
        assert!(defect < 1e-6, "revolution defect {defect}");

        let mixed = mixed_field(1025, 128);
        let surface = immerse(&mixed, (0.0, 0.0)).unwrap();
        assert!(revolution_defect(&surface) > 1e-3);
    }

    #[test]
    fn obj_export_writes_a_closed_mesh() {
        let psi = sphere_field(257, 32);
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sphere.obj");
        export_obj(&surface, &path, 1e-3).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let n_v = text.lines().filter(|l| l.starts_with("v ")).count();
        let n_f = text.lines().filter(|l| l.starts_with("f ")).count();
        // both end circles are tight enough to weld
        assert_eq!(n_v, 257 * 32 + 2);
        assert_eq!(n_f, 256 * 32 + 2 * 32);
    }

    #[test]
    fn willmore_energy_grows_linearly_along_the_pole_family() {
        let lam = c(1.0, 0.5);
        let mut ws = Vec::new();
        let ts = [0.3, 0.5, 0.7];
        for &t in &ts {
            let data = SpectralData::reflectionless(
                vec![c(0.0, 0.5), c(-0.4, t), c(0.4, t)],
                vec![c(1.0, 0.0), lam, lam.conj()],
            );
            let u = reflectionless::potential_from_data(&data, &GridPotential::default_grid())
                .unwrap();
            ws.push(willmore_from_potential(&u));
        }
        let (a, b, max_res) = numeric::linear_fit(&ts, &ws);
        let pi = std::f64::consts::PI;
        assert!(max_res < 1e-6, "family is not linear: residual {max_res}");
        assert!((a - 4.0 * pi).abs() < 1e-3 * 4.0 * pi, "intercept {a}");
        assert!((b - 16.0 * pi).abs() < 1e-3 * 16.0 * pi, "slope {b}");
    }

    #[test]
    fn geometry_report_serializes() {
        let data = reflectionless::dirac_sphere_data(1).unwrap();
        let psi = sphere_field(257, 32);
        let surface = immerse(&psi, (0.0, 0.0)).unwrap();
        let report = geometry_report(&data, &psi, &surface);
        assert_eq!(report.kernel_dimension, 1);
        let json = report.to_json();
        assert!(json.contains("willmore_mesh"));
        assert!(json.contains("max_period_norm"));
    }
}
