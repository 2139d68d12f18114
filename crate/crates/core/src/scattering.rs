//! Numerical forward scattering for the 1-D Dirac operator: Jost solutions
//! by direct ODE integration from the truncation boundary, scattering
//! coefficients from Wronskians, and the discrete spectrum from zeros of
//! a(k) in the upper half-plane.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{self, C2, UniformGrid};
use crate::potential::GridPotential;

pub const ODE_RTOL: f64 = 1e-11;
pub const ODE_ATOL: f64 = 1e-13;
pub const ROOT_TOL: f64 = 1e-10;
pub const DERIVATIVE_STEP: f64 = 1e-6;
pub const DERIVATIVE_FLOOR: f64 = 1e-10;
pub const SYM_TOL: f64 = 1e-6;

/// Which Jost solution: the matrix (plus/minus) and the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JostKind {
    /// Column 1 of Phi^+: tends to (0, e^{ikx}) as x -> +inf. Analytic in
    /// the upper half-plane.
    PlusCol1,
    /// Column 2 of Phi^+: tends to (e^{-ikx}, 0) as x -> +inf.
    PlusCol2,
    /// Column 1 of Phi^-: tends to (0, e^{ikx}) as x -> -inf.
    MinusCol1,
    /// Column 2 of Phi^-: tends to (e^{-ikx}, 0) as x -> -inf. Analytic in
    /// the upper half-plane.
    MinusCol2,
}

impl JostKind {
    fn from_plus_infinity(self) -> bool {
        matches!(self, JostKind::PlusCol1 | JostKind::PlusCol2)
    }

    /// Only the analytic columns may carry Im k > 0.
    fn allows_complex_k(self) -> bool {
        matches!(self, JostKind::PlusCol1 | JostKind::MinusCol2)
    }
}

/// A Jost solution sampled on the potential grid.
#[derive(Debug, Clone)]
pub struct JostField {
    pub kind: JostKind,
    pub k: Complex64,
    pub grid: UniformGrid,
    pub samples: Vec<C2>,
}

impl JostField {
    pub fn component(&self, row: usize) -> impl Iterator<Item = Complex64> + '_ {
        self.samples.iter().map(move |s| s[row])
    }
}

/// One bound state: pole of T, residue of T, proportionality mu, and the
/// norming constant lambda = i * gamma * mu.
#[derive(Debug, Clone, Copy)]
pub struct BoundState {
    pub kappa: Complex64,
    pub gamma: Complex64,
    pub mu: Complex64,
    pub lambda: Complex64,
}

/// Scattering coefficients on a real k grid plus the discrete spectrum.
#[derive(Debug, Clone)]
pub struct ScatteringReport {
    pub k_grid: Vec<f64>,
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    pub discrete: Vec<BoundState>,
}

impl ScatteringReport {
    pub fn transmission(&self) -> Vec<Complex64> {
        self.a.iter().map(|a| 1.0 / a).collect()
    }

    pub fn reflection(&self) -> Vec<Complex64> {
        self.a.iter().zip(&self.b).map(|(a, b)| b / a).collect()
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (a.norm_sqr() + b.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// The spectral problem is phi1' = -ik phi1 + 2U phi2,
/// phi2' = ik phi2 - 2U phi1. It is integrated in the profiled variables
/// m = phi e^{-ikx} (columns tending to (0, e^{ikx})) or m = phi e^{ikx}
/// (columns tending to (e^{-ikx}, 0)): m is O(1) at the starting end for
/// any k in the closed upper half-plane, which keeps the integration
/// well-scaled where the free wave itself would underflow.
fn profiled_rhs(u: &GridPotential, k: Complex64, col1: bool) -> impl Fn(f64, C2) -> C2 + '_ {
    let ik2 = 2.0 * Complex64::i() * k;
    move |x, m| {
        let two_u = 2.0 * u.eval(x);
        if col1 {
            // phi = m e^{ikx}: m1' = -2ik m1 + 2U m2, m2' = -2U m1
            [-ik2 * m[0] + two_u * m[1], -two_u * m[0]]
        } else {
            // phi = m e^{-ikx}: m1' = 2U m2, m2' = 2ik m2 - 2U m1
            [two_u * m[1], ik2 * m[1] - two_u * m[0]]
        }
    }
}

fn is_col1(kind: JostKind) -> bool {
    matches!(kind, JostKind::PlusCol1 | JostKind::MinusCol1)
}

fn profiled_start(kind: JostKind) -> C2 {
    let (zero, one) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    if is_col1(kind) { [zero, one] } else { [one, zero] }
}

/// Integrate the Jost solution of the requested kind over the whole grid.
pub fn jost_solve(u: &GridPotential, k: Complex64, kind: JostKind) -> Result<JostField> {
    if k.norm() == 0.0 {
        return Err(Error::Parameter("k = 0 excluded from the scattering problem".into()));
    }
    if k.im.abs() > 1e-12 && !kind.allows_complex_k() {
        return Err(Error::Parameter(format!(
            "{kind:?} is only defined for real k (requested k = {k})"
        )));
    }
    let grid = u.grid.clone();
    let xs: Vec<f64> = grid.nodes().collect();
    let f = profiled_rhs(u, k, is_col1(kind));
    let y0 = profiled_start(kind);
    let mut sol = if kind.from_plus_infinity() {
        let rev: Vec<f64> = xs.iter().rev().copied().collect();
        let mut sol = numeric::integrate_along(f, &rev, y0, ODE_RTOL, ODE_ATOL);
        sol.reverse();
        sol
    } else {
        numeric::integrate_along(f, &xs, y0, ODE_RTOL, ODE_ATOL)
    };
    let sign = if is_col1(kind) { 1.0 } else { -1.0 };
    for (x, m) in xs.iter().zip(sol.iter_mut()) {
        let phase = (sign * Complex64::i() * k * x).exp();
        m[0] *= phase;
        m[1] *= phase;
    }
    Ok(JostField { kind, k, grid, samples: sol })
}

/// Pointwise Wronskian W = f1 g2 - f2 g1 of two fields on the same grid.
pub fn wronskian(f: &JostField, g: &JostField) -> Result<Vec<Complex64>> {
    if f.grid != g.grid {
        return Err(Error::Parameter("Wronskian requires a common grid".into()));
    }
    if (f.k - g.k).norm() > 1e-12 {
        return Err(Error::Parameter("Wronskian requires a common k".into()));
    }
    Ok(f.samples
        .iter()
        .zip(&g.samples)
        .map(|(a, b)| a[0] * b[1] - a[1] * b[0])
        .collect())
}

/// Mean and max absolute deviation from the mean, for constancy checks.
pub fn mean_and_spread(values: &[Complex64]) -> (Complex64, f64) {
    let mean = values.iter().sum::<Complex64>() / values.len() as f64;
    let spread = values.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max);
    (mean, spread)
}

/// a(k) and b(k) at a single k by integrating both half-lines to x = 0 and
/// matching there. a = -W(phi+_1, phi-_2) so the free operator gives a = 1.
pub fn coefficients_at(u: &GridPotential, k: Complex64) -> Result<(Complex64, Complex64)> {
    let x_match = 0.5 * (u.grid.x0 + u.grid.xmax());
    // Wronskians of the profiled solutions: the e^{+-ikx} phases of
    // phi+_1 and phi-_2 cancel exactly in a, so a is computed entirely
    // from O(1) quantities even deep in the upper half-plane.
    let plus1 = half_line_state(u, k, JostKind::PlusCol1, x_match)?;
    let minus2 = half_line_state(u, k, JostKind::MinusCol2, x_match)?;
    let a = -(plus1[0] * minus2[1] - plus1[1] * minus2[0]);
    let b = if k.im.abs() < 1e-12 {
        let plus2 = half_line_state(u, k, JostKind::PlusCol2, x_match)?;
        let phase = (-2.0 * Complex64::i() * k * x_match).exp();
        phase * (plus2[0] * minus2[1] - plus2[1] * minus2[0])
    } else {
        Complex64::new(f64::NAN, f64::NAN)
    };
    Ok((a, b))
}

/// Analytic a(k) alone, valid in the closed upper half-plane.
pub fn a_of_k(u: &GridPotential, k: Complex64) -> Result<Complex64> {
    Ok(coefficients_at(u, k)?.0)
}

/// Profiled Jost solution m at x_match (phi = m e^{ikx} for column-1 kinds,
/// phi = m e^{-ikx} for column-2 kinds).
fn half_line_state(u: &GridPotential, k: Complex64, kind: JostKind, x_match: f64) -> Result<C2> {
    if k.im.abs() > 1e-12 && !kind.allows_complex_k() {
        return Err(Error::Parameter("complex k on a non-analytic Jost column".into()));
    }
    let start = if kind.from_plus_infinity() { u.grid.xmax() } else { u.grid.x0 };
    let y0 = profiled_start(kind);
    let mut h = 1e-3;
    let f = profiled_rhs(u, k, is_col1(kind));
    Ok(numeric::integrate_segment(&f, start, x_match, y0, ODE_RTOL, ODE_ATOL, &mut h))
}

/// Scattering coefficients over a real k grid. Fails if the grid contains
/// k = 0 or if the Jost Wronskian is visibly non-constant.
pub fn scattering_coefficients(u: &GridPotential, k_grid: &[f64]) -> Result<ScatteringReport> {
    if k_grid.iter().any(|&k| k == 0.0) {
        return Err(Error::Parameter("k grid contains k = 0".into()));
    }
    u.check_decay(crate::potential::DECAY_TOL)?;
    let ab: Result<Vec<(Complex64, Complex64)>> = k_grid
        .par_iter()
        .map(|&k| coefficients_at(u, Complex64::new(k, 0.0)))
        .collect();
    let ab = ab?;
    Ok(ScatteringReport {
        k_grid: k_grid.to_vec(),
        a: ab.iter().map(|p| p.0).collect(),
        b: ab.iter().map(|p| p.1).collect(),
        discrete: Vec::new(),
    })
}

/// Rectangle in the upper half-plane searched for zeros of a(k).
#[derive(Debug, Clone, Copy)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchBox {
    pub fn standard(u: &GridPotential) -> Self {
        // Im kappa is bounded by the L1 norm of 2U for this operator class;
        // pad generously.
        let l1: f64 = u.values.iter().map(|v| v.abs()).sum::<f64>() * u.grid.dx;
        Self { re_min: -4.0, re_max: 4.0, im_min: 0.02, im_max: (1.2 * l1 + 0.5).max(1.0) }
    }
}

/// Locate the discrete spectrum: all zeros of a(k) inside the box, refined
/// to `ROOT_TOL`, with residues and norming constants.
pub fn discrete_spectrum(u: &GridPotential, search_box: SearchBox) -> Result<Vec<BoundState>> {
    u.check_decay(crate::potential::DECAY_TOL)?;
    let expected = argument_principle_count(u, search_box)?;
    if expected == 0 {
        return Ok(Vec::new());
    }
    let mut roots = axis_roots(u, search_box)?;
    roots.extend(offaxis_roots(u, search_box, &roots)?);
    roots.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    roots.dedup_by(|a, b| (*a - *b).norm() < 1e-6);
    if roots.len() != expected {
        return Err(Error::Numerical(format!(
            "argument principle counts {expected} zeros but {} converged roots found",
            roots.len()
        )));
    }
    let states: Result<Vec<BoundState>> =
        roots.par_iter().map(|&kappa| bound_state_at(u, kappa)).collect();
    let states = states?;
    // spectrum must be closed under kappa -> -conj(kappa)
    for s in &states {
        let mirror = -s.kappa.conj();
        let ok = states.iter().any(|t| (t.kappa - mirror).norm() < SYM_TOL);
        if !ok {
            return Err(Error::Numerical(format!(
                "spectrum not symmetric about the imaginary axis near {}",
                s.kappa
            )));
        }
    }
    Ok(states)
}

fn bound_state_at(u: &GridPotential, kappa: Complex64) -> Result<BoundState> {
    // residue of T = 1/a at a simple zero of a: gamma = 1/a'(kappa)
    let h = Complex64::new(DERIVATIVE_STEP, 0.0);
    let da = (a_of_k(u, kappa + h)? - a_of_k(u, kappa - h)?) / (2.0 * h);
    if da.norm() < DERIVATIVE_FLOOR {
        return Err(Error::Numerical(format!(
            "|a'({kappa})| = {:.3e} below derivative floor; pole not simple",
            da.norm()
        )));
    }
    let gamma = 1.0 / da;
    let plus1 = jost_solve(u, kappa, JostKind::PlusCol1)?;
    let minus2 = jost_solve(u, kappa, JostKind::MinusCol2)?;
    // evaluate mu where |phi+_1| |phi-_2| peaks: the product is largest in
    // the interior and collapses near either end, where the recessive
    // solution drowns in the root-residual of the other column
    let (i_best, _) = plus1
        .samples
        .iter()
        .zip(&minus2.samples)
        .enumerate()
        .map(|(i, (p, m))| {
            (i, (p[0].norm_sqr() + p[1].norm_sqr()) * (m[0].norm_sqr() + m[1].norm_sqr()))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let p = plus1.samples[i_best];
    let m = minus2.samples[i_best];
    let mu = if p[0].norm() > p[1].norm() { m[0] / p[0] } else { m[1] / p[1] };
    Ok(BoundState { kappa, gamma, mu, lambda: Complex64::i() * gamma * mu })
}

/// Winding number of a(k) around the box boundary = number of zeros inside.
fn argument_principle_count(u: &GridPotential, b: SearchBox) -> Result<usize> {
    let corners = [
        Complex64::new(b.re_min, b.im_min),
        Complex64::new(b.re_max, b.im_min),
        Complex64::new(b.re_max, b.im_max),
        Complex64::new(b.re_min, b.im_max),
    ];
    let mut pts = Vec::new();
    for i in 0..4 {
        let from = corners[i];
        let to = corners[(i + 1) % 4];
        let steps = (((to - from).norm() / 0.05).ceil() as usize).max(8);
        for s in 0..steps {
            pts.push(from + (to - from) * (s as f64 / steps as f64));
        }
    }
    let vals: Result<Vec<Complex64>> = pts.par_iter().map(|&k| a_of_k(u, k)).collect();
    let mut vals = vals?;
    vals.push(vals[0]);
    let mut winding = 0.0;
    for w in vals.windows(2) {
        let dphi = (w[1] / w[0]).arg();
        if dphi.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Numerical(format!(
                "argument principle walk under-resolved: jump {dphi:.3} between a = {} and a = {}",
                w[0], w[1]
            )));
        }
        winding += dphi;
    }
    Ok((winding / (2.0 * std::f64::consts::PI)).round() as usize)
}

/// a(k) is real on the imaginary axis; roots there come from sign changes.
fn axis_roots(u: &GridPotential, b: SearchBox) -> Result<Vec<Complex64>> {
    let n_scan = 200;
    let ts: Vec<f64> = (0..=n_scan)
        .map(|i| b.im_min + (b.im_max - b.im_min) * i as f64 / n_scan as f64)
        .collect();
    let vals: Result<Vec<f64>> = ts
        .par_iter()
        .map(|&t| a_of_k(u, Complex64::new(0.0, t)).map(|a| a.re))
        .collect();
    let vals = vals?;
    let mut roots = Vec::new();
    for i in 0..n_scan {
        if vals[i] == 0.0 || vals[i].signum() != vals[i + 1].signum() {
            let (mut lo, mut hi) = (ts[i], ts[i + 1]);
            let (mut flo, _) = (vals[i], vals[i + 1]);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = a_of_k(u, Complex64::new(0.0, mid))?.re;
                if fm == 0.0 || (hi - lo) < ROOT_TOL {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(Complex64::new(0.0, 0.5 * (lo + hi)));
        }
    }
    Ok(roots)
}

/// Coarse modulus scan off the axis followed by secant refinement.
fn offaxis_roots(
    u: &GridPotential,
    b: SearchBox,
    known: &[Complex64],
) -> Result<Vec<Complex64>> {
    let nx = 24;
    let ny = 16;
    let mut seeds = Vec::new();
    let mut grid_vals = vec![vec![0.0f64; ny + 1]; nx + 1];
    let mut grid_pts = vec![vec![Complex64::default(); ny + 1]; nx + 1];
    let coords: Vec<(usize, usize, Complex64)> = (0..=nx)
        .flat_map(|i| {
            (0..=ny).map(move |j| {
                let re = b.re_min + (b.re_max - b.re_min) * i as f64 / nx as f64;
                let im = b.im_min + (b.im_max - b.im_min) * j as f64 / ny as f64;
                (i, j, Complex64::new(re, im))
            })
        })
        .collect();
    let vals: Result<Vec<f64>> = coords.par_iter().map(|&(_, _, k)| Ok(a_of_k(u, k)?.norm())).collect();
    for ((i, j, k), v) in coords.iter().zip(vals?) {
        grid_vals[*i][*j] = v;
        grid_pts[*i][*j] = *k;
    }
    for i in 1..nx {
        for j in 1..ny {
            let v = grid_vals[i][j];
            if v < grid_vals[i - 1][j]
                && v < grid_vals[i + 1][j]
                && v < grid_vals[i][j - 1]
                && v < grid_vals[i][j + 1]
                && v < 0.5
            {
                seeds.push(grid_pts[i][j]);
            }
        }
    }
    let mut found = Vec::new();
    'seed: for seed in seeds {
        if seed.re.abs() < 0.05 {
            continue; // axis roots already handled
        }
        let mut k0 = seed;
        let mut k1 = seed + Complex64::new(1e-4, 1e-4);
        let mut f0 = a_of_k(u, k0)?;
        let mut f1 = a_of_k(u, k1)?;
        for _ in 0..60 {
            let denom = f1 - f0;
            if denom.norm() == 0.0 {
                continue 'seed;
            }
            let k2 = k1 - f1 * (k1 - k0) / denom;
            if !k2.re.is_finite() || !k2.im.is_finite() {
                continue 'seed;
            }
            if (k2 - k1).norm() < ROOT_TOL {
                let inside = k2.re > b.re_min && k2.re < b.re_max && k2.im > 0.0 && k2.im < b.im_max;
                let duplicate = known.iter().chain(found.iter()).any(|r| (r - k2).norm() < 1e-6);
                if inside && !duplicate {
                    found.push(k2);
                }
                continue 'seed;
            }
            k0 = k1;
            f0 = f1;
            k1 = k2;
            f1 = a_of_k(u, k1)?;
        }
    }
    Ok(found)
}
