//! Kruskal integrals of the 1-D Dirac operator and their trace-formula
//! counterparts.
//!
//! The densities q_n follow the recursion q_1 = U,
//! q_{j+1} = -i q_j' - 4U sum_{m=1}^{j-1} q_m q_{j-m}, and
//! I_n = integral of U q_n. The same numbers come from the spectral side:
//! I_n = -(1/4 pi) int log(1 - |b|^2) (-2k)^{n-1} dk
//!       + (i 2^{n-2} / n) sum_j (conj(kappa_j)^n - kappa_j^n).

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{self};
use crate::potential::GridPotential;
use crate::scattering::ScatteringReport;
use crate::spectral::SpectralData;

/// Derivative noise in the recursion grows quickly with n.
pub const MAX_ORDER: usize = 8;
/// Imaginary parts of odd-order integrals beyond this are flagged.
pub const REALNESS_TOL: f64 = 1e-10;

/// Kruskal integrals from both routes, with their residuals.
#[derive(Debug, Clone, Serialize)]
pub struct KruskalReport {
    pub n_max: usize,
    /// I_n by quadrature of U q_n.
    pub i: Vec<Complex64>,
    /// I_n from the trace-formula right-hand side.
    pub i_trace: Vec<Complex64>,
    /// |i[n] - i_trace[n]| per order.
    pub residuals: Vec<f64>,
}

impl KruskalReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(*r))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The densities q_1..q_n on the grid of U.
pub fn q_sequence(u: &GridPotential, n: usize) -> Result<Vec<Vec<Complex64>>> {
    if n < 1 {
        return Err(Error::Parameter("q_sequence needs n >= 1".into()));
    }
    if n > MAX_ORDER {
        return Err(Error::Parameter(format!(
            "q_sequence capped at n = {MAX_ORDER}: spectral differentiation noise grows too fast"
        )));
    }
    let len = u.grid.n;
    let mut qs: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    qs.push(u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect());
    for j in 1..n {
        let dq = numeric::fft_derivative_complex(&qs[j - 1], u.grid.dx);
        let mut next: Vec<Complex64> = dq.iter().map(|d| -Complex64::i() * d).collect();
        for m in 1..j {
            // convolution sum q_m q_{j-m} (1-based orders)
            let (qa, qb) = (&qs[m - 1], &qs[j - m - 1]);
            for i in 0..len {
                next[i] -= 4.0 * u.values[i] * qa[i] * qb[i];
            }
        }
        qs.push(next);
    }
    Ok(qs)
}

/// I_n = integral of U q_n over the grid.
pub fn kruskal_integral(u: &GridPotential, n: usize) -> Result<Complex64> {
    let qs = q_sequence(u, n)?;
    let integrand: Vec<Complex64> =
        u.values.iter().zip(&qs[n - 1]).map(|(&v, q)| v * q).collect();
    Ok(numeric::trapezoid_complex(&integrand, u.grid.dx))
}

/// The discrete-spectrum term (i 2^{n-2} / n) sum (conj(kappa)^n - kappa^n).
fn pole_term(poles: &[Complex64], n: usize) -> Complex64 {
    let factor = Complex64::i() * 2f64.powi(n as i32 - 2) / n as f64;
    factor
        * poles
            .iter()
            .map(|k| k.conj().powu(n as u32) - k.powu(n as u32))
            .sum::<Complex64>()
}

/// The continuous-spectrum term -(1/4 pi) int log(1-|b|^2) (-2k)^{n-1} dk,
/// from samples of log(1 - |b(k)|^2) on an ascending k grid.
fn continuum_term(k_grid: &[f64], log_one_minus_b2: &[f64], n: usize) -> Complex64 {
    if k_grid.len() < 2 {
        return Complex64::new(0.0, 0.0);
    }
    let h = k_grid[1] - k_grid[0];
    let integrand: Vec<f64> = k_grid
        .iter()
        .zip(log_one_minus_b2)
        .map(|(&k, &l)| l * (-2.0 * k).powi(n as i32 - 1))
        .collect();
    let val = numeric::trapezoid(&integrand, h);
    Complex64::new(-val / (4.0 * std::f64::consts::PI), 0.0)
}

/// Trace-formula right-hand side from spectral data. A reflection table, if
/// present, contributes through log(1-|b|^2) = -log(1+|R|^2); reflectionless
/// data keeps only the pole sum.
pub fn trace_rhs(data: &SpectralData, n: usize) -> Result<Complex64> {
    check_order(n)?;
    let mut total = pole_term(&data.poles, n);
    if let Some(table) = &data.reflection {
        let ks: Vec<f64> = table.iter().map(|s| s.k).collect();
        let logs: Vec<f64> = table.iter().map(|s| -(1.0 + s.value.norm_sqr()).ln()).collect();
        total += continuum_term(&ks, &logs, n);
    }
    Ok(total)
}

/// Trace-formula right-hand side from a numerical scattering report, using
/// its b(k) samples and discrete spectrum directly.
pub fn trace_rhs_from_report(report: &ScatteringReport, n: usize) -> Result<Complex64> {
    check_order(n)?;
    let logs: Result<Vec<f64>> = report
        .b
        .iter()
        .zip(&report.k_grid)
        .map(|(b, &k)| {
            let one_minus = 1.0 - b.norm_sqr();
            if one_minus <= 0.0 {
                return Err(Error::InvalidData(format!("|b({k})| >= 1 breaks the trace formula")));
            }
            Ok(one_minus.ln())
        })
        .collect();
    let poles: Vec<Complex64> = report.discrete.iter().map(|s| s.kappa).collect();
    Ok(pole_term(&poles, n) + continuum_term(&report.k_grid, &logs?, n))
}

fn check_order(n: usize) -> Result<()> {
    if n < 1 || n > MAX_ORDER {
        return Err(Error::Parameter(format!("trace formula order must be in 1..={MAX_ORDER}")));
    }
    Ok(())
}

/// Evaluate both routes for all orders up to n_max.
pub fn report(u: &GridPotential, data: &SpectralData, n_max: usize) -> Result<KruskalReport> {
    check_order(n_max)?;
    let mut i = Vec::with_capacity(n_max);
    let mut i_trace = Vec::with_capacity(n_max);
    let mut residuals = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let quad = kruskal_integral(u, n)?;
        let trace = trace_rhs(data, n)?;
        if n % 2 == 1 && quad.im.abs() > REALNESS_TOL {
            return Err(Error::Numerical(format!(
                "I_{n} has imaginary part {:.3e} on a real potential",
                quad.im
            )));
        }
        residuals.push((quad - trace).norm());
        i.push(quad);
        i_trace.push(trace);
    }
    Ok(KruskalReport { n_max, i, i_trace, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::UniformGrid;
    use crate::reflectionless;
    use crate::spectral::ReflectionSample;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid() -> UniformGrid {
        UniformGrid::symmetric(20.0, 4096)
    }

    fn u1() -> GridPotential {
        GridPotential::from_fn(grid(), |x| 1.0 / (2.0 * x.cosh()))
    }

    fn one_soliton() -> SpectralData {
        SpectralData::reflectionless(vec![c(0.0, 0.5)], vec![c(1.0, 0.0)])
    }

    #[test]
    fn q_two_is_minus_i_u_prime() {
        let u = u1();
        let qs = q_sequence(&u, 2).unwrap();
        for (i, x) in u.grid.nodes().enumerate().step_by(97) {
            let du = -x.sinh() / (2.0 * x.cosh() * x.cosh());
            assert!((qs[1][i] - c(0.0, -du)).norm() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn q_three_matches_symbolic_form() {
        let u = u1();
        let qs = q_sequence(&u, 3).unwrap();
        for (i, x) in u.grid.nodes().enumerate().step_by(97) {
            if x.abs() > 15.0 {
                continue; // periodic-extension ringing dominates the tails
            }
            // for U = sech(x)/2: U'' = U - 8U^3, so q_3 = -U'' - 4U^3 = 4U^3 - U
            let v = 1.0 / (2.0 * x.cosh());
            let expect = 4.0 * v * v * v - v;
            assert!((qs[2][i] - c(expect, 0.0)).norm() < 1e-7, "x = {x}");
        }
    }

    #[test]
    fn zero_potential_gives_zero_sequence() {
        let u = GridPotential::zero(grid());
        let qs = q_sequence(&u, 4).unwrap();
        assert!(qs.iter().all(|q| q.iter().all(|v| v.norm() == 0.0)));
    }

    #[test]
    fn order_cap_enforced() {
        assert!(q_sequence(&u1(), 9).is_err());
        assert!(trace_rhs(&one_soliton(), 0).is_err());
    }

    #[test]
    fn first_integrals_of_the_round_sphere() {
        let u = u1();
        let i1 = kruskal_integral(&u, 1).unwrap();
        assert_abs_diff_eq!(i1.re, 0.5, epsilon = 1e-9);
        assert!(i1.im.abs() < 1e-12);
        let i2 = kruskal_integral(&u, 2).unwrap();
        assert!(i2.norm() < 1e-10, "I_2 = {i2}");
        let i3 = kruskal_integral(&u, 3).unwrap();
        assert_abs_diff_eq!(i3.re, -1.0 / 6.0, epsilon = 1e-8);
    }

    #[test]
    fn trace_rhs_closed_forms() {
        let d = one_soliton();
        assert!((trace_rhs(&d, 1).unwrap() - 0.5).norm() < 1e-14);
        assert!((trace_rhs(&d, 3).unwrap() + 1.0 / 6.0).norm() < 1e-14);
    }

    #[test]
    fn continuum_term_matches_refined_quadrature() {
        // synthetic |b(k)|^2 = 0.5 e^{-k^2}, no poles
        let table = |n_samples: usize| -> SpectralData {
            let mut d = SpectralData::empty();
            let half = 8.0;
            d.reflection = Some(
                (0..n_samples)
                    .map(|i| {
                        let k = -half + 2.0 * half * i as f64 / (n_samples - 1) as f64;
                        let b2 = 0.5 * (-k * k).exp();
                        // |R|^2 = |b|^2 / (1 - |b|^2)
                        let r = (b2 / (1.0 - b2)).sqrt();
                        ReflectionSample { k, value: c(r, 0.0) }
                    })
                    .collect(),
            );
            d
        };
        let coarse = trace_rhs(&table(2001), 1).unwrap();
        let fine = trace_rhs(&table(20001), 1).unwrap();
        assert!((coarse - fine).norm() < 1e-8, "{coarse} vs {fine}");
    }

    #[test]
    fn trace_formula_matches_quadrature_for_solitons() {
        for n_solitons in 1..=3u32 {
            let data = reflectionless::dirac_sphere_data(n_solitons).unwrap();
            let u = reflectionless::potential_from_data(&data, &grid()).unwrap();
            let rep = report(&u, &data, 4).unwrap();
            assert!(
                rep.max_residual() < 1e-5,
                "N = {n_solitons}: residuals {:?}",
                rep.residuals
            );
        }
    }

    #[test]
    fn integrals_invariant_along_mkdv_orbits() {
        let data = SpectralData::reflectionless(
            vec![c(0.0, 0.5), c(0.0, 1.5)],
            vec![c(2.0, 0.0), c(6.0, 0.0)],
        );
        let base: Vec<Complex64> = {
            let u = reflectionless::potential_from_data(&data, &grid()).unwrap();
            (1..=4).map(|n| kruskal_integral(&u, n).unwrap()).collect()
        };
        for (m, t) in [(1u32, 2.0), (1, -2.0), (2, 0.3)] {
            let flowed = data.mkdv_deform(m, t).unwrap();
            let u = reflectionless::potential_from_data(&flowed, &grid()).unwrap();
            for (n, b) in (1..=4).zip(&base) {
                let i_n = kruskal_integral(&u, n).unwrap();
                assert!(
                    (i_n - b).norm() < 1e-6,
                    "m = {m}, t = {t}, n = {n}: {i_n} vs {b}"
                );
            }
        }
    }

    #[test]
    fn report_serializes_to_json() {
        let data = one_soliton();
        let u = reflectionless::potential_from_data(&data, &grid()).unwrap();
        let rep = report(&u, &data, 3).unwrap();
        let json = rep.to_json();
        assert!(json.contains("\"n_max\": 3"));
        assert!(json.contains("residuals"));
    }

    #[test]
    fn b_at_unit_modulus_rejected() {
        let rep = ScatteringReport {
            k_grid: vec![-1.0, 1.0],
            a: vec![c(0.0, 0.0), c(1.0, 0.0)],
            b: vec![c(1.0, 0.0), c(0.0, 0.0)],
            discrete: vec![],
        };
        assert!(trace_rhs_from_report(&rep, 1).is_err());
    }
}
