//! Shared numerical kernels: quadrature rules, an adaptive Runge-Kutta
//! integrator for complex 2-vector systems, spectral differentiation and
//! local polynomial interpolation.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub type C2 = [Complex64; 2];

/// Uniform grid described by its left endpoint, spacing and node count.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(x0: f64, dx: f64, n: usize) -> Self {
        assert!(dx > 0.0 && n >= 2, "degenerate grid");
        Self { x0, dx, n }
    }

    /// Symmetric grid on [-half_width, half_width] with n nodes.
    pub fn symmetric(half_width: f64, n: usize) -> Self {
        let dx = 2.0 * half_width / (n - 1) as f64;
        Self::new(-half_width, dx, n)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + self.dx * i as f64
    }

    pub fn xmax(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.x(i))
    }
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * values[0] + inner + 0.5 * values[values.len() - 1])
}

pub fn trapezoid_complex(values: &[Complex64], h: f64) -> Complex64 {
    if values.len() < 2 {
        return Complex64::new(0.0, 0.0);
    }
    let inner: Complex64 = values[1..values.len() - 1].iter().sum();
    (0.5 * values[0] + inner + 0.5 * values[values.len() - 1]) * h
}

/// Cumulative integral on a uniform grid, Simpson-based.
///
/// Entry i holds the integral from node 0 to node i. Odd offsets are closed
/// with a cubic four-point rule over the last subinterval so the node-to-node
/// jitter stays at O(h^5); differentiating the output therefore does not
/// amplify quadrature noise above the scheme's own O(h^4) bias.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    if n == 3 {
        out[1] = h / 12.0 * (5.0 * values[0] + 8.0 * values[1] - values[2]);
        out[2] = h / 3.0 * (values[0] + 4.0 * values[1] + values[2]);
        return out;
    }
    for i in 1..n {
        if i % 2 == 0 {
            out[i] = out[i - 2] + h / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i]);
        } else if i == 1 {
            // cubic through the first four nodes, integrated over [x0, x1]
            out[1] = h / 24.0 * (9.0 * values[0] + 19.0 * values[1] - 5.0 * values[2] + values[3]);
        } else {
            out[i] = out[i - 1]
                + h / 24.0
                    * (values[i - 3] - 5.0 * values[i - 2] + 19.0 * values[i - 1] + 9.0 * values[i]);
        }
    }
    out
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite Gauss-Legendre nodes/weights over [a, b] with panels of width
/// at most `panel`, `per_panel` nodes each.
pub fn composite_gauss(a: f64, b: f64, panel: f64, per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(per_panel);
    let n_panels = ((b - a) / panel).ceil().max(1.0) as usize;
    let w_panel = (b - a) / n_panels as f64;
    let mut nodes = Vec::with_capacity(n_panels * per_panel);
    let mut weights = Vec::with_capacity(n_panels * per_panel);
    for p in 0..n_panels {
        let lo = a + p as f64 * w_panel;
        let mid = lo + 0.5 * w_panel;
        let half = 0.5 * w_panel;
        for j in 0..per_panel {
            nodes.push(mid + half * gx[j]);
            weights.push(half * gw[j]);
        }
    }
    (nodes, weights)
}

/// Centered cubic Lagrange interpolation on a uniform grid.
pub fn cubic_interp(grid: &UniformGrid, values: &[f64], x: f64) -> f64 {
    debug_assert_eq!(values.len(), grid.n);
    let t = (x - grid.x0) / grid.dx;
    let i = (t.floor() as isize).clamp(1, grid.n as isize - 3) as usize;
    let s = t - i as f64;
    let (y0, y1, y2, y3) = (values[i - 1], values[i], values[i + 1], values[i + 2]);
    // Lagrange basis for nodes at s = -1, 0, 1, 2
    let c0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let c1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let c2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let c3 = (s + 1.0) * s * (s - 1.0) / 6.0;
    c0 * y0 + c1 * y1 + c2 * y2 + c3 * y3
}

/// Quintic (6-point) Lagrange interpolation, used where O(h^4) is not enough.
pub fn quintic_interp(grid: &UniformGrid, values: &[f64], x: f64) -> f64 {
    debug_assert_eq!(values.len(), grid.n);
    let t = (x - grid.x0) / grid.dx;
    let i = (t.floor() as isize).clamp(2, grid.n as isize - 4) as usize;
    let s = t - i as f64;
    let mut acc = 0.0;
    for (m, off) in (-2i64..=3).enumerate() {
        let mut basis = 1.0;
        for other in -2i64..=3 {
            if other != off {
                basis *= (s - other as f64) / (off - other) as f64;
            }
        }
        acc += basis * values[i + m - 2];
    }
    acc
}

const SAFETY: f64 = 0.9;

/// Dormand-Prince 5(4) adaptive integrator for a complex 2-vector system,
/// recording the state at every node of `xs` (monotone, either direction).
pub fn integrate_along<F>(f: F, xs: &[f64], y0: C2, rtol: f64, atol: f64) -> Vec<C2>
where
    F: Fn(f64, C2) -> C2,
{
    let mut out = Vec::with_capacity(xs.len());
    out.push(y0);
    let mut y = y0;
    let mut h_guess = (xs[xs.len() - 1] - xs[0]).signum() * 1e-3;
    for w in xs.windows(2) {
        y = integrate_segment(&f, w[0], w[1], y, rtol, atol, &mut h_guess);
        out.push(y);
    }
    out
}

/// Integrate from a to b (either direction), returning the final state.
pub fn integrate_segment<F>(f: &F, a: f64, b: f64, y0: C2, rtol: f64, atol: f64, h_guess: &mut f64) -> C2
where
    F: Fn(f64, C2) -> C2,
{
    let dir = (b - a).signum();
    if dir == 0.0 {
        return y0;
    }
    let mut x = a;
    let mut y = y0;
    let mut h = h_guess.abs().max(1e-12) * dir;
    let mut k1 = f(x, y);
    loop {
        let remaining = b - x;
        if remaining.abs() < 1e-14 {
            break;
        }
        if (h / remaining).abs() > 1.0 || !h.is_finite() {
            h = remaining;
        }
        let (y_new, err, k_last) = dp_step(f, x, y, h, k1);
        let scale = atol + rtol * norm2(y).max(norm2(y_new));
        let ratio = err / scale;
        if ratio <= 1.0 {
            x += h;
            y = y_new;
            k1 = k_last; // FSAL
            let grow = SAFETY * ratio.powf(-0.2);
            h *= grow.clamp(0.2, 5.0);
            *h_guess = h.abs();
        } else {
            h *= (SAFETY * ratio.powf(-0.2)).clamp(0.1, 1.0);
            if h.abs() < 1e-14 {
                // step collapse; accept to avoid spinning
                x += h;
                y = y_new;
                k1 = f(x, y);
            }
        }
    }
    y
}

fn norm2(y: C2) -> f64 {
    (y[0].norm_sqr() + y[1].norm_sqr()).sqrt()
}

#[allow(clippy::too_many_lines)]
fn dp_step<F>(f: &F, x: f64, y: C2, h: f64, k1: C2) -> (C2, f64, C2)
where
    F: Fn(f64, C2) -> C2,
{
    #[inline]
    fn axpy(y: C2, h: f64, terms: &[(f64, C2)]) -> C2 {
        let mut out = y;
        for &(c, k) in terms {
            out[0] += h * c * k[0];
            out[1] += h * c * k[1];
        }
        out
    }
    let k2 = f(x + 0.2 * h, axpy(y, h, &[(0.2, k1)]));
    let k3 = f(x + 0.3 * h, axpy(y, h, &[(3.0 / 40.0, k1), (9.0 / 40.0, k2)]));
    let k4 = f(
        x + 0.8 * h,
        axpy(y, h, &[(44.0 / 45.0, k1), (-56.0 / 15.0, k2), (32.0 / 9.0, k3)]),
    );
    let k5 = f(
        x + 8.0 / 9.0 * h,
        axpy(
            y,
            h,
            &[
                (19372.0 / 6561.0, k1),
                (-25360.0 / 2187.0, k2),
                (64448.0 / 6561.0, k3),
                (-212.0 / 729.0, k4),
            ],
        ),
    );
    let k6 = f(
        x + h,
        axpy(
            y,
            h,
            &[
                (9017.0 / 3168.0, k1),
                (-355.0 / 33.0, k2),
                (46732.0 / 5247.0, k3),
                (49.0 / 176.0, k4),
                (-5103.0 / 18656.0, k5),
            ],
        ),
    );
    let y5 = axpy(
        y,
        h,
        &[
            (35.0 / 384.0, k1),
            (500.0 / 1113.0, k3),
            (125.0 / 192.0, k4),
            (-2187.0 / 6784.0, k5),
            (11.0 / 84.0, k6),
        ],
    );
    let k7 = f(x + h, y5);
    // embedded 4th order difference
    let e = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let ks = [k1, k2, k3, k4, k5, k6, k7];
    let mut err = [Complex64::new(0.0, 0.0); 2];
    for (c, k) in e.iter().zip(ks.iter()) {
        err[0] += h * c * k[0];
        err[1] += h * c * k[1];
    }
    (y5, norm2(err), k7)
}

/// Spectral derivative of real samples on a uniform grid, treating the data
/// as periodic. Intended for exponentially decaying functions whose values
/// at both ends are below the working tolerance.
pub fn fft_derivative(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let period = n as f64 * dx;
    let two_pi = 2.0 * std::f64::consts::PI;
    for (m, c) in buf.iter_mut().enumerate() {
        let freq = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        // drop the unmatched Nyquist mode for even n
        let k = if n % 2 == 0 && m == n / 2 { 0.0 } else { two_pi * freq / period };
        *c *= Complex64::new(0.0, k);
    }
    ifft.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Spectral derivative of complex periodic samples (period = n * dx).
pub fn fft_derivative_complex(values: &[Complex64], dx: f64) -> Vec<Complex64> {
    let n = values.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf = values.to_vec();
    fft.process(&mut buf);
    let period = n as f64 * dx;
    let two_pi = 2.0 * std::f64::consts::PI;
    for (m, c) in buf.iter_mut().enumerate() {
        let freq = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        let k = if n % 2 == 0 && m == n / 2 { 0.0 } else { two_pi * freq / period };
        *c *= Complex64::new(0.0, k);
    }
    ifft.process(&mut buf);
    buf.iter_mut().for_each(|c| *c /= n as f64);
    buf
}

/// Least-squares straight line fit y = a + b x; returns (a, b, max_residual).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let a = (sy * sxx - sx * sxy) / det;
    let b = (n * sxy - sx * sy) / det;
    let max_res = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a - b * x).abs())
        .fold(0.0, f64::max);
    (a, b, max_res)
}
