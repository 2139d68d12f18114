//! Small dense linear algebra: LU with partial pivoting over f64 and
//! Complex64, plus least-squares helpers. Problem sizes here are tiny
//! (soliton kernel matrices) to moderate (Nystrom systems), so naive
//! O(n^3) kernels are fine.

use num_complex::Complex64;

/// Row-major dense complex matrix.
#[derive(Debug, Clone)]
pub struct CMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, data: vec![Complex64::new(0.0, 0.0); n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = CMatrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..other.n_cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.n_cols, v.len());
        (0..self.n_rows)
            .map(|i| (0..self.n_cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n_cols + j]
    }
}

#[derive(Debug, thiserror::Error)]
#[error("singular matrix in LU factorization (pivot {pivot:.3e} at step {step})")]
pub struct SingularMatrix {
    pub step: usize,
    pub pivot: f64,
}

/// LU factorization of a square complex matrix; solves in place.
pub struct CLu {
    lu: CMatrix,
    perm: Vec<usize>,
    pub log_abs_det: f64,
    pub det_phase: Complex64,
}

impl CLu {
    pub fn factor(mut a: CMatrix) -> Result<Self, SingularMatrix> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut log_abs_det = 0.0;
        let mut det_phase = Complex64::new(1.0, 0.0);
        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, a[(r, col)].norm()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            if pivot_abs == 0.0 || !pivot_abs.is_finite() {
                return Err(SingularMatrix { step: col, pivot: pivot_abs });
            }
            if pivot_row != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
                det_phase = -det_phase;
            }
            let pivot = a[(col, col)];
            log_abs_det += pivot.norm().ln();
            det_phase *= pivot / pivot.norm();
            for row in col + 1..n {
                let factor = a[(row, col)] / pivot;
                a[(row, col)] = factor;
                for j in col + 1..n {
                    let sub = factor * a[(col, j)];
                    a[(row, j)] -= sub;
                }
            }
        }
        Ok(Self { lu: a, perm, log_abs_det, det_phase })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.n_rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                let sub = self.lu[(i, j)] * x[j];
                x[i] -= sub;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let sub = self.lu[(i, j)] * x[j];
                x[i] -= sub;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    /// det via accumulated phase and log-magnitude; overflows to inf cleanly.
    pub fn det(&self) -> Complex64 {
        self.det_phase * self.log_abs_det.exp()
    }
}

/// Solve A x = b for complex square A.
pub fn solve_complex(a: CMatrix, b: &[Complex64]) -> Result<Vec<Complex64>, SingularMatrix> {
    Ok(CLu::factor(a)?.solve(b))
}

/// Row-major dense real matrix with LU solve; used by the Nystrom solver.
#[derive(Debug, Clone)]
pub struct RMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl RMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn matmul(&self, other: &RMatrix) -> RMatrix {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = RMatrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self.data[i * self.n_cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * other.n_cols..(k + 1) * other.n_cols];
                let orow = &mut out.data[i * other.n_cols..(i + 1) * other.n_cols];
                for (o, &b) in orow.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.data[i * self.n_cols..(i + 1) * self.n_cols].iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for RMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

pub struct RLu {
    lu: RMatrix,
    perm: Vec<usize>,
}

impl RLu {
    pub fn factor(mut a: RMatrix) -> Result<Self, SingularMatrix> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, a[(r, col)].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            if pivot_abs == 0.0 || !pivot_abs.is_finite() {
                return Err(SingularMatrix { step: col, pivot: pivot_abs });
            }
            if pivot_row != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = a[(col, col)];
            for row in col + 1..n {
                let factor = a[(row, col)] / pivot;
                a[(row, col)] = factor;
                for j in col + 1..n {
                    a[(row, j)] -= factor * a[(col, j)];
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n_rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    /// Crude infinity-norm condition estimate from a few random-ish solves.
    pub fn cond_estimate(&self, a_norm_inf: f64) -> f64 {
        let n = self.lu.n_rows;
        let mut inv_norm: f64 = 0.0;
        let mut seed = 0x2545f4914f6cdd1du64;
        for _ in 0..4 {
            let b: Vec<f64> = (0..n)
                .map(|_| {
                    seed ^= seed << 13;
                    seed ^= seed >> 7;
                    seed ^= seed << 17;
                    if seed & 1 == 0 { 1.0 } else { -1.0 }
                })
                .collect();
            let x = self.solve(&b);
            let xn: f64 = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            inv_norm = inv_norm.max(xn);
        }
        a_norm_inf * inv_norm
    }
}

/// Complex linear least squares min ||A x - b|| via normal equations.
pub fn least_squares(a: &CMatrix, b: &[Complex64]) -> Result<Vec<Complex64>, SingularMatrix> {
    let m = a.n_rows;
    let n = a.n_cols;
    assert_eq!(b.len(), m);
    let mut ata = CMatrix::zeros(n, n);
    let mut atb = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for r in 0..m {
                s += a[(r, i)].conj() * a[(r, j)];
            }
            ata[(i, j)] = s;
        }
        let mut s = Complex64::new(0.0, 0.0);
        for r in 0..m {
            s += a[(r, i)].conj() * b[r];
        }
        atb[i] = s;
    }
    // Tikhonov floor keeps near-rank-deficient fits from blowing up.
    let trace: f64 = (0..n).map(|i| ata[(i, i)].re).sum();
    let eps = 1e-14 * trace.max(1e-300) / n as f64;
    for i in 0..n {
        ata[(i, i)] += eps;
    }
    solve_complex(ata, &atb)
}
