//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    let scale = max_abs(m).max(1.0);
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// `diag(d) * m` without forming the diagonal matrix.
pub fn scale_rows(d: &Vector, m: &Mat) -> Mat {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

pub fn diag(d: &Vector) -> Mat {
    Mat::from_diagonal(d)
}

const BLOCK: usize = 96;

/// Lower Cholesky factor `L` with `L Lᵀ = A`, computed blocked so the bulk of
/// the work runs through nalgebra's gemm.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    /// Returns `None` when `a` is not (numerically) positive definite.
    pub fn new(a: &Mat) -> Option<Self> {
        assert!(a.is_square(), "cholesky of a non-square matrix");
        let n = a.nrows();
        let mut l = a.clone();
        let mut k = 0;
        while k < n {
            let b = BLOCK.min(n - k);
            // diagonal block
            {
                let mut a11 = l.view_mut((k, k), (b, b));
                for j in 0..b {
                    let mut d = a11[(j, j)];
                    for p in 0..j {
                        d -= a11[(j, p)] * a11[(j, p)];
                    }
                    if d.is_nan() || d <= 0.0 {
                        return None;
                    }
                    let d = d.sqrt();
                    a11[(j, j)] = d;
                    for i in (j + 1)..b {
                        let mut s = a11[(i, j)];
                        for p in 0..j {
                            s -= a11[(i, p)] * a11[(j, p)];
                        }
                        a11[(i, j)] = s / d;
                    }
                }
            }
            let rest = n - k - b;
            if rest > 0 {
                // L21 = A21 * L11^{-T}
                let l11 = l.view((k, k), (b, b)).lower_triangle();
                let l11_inv = l11.solve_lower_triangular(&Mat::identity(b, b))?;
                let a21 = l.view((k + b, k), (rest, b)).into_owned();
                let l21 = &a21 * l11_inv.transpose();
                l.view_mut((k + b, k), (rest, b)).copy_from(&l21);
                // A22 -= L21 L21^T
                let l21t = l21.transpose();
                let mut a22 = l.view_mut((k + b, k + b), (rest, rest));
                a22.gemm(-1.0, &l21, &l21t, 1.0);
            }
            k += b;
        }
        l.fill_upper_triangle(0.0, 1);
        Some(Self { l })
    }

    pub fn l(&self) -> &Mat {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `A x = b` in place.
    pub fn solve_mut(&self, x: &mut Vector) {
        let n = self.dim();
        let data = self.l.as_slice();
        let xs = x.as_mut_slice();
        // forward: L y = b, column oriented
        for j in 0..n {
            let col = &data[j * n..(j + 1) * n];
            let xj = xs[j] / col[j];
            xs[j] = xj;
            if xj != 0.0 {
                for (xi, li) in xs[j + 1..].iter_mut().zip(&col[j + 1..]) {
                    *xi -= xj * li;
                }
            }
        }
        // backward: Lᵀ x = y, one dot product per column
        for i in (0..n).rev() {
            let col = &data[i * n..(i + 1) * n];
            let s = xs[i] - dot(&col[i + 1..], &xs[i + 1..]);
            xs[i] = s / col[i];
        }
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        let mut x = b.clone();
        self.solve_mut(&mut x);
        x
    }
}

/// A Cholesky factor rounded to `f32` and packed by columns. Solves read
/// half the memory of the `f64` factor; accumulation stays in `f64`.
#[derive(Debug, Clone)]
pub struct SingleCholesky {
    n: usize,
    /// Column `j` holds rows `j..n`, starting at `start[j]`.
    start: Vec<usize>,
    packed: Vec<f32>,
}

impl SingleCholesky {
    pub fn new(chol: &Cholesky) -> Self {
        let n = chol.dim();
        let data = chol.l.as_slice();
        let mut start = Vec::with_capacity(n);
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            start.push(packed.len());
            packed.extend(data[j * n + j..(j + 1) * n].iter().map(|&v| v as f32));
        }
        Self { n, start, packed }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_mut(&self, x: &mut Vector) {
        let n = self.n;
        let xs = x.as_mut_slice();
        for j in 0..n {
            let col = &self.packed[self.start[j]..self.start[j] + n - j];
            let xj = xs[j] / col[0] as f64;
            xs[j] = xj;
            if xj != 0.0 {
                for (xi, &li) in xs[j + 1..].iter_mut().zip(&col[1..]) {
                    *xi -= xj * li as f64;
                }
            }
        }
        for i in (0..n).rev() {
            let col = &self.packed[self.start[i]..self.start[i] + n - i];
            let s = xs[i] - dot_mixed(&col[1..], &xs[i + 1..]);
            xs[i] = s / col[0] as f64;
        }
    }
}

fn dot_mixed(a: &[f32], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] as f64 * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += *x as f64 * y;
    }
    s
}

/// Dot product with four interleaved accumulators, so the loop vectorizes.
/// The summation order is fixed, hence deterministic.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Exact 1-norm condition number via an explicit inverse; `None` if singular.
pub fn condition_1(m: &Mat) -> Option<f64> {
    let inv = m.clone().try_inverse()?;
    let norm1 = |a: &Mat| {
        a.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    };
    Some(norm1(m) * norm1(&inv))
}
