use crate::linalg::Mat;

/// Compressed sparse rows, built from a dense matrix by dropping exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Csr {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// `diag(scale) * m`.
    pub fn from_dense_scaled(m: &Mat, scale: &[f64]) -> Self {
        let (nrows, ncols) = m.shape();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v * scale[i]);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// `out = M x`.
    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows) {
            let (c, v) = self.row(i);
            *o = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    /// `out += Mᵀ y`.
    pub fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate().take(self.nrows) {
            if yi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                out[j] += a * yi;
            }
        }
    }

    /// Dense `MᵀM`.
    pub fn gram(&self) -> Mat {
        self.weighted_gram(&vec![1.0; self.nrows])
    }

    /// Dense `Mᵀ diag(w) M`.
    pub fn weighted_gram(&self, w: &[f64]) -> Mat {
        let mut g = Mat::zeros(self.ncols, self.ncols);
        for (i, &wi) in w.iter().enumerate().take(self.nrows) {
            let (c, v) = self.row(i);
            for (&q, &b) in c.iter().zip(v) {
                let wb = wi * b;
                let mut col = g.column_mut(q);
                for (&p, &a) in c.iter().zip(v) {
                    col[p] += a * wb;
                }
            }
        }
        g
    }
}
