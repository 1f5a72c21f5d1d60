use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

use super::QpProblem;

fn block_matrix(out: &mut String, name: &str, m: &Mat) {
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    let _ = writeln!(out, "%%MatrixMarket matrix coordinate real general");
    let _ = writeln!(out, "% block {name}");
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), nnz);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
            }
        }
    }
}

fn block_vector(out: &mut String, name: &str, v: &Vector) {
    let _ = writeln!(out, "%%MatrixMarket matrix array real general");
    let _ = writeln!(out, "% block {name}");
    let _ = writeln!(out, "{} 1", v.len());
    for x in v.iter() {
        let _ = writeln!(out, "{x:e}");
    }
}

/// Plain-text dump of every block of `problem`, one matrix-market section per
/// block (`H`, `g`, `G`, `h`, `lower`, `upper`).
pub fn matrix_market_string(problem: &QpProblem) -> String {
    let mut out = String::new();
    block_matrix(&mut out, "H", &problem.hessian);
    block_vector(&mut out, "g", &problem.linear);
    block_matrix(&mut out, "G", &problem.ineq_matrix);
    block_vector(&mut out, "h", &problem.ineq_bound);
    block_vector(&mut out, "lower", &problem.lower);
    block_vector(&mut out, "upper", &problem.upper);
    out
}

pub fn write_matrix_market(problem: &QpProblem, path: &Path) -> Result<()> {
    std::fs::write(path, matrix_market_string(problem)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn sections_and_counts() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_element(1, 0.5),
            DVector::zeros(2),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let s = matrix_market_string(&p);
        assert_eq!(s.matches("%%MatrixMarket").count(), 6);
        assert!(s.contains("% block H\n2 2 2\n1 1 1e0\n2 2 1e0\n"));
        assert!(s.contains("% block G\n1 2 1\n1 1 1e0\n"));
    }
}
