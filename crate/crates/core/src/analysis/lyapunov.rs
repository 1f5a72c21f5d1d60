use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, max_abs, Cholesky, Mat};
use crate::network::{spectral_radius, SPECTRAL_MAX_ITER, SPECTRAL_TOL};

/// Stop doubling once an increment is this small (max-abs entry).
pub const LYAPUNOV_INCREMENT_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 64;

/// Solution `P` of `AᵀPA - P = -Q` with its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub p_matrix: Mat,
    /// `‖AᵀPA - P + Q‖max`.
    pub residual: f64,
    pub doubling_steps: usize,
}

impl LyapunovCertificate {
    fn half(&self) -> usize {
        self.p_matrix.nrows() / 2
    }

    /// Upper-left block, weighting `1 - x`.
    pub fn p11(&self) -> Mat {
        let n = self.half();
        self.p_matrix.view((0, 0), (n, n)).into_owned()
    }

    /// Lower-right block, weighting the memory trace.
    pub fn p22(&self) -> Mat {
        let n = self.half();
        self.p_matrix.view((n, n), (n, n)).into_owned()
    }

    /// Off-diagonal block coupling the two.
    pub fn p12(&self) -> Mat {
        let n = self.half();
        self.p_matrix.view((0, n), (n, n)).into_owned()
    }
}

/// `P = Σ_k (Aᵀ)^k Q A^k` by doubling: `P ← P + AᵀPA`, `A ← A²`.
pub fn solve_discrete_lyapunov(a: &Mat, q: &Mat) -> Result<LyapunovCertificate> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::Dimension {
            context: "lyapunov A (square)",
            expected: m,
            got: a.ncols(),
        });
    }
    if q.shape() != (m, m) {
        return Err(Error::Dimension {
            context: "lyapunov Q",
            expected: m,
            got: q.nrows(),
        });
    }
    if !is_symmetric(q, 1e-12) {
        return Err(Error::NotSymmetric("Q"));
    }
    if Cholesky::new(q).is_none() {
        return Err(Error::NotPositiveDefinite("Q"));
    }
    // Power iteration need not settle for matrices with complex dominant
    // eigenvalues; then the doubling itself detects instability by diverging.
    let radius = match spectral_radius(a, SPECTRAL_TOL, SPECTRAL_MAX_ITER) {
        Ok(r) if r >= 1.0 => return Err(Error::NotSchurStable { radius: r }),
        Ok(r) => r,
        Err(Error::NoConvergence { last_estimate, .. }) => last_estimate,
        Err(e) => return Err(e),
    };

    let mut p = q.clone();
    let mut ak = a.clone();
    let mut steps = 0;
    loop {
        if steps == MAX_DOUBLINGS {
            return Err(Error::NotSchurStable { radius });
        }
        let inc = ak.transpose() * &p * &ak;
        let size = max_abs(&inc);
        if !size.is_finite() {
            return Err(Error::NotSchurStable { radius });
        }
        p += inc;
        steps += 1;
        if size <= LYAPUNOV_INCREMENT_TOL {
            break;
        }
        ak = &ak * &ak;
    }
    let p = (&p + p.transpose()) * 0.5;
    let residual = max_abs(&(a.transpose() * &p * a - &p + q));
    if residual > RESIDUAL_TOL {
        return Err(Error::LyapunovResidual(residual));
    }
    if Cholesky::new(&p).is_none() {
        return Err(Error::NotPositiveDefinite("P_L"));
    }
    Ok(LyapunovCertificate {
        p_matrix: p,
        residual,
        doubling_steps: steps,
    })
}
