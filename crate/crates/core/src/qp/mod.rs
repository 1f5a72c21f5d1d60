//! Dense convex QP solver for `min ½zᵀHz + gᵀz` s.t. `Gz ≤ h`, `lower ≤ z ≤ upper`.

mod admm;
mod csr;
mod dump;

pub use admm::{AdmmSolver, IterationInfo, WarmStart};
pub use dump::{matrix_market_string, write_matrix_market};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: Mat,
    pub linear: Vector,
    pub ineq_matrix: Mat,
    pub ineq_bound: Vector,
    pub lower: Vector,
    pub upper: Vector,
}

impl QpProblem {
    pub fn new(
        hessian: Mat,
        linear: Vector,
        ineq_matrix: Mat,
        ineq_bound: Vector,
        lower: Vector,
        upper: Vector,
    ) -> Result<Self> {
        let p = Self {
            hessian,
            linear,
            ineq_matrix,
            ineq_bound,
            lower,
            upper,
        };
        p.check()?;
        Ok(p)
    }

    /// A problem with box constraints only.
    pub fn boxed(hessian: Mat, linear: Vector, lower: Vector, upper: Vector) -> Result<Self> {
        let d = linear.len();
        Self::new(hessian, linear, Mat::zeros(0, d), Vector::zeros(0), lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_bound.len()
    }

    pub fn check(&self) -> Result<()> {
        let d = self.dim();
        let bad = |what: &str| Err(Error::InvalidQp(what.to_string()));
        if self.hessian.shape() != (d, d) {
            return bad("hessian shape does not match the linear term");
        }
        if self.ineq_matrix.ncols() != d || self.ineq_matrix.nrows() != self.ineq_bound.len() {
            return bad("inequality matrix shape does not match");
        }
        if self.lower.len() != d || self.upper.len() != d {
            return bad("box bounds have the wrong length");
        }
        if !is_symmetric(&self.hessian, 1e-12) {
            return bad("hessian is not symmetric");
        }
        if self.hessian.iter().chain(self.linear.iter()).chain(self.ineq_matrix.iter()).any(|v| !v.is_finite()) {
            return bad("non-finite entry in H, g or G");
        }
        if self.ineq_bound.iter().any(|v| v.is_nan()) {
            return bad("NaN in inequality bound");
        }
        if let Some(i) = (0..d).find(|&i| !(self.lower[i] <= self.upper[i])) {
            return Err(Error::InvalidQp(format!(
                "empty box at component {i}: [{}, {}]",
                self.lower[i], self.upper[i]
            )));
        }
        Ok(())
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

impl fmt::Display for QpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIterations => "max_iterations",
            QpStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpSettings {
    pub tol_p: f64,
    pub tol_d: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Proximal regularization on the linear-solve block.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    pub adaptive_rho: bool,
    /// Minimum number of iterations between penalty updates.
    pub adapt_interval: usize,
    /// Residuals are evaluated every this many iterations.
    pub check_interval: usize,
    pub infeasibility_tol: f64,
    /// Try an active-set refinement of the iterate every `polish_interval`
    /// residual checks. Needs a dense solve of size up to `d + m`.
    pub polish: bool,
    pub polish_interval: usize,
    /// Keep the factorization in single precision. Halves the memory read
    /// per iteration; only sensible with tolerances well above 1e-6.
    pub single_precision: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol_p: 1e-8,
            tol_d: 1e-8,
            max_iter: 50_000,
            rho: 1.0,
            sigma: 1e-8,
            relaxation: 1.6,
            adaptive_rho: true,
            adapt_interval: 25,
            check_interval: 5,
            infeasibility_tol: 1e-6,
            polish: true,
            polish_interval: 20,
            single_precision: false,
        }
    }
}

impl QpSettings {
    pub fn check(&self) -> Result<()> {
        let bad = |name: &str, why: &str| Err(Error::param(name, why));
        if !(self.tol_p > 0.0) {
            return bad("tol_p", "must be positive");
        }
        if !(self.tol_d > 0.0) {
            return bad("tol_d", "must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be at least 1");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho", "must be positive");
        }
        if !(self.sigma > 0.0) {
            return bad("sigma", "must be positive");
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return bad("relaxation", "must lie in (0,2)");
        }
        if self.check_interval == 0 || self.adapt_interval == 0 || self.polish_interval == 0 {
            return bad("check_interval", "intervals must be positive");
        }
        if !(self.infeasibility_tol > 0.0) {
            return bad("infeasibility_tol", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z_star: Vector,
    pub objective: f64,
    pub status: QpStatus,
    /// Largest violation of `Gz ≤ h` at `z_star`. ADMM iterates report the
    /// split residual `‖Gz - z_g‖∞`, which also bounds the complementarity gap.
    pub primal_residual: f64,
    /// `‖Hz + g + y_box + Gᵀy_ineq‖∞` at `z_star`.
    pub dual_residual: f64,
    pub iterations: usize,
    /// Box multipliers (positive at the upper bound, negative at the lower).
    pub y_box: Vector,
    /// Multipliers of `Gz ≤ h`, nonnegative.
    pub y_ineq: Vector,
    pub rho: f64,
}

/// Solves `problem` from a cold start with default settings apart from the
/// given tolerances and iteration cap.
pub fn solve_qp(problem: &QpProblem, tol_p: f64, tol_d: f64, max_iter: usize) -> Result<QpSolution> {
    let settings = QpSettings {
        tol_p,
        tol_d,
        max_iter,
        ..Default::default()
    };
    solve_qp_with(problem, settings)
}

pub fn solve_qp_with(problem: &QpProblem, settings: QpSettings) -> Result<QpSolution> {
    problem.check()?;
    let mut solver = AdmmSolver::new(&problem.hessian, &problem.ineq_matrix, settings)?;
    solver.solve(&problem.linear, &problem.ineq_bound, &problem.lower, &problem.upper)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

/// KKT residuals of `(z, μ)` where `μ` are the multipliers of `Gz ≤ h`.
///
/// Box multipliers are not passed in: at an active bound the stationarity
/// residual only counts the part of `Hz + g + Gᵀμ` with the wrong sign for
/// that bound.
pub fn kkt_residuals(problem: &QpProblem, z: &Vector, duals: &Vector) -> Result<KktResiduals> {
    let d = problem.dim();
    if z.len() != d {
        return Err(Error::Dimension {
            context: "kkt z",
            expected: d,
            got: z.len(),
        });
    }
    if duals.len() != problem.n_ineq() {
        return Err(Error::Dimension {
            context: "kkt duals",
            expected: problem.n_ineq(),
            got: duals.len(),
        });
    }
    let r = &problem.hessian * z + &problem.linear + problem.ineq_matrix.transpose() * duals;
    let mut stationarity = 0.0_f64;
    let mut feasibility = 0.0_f64;
    for i in 0..d {
        let (lo, up) = (problem.lower[i], problem.upper[i]);
        let at_lo = z[i] <= lo + 1e-9 * lo.abs().max(1.0);
        let at_up = z[i] >= up - 1e-9 * up.abs().max(1.0);
        let s = match (at_lo, at_up) {
            (true, true) => 0.0,
            (true, false) => (-r[i]).max(0.0),
            (false, true) => r[i].max(0.0),
            (false, false) => r[i].abs(),
        };
        stationarity = stationarity.max(s);
        feasibility = feasibility.max(lo - z[i]).max(z[i] - up);
    }
    let slack = &problem.ineq_matrix * z - &problem.ineq_bound;
    let mut complementarity = 0.0_f64;
    for j in 0..problem.n_ineq() {
        feasibility = feasibility.max(slack[j]).max(-duals[j]);
        complementarity = complementarity.max((duals[j] * slack[j]).abs());
    }
    Ok(KktResiduals {
        stationarity,
        feasibility: feasibility.max(0.0),
        complementarity,
    })
}

/// Largest violation of `Gz ≤ h` and of the box.
pub fn constraint_violation(problem: &QpProblem, z: &Vector) -> f64 {
    let slack = &problem.ineq_matrix * z - &problem.ineq_bound;
    let box_v = (0..z.len())
        .map(|i| (problem.lower[i] - z[i]).max(z[i] - problem.upper[i]))
        .fold(0.0_f64, f64::max);
    slack.iter().fold(box_v, |a, &s| a.max(s)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn clamped_scalar() {
        // (z-2)² = z² - 4z + 4
        let p = QpProblem::boxed(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -4.0),
            DVector::zeros(1),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let s = solve_qp(&p, 1e-8, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.z_star[0], 1.0);
    }

    #[test]
    fn interior_optimum() {
        let d = 5;
        let p = QpProblem::boxed(
            DMatrix::identity(d, d),
            DVector::zeros(d),
            DVector::from_element(d, -1.0),
            DVector::from_element(d, 1.0),
        )
        .unwrap();
        let s = solve_qp(&p, 1e-8, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.z_star.amax() <= 1e-8);
    }

    #[test]
    fn kkt_examples() {
        let z = DVector::zeros(2);
        let p = QpProblem::boxed(DMatrix::zeros(2, 2), DVector::zeros(2), DVector::from_element(2, -1.0), DVector::from_element(2, 1.0)).unwrap();
        let k = kkt_residuals(&p, &z, &DVector::zeros(0)).unwrap();
        assert_eq!(k.max(), 0.0);
        let k = kkt_residuals(&p, &DVector::from_vec(vec![1.5, 0.0]), &DVector::zeros(0)).unwrap();
        assert!(k.feasibility >= 0.5);
    }

    #[test]
    fn rejects_malformed() {
        let bad = QpProblem::boxed(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
            DVector::zeros(2),
            DVector::from_element(2, 1.0),
        );
        assert!(matches!(bad, Err(Error::InvalidQp(_))));
        let empty_box = QpProblem::boxed(DMatrix::identity(1, 1), DVector::zeros(1), DVector::from_element(1, 1.0), DVector::zeros(1));
        assert!(empty_box.is_err());
    }

    #[test]
    fn detects_infeasibility() {
        // z ≤ -1 with z ∈ [0, 1]
        let p = QpProblem::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, -1.0),
            DVector::zeros(1),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let s = solve_qp(&p, 1e-8, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn iteration_cap_reports_status() {
        let p = QpProblem::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 100.0])),
            DVector::from_vec(vec![-3.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 0.5),
            DVector::from_element(2, -2.0),
            DVector::from_element(2, 2.0),
        )
        .unwrap();
        let settings = QpSettings {
            tol_p: 1e-12,
            tol_d: 1e-12,
            max_iter: 3,
            polish: false,
            ..Default::default()
        };
        let s = solve_qp_with(&p, settings).unwrap();
        assert_eq!(s.status, QpStatus::MaxIterations);
        assert_eq!(s.iterations, 3);
    }
}
