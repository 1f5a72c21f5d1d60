use log::debug;

use crate::error::{Error, Result};
use crate::linalg::{dot, inf_norm, is_symmetric, Cholesky, Mat, SingleCholesky, Vector};

use super::csr::Csr;
use super::{QpSettings, QpSolution, QpStatus};

const MAX_CACHED_FACTORS: usize = 4;
const RHO_EXP_RANGE: i32 = 20;

/// Primal and dual starting point for the next solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vector,
    pub y_box: Vector,
    pub y_ineq: Vector,
}

/// Reported to the iteration callback at each residual check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationInfo {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
    /// Lowest objective seen so far among iterates within `tol_p` of
    /// feasibility.
    pub best_objective: Option<f64>,
}

/// ADMM solver in the OSQP mould with constraint matrix `[I; G]`.
///
/// `H` and `G` are fixed at construction; each solve supplies `g`, `h` and
/// the box. The inequality rows are scaled to unit norm internally. The
/// penalty is kept on powers of two so that factorizations of
/// `H + σI + ρ(I + GᵀG)` can be cached and reused across solves.
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    settings: QpSettings,
    hessian: Mat,
    g: Csr,
    row_scale: Vector,
    row_penalty: Vector,
    gram: Mat,
    factors: Vec<(i32, Factor)>,
    factorizations: usize,
    warm: Option<WarmStart>,
}

#[derive(Debug, Clone)]
enum Factor {
    Double(Cholesky),
    Single(SingleCholesky),
}

impl Factor {
    fn solve_mut(&self, x: &mut Vector) {
        match self {
            Factor::Double(c) => c.solve_mut(x),
            Factor::Single(c) => c.solve_mut(x),
        }
    }
}

struct Candidate {
    objective: f64,
    z: Vector,
    primal: f64,
    dual: f64,
    y_box: Vector,
    y_ineq: Vector,
}

impl AdmmSolver {
    pub fn new(hessian: &Mat, ineq_matrix: &Mat, settings: QpSettings) -> Result<Self> {
        settings.check()?;
        let d = hessian.nrows();
        if hessian.ncols() != d || ineq_matrix.ncols() != d {
            return Err(Error::InvalidQp("H and G column counts differ".into()));
        }
        if !is_symmetric(hessian, 1e-12) {
            return Err(Error::InvalidQp("hessian is not symmetric".into()));
        }
        let row_scale = Vector::from_fn(ineq_matrix.nrows(), |i, _| {
            let norm = ineq_matrix.row(i).norm();
            if norm > 0.0 {
                1.0 / norm
            } else {
                1.0
            }
        });
        let g = Csr::from_dense_scaled(ineq_matrix, row_scale.as_slice());
        let gram = g.gram();
        Ok(Self {
            settings,
            hessian: hessian.clone(),
            g,
            row_scale,
            row_penalty: Vector::from_element(ineq_matrix.nrows(), 1.0),
            gram,
            factors: Vec::new(),
            factorizations: 0,
            warm: None,
        })
    }

    /// Multiplies the penalty on each inequality row. Rows that are active
    /// most of the time converge faster with a larger weight.
    pub fn with_row_penalty(mut self, weights: Vector) -> Result<Self> {
        if weights.len() != self.n_ineq() {
            return Err(Error::InvalidQp("row penalty length does not match G".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidQp("row penalties must be positive".into()));
        }
        self.gram = self.g.weighted_gram(weights.as_slice());
        self.row_penalty = weights;
        self.factors.clear();
        Ok(self)
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    pub fn set_settings(&mut self, settings: QpSettings) -> Result<()> {
        settings.check()?;
        if settings.sigma != self.settings.sigma || settings.single_precision != self.settings.single_precision {
            self.factors.clear();
        }
        self.settings = settings;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn n_ineq(&self) -> usize {
        self.g.nrows()
    }

    /// Starting point for the next call to `solve`; consumed by it.
    pub fn set_warm_start(&mut self, warm: Option<WarmStart>) {
        self.warm = warm;
    }

    /// Number of distinct penalty factorizations currently cached.
    pub fn cached_factorizations(&self) -> usize {
        self.factors.len()
    }

    /// Total factorizations performed over the solver's lifetime.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    fn factor(&mut self, exp: i32) -> Result<usize> {
        if let Some(pos) = self.factors.iter().position(|(e, _)| *e == exp) {
            return Ok(pos);
        }
        let rho = 2f64.powi(exp);
        let mut k = &self.gram * rho;
        k += &self.hessian;
        for i in 0..self.dim() {
            k[(i, i)] += self.settings.sigma + rho;
        }
        let chol = Cholesky::new(&k)
            .ok_or_else(|| Error::InvalidQp("linear system is not positive definite; H must be PSD".into()))?;
        debug!("admm: factorized d={} at rho=2^{exp}", self.dim());
        self.factorizations += 1;
        if self.factors.len() == MAX_CACHED_FACTORS {
            self.factors.remove(0);
        }
        let factor = if self.settings.single_precision {
            Factor::Single(SingleCholesky::new(&chol))
        } else {
            Factor::Double(chol)
        };
        self.factors.push((exp, factor));
        Ok(self.factors.len() - 1)
    }

    pub fn solve(&mut self, linear: &Vector, ineq_bound: &Vector, lower: &Vector, upper: &Vector) -> Result<QpSolution> {
        self.solve_with_callback(linear, ineq_bound, lower, upper, &mut |_| {})
    }

    pub fn solve_with_callback(
        &mut self,
        linear: &Vector,
        ineq_bound: &Vector,
        lower: &Vector,
        upper: &Vector,
        callback: &mut dyn FnMut(&IterationInfo),
    ) -> Result<QpSolution> {
        let d = self.dim();
        let m = self.n_ineq();
        if linear.len() != d || lower.len() != d || upper.len() != d || ineq_bound.len() != m {
            return Err(Error::InvalidQp("vector lengths do not match H and G".into()));
        }
        if let Some(i) = (0..d).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidQp(format!("empty box at component {i}")));
        }
        if linear.iter().any(|v| !v.is_finite()) || ineq_bound.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidQp("non-finite data".into()));
        }
        let s = self.settings;
        let alpha = s.relaxation;
        let hs = ineq_bound.component_mul(&self.row_scale);

        let (mut x, mut yb, mut yg) = match self.warm.take() {
            Some(w) if w.x.len() == d && w.y_box.len() == d && w.y_ineq.len() == m => {
                let yg = w.y_ineq.component_div(&self.row_scale).map(|v| v.max(0.0));
                (w.x, w.y_box, yg)
            }
            _ => (Vector::zeros(d), Vector::zeros(d), Vector::zeros(m)),
        };
        let mut zb = Vector::from_fn(d, |i, _| x[i].clamp(lower[i], upper[i]));
        let mut zg = Vector::zeros(m);
        self.g.mul(x.as_slice(), zg.as_mut_slice());
        for j in 0..m {
            zg[j] = zg[j].min(hs[j]);
        }

        let mut exp = (s.rho.log2().round() as i32).clamp(-RHO_EXP_RANGE, RHO_EXP_RANGE);
        let mut slot = self.factor(exp)?;
        let mut last_adapt = 0;
        let mut best: Option<Candidate> = None;

        let mut rhs = Vector::zeros(d);
        let mut gx = Vector::zeros(m);
        let mut tmp_g = Vector::zeros(m);
        let mut prev_yb = yb.clone();
        let mut prev_yg = yg.clone();
        let mut last = None;

        for k in 1..=s.max_iter {
            let rho = 2f64.powi(exp);
            let at_check = k % s.check_interval == 0 || k == s.max_iter;
            if at_check {
                prev_yb.copy_from(&yb);
                prev_yg.copy_from(&yg);
            }
            // x̃ = K⁻¹ (σx - g + ρz_b - y_b + Gᵀ(ρz_g - y_g))
            for i in 0..d {
                rhs[i] = s.sigma * x[i] - linear[i] + rho * zb[i] - yb[i];
            }
            for j in 0..m {
                tmp_g[j] = rho * self.row_penalty[j] * zg[j] - yg[j];
            }
            self.g.mul_t_add(tmp_g.as_slice(), rhs.as_mut_slice());
            self.factors[slot].1.solve_mut(&mut rhs);
            let xt = &rhs;
            self.g.mul(xt.as_slice(), gx.as_mut_slice());

            for i in 0..d {
                x[i] = alpha * xt[i] + (1.0 - alpha) * x[i];
                let zr = alpha * xt[i] + (1.0 - alpha) * zb[i];
                let zn = (zr + yb[i] / rho).clamp(lower[i], upper[i]);
                yb[i] += rho * (zr - zn);
                zb[i] = zn;
            }
            for j in 0..m {
                let rj = rho * self.row_penalty[j];
                let zr = alpha * gx[j] + (1.0 - alpha) * zg[j];
                let zn = (zr + yg[j] / rj).min(hs[j]);
                yg[j] += rj * (zr - zn);
                zg[j] = zn;
            }

            if !at_check {
                continue;
            }
            // the projected split variable sits exactly on active bounds
            let z_star = zb.clone();
            let hz = &self.hessian * &z_star;
            self.g.mul(z_star.as_slice(), tmp_g.as_mut_slice());
            // zg ≤ h and yg > 0 only where zg = h, so this bounds both the
            // violation and the complementarity gap of the inequality rows
            let primal = (0..m)
                .map(|j| (tmp_g[j] - zg[j]).abs() / self.row_scale[j])
                .fold(0.0_f64, f64::max);
            let mut grad = &hz + linear + &yb;
            self.g.mul_t_add(yg.as_slice(), grad.as_mut_slice());
            let dual = inf_norm(&grad);
            let objective = 0.5 * dot(z_star.as_slice(), hz.as_slice()) + dot(linear.as_slice(), z_star.as_slice());
            if primal <= s.tol_p && best.as_ref().is_none_or(|b| objective < b.objective) {
                best = Some(Candidate {
                    objective,
                    z: z_star.clone(),
                    primal,
                    dual,
                    y_box: yb.clone(),
                    y_ineq: yg.component_mul(&self.row_scale),
                });
            }
            callback(&IterationInfo {
                iteration: k,
                objective,
                primal_residual: primal,
                dual_residual: dual,
                rho,
                best_objective: best.as_ref().map(|b| b.objective),
            });

            let finish = |status, z: Vector, objective, primal, dual, y_box: Vector, y_ineq: Vector| QpSolution {
                z_star: z,
                objective,
                status,
                primal_residual: primal,
                dual_residual: dual,
                iterations: k,
                y_box,
                y_ineq,
                rho,
            };
            if primal <= s.tol_p && dual <= s.tol_d {
                let y_ineq = yg.component_mul(&self.row_scale);
                return Ok(finish(QpStatus::Optimal, z_star, objective, primal, dual, yb, y_ineq));
            }
            if s.polish && (k % (s.polish_interval * s.check_interval) == 0 || k == s.max_iter) {
                if let Some(p) = self.polish(linear, &hs, lower, upper, &zb, &yb, &yg, &zg) {
                    if p.primal <= s.tol_p && p.dual <= s.tol_d {
                        return Ok(finish(QpStatus::Optimal, p.z, p.objective, p.primal, p.dual, p.y_box, p.y_ineq));
                    }
                    if p.primal <= s.tol_p && best.as_ref().is_none_or(|b| p.objective < b.objective) {
                        best = Some(p);
                    }
                }
            }
            if self.certifies_infeasibility(&yb, &prev_yb, &yg, &prev_yg, &hs, lower, upper) {
                let y_ineq = yg.component_mul(&self.row_scale);
                return Ok(finish(QpStatus::Infeasible, z_star, objective, primal, dual, yb, y_ineq));
            }
            if s.adaptive_rho && k >= last_adapt + s.adapt_interval {
                last_adapt = k;
                // normalized residuals at the ADMM iterate x
                self.g.mul(x.as_slice(), tmp_g.as_mut_slice());
                let ax = inf_norm(&x).max(inf_norm(&tmp_g));
                let zn = inf_norm(&zb).max(inf_norm(&zg));
                let prim_s = (0..d)
                    .map(|i| (x[i] - zb[i]).abs())
                    .chain((0..m).map(|j| (tmp_g[j] - zg[j]).abs()))
                    .fold(0.0_f64, f64::max);
                let hx = &self.hessian * &x;
                let mut aty = yb.clone();
                self.g.mul_t_add(yg.as_slice(), aty.as_mut_slice());
                let dual_s = inf_norm(&(&hx + linear + &aty));
                let dual_scale = inf_norm(&hx).max(inf_norm(&aty)).max(inf_norm(linear)).max(1e-30);
                let prim_ratio = prim_s / ax.max(zn).max(1e-30);
                let dual_ratio = dual_s / dual_scale;
                if prim_ratio > 0.0 && dual_ratio > 0.0 {
                    let target = rho * (prim_ratio / dual_ratio).sqrt();
                    let new_exp = (target.log2().round() as i32).clamp(-RHO_EXP_RANGE, RHO_EXP_RANGE);
                    if (new_exp - exp).abs() >= 2 {
                        exp = new_exp;
                        slot = self.factor(exp)?;
                    }
                }
            }
            last = Some((z_star, objective, primal, dual));
        }

        let rho = 2f64.powi(exp);
        debug!("admm: hit max_iter={} (d={d}, m={m})", s.max_iter);
        if let Some(b) = best {
            return Ok(QpSolution {
                z_star: b.z,
                objective: b.objective,
                status: QpStatus::MaxIterations,
                primal_residual: b.primal,
                dual_residual: b.dual,
                iterations: s.max_iter,
                y_box: b.y_box,
                y_ineq: b.y_ineq,
                rho,
            });
        }
        let (z, objective, primal, dual) = last.expect("max_iter is a check iteration");
        Ok(QpSolution {
            z_star: z,
            objective,
            status: QpStatus::MaxIterations,
            primal_residual: primal,
            dual_residual: dual,
            iterations: s.max_iter,
            y_box: yb,
            y_ineq: yg.component_mul(&self.row_scale),
            rho,
        })
    }

    /// Active-set refinement of an ADMM iterate.
    ///
    /// Bounds and rows whose multiplier outweighs their slack are taken as
    /// active; the equality-constrained QP on that set is solved through a
    /// regularized KKT system with iterative refinement. The candidate is
    /// clamped to the box and its residuals are recomputed honestly, with
    /// box multipliers restricted to their admissible signs.
    #[allow(clippy::too_many_arguments)]
    fn polish(
        &self,
        linear: &Vector,
        hs: &Vector,
        lower: &Vector,
        upper: &Vector,
        zb: &Vector,
        yb: &Vector,
        yg: &Vector,
        zg: &Vector,
    ) -> Option<Candidate> {
        const DELTA: f64 = 1e-7;
        const REFINE: usize = 10;
        let d = self.dim();
        let m = self.n_ineq();
        let mut base = Vector::zeros(d);
        let mut free = Vec::new();
        for i in 0..d {
            if lower[i].is_finite() && zb[i] - lower[i] < -yb[i] {
                base[i] = lower[i];
            } else if upper[i].is_finite() && upper[i] - zb[i] < yb[i] {
                base[i] = upper[i];
            } else {
                free.push(i);
            }
        }
        let act: Vec<usize> = (0..m).filter(|&j| hs[j] - zg[j] < yg[j]).collect();
        let (nf, na) = (free.len(), act.len());
        let rows: Vec<Vector> = act
            .iter()
            .map(|&j| {
                let mut r = Vector::zeros(d);
                let (c, v) = self.g.row(j);
                for (&col, &val) in c.iter().zip(v) {
                    r[col] = val;
                }
                r
            })
            .collect();
        let hb = &self.hessian * &base;
        let mut k0 = Mat::zeros(nf + na, nf + na);
        let mut rhs = Vector::zeros(nf + na);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                k0[(a, b)] = self.hessian[(i, j)];
            }
            rhs[a] = -linear[i] - hb[i];
        }
        for (r, row) in rows.iter().enumerate() {
            for (a, &i) in free.iter().enumerate() {
                k0[(nf + r, a)] = row[i];
                k0[(a, nf + r)] = row[i];
            }
            rhs[nf + r] = hs[act[r]] - row.dot(&base);
        }
        let mut kd = k0.clone();
        for a in 0..nf {
            kd[(a, a)] += DELTA;
        }
        for r in 0..na {
            kd[(nf + r, nf + r)] -= DELTA;
        }
        let lu = kd.lu();
        let mut sol = Vector::zeros(nf + na);
        for _ in 0..REFINE {
            let res = &rhs - &k0 * &sol;
            if inf_norm(&res) <= 1e-15 * (1.0 + inf_norm(&rhs)) {
                break;
            }
            sol += lu.solve(&res)?;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }

        let mut z = base;
        for (a, &i) in free.iter().enumerate() {
            z[i] = sol[a].clamp(lower[i], upper[i]);
        }
        let mut mu = Vector::zeros(m);
        for (r, &j) in act.iter().enumerate() {
            mu[j] = sol[nf + r].max(0.0);
        }
        let hz = &self.hessian * &z;
        let mut grad = &hz + linear;
        self.g.mul_t_add(mu.as_slice(), grad.as_mut_slice());
        let y_box = Vector::from_fn(d, |i, _| {
            let at_lo = z[i] == lower[i];
            let at_up = z[i] == upper[i];
            match (at_lo, at_up) {
                (true, true) => -grad[i],
                (true, false) => (-grad[i]).min(0.0),
                (false, true) => (-grad[i]).max(0.0),
                (false, false) => 0.0,
            }
        });
        let dual = inf_norm(&(&grad + &y_box));
        let mut gz = Vector::zeros(m);
        self.g.mul(z.as_slice(), gz.as_mut_slice());
        let primal = (0..m)
            .map(|j| (gz[j] - hs[j]) / self.row_scale[j])
            .fold(0.0_f64, f64::max);
        let objective = 0.5 * dot(z.as_slice(), hz.as_slice()) + dot(linear.as_slice(), z.as_slice());
        Some(Candidate {
            objective,
            z,
            primal,
            dual,
            y_box,
            y_ineq: mu.component_mul(&self.row_scale),
        })
    }

    /// Primal infeasibility test on the dual increment `δy`: `Aᵀδy ≈ 0` and
    /// `uᵀδy⁺ + lᵀδy⁻ < 0`.
    #[allow(clippy::too_many_arguments)]
    fn certifies_infeasibility(
        &self,
        yb: &Vector,
        prev_yb: &Vector,
        yg: &Vector,
        prev_yg: &Vector,
        hs: &Vector,
        lower: &Vector,
        upper: &Vector,
    ) -> bool {
        let eps = self.settings.infeasibility_tol;
        let db = yb - prev_yb;
        let dg = yg - prev_yg;
        let norm = inf_norm(&db).max(inf_norm(&dg));
        if norm <= 1e-12 {
            return false;
        }
        let mut aty = db.clone();
        self.g.mul_t_add(dg.as_slice(), aty.as_mut_slice());
        if inf_norm(&aty) > eps * norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..db.len() {
            let v = db[i];
            if v > 0.0 {
                if upper[i].is_infinite() {
                    if v > eps * norm {
                        return false;
                    }
                } else {
                    support += upper[i] * v;
                }
            } else if v < 0.0 {
                if lower[i].is_infinite() {
                    if -v > eps * norm {
                        return false;
                    }
                } else {
                    support += lower[i] * v;
                }
            }
        }
        for j in 0..dg.len() {
            let v = dg[j];
            if v < -eps * norm {
                return false;
            }
            if v > 0.0 {
                if hs[j].is_infinite() {
                    return false;
                }
                support += hs[j] * v;
            }
        }
        support < -eps * norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn warm_start_cuts_iterations_and_factors_are_cached() {
        let d = 6;
        let h = DMatrix::from_fn(d, d, |i, j| if i == j { 2.0 + i as f64 } else { 0.1 });
        let g = DMatrix::from_fn(2, d, |i, j| ((i + j) % 3) as f64 + 0.5);
        let mut solver = AdmmSolver::new(&h, &g, QpSettings::default()).unwrap();
        let lin = DVector::from_fn(d, |i, _| -3.0 + i as f64 * 0.4);
        let hb = DVector::from_vec(vec![1.0, 1.5]);
        let lo = DVector::from_element(d, -1.0);
        let up = DVector::from_element(d, 1.0);
        let cold = solver.solve(&lin, &hb, &lo, &up).unwrap();
        assert_eq!(cold.status, QpStatus::Optimal);
        solver.set_warm_start(Some(WarmStart {
            x: cold.z_star.clone(),
            y_box: cold.y_box.clone(),
            y_ineq: cold.y_ineq.clone(),
        }));
        let warm = solver.solve(&lin, &hb, &lo, &up).unwrap();
        assert_eq!(warm.status, QpStatus::Optimal);
        assert!(warm.iterations <= cold.iterations);
        assert!((warm.z_star - cold.z_star).amax() < 1e-7);
        assert!(solver.cached_factorizations() <= MAX_CACHED_FACTORS);
    }

    #[test]
    fn row_penalty_and_single_precision_keep_the_optimum() {
        let d = 6;
        let h = DMatrix::from_fn(d, d, |i, j| if i == j { 2.0 + i as f64 } else { 0.1 });
        let g = DMatrix::from_fn(2, d, |i, j| ((i + j) % 3) as f64 + 0.5);
        let lin = DVector::from_fn(d, |i, _| -3.0 + i as f64 * 0.4);
        let hb = DVector::from_vec(vec![1.0, 1.5]);
        let lo = DVector::from_element(d, -1.0);
        let up = DVector::from_element(d, 1.0);
        let base = AdmmSolver::new(&h, &g, QpSettings::default()).unwrap().solve(&lin, &hb, &lo, &up).unwrap();
        let mut weighted = AdmmSolver::new(&h, &g, QpSettings::default())
            .unwrap()
            .with_row_penalty(DVector::from_vec(vec![8.0, 0.5]))
            .unwrap();
        let w = weighted.solve(&lin, &hb, &lo, &up).unwrap();
        assert_eq!(w.status, QpStatus::Optimal);
        assert!((&w.z_star - &base.z_star).amax() < 1e-6);
        let loose = QpSettings {
            tol_p: 1e-5,
            tol_d: 1e-5,
            single_precision: true,
            polish: false,
            ..QpSettings::default()
        };
        let s = AdmmSolver::new(&h, &g, loose).unwrap().solve(&lin, &hb, &lo, &up).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((&s.z_star - &base.z_star).amax() < 1e-4);
        assert!(AdmmSolver::new(&h, &g, loose).unwrap().with_row_penalty(DVector::from_vec(vec![1.0, 0.0])).is_err());
    }
}
