use std::path::PathBuf;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::analysis::{solve_discrete_lyapunov, LyapunovCertificate};
use crate::budget::BudgetLedger;
use crate::dynamics::{
    assemble_augmented, long_term_headroom, short_term_headroom, AugmentedModel, DecisionContext, IncentiveInput,
    MemoryKernel, Policy, SimState,
};
use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, Cholesky, Mat, Vector};
use crate::network::InfluenceNetwork;
use crate::qp::{write_matrix_market, AdmmSolver, QpProblem, QpSettings, QpSolution, QpStatus, WarmStart};

/// Penalty multiplier on the budget rows, which couple every input and are
/// active for most of a run.
const BUDGET_ROW_PENALTY: f64 = 8.0;

/// How the per-stage budget rows are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetRule {
    /// Planned spend through each stage stays within `U(t)`.
    #[default]
    Cumulative,
    /// `u$(h) ≤ U(t) - u$(h-1)` with `u$` cumulative, as printed.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub q_weight: Mat,
    pub r1_weight: Mat,
    pub r2_weight: Mat,
    /// `2n × 2n` weight of the terminal Lyapunov equation.
    pub q_terminal: Mat,
    pub budget_rule: BudgetRule,
    pub solver: QpSettings,
}

impl MpcConfig {
    /// `L = 10`, `Q = 100I`, `R₁ = R₂ = 10I`, `Q_L = I`.
    pub fn standard(n: usize) -> Self {
        Self {
            horizon: 10,
            q_weight: Mat::identity(n, n) * 100.0,
            r1_weight: Mat::identity(n, n) * 10.0,
            r2_weight: Mat::identity(n, n) * 10.0,
            q_terminal: Mat::identity(2 * n, 2 * n),
            budget_rule: BudgetRule::Cumulative,
            solver: Self::default_solver(),
        }
    }

    /// Solver settings for the receding-horizon problems. The objective is
    /// normalized before solving, so the dual tolerance is relative to the
    /// largest curvature. Applied inputs are projected afterwards, so
    /// moderate accuracy suffices.
    pub fn default_solver() -> QpSettings {
        QpSettings {
            tol_p: 1e-3,
            tol_d: 1e-2,
            max_iter: 4000,
            rho: 16.0,
            check_interval: 10,
            polish: false,
            single_precision: true,
            ..QpSettings::default()
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("mpc.horizon", "L must be at least 1"));
        }
        for (name, m, size) in [
            ("mpc.q", &self.q_weight, n),
            ("mpc.r1", &self.r1_weight, n),
            ("mpc.r2", &self.r2_weight, n),
            ("mpc.q_terminal", &self.q_terminal, 2 * n),
        ] {
            if m.shape() != (size, size) {
                return Err(Error::param(name, format!("expected {size}x{size}, got {}x{}", m.nrows(), m.ncols())));
            }
            if !is_symmetric(m, 1e-12) {
                return Err(Error::param(name, "not symmetric"));
            }
            if Cholesky::new(m).is_none() {
                return Err(Error::param(name, "not positive definite"));
            }
        }
        self.solver.check()
    }
}

/// Lyapunov solution for the terminal weight `P_L` of the augmented model.
pub fn terminal_cost(aug: &AugmentedModel, q_terminal: &Mat) -> Result<LyapunovCertificate> {
    solve_discrete_lyapunov(&aug.a_aug, q_terminal)
}

/// `V_f = ‖1-x‖²_{P11} + ‖u_mem‖²_{P22} + 2(1-x)ᵀP12 u_mem`.
pub fn terminal_value(cert: &LyapunovCertificate, x: &Vector, u_mem: &Vector) -> f64 {
    let e = x.map(|v| 1.0 - v);
    let (p11, p22, p12) = (cert.p11(), cert.p22(), cert.p12());
    e.dot(&(&p11 * &e)) + u_mem.dot(&(&p22 * u_mem)) + 2.0 * e.dot(&(&p12 * u_mem))
}

/// A receding-horizon plan and its predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySchedule {
    /// Row `h` is `u^s_{|t}(h)`.
    pub u_s_plan: Mat,
    pub u_l_plan: Mat,
    /// Rows `0..=L`.
    pub predicted_x: Mat,
    pub predicted_u_mem: Mat,
    /// Spend of each planned stage.
    pub planned_spend: Vector,
}

/// Condensed prediction model for one network, kernel, weight set and `α`.
///
/// Decisions are stacked as `z = [u^s(0); …; u^s(L-1); u^ℓ(0); …; u^ℓ(L-1)]`.
/// The augmented state obeys `s(h) = f_h + Σ_{k<h} A^{h-1-k}(B_s u^s(k) +
/// B_ℓ u^ℓ(k))`, where `f_h` is the free response from `s(0)`. The cost is
/// written as `‖c(s0) + W z‖² + zᵀ R z` plus the constant stage-0 term, so
/// the Hessian and the constraint matrix depend only on the model and only
/// the linear term and the bounds change from step to step.
#[derive(Debug, Clone)]
pub struct MpcModel {
    n: usize,
    horizon: usize,
    alpha: f64,
    rule: BudgetRule,
    kernel: MemoryKernel,
    aug: AugmentedModel,
    u_o: Vector,
    rho: Vector,
    terminal: LyapunovCertificate,
    q_weight: Mat,
    r1_weight: Mat,
    r2_weight: Mat,
    /// `A^j B_s` and `A^j B_ℓ` for `j < L`.
    resp_s: Vec<Mat>,
    resp_l: Vec<Mat>,
    /// `Lqᵀ` and `Lpᵀ` from the Cholesky factors of `Q` and `P_L`.
    q_root_t: Mat,
    p_root_t: Mat,
    w: Mat,
    hessian: Mat,
    ineq_matrix: Mat,
}

impl MpcModel {
    pub fn new(net: &InfluenceNetwork, kernel: &MemoryKernel, cfg: &MpcConfig, alpha: f64) -> Result<Self> {
        let n = net.n_agents();
        cfg.check(n)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", format!("{alpha} outside [0,1]")));
        }
        let aug = assemble_augmented(net, kernel)?;
        let terminal = terminal_cost(&aug, &cfg.q_terminal)?;
        let l = cfg.horizon;
        let d = 2 * n * l;

        let mut resp_s = Vec::with_capacity(l);
        let mut resp_l = Vec::with_capacity(l);
        resp_s.push(aug.b_s.clone());
        resp_l.push(aug.b_l.clone());
        for j in 1..l {
            resp_s.push(&aug.a_aug * &resp_s[j - 1]);
            resp_l.push(&aug.a_aug * &resp_l[j - 1]);
        }

        let q_root_t = Cholesky::new(&cfg.q_weight)
            .ok_or(Error::NotPositiveDefinite("Q"))?
            .l()
            .transpose();
        let p_root_t = Cholesky::new(&terminal.p_matrix)
            .ok_or(Error::NotPositiveDefinite("P_L"))?
            .l()
            .transpose();

        // residual rows: stages 1..L-1 weighted by Q, then the terminal block
        let rows = n * (l - 1) + 2 * n;
        let mut w = Mat::zeros(rows, d);
        // terminal deviations are [1 - x; u_mem]
        let flip = |m: &Mat| {
            let mut f = m.clone();
            f.rows_mut(0, n).neg_mut();
            f
        };
        for j in 0..l {
            // stage h = k + 1 + j sees input k through A^j
            let stage_s = -(&q_root_t * resp_s[j].rows(0, n));
            let stage_l = -(&q_root_t * resp_l[j].rows(0, n));
            let term_s = &p_root_t * flip(&resp_s[j]);
            let term_l = &p_root_t * flip(&resp_l[j]);
            for k in 0..l {
                let h = k + 1 + j;
                if h < l {
                    let r = (h - 1) * n;
                    w.view_mut((r, k * n), (n, n)).copy_from(&stage_s);
                    w.view_mut((r, (l + k) * n), (n, n)).copy_from(&stage_l);
                } else if h == l {
                    let r = (l - 1) * n;
                    w.view_mut((r, k * n), (2 * n, n)).copy_from(&term_s);
                    w.view_mut((r, (l + k) * n), (2 * n, n)).copy_from(&term_l);
                }
            }
        }
        let mut hessian = w.transpose() * &w;
        for k in 0..l {
            let mut b = hessian.view_mut((k * n, k * n), (n, n));
            b += &cfg.r1_weight;
            let mut b = hessian.view_mut(((l + k) * n, (l + k) * n), (n, n));
            b += &cfg.r2_weight;
        }
        hessian *= 2.0;
        // exact symmetry for the solver's check
        let hessian = (&hessian + hessian.transpose()) * 0.5;

        let rho = net.persistence().clone();
        let mut g = Mat::zeros(n * l + l, d);
        for h in 0..l {
            for i in 0..n {
                let r = h * n + i;
                g[(r, h * n + i)] = 1.0 - rho[i];
                for k in 0..h {
                    let coef = rho[i] * resp_l[h - 1 - k][(n + i, i)];
                    if coef != 0.0 {
                        g[(r, (l + k) * n + i)] = coef;
                    }
                }
            }
            let r = n * l + h;
            for k in 0..=h {
                let mult = if cfg.budget_rule == BudgetRule::Literal && k < h { 2.0 } else { 1.0 };
                for i in 0..n {
                    g[(r, k * n + i)] = mult * alpha;
                    g[(r, (l + k) * n + i)] = mult * (1.0 - alpha);
                }
            }
        }

        Ok(Self {
            n,
            horizon: l,
            alpha,
            rule: cfg.budget_rule,
            kernel: *kernel,
            aug,
            u_o: net.inherent_bias().clone(),
            rho,
            terminal,
            q_weight: cfg.q_weight.clone(),
            r1_weight: cfg.r1_weight.clone(),
            r2_weight: cfg.r2_weight.clone(),
            resp_s,
            resp_l,
            q_root_t,
            p_root_t,
            w,
            hessian,
            ineq_matrix: g,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn budget_rule(&self) -> BudgetRule {
        self.rule
    }

    /// Decision dimension `2nL`.
    pub fn dim(&self) -> usize {
        2 * self.n * self.horizon
    }

    pub fn terminal(&self) -> &LyapunovCertificate {
        &self.terminal
    }

    pub fn augmented(&self) -> &AugmentedModel {
        &self.aug
    }

    /// Hessian of the condensed cost `½zᵀHz + gᵀz + const`.
    pub fn hessian(&self) -> &Mat {
        &self.hessian
    }

    /// headroom rows (`nL`, stage-major) followed by the `L` budget rows.
    pub fn ineq_matrix(&self) -> &Mat {
        &self.ineq_matrix
    }

    fn check_state(&self, state: &SimState) -> Result<()> {
        for (what, v) in [("state.x", &state.x), ("state.u_mem", &state.u_mem)] {
            if v.len() != self.n {
                return Err(Error::Dimension {
                    context: what,
                    expected: self.n,
                    got: v.len(),
                });
            }
            if v.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                return Err(Error::param(what, "components must lie in [0,1]"));
            }
        }
        Ok(())
    }

    /// Free response `f_0..f_L` of the augmented state.
    fn free_response(&self, s0: &Vector) -> Vec<Vector> {
        let c = &self.aug.b_o * &self.u_o;
        let mut out = Vec::with_capacity(self.horizon + 1);
        out.push(s0.clone());
        for h in 0..self.horizon {
            out.push(&self.aug.a_aug * &out[h] + &c);
        }
        out
    }

    /// `c(s0)` such that the weighted deviations are `c + Wz`.
    fn offset(&self, free: &[Vector]) -> Vector {
        let (n, l) = (self.n, self.horizon);
        let mut c = Vector::zeros(self.w.nrows());
        for (h, fh) in free.iter().enumerate().take(l).skip(1) {
            let e = fh.rows(0, n).map(|v| 1.0 - v);
            c.rows_mut((h - 1) * n, n).copy_from(&(&self.q_root_t * e));
        }
        let fl = &free[l];
        let e = Vector::from_fn(2 * n, |i, _| if i < n { 1.0 - fl[i] } else { fl[i] });
        c.rows_mut((l - 1) * n, 2 * n).copy_from(&(&self.p_root_t * e));
        c
    }

    /// Linear term of the condensed cost at `state`.
    pub fn linear_term(&self, state: &SimState) -> Result<Vector> {
        self.check_state(state)?;
        let s0 = AugmentedModel::stack(&state.x, &state.u_mem);
        let c = self.offset(&self.free_response(&s0));
        Ok(self.w.tr_mul(&c) * 2.0)
    }

    /// Constant part of the condensed cost, so that `½zᵀHz + gᵀz + k = J(z)`.
    pub fn cost_offset(&self, state: &SimState) -> Result<f64> {
        self.check_state(state)?;
        let s0 = AugmentedModel::stack(&state.x, &state.u_mem);
        let c = self.offset(&self.free_response(&s0));
        let e0 = state.x.map(|v| 1.0 - v);
        Ok(c.norm_squared() + e0.dot(&(&self.q_weight * &e0)))
    }

    /// Right-hand sides of the headroom rows and the budget rows.
    pub fn ineq_bound(&self, state: &SimState, remaining: f64) -> Result<Vector> {
        self.check_state(state)?;
        if !(remaining >= 0.0) {
            return Err(Error::param("remaining", format!("U(t) = {remaining} must be nonnegative")));
        }
        let (n, l) = (self.n, self.horizon);
        let s0 = AugmentedModel::stack(&state.x, &state.u_mem);
        let free = self.free_response(&s0);
        let mut h = Vector::from_element(n * l + l, remaining);
        for (stage, f) in free.iter().take(l).enumerate() {
            for i in 0..n {
                h[stage * n + i] = 1.0 - self.u_o[i] - self.rho[i] * f[n + i];
            }
        }
        Ok(h)
    }

    /// The full QP at `state` with `U(t) = remaining`.
    pub fn problem(&self, state: &SimState, remaining: f64) -> Result<QpProblem> {
        let d = self.dim();
        QpProblem::new(
            self.hessian.clone(),
            self.linear_term(state)?,
            self.ineq_matrix.clone(),
            self.ineq_bound(state, remaining)?,
            Vector::zeros(d),
            Vector::from_element(d, 1.0),
        )
    }

    fn split(&self, z: &Vector, h: usize) -> (Vector, Vector) {
        let n = self.n;
        (
            z.rows(h * n, n).into_owned(),
            z.rows((self.horizon + h) * n, n).into_owned(),
        )
    }

    /// Predicted augmented states `s(0..=L)` through the condensed maps.
    pub fn predict(&self, state: &SimState, z: &Vector) -> Result<Vec<Vector>> {
        self.check_state(state)?;
        if z.len() != self.dim() {
            return Err(Error::Dimension {
                context: "plan length",
                expected: self.dim(),
                got: z.len(),
            });
        }
        let s0 = AugmentedModel::stack(&state.x, &state.u_mem);
        let mut out = self.free_response(&s0);
        for (h, s) in out.iter_mut().enumerate().skip(1) {
            for k in 0..h {
                let (us, ul) = self.split(z, k);
                s.gemv(1.0, &self.resp_s[h - 1 - k], &us, 1.0);
                s.gemv(1.0, &self.resp_l[h - 1 - k], &ul, 1.0);
            }
        }
        Ok(out)
    }

    /// `J(z)` evaluated directly on the predicted trajectory.
    pub fn cost(&self, state: &SimState, z: &Vector) -> Result<f64> {
        let n = self.n;
        let states = self.predict(state, z)?;
        let mut j = 0.0;
        for (h, s) in states.iter().take(self.horizon).enumerate() {
            let e = s.rows(0, n).map(|v| 1.0 - v);
            let (us, ul) = self.split(z, h);
            j += e.dot(&(&self.q_weight * &e)) + us.dot(&(&self.r1_weight * &us)) + ul.dot(&(&self.r2_weight * &ul));
        }
        let last = &states[self.horizon];
        let x = last.rows(0, n).into_owned();
        let m = last.rows(n, n).into_owned();
        Ok(j + terminal_value(&self.terminal, &x, &m))
    }

    /// Stacks a constant plan held over the whole horizon.
    pub fn constant_plan(&self, u_s: &Vector, u_l: &Vector) -> Vector {
        let (n, l) = (self.n, self.horizon);
        Vector::from_fn(self.dim(), |r, _| if r < n * l { u_s[r % n] } else { u_l[r % n] })
    }

    /// Plan matrices and predictions for `z`.
    pub fn schedule(&self, state: &SimState, z: &Vector) -> Result<PolicySchedule> {
        let (n, l) = (self.n, self.horizon);
        let states = self.predict(state, z)?;
        let mut s = PolicySchedule {
            u_s_plan: Mat::zeros(l, n),
            u_l_plan: Mat::zeros(l, n),
            predicted_x: Mat::zeros(l + 1, n),
            predicted_u_mem: Mat::zeros(l + 1, n),
            planned_spend: Vector::zeros(l),
        };
        for h in 0..l {
            let (us, ul) = self.split(z, h);
            s.u_s_plan.row_mut(h).copy_from(&us.transpose());
            s.u_l_plan.row_mut(h).copy_from(&ul.transpose());
            s.planned_spend[h] = self.alpha * us.sum() + (1.0 - self.alpha) * ul.sum();
        }
        for (h, st) in states.iter().enumerate() {
            s.predicted_x.row_mut(h).copy_from(&st.rows(0, n).transpose());
            s.predicted_u_mem.row_mut(h).copy_from(&st.rows(n, n).transpose());
        }
        Ok(s)
    }
}

/// Assembles the condensed QP for one receding-horizon step.
pub fn assemble_mpc_qp(
    state_estimate: &SimState,
    net: &InfluenceNetwork,
    kernel: &MemoryKernel,
    cfg: &MpcConfig,
    remaining: f64,
    alpha: f64,
) -> Result<QpProblem> {
    MpcModel::new(net, kernel, cfg, alpha)?.problem(state_estimate, remaining)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: usize,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `J` at the returned plan.
    pub objective: f64,
    /// Largest change made when projecting the first stage onto the true
    /// headroom and the remaining budget.
    pub projection: f64,
    /// The solver produced no usable plan and zero input was applied.
    pub zero_fallback: bool,
    /// Matrix factorizations so far in this run.
    pub factorizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcOutcome {
    pub applied: IncentiveInput,
    pub schedule: PolicySchedule,
    pub diagnostics: StepDiagnostics,
}

/// Receding-horizon controller with its QP factorizations cached for a run.
#[derive(Debug, Clone)]
pub struct MpcController {
    model: MpcModel,
    solver: AdmmSolver,
    /// Objective normalization applied before solving.
    scale: f64,
    previous: Option<QpSolution>,
    history: Vec<StepDiagnostics>,
    dump_dir: Option<PathBuf>,
    tol_p: f64,
}

impl MpcController {
    pub fn new(net: &InfluenceNetwork, kernel: &MemoryKernel, cfg: &MpcConfig, alpha: f64) -> Result<Self> {
        let model = MpcModel::new(net, kernel, cfg, alpha)?;
        let peak = (0..model.dim()).map(|i| model.hessian[(i, i)]).fold(0.0_f64, f64::max);
        let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
        let rows = model.ineq_matrix.nrows();
        let design_rows = model.n_agents() * model.horizon();
        let weights = Vector::from_fn(rows, |j, _| if j < design_rows { 1.0 } else { BUDGET_ROW_PENALTY });
        let solver =
            AdmmSolver::new(&(&model.hessian * scale), &model.ineq_matrix, cfg.solver)?.with_row_penalty(weights)?;
        Ok(Self {
            model,
            solver,
            scale,
            previous: None,
            history: Vec::new(),
            dump_dir: None,
            tol_p: cfg.solver.tol_p,
        })
    }

    /// Writes each step's QP in Matrix Market form under `dir`.
    pub fn with_qp_dump(mut self, dir: PathBuf) -> Self {
        self.dump_dir = Some(dir);
        self
    }

    pub fn model(&self) -> &MpcModel {
        &self.model
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.history
    }

    /// Warm start from the previous plan shifted by one stage.
    fn shifted_warm_start(&self) -> Option<WarmStart> {
        let prev = self.previous.as_ref()?;
        let (n, l) = (self.model.n, self.model.horizon);
        let shift = |v: &Vector, blocks: usize| {
            let mut out = Vector::zeros(v.len());
            for b in 0..blocks {
                for s in 0..l - 1 {
                    let src = (b * l + s + 1) * n;
                    let dst = (b * l + s) * n;
                    out.rows_mut(dst, n).copy_from(&v.rows(src, n));
                }
            }
            out
        };
        let x = shift(&prev.z_star, 2);
        let y_box = shift(&prev.y_box, 2);
        let mut y_ineq = Vector::zeros(prev.y_ineq.len());
        y_ineq.rows_mut(0, n * l).copy_from(&shift(&prev.y_ineq.rows(0, n * l).into_owned(), 1));
        for h in 0..l - 1 {
            y_ineq[n * l + h] = prev.y_ineq[n * l + h + 1];
        }
        Some(WarmStart { x, y_box, y_ineq })
    }

    /// Plans from `state` (estimated inclinations, true memory) with
    /// `U(t) = remaining` and returns the projected first-stage input.
    pub fn plan(&mut self, state: &SimState, remaining: f64) -> Result<MpcOutcome> {
        let (n, d) = (self.model.n, self.model.dim());
        let remaining = remaining.max(0.0);
        let linear = self.model.linear_term(state)? * self.scale;
        let bound = self.model.ineq_bound(state, remaining)?;
        let lower = Vector::zeros(d);
        let upper = Vector::from_element(d, 1.0);
        if let Some(dir) = &self.dump_dir {
            let p = QpProblem::new(
                &self.model.hessian * self.scale,
                linear.clone(),
                self.model.ineq_matrix.clone(),
                bound.clone(),
                lower.clone(),
                upper.clone(),
            )?;
            write_matrix_market(&p, &dir.join(format!("qp_t{:03}.mtx", state.t)))?;
        }
        self.solver.set_warm_start(self.shifted_warm_start());
        let sol = self.solver.solve(&linear, &bound, &lower, &upper)?;
        debug!(
            "mpc t={}: {} after {} iterations (primal {:.2e}, dual {:.2e})",
            state.t, sol.status, sol.iterations, sol.primal_residual, sol.dual_residual
        );
        let usable = match sol.status {
            QpStatus::Optimal => true,
            QpStatus::Infeasible => return Err(Error::QpInfeasible { step: state.t }),
            QpStatus::MaxIterations => {
                let ok = sol.primal_residual <= self.tol_p;
                warn!(
                    "mpc t={}: iteration cap reached (primal {:.2e}, dual {:.2e}); {}",
                    state.t,
                    sol.primal_residual,
                    sol.dual_residual,
                    if ok { "applying best feasible iterate" } else { "applying zero input" }
                );
                ok
            }
        };
        let z = if usable { sol.z_star.clone() } else { Vector::zeros(d) };
        let schedule = self.model.schedule(state, &z)?;
        let objective = self.model.cost(state, &z)?;

        let (us, ul) = self.model.split(&z, 0);
        let applied = project_input(&self.model, &state.u_mem, &us, &ul, remaining);
        let projection = (&applied.u_s - &us).amax().max((&applied.u_l - &ul).amax());
        if projection > self.tol_p {
            warn!("mpc t={}: first-stage input adjusted by {projection:.2e} to fit headroom and budget", state.t);
        }
        let diagnostics = StepDiagnostics {
            t: state.t,
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual / self.scale,
            objective,
            projection,
            zero_fallback: !usable,
            factorizations: self.solver.factorizations(),
        };
        self.history.push(diagnostics.clone());
        self.previous = if usable { Some(sol) } else { None };
        debug_assert_eq!(applied.u_s.len(), n);
        Ok(MpcOutcome {
            applied,
            schedule,
            diagnostics,
        })
    }
}

/// Clips to the headroom left by the true memory state and scales down to
/// the remaining budget.
fn project_input(model: &MpcModel, u_mem: &Vector, us: &Vector, ul: &Vector, remaining: f64) -> IncentiveInput {
    let n = model.n;
    let mut u_s = Vector::zeros(n);
    let mut u_l = Vector::zeros(n);
    for i in 0..n {
        let (uo, rho, m) = (model.u_o[i], model.rho[i], u_mem[i]);
        u_s[i] = us[i].clamp(0.0, short_term_headroom(uo, rho, m));
        u_l[i] = ul[i].clamp(0.0, long_term_headroom(uo, rho, m, &model.kernel));
    }
    let spend = model.alpha * u_s.sum() + (1.0 - model.alpha) * u_l.sum();
    if spend > remaining {
        let f = if spend > 0.0 { remaining / spend } else { 0.0 };
        u_s *= f;
        u_l *= f;
    }
    IncentiveInput::new(u_s, u_l)
}

impl Policy for MpcController {
    fn name(&self) -> &str {
        "rh"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<IncentiveInput> {
        let state = SimState {
            t: ctx.t,
            x: ctx.estimate.clone(),
            u_mem: ctx.state.u_mem.clone(),
        };
        Ok(self.plan(&state, ctx.ledger.remaining())?.applied)
    }
}

/// One receding-horizon step from scratch: builds the model, solves, and
/// returns the applied first-stage input.
pub fn mpc_step(
    state_estimate: &SimState,
    net: &InfluenceNetwork,
    kernel: &MemoryKernel,
    cfg: &MpcConfig,
    ledger: &BudgetLedger,
    alpha: f64,
) -> Result<MpcOutcome> {
    MpcController::new(net, kernel, cfg, alpha)?.plan(state_estimate, ledger.remaining())
}
