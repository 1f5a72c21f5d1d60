//! Incentive designers: the constant distributive rule and the
//! receding-horizon controller, plus the run summary.

mod mpc;

pub use mpc::{
    assemble_mpc_qp, mpc_step, terminal_cost, terminal_value, BudgetRule, MpcConfig, MpcController, MpcModel,
    MpcOutcome, PolicySchedule, StepDiagnostics,
};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::budget::BudgetLedger;
use crate::dynamics::{
    long_term_headroom, short_term_headroom, simulate_trajectory, DecisionContext, EstimatorKind, IncentiveInput,
    MemoryKernel, Policy, Trajectory,
};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::network::InfluenceNetwork;

/// Constant per-agent inputs `(ū^s, ū^ℓ)` spreading `β` evenly over agents
/// and time.
///
/// `ū = min(β, Tn)/(Tn)`; the short-term share is capped per agent at
/// `min(1, max(0, (1-u°-ρ)/(1-ρ)))`, or 0 when `ρ = 1`.
pub fn naive_policy(net: &InfluenceNetwork, beta: f64, run_length: usize) -> Result<(Vector, Vector)> {
    if run_length == 0 {
        return Err(Error::param("T", "run length must be at least 1"));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", format!("{beta} must be finite and nonnegative")));
    }
    let n = net.n_agents();
    let slots = (run_length * n) as f64;
    let u_bar = beta.min(slots) / slots;
    let u_o = net.inherent_bias();
    let rho = net.persistence();
    let u_s = Vector::from_fn(n, |i, _| u_bar.min(short_term_cap(u_o[i], rho[i])));
    Ok((u_s, Vector::from_element(n, u_bar)))
}

fn short_term_cap(u_o: f64, rho: f64) -> f64 {
    if rho >= 1.0 {
        return 0.0;
    }
    ((1.0 - u_o - rho) / (1.0 - rho)).clamp(0.0, 1.0)
}

/// Applies the same input at every step, clipped to the current headroom and
/// to the remaining budget.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    name: String,
    u_s: Vector,
    u_l: Vector,
}

impl ConstantPolicy {
    pub fn new(name: impl Into<String>, u_s: Vector, u_l: Vector) -> Self {
        Self {
            name: name.into(),
            u_s,
            u_l,
        }
    }

    pub fn naive(net: &InfluenceNetwork, beta: f64, run_length: usize) -> Result<Self> {
        let (u_s, u_l) = naive_policy(net, beta, run_length)?;
        Ok(Self::new("naive", u_s, u_l))
    }
}

impl Policy for ConstantPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<IncentiveInput> {
        let n = ctx.net.n_agents();
        if self.u_s.len() != n || self.u_l.len() != n {
            return Err(Error::Dimension {
                context: "constant policy inputs",
                expected: n,
                got: self.u_s.len(),
            });
        }
        let u_o = ctx.net.inherent_bias();
        let rho = ctx.net.persistence();
        let m = &ctx.state.u_mem;
        let mut u_s = Vector::from_fn(n, |i, _| self.u_s[i].clamp(0.0, short_term_headroom(u_o[i], rho[i], m[i])));
        let mut u_l = Vector::from_fn(n, |i, _| {
            self.u_l[i].clamp(0.0, long_term_headroom(u_o[i], rho[i], m[i], ctx.kernel))
        });
        let clipped = (&u_s - &self.u_s).amax().max((&u_l - &self.u_l).amax());
        if clipped > 0.0 {
            debug!("{} t={}: clipped by {clipped:.3e} to the headroom", self.name, ctx.t);
        }
        let remaining = ctx.ledger.remaining().max(0.0);
        let spend = ctx.ledger.spend_for(&IncentiveInput::new(u_s.clone(), u_l.clone()));
        if spend > remaining {
            let f = remaining / spend;
            u_s *= f;
            u_l *= f;
        }
        Ok(IncentiveInput::new(u_s, u_l))
    }
}

/// The comparison columns for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub x_bar_t: f64,
    pub sigma_x_t: f64,
    pub u_s_mean: f64,
    pub u_l_mean: f64,
    pub beta: f64,
    pub residual_budget: f64,
}

/// Final mean and population standard deviation of the inclinations, mean
/// inputs over the `T` applied steps, and the unused budget.
pub fn summarize_run(traj: &Trajectory, ledger: &BudgetLedger) -> Result<RunSummary> {
    let last = traj.final_state().ok_or(Error::Empty("trajectory"))?;
    let n = last.x.len();
    if n == 0 {
        return Err(Error::Empty("trajectory state"));
    }
    let x_bar = last.x.mean();
    let var = last.x.iter().map(|v| (v - x_bar).powi(2)).sum::<f64>() / n as f64;
    let applied = &traj.steps[..traj.horizon()];
    let cells = (applied.len() * n) as f64;
    let mean_of = |f: &dyn Fn(&IncentiveInput) -> f64| {
        if cells == 0.0 {
            0.0
        } else {
            applied.iter().map(|s| f(&s.input)).sum::<f64>() / cells
        }
    };
    Ok(RunSummary {
        x_bar_t: x_bar,
        sigma_x_t: var.sqrt(),
        u_s_mean: mean_of(&|i| i.u_s.sum()),
        u_l_mean: mean_of(&|i| i.u_l.sum()),
        beta: ledger.beta(),
        residual_budget: ledger.beta() - ledger.spent(),
    })
}

/// Outcome of one closed-loop run.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub trajectory: Trajectory,
    pub ledger: BudgetLedger,
    pub summary: RunSummary,
    /// Per-step solver diagnostics; empty for the naive policy.
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Settings shared by the closed-loop runners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSetup {
    pub beta: f64,
    pub alpha: f64,
    pub run_length: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
}

/// Closed loop with the receding-horizon controller, started from
/// `x(0) = u°` and empty memory. At each step the plan starts from the
/// estimate `μ(t)` and the true memory trace.
pub fn run_receding_horizon(
    net: &InfluenceNetwork,
    kernel: &MemoryKernel,
    cfg: &MpcConfig,
    setup: &RunSetup,
    dump_dir: Option<std::path::PathBuf>,
) -> Result<PolicyRun> {
    let mut ctrl = MpcController::new(net, kernel, cfg, setup.alpha)?;
    if let Some(dir) = dump_dir {
        ctrl = ctrl.with_qp_dump(dir);
    }
    let mut ledger = BudgetLedger::new(setup.beta, setup.alpha)?;
    let trajectory = simulate_trajectory(
        net,
        kernel,
        &mut ctrl,
        setup.run_length,
        &mut ledger,
        setup.seed,
        setup.estimator,
        net.inherent_bias(),
    )?;
    let summary = summarize_run(&trajectory, &ledger)?;
    Ok(PolicyRun {
        trajectory,
        ledger,
        summary,
        diagnostics: ctrl.diagnostics().to_vec(),
    })
}

/// Closed loop with the naive constant inputs.
pub fn run_naive(net: &InfluenceNetwork, kernel: &MemoryKernel, setup: &RunSetup) -> Result<PolicyRun> {
    let mut policy = ConstantPolicy::naive(net, setup.beta, setup.run_length)?;
    let mut ledger = BudgetLedger::new(setup.beta, setup.alpha)?;
    let trajectory = simulate_trajectory(
        net,
        kernel,
        &mut policy,
        setup.run_length,
        &mut ledger,
        setup.seed,
        setup.estimator,
        net.inherent_bias(),
    )?;
    let summary = summarize_run(&trajectory, &ledger)?;
    Ok(PolicyRun {
        trajectory,
        ledger,
        summary,
        diagnostics: Vec::new(),
    })
}
