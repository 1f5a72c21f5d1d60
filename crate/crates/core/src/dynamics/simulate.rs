use crate::budget::BudgetLedger;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::network::InfluenceNetwork;

use super::model::advance;
use super::observe::{sample_observation, Estimator, EstimatorKind};
use super::{effective_input, memory_convolution, IncentiveInput, MemoryKernel, SimState};

/// Everything a policy may look at when choosing the input for time `t`.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub t: usize,
    /// Total number of closed-loop steps in the run.
    pub run_length: usize,
    pub net: &'a InfluenceNetwork,
    pub kernel: &'a MemoryKernel,
    /// True state. Policies that model partial observability should only use
    /// `state.u_mem` (which the controller can reconstruct) and `estimate`.
    pub state: &'a SimState,
    pub observation: &'a Vector,
    pub estimate: &'a Vector,
    pub ledger: &'a BudgetLedger,
}

pub trait Policy {
    fn name(&self) -> &str;
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<IncentiveInput>;
}

/// No incentives at all: the open-loop model.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn name(&self) -> &str {
        "zero"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<IncentiveInput> {
        Ok(IncentiveInput::zeros(ctx.net.n_agents()))
    }
}

/// Replays a fixed list of inputs, then applies zero.
#[derive(Debug, Clone)]
pub struct ScheduledPolicy {
    pub inputs: Vec<IncentiveInput>,
}

impl Policy for ScheduledPolicy {
    fn name(&self) -> &str {
        "scheduled"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<IncentiveInput> {
        Ok(self
            .inputs
            .get(ctx.t)
            .cloned()
            .unwrap_or_else(|| IncentiveInput::zeros(ctx.net.n_agents())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub x: Vector,
    pub u_mem: Vector,
    /// Observed adoption events `y(t)`.
    pub y: Vector,
    /// Estimate `μ(t)` after observing `y(t)`.
    pub mu: Vector,
    /// Input applied at `t`; zero at the final recorded state.
    pub input: IncentiveInput,
    pub u_effective: Vector,
    pub spend: f64,
    /// `U(t)` before the step-`t` charge.
    pub remaining: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub policy: String,
    pub alpha: f64,
    pub beta: f64,
    /// `T + 1` entries, times `0..=T`.
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    /// Number of closed-loop steps `T`.
    pub fn horizon(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> Option<&TrajectoryStep> {
        self.steps.last()
    }

    pub fn n_agents(&self) -> usize {
        self.steps.first().map_or(0, |s| s.x.len())
    }
}

/// Runs `T` closed-loop steps from `x(0) = initial`, `u_mem(0) = 0`.
///
/// At each `t`: observe `y(t) ~ B(x(t))`, update the estimate, ask the policy
/// for an input, check it against the headroom bound and the budget, charge
/// the ledger, and advance the dynamics. IIR kernels use the memory
/// recursion; FIR kernels recompute the memory by direct convolution.
#[allow(clippy::too_many_arguments)]
pub fn simulate_trajectory(
    net: &InfluenceNetwork,
    kernel: &MemoryKernel,
    policy: &mut dyn Policy,
    run_length: usize,
    ledger: &mut BudgetLedger,
    seed: u64,
    estimator: EstimatorKind,
    initial: &Vector,
) -> Result<Trajectory> {
    if run_length == 0 {
        return Err(Error::param("T", "run length must be at least 1"));
    }
    let n = net.n_agents();
    if initial.len() != n {
        return Err(Error::Dimension {
            context: "initial state",
            expected: n,
            got: initial.len(),
        });
    }
    if initial.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::param("initial state", "components must lie in [0,1]"));
    }
    estimator.check()?;
    let mut est = Estimator::new(estimator);
    let mut state = SimState::new(initial.clone());
    let mut history: Vec<Vector> = Vec::new();
    let mut traj = Trajectory {
        policy: policy.name().to_string(),
        alpha: ledger.alpha(),
        beta: ledger.beta(),
        steps: Vec::with_capacity(run_length + 1),
    };

    for t in 0..=run_length {
        let y = sample_observation(&state.x, seed, t);
        let mu = est.update(&y).clone();
        let remaining = ledger.remaining();
        if t == run_length {
            let u_eff = effective_input(
                net.inherent_bias(),
                net.persistence(),
                &state.u_mem,
                &Vector::zeros(n),
            )
            .unwrap_or_else(|_| net.inherent_bias() + net.persistence().component_mul(&state.u_mem));
            traj.steps.push(TrajectoryStep {
                t,
                x: state.x.clone(),
                u_mem: state.u_mem.clone(),
                y,
                mu,
                input: IncentiveInput::zeros(n),
                u_effective: u_eff,
                spend: 0.0,
                remaining,
            });
            break;
        }

        let ctx = DecisionContext {
            t,
            run_length,
            net,
            kernel,
            state: &state,
            observation: &y,
            estimate: &mu,
            ledger,
        };
        let abort = |traj: &Trajectory, e: Error| Error::Aborted {
            step: t,
            reason: Box::new(e),
            partial: Box::new(traj.clone()),
        };
        let input = match policy.decide(&ctx) {
            Ok(i) => i,
            Err(e) => return Err(abort(&traj, e)),
        };
        let u_eff = match input
            .check_unit_box()
            .and_then(|_| effective_input(net.inherent_bias(), net.persistence(), &state.u_mem, &input.u_s))
        {
            Ok(u) => u,
            Err(e) => return Err(abort(&traj, e)),
        };
        let spend = match ledger.charge(&input) {
            Ok(s) => s,
            Err(e) => return Err(abort(&traj, e)),
        };
        let next_mem = if kernel.is_iir() {
            let mut m = state.u_mem.clone();
            m.axpy(kernel.omega0(), &input.u_l, kernel.gamma());
            m
        } else {
            history.push(input.u_l.clone());
            memory_convolution(kernel, &history, n)
        };
        let next = match advance(net, &state, &input, next_mem) {
            Ok(s) => s,
            Err(e) => return Err(abort(&traj, e)),
        };
        traj.steps.push(TrajectoryStep {
            t,
            x: state.x.clone(),
            u_mem: state.u_mem.clone(),
            y,
            mu,
            input,
            u_effective: u_eff,
            spend,
            remaining,
        });
        state = next;
    }
    Ok(traj)
}
