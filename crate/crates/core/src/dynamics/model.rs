use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::network::InfluenceNetwork;

use super::MemoryKernel;

/// Slack allowed on the `[0,1]` and headroom checks for floating-point noise.
pub const BOX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: usize,
    /// Latent inclinations `x(t)`.
    pub x: Vector,
    /// Long-term memory trace `u^{ℓ,mem}(t)`.
    pub u_mem: Vector,
}

impl SimState {
    pub fn new(x: Vector) -> Self {
        let n = x.len();
        Self {
            t: 0,
            x,
            u_mem: Vector::zeros(n),
        }
    }
}

/// Short- and long-term incentives applied at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveInput {
    pub u_s: Vector,
    pub u_l: Vector,
}

impl IncentiveInput {
    pub fn new(u_s: Vector, u_l: Vector) -> Self {
        Self { u_s, u_l }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(Vector::zeros(n), Vector::zeros(n))
    }

    pub fn check_unit_box(&self) -> Result<()> {
        for (name, v) in [("u_s", &self.u_s), ("u_l", &self.u_l)] {
            if let Some((i, x)) = v
                .iter()
                .enumerate()
                .find(|(_, x)| !(**x >= -BOX_TOL && **x <= 1.0 + BOX_TOL))
            {
                return Err(Error::param(name, format!("component {i} = {x} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// `u = u° + ρ⊙u_mem + (1-ρ)⊙u_s`, rejecting inputs that break the headroom
/// bound `0 ≤ ρ⊙u_mem + (1-ρ)⊙u_s ≤ 1 - u°`.
pub fn effective_input(u_o: &Vector, rho: &Vector, u_mem: &Vector, u_s: &Vector) -> Result<Vector> {
    let n = u_o.len();
    for (ctx, v) in [("rho", rho), ("u_mem", u_mem), ("u_s", u_s)] {
        if v.len() != n {
            return Err(Error::Dimension {
                context: ctx,
                expected: n,
                got: v.len(),
            });
        }
    }
    let mut u = Vector::zeros(n);
    let mut bad = Vec::new();
    for i in 0..n {
        let push = rho[i] * u_mem[i] + (1.0 - rho[i]) * u_s[i];
        let headroom = 1.0 - u_o[i];
        if push < -BOX_TOL {
            bad.push((i, push));
        } else if push > headroom + BOX_TOL {
            bad.push((i, push - headroom));
        }
        u[i] = u_o[i] + push;
    }
    if !bad.is_empty() {
        return Err(Error::Headroom(bad));
    }
    Ok(u)
}

/// Largest short-term input keeping agent `i` within headroom, given memory.
pub fn short_term_headroom(u_o: f64, rho: f64, u_mem: f64) -> f64 {
    if rho >= 1.0 {
        return 1.0;
    }
    ((1.0 - u_o - rho * u_mem) / (1.0 - rho)).clamp(0.0, 1.0)
}

/// Largest long-term input that keeps `ρ·u_mem(t+1) ≤ 1 - u°`.
pub fn long_term_headroom(u_o: f64, rho: f64, u_mem: f64, kernel: &MemoryKernel) -> f64 {
    if rho <= 0.0 {
        return 1.0;
    }
    let cap = ((1.0 - u_o) / rho - kernel.gamma() * u_mem) / kernel.omega0();
    cap.clamp(0.0, 1.0)
}

/// One step of `x' = ΛPx + (I-Λ)u` together with the IIR memory recursion
/// `u_mem' = γ u_mem + ω₀ u^ℓ`.
pub fn step(
    net: &InfluenceNetwork,
    kernel: &MemoryKernel,
    state: &SimState,
    input: &IncentiveInput,
) -> Result<SimState> {
    if !kernel.is_iir() {
        return Err(Error::UnsupportedKernel);
    }
    let mut next_mem = state.u_mem.clone();
    next_mem.axpy(kernel.omega0(), &input.u_l, kernel.gamma());
    advance(net, state, input, next_mem)
}

/// Opinion update with an externally supplied next memory state.
pub(crate) fn advance(
    net: &InfluenceNetwork,
    state: &SimState,
    input: &IncentiveInput,
    next_mem: Vector,
) -> Result<SimState> {
    let n = net.n_agents();
    if state.x.len() != n || input.u_s.len() != n || input.u_l.len() != n {
        return Err(Error::Dimension {
            context: "state/input length",
            expected: n,
            got: state.x.len(),
        });
    }
    input.check_unit_box()?;
    let u = effective_input(net.inherent_bias(), net.persistence(), &state.u_mem, &input.u_s)?;
    Ok(SimState {
        t: state.t + 1,
        x: opinion_update(net, &state.x, &u),
        u_mem: next_mem,
    })
}

/// `ΛPx + (I-Λ)u`.
pub fn opinion_update(net: &InfluenceNetwork, x: &Vector, u: &Vector) -> Vector {
    let lam = net.susceptibility();
    let px = net.influence() * x;
    Vector::from_fn(x.len(), |i, _| lam[i] * px[i] + (1.0 - lam[i]) * u[i])
}
