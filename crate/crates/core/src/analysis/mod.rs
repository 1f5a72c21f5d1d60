//! Equilibria of the opinion dynamics and the discrete Lyapunov solver.

mod lyapunov;

pub use lyapunov::{solve_discrete_lyapunov, LyapunovCertificate, LYAPUNOV_INCREMENT_TOL};

use crate::dynamics::BOX_TOL;
use crate::error::{Error, Result};
use crate::linalg::{condition_1, inf_norm, Mat, Vector};
use crate::network::InfluenceNetwork;

/// Largest acceptable 1-norm condition number of `I - ΛP`.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub x_inf: Vector,
    pub u_inf: Vector,
    /// `‖(I-ΛP)x_inf - (I-Λ)u_inf‖∞`.
    pub residual: f64,
}

/// Limit of `x' = ΛPx + (I-Λ)u` under the constant effective input `u_const`.
pub fn fj_equilibrium(net: &InfluenceNetwork, u_const: &Vector) -> Result<EquilibriumResult> {
    let n = net.n_agents();
    if u_const.len() != n {
        return Err(Error::Dimension {
            context: "constant input",
            expected: n,
            got: u_const.len(),
        });
    }
    if let Some(i) = u_const.iter().position(|&u| !(-BOX_TOL..=1.0 + BOX_TOL).contains(&u)) {
        return Err(Error::param("u_const", format!("component {i} = {} outside [0,1]", u_const[i])));
    }
    let m = Mat::identity(n, n) - net.lambda_p();
    let condition = condition_1(&m).unwrap_or(f64::INFINITY);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let rhs = net.receptivity().component_mul(u_const);
    let x_inf = m
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
    let residual = inf_norm(&(&m * &x_inf - &rhs));
    Ok(EquilibriumResult {
        x_inf,
        u_inf: u_const.clone(),
        residual,
    })
}

/// Equilibrium under constant incentives `ū^s`, `ū^ℓ` and unlimited budget.
///
/// The memory converges to `ū^ℓ`, so the effective input tends to
/// `u∞ = u° + ρ⊙ū^ℓ + (1-ρ)⊙ū^s`.
pub fn forced_equilibrium(
    net: &InfluenceNetwork,
    rho: &Vector,
    u_bar_s: &Vector,
    u_bar_l: &Vector,
) -> Result<EquilibriumResult> {
    let n = net.n_agents();
    for (ctx, v) in [("rho", rho), ("u_bar_s", u_bar_s), ("u_bar_l", u_bar_l)] {
        if v.len() != n {
            return Err(Error::Dimension {
                context: ctx,
                expected: n,
                got: v.len(),
            });
        }
    }
    let u_o = net.inherent_bias();
    let mut bad = Vec::new();
    let u_inf = Vector::from_fn(n, |i, _| {
        let push = rho[i] * u_bar_l[i] + (1.0 - rho[i]) * u_bar_s[i];
        if push < -BOX_TOL {
            bad.push((i, push));
        } else if push > 1.0 - u_o[i] + BOX_TOL {
            bad.push((i, push - (1.0 - u_o[i])));
        }
        u_o[i] + push
    });
    if !bad.is_empty() {
        return Err(Error::Headroom(bad));
    }
    fj_equilibrium(net, &u_inf.map(|u| u.clamp(0.0, 1.0)))
}
