use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::network::InfluenceNetwork;

use super::MemoryKernel;

/// State-space form over `[x; u_mem]`:
///
/// ```text
/// A   = [ ΛP  (I-Λ)diag(ρ) ]    B_s = [ (I-Λ)diag(1-ρ) ]
///       [ 0   γI           ]          [ 0              ]
///
/// B_l = [ 0   ]                 B_o = [ I-Λ ]
///       [ ω₀I ]                       [ 0   ]
/// ```
///
/// `B_l` has no direct feedthrough into `x`: a long-term input reaches the
/// opinions only through the memory one step later.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a_aug: Mat,
    pub b_s: Mat,
    pub b_l: Mat,
    pub b_o: Mat,
}

pub fn assemble_augmented(net: &InfluenceNetwork, kernel: &MemoryKernel) -> Result<AugmentedModel> {
    if !kernel.is_iir() {
        return Err(Error::UnsupportedKernel);
    }
    let n = net.n_agents();
    let recv = net.receptivity();
    let rho = net.persistence();
    let mut a = Mat::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&net.lambda_p());
    let mut b_s = Mat::zeros(2 * n, n);
    let mut b_l = Mat::zeros(2 * n, n);
    let mut b_o = Mat::zeros(2 * n, n);
    for i in 0..n {
        a[(i, n + i)] = recv[i] * rho[i];
        a[(n + i, n + i)] = kernel.gamma();
        b_s[(i, i)] = recv[i] * (1.0 - rho[i]);
        b_l[(n + i, i)] = kernel.omega0();
        b_o[(i, i)] = recv[i];
    }
    Ok(AugmentedModel {
        a_aug: a,
        b_s,
        b_l,
        b_o,
    })
}

impl AugmentedModel {
    pub fn n_agents(&self) -> usize {
        self.b_s.ncols()
    }

    /// `x̃' = A x̃ + B_s u_s + B_l u_l + B_o u°`.
    pub fn advance(&self, state: &Vector, u_s: &Vector, u_l: &Vector, u_o: &Vector) -> Vector {
        &self.a_aug * state + &self.b_s * u_s + &self.b_l * u_l + &self.b_o * u_o
    }

    pub fn stack(x: &Vector, u_mem: &Vector) -> Vector {
        let n = x.len();
        Vector::from_fn(2 * n, |i, _| if i < n { x[i] } else { u_mem[i - n] })
    }
}
