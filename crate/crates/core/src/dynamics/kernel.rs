use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelVariant {
    Iir,
    Fir,
}

/// Exponentially decaying memory weights `ω_j`.
///
/// IIR: `ω_j = (1-κ) κ^j` for all `j ≥ 0`, summing to one over the infinite
/// past. FIR: the same shape truncated to `j ≤ J` and renormalized so the
/// window sums to one. In both cases `κ = γ = e^{-1/τ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryKernel {
    variant: KernelVariant,
    tau: f64,
    kappa: f64,
    window: Option<usize>,
    omega0: f64,
}

impl MemoryKernel {
    pub fn iir(tau: f64) -> Result<Self> {
        let kappa = Self::kappa_for(tau)?;
        Ok(Self {
            variant: KernelVariant::Iir,
            tau,
            kappa,
            window: None,
            omega0: 1.0 - kappa,
        })
    }

    pub fn fir(tau: f64, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("window", "FIR window must be positive"));
        }
        let kappa = Self::kappa_for(tau)?;
        let norm = 1.0 - kappa.powi(window as i32 + 1);
        Ok(Self {
            variant: KernelVariant::Fir,
            tau,
            kappa,
            window: Some(window),
            omega0: (1.0 - kappa) / norm,
        })
    }

    fn kappa_for(tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param("tau", format!("{tau} must be positive and finite")));
        }
        let kappa = (-1.0 / tau).exp();
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::param("tau", format!("κ = e^(-1/τ) = {kappa} leaves (0,1)")));
        }
        Ok(kappa)
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Decay factor of the memory recursion; equals `κ`.
    pub fn gamma(&self) -> f64 {
        self.kappa
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// FIR window `J`; `None` for IIR.
    pub fn window(&self) -> Option<usize> {
        self.window
    }

    pub fn is_iir(&self) -> bool {
        self.variant == KernelVariant::Iir
    }

    /// Closed-form weight `ω_j`.
    pub fn weight(&self, j: usize) -> Result<f64> {
        if let Some(window) = self.window {
            if j > window {
                return Err(Error::KernelIndex { j, window });
            }
        }
        Ok(self.omega0 * self.kappa.powi(j as i32))
    }
}

/// `ω_j` for `kernel`.
pub fn kernel_weights(kernel: &MemoryKernel, j: usize) -> Result<f64> {
    kernel.weight(j)
}

/// Direct evaluation of `u_mem(t) = Σ_j ω_j u^ℓ(t-j-1)` where `history` holds
/// `u^ℓ(0..t-1)` oldest first. Empty history gives the zero vector of length
/// `n`.
pub fn memory_convolution(kernel: &MemoryKernel, history: &[Vector], n: usize) -> Vector {
    let t = history.len();
    let last_j = match kernel.window() {
        Some(w) => w.min(t.saturating_sub(1)),
        None => t.saturating_sub(1),
    };
    let mut out = Vector::zeros(n);
    if t == 0 {
        return out;
    }
    let mut w = kernel.omega0();
    for j in 0..=last_j {
        out.axpy(w, &history[t - j - 1], 1.0);
        w *= kernel.kappa();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn iir_first_weights() {
        let k = MemoryKernel::iir(3.0).unwrap();
        let w0 = k.weight(0).unwrap();
        let w1 = k.weight(1).unwrap();
        // 1 - e^{-1/3}, e^{-1/3}
        assert!((w0 - 0.283_468_689_426_210_7).abs() < 1e-15);
        assert!((k.gamma() - 0.716_531_310_573_789_3).abs() < 1e-15);
        assert!((w1 - k.gamma() * w0).abs() < 1e-16);
    }

    #[test]
    fn fir_window_sums_to_one() {
        for &(tau, window) in &[(0.5, 1), (3.0, 4), (10.0, 25), (1.0, 100)] {
            let k = MemoryKernel::fir(tau, window).unwrap();
            let s: f64 = (0..=window).map(|j| k.weight(j).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12, "tau={tau} J={window} sum={s}");
        }
    }

    #[test]
    fn fir_rejects_index_past_window() {
        let k = MemoryKernel::fir(3.0, 4).unwrap();
        assert!(matches!(k.weight(5), Err(Error::KernelIndex { j: 5, window: 4 })));
    }

    #[test]
    fn weights_are_nonincreasing_and_subunit() {
        let k = MemoryKernel::iir(2.0).unwrap();
        let ws: Vec<f64> = (0..200).map(|j| k.weight(j).unwrap()).collect();
        assert!(ws.windows(2).all(|p| p[1] <= p[0] && p[1] >= 0.0));
        assert!(ws.iter().sum::<f64>() <= 1.0);
    }

    #[test]
    fn bad_tau() {
        assert!(MemoryKernel::iir(0.0).is_err());
        assert!(MemoryKernel::iir(f64::INFINITY).is_err());
        assert!(MemoryKernel::fir(1.0, 0).is_err());
    }

    #[test]
    fn convolution_examples() {
        let k = MemoryKernel::iir(1.0 / std::f64::consts::LN_2).unwrap();
        assert!((k.gamma() - 0.5).abs() < 1e-15);
        assert!(memory_convolution(&k, &[], 3).iter().all(|&v| v == 0.0));
        let hist = vec![DVector::from_element(2, 1.0), DVector::zeros(2)];
        let m = memory_convolution(&k, &hist, 2);
        assert!(m.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
