//! Spend accounting for a single run.
//!
//! `u$(t)` accumulates the inputs applied at times `0..t-1`; the input chosen
//! at time `t` is charged after it is decided.

use crate::dynamics::IncentiveInput;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Remaining budget at or below this counts as exhausted; below its negative,
/// the budget is overdrawn.
pub const DEPLETION_TOL: f64 = 1e-9;

/// Monetary cost of one step: `Σ_v α u^s_v + (1-α) u^ℓ_v`.
pub fn step_spend(alpha: f64, u_s: &Vector, u_l: &Vector) -> f64 {
    alpha * u_s.sum() + (1.0 - alpha) * u_l.sum()
}

/// `u$(t)` for the inputs applied at times `0..t-1`.
pub fn cumulative_spend(alpha: f64, inputs: &[IncentiveInput]) -> f64 {
    inputs.iter().map(|i| step_spend(alpha, &i.u_s, &i.u_l)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    beta: f64,
    alpha: f64,
    spend_history: Vec<f64>,
    spent: f64,
    depletion_time: Option<usize>,
}

impl BudgetLedger {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", format!("{beta} must be finite and nonnegative")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", format!("{alpha} outside [0,1]")));
        }
        let mut ledger = Self {
            beta,
            alpha,
            spend_history: Vec::new(),
            spent: 0.0,
            depletion_time: None,
        };
        ledger.note_depletion();
        Ok(ledger)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn spend_history(&self) -> &[f64] {
        &self.spend_history
    }

    /// First time index with `U(t) ≤ DEPLETION_TOL`.
    pub fn depletion_time(&self) -> Option<usize> {
        self.depletion_time
    }

    /// Number of charged steps, i.e. the current time index.
    pub fn steps(&self) -> usize {
        self.spend_history.len()
    }

    /// `u$(t)` at the current time.
    pub fn spent(&self) -> f64 {
        self.spent
    }

    /// `U(t) = β − u$(t)` at the current time.
    pub fn remaining(&self) -> f64 {
        self.beta - self.spent
    }

    /// `U(t)` for any recorded `t ≤ steps()`.
    pub fn remaining_budget(&self, t: usize) -> Result<f64> {
        if t > self.steps() {
            return Err(Error::param(
                "t",
                format!("spend only recorded through step {}", self.steps()),
            ));
        }
        let u = self.beta - self.spend_history[..t].iter().sum::<f64>();
        if u < -DEPLETION_TOL {
            return Err(Error::BudgetOverdrawn {
                step: t,
                remaining: u,
            });
        }
        Ok(u)
    }

    pub fn spend_for(&self, input: &IncentiveInput) -> f64 {
        step_spend(self.alpha, &input.u_s, &input.u_l)
    }

    /// Charges the input applied at the current step. Fails, leaving the ledger
    /// untouched, if the charge would overdraw the budget.
    pub fn charge(&mut self, input: &IncentiveInput) -> Result<f64> {
        let spend = self.spend_for(input);
        if spend < 0.0 {
            return Err(Error::param("spend", format!("negative spend {spend}")));
        }
        let remaining = self.beta - (self.spent + spend);
        if remaining < -DEPLETION_TOL {
            return Err(Error::BudgetOverdrawn {
                step: self.steps(),
                remaining,
            });
        }
        self.spend_history.push(spend);
        self.spent += spend;
        self.note_depletion();
        Ok(spend)
    }

    fn note_depletion(&mut self) {
        if self.depletion_time.is_none() && self.remaining() <= DEPLETION_TOL {
            self.depletion_time = Some(self.steps());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn input(n: usize, s: f64, l: f64) -> IncentiveInput {
        IncentiveInput::new(DVector::from_element(n, s), DVector::from_element(n, l))
    }

    #[test]
    fn nothing_applied_costs_nothing() {
        assert_eq!(cumulative_spend(0.5, &[]), 0.0);
        let l = BudgetLedger::new(200.0, 0.5).unwrap();
        assert_eq!(l.remaining_budget(0).unwrap(), 200.0);
    }

    #[test]
    fn one_step_population_spend() {
        let s = cumulative_spend(0.5, &[input(112, 0.1, 0.1)]);
        assert!((s - 11.2).abs() < 1e-12);
    }

    #[test]
    fn alpha_one_charges_short_term_only() {
        let s = cumulative_spend(1.0, &[input(4, 0.0, 0.9)]);
        assert_eq!(s, 0.0);
        let s = cumulative_spend(1.0, &[input(4, 0.25, 0.9)]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn remaining_after_spend() {
        let mut l = BudgetLedger::new(200.0, 1.0).unwrap();
        let mut u = DVector::zeros(2);
        u[0] = 1.0;
        // charge 183.26 in pieces of at most 1 per agent-step
        let mut left = 183.26_f64;
        while left > 1e-12 {
            let a = left.min(1.0);
            u[0] = a;
            l.charge(&IncentiveInput::new(u.clone(), DVector::zeros(2))).unwrap();
            left -= a;
        }
        assert!((l.remaining() - 16.74).abs() < 1e-9);
    }

    #[test]
    fn overdraw_is_rejected_and_named() {
        let mut l = BudgetLedger::new(1.0, 1.0).unwrap();
        let err = l.charge(&input(2, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::BudgetOverdrawn { step: 0, .. }));
        assert_eq!(l.steps(), 0);
    }

    #[test]
    fn depletion_is_recorded() {
        let mut l = BudgetLedger::new(2.0, 0.5).unwrap();
        l.charge(&input(2, 0.5, 0.5)).unwrap();
        assert_eq!(l.depletion_time(), None);
        l.charge(&input(2, 0.5, 0.5)).unwrap();
        assert_eq!(l.depletion_time(), Some(2));
        assert_eq!(BudgetLedger::new(0.0, 0.5).unwrap().depletion_time(), Some(0));
    }

    #[test]
    fn identity_remaining_plus_spent() {
        let mut l = BudgetLedger::new(37.5, 0.3).unwrap();
        for k in 0..20 {
            let x = (k as f64 * 0.37).fract();
            l.charge(&input(3, x, 1.0 - x)).unwrap();
            let t = l.steps();
            let spent: f64 = l.spend_history().iter().sum();
            assert!((l.remaining_budget(t).unwrap() + spent - l.beta()).abs() <= 1e-12);
        }
    }
}
