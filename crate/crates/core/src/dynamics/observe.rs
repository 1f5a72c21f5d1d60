//! Binary adoption evidence and inclination estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Independent Bernoulli draws `y_v ~ B(x_v)`.
///
/// Agent `v` at time `t` reads its own ChaCha stream (`stream = t`, word
/// offset `2v`), so draws do not depend on agent order or on how many other
/// agents exist.
pub fn sample_observation(x: &Vector, seed: u64, t: usize) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    Vector::from_fn(x.len(), |v, _| {
        rng.set_word_pos(2 * v as u128);
        let draw: f64 = rng.random();
        if draw < x[v] {
            1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorKind {
    /// `μ(t) = (1/(t+1)) Σ_{τ≤t} y(τ)`.
    #[default]
    RunningMean,
    /// `μ(t) = (1-d) μ(t-1) + d y(t)`, started at `y(0)`.
    Leaky { decay: f64 },
}

impl EstimatorKind {
    pub fn check(&self) -> Result<()> {
        if let EstimatorKind::Leaky { decay } = self {
            if !(*decay > 0.0 && *decay <= 1.0) {
                return Err(Error::param("estimator.decay", format!("{decay} outside (0,1]")));
            }
        }
        Ok(())
    }
}

/// Recursive, constant-memory inclination estimator.
///
/// The running mean keeps the running sum of observations, so its estimate is
/// bit-identical to the batch mean.
#[derive(Debug, Clone)]
pub struct Estimator {
    kind: EstimatorKind,
    count: usize,
    acc: Option<Vector>,
    mu: Option<Vector>,
}

impl Estimator {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            count: 0,
            acc: None,
            mu: None,
        }
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn update(&mut self, y: &Vector) -> &Vector {
        self.count += 1;
        let mu = match self.kind {
            EstimatorKind::RunningMean => {
                let acc = match self.acc.take() {
                    None => y.clone(),
                    Some(acc) => acc + y,
                };
                let mu = &acc / self.count as f64;
                self.acc = Some(acc);
                mu
            }
            EstimatorKind::Leaky { decay } => match self.mu.take() {
                None => y.clone(),
                Some(mut mu) => {
                    mu.axpy(decay, y, 1.0 - decay);
                    mu
                }
            },
        };
        self.mu.insert(mu)
    }

    pub fn estimate(&self) -> Option<&Vector> {
        self.mu.as_ref()
    }
}

/// Batch arithmetic mean of `y(0..t)`.
pub fn estimate_inclination(observations: &[Vector]) -> Result<Vector> {
    let first = observations.first().ok_or(Error::Empty("observation sequence"))?;
    let mut acc = Vector::zeros(first.len());
    for y in observations {
        acc += y;
    }
    Ok(acc / observations.len() as f64)
}
