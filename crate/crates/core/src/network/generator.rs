use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{validate_network, CredibilityProfile, Edge, InfluenceNetwork};
use crate::error::{Error, Result};

/// One education level: its reliability score and relative frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EducationLevel {
    pub reliability: f64,
    pub weight: f64,
}

/// Parameters of the synthetic survey-like population.
///
/// Agents are scattered on the unit square; each one is linked (both ways) to
/// its `nearest_neighbors` closest agents and to everyone within `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_agents: usize,
    pub nearest_neighbors: usize,
    pub radius: f64,
    pub allow_self_loops: bool,
    pub education_levels: Vec<EducationLevel>,
    pub prejudice_groups: u32,
    pub penalty_probability: f64,
    pub penalty_factor: f64,
    pub reluctance_min: f64,
    pub reluctance_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub persistence: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_agents: 112,
            nearest_neighbors: 4,
            radius: 0.1,
            allow_self_loops: false,
            education_levels: vec![
                EducationLevel {
                    reliability: 0.4,
                    weight: 0.3,
                },
                EducationLevel {
                    reliability: 0.7,
                    weight: 0.45,
                },
                EducationLevel {
                    reliability: 1.0,
                    weight: 0.25,
                },
            ],
            prejudice_groups: 3,
            penalty_probability: 0.3,
            penalty_factor: 0.5,
            reluctance_min: 0.2,
            reluctance_max: 0.8,
            lambda_min: 0.3,
            lambda_max: 0.9,
            persistence: 0.7,
        }
    }
}

impl GeneratorConfig {
    pub fn check(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} outside [0,1]")))
            }
        };
        if self.n_agents == 0 {
            return Err(Error::param("n_agents", "must be positive"));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::param("radius", "must be nonnegative"));
        }
        if self.education_levels.is_empty() {
            return Err(Error::param("education_levels", "at least one level required"));
        }
        for lvl in &self.education_levels {
            if !(lvl.reliability > 0.0 && lvl.reliability <= 1.0) {
                return Err(Error::param("education_levels.reliability", "must lie in (0,1]"));
            }
            if !(lvl.weight >= 0.0) {
                return Err(Error::param("education_levels.weight", "must be nonnegative"));
            }
        }
        if !(self.education_levels.iter().map(|l| l.weight).sum::<f64>() > 0.0) {
            return Err(Error::param("education_levels.weight", "weights sum to zero"));
        }
        unit("penalty_probability", self.penalty_probability)?;
        if !(self.penalty_factor > 0.0 && self.penalty_factor < 1.0) {
            return Err(Error::param("penalty_factor", "must lie in (0,1)"));
        }
        for (name, v) in [
            ("reluctance_min", self.reluctance_min),
            ("reluctance_max", self.reluctance_max),
            ("lambda_min", self.lambda_min),
            ("lambda_max", self.lambda_max),
            ("persistence", self.persistence),
        ] {
            unit(name, v)?;
        }
        if self.reluctance_min > self.reluctance_max {
            return Err(Error::param("reluctance_min", "exceeds reluctance_max"));
        }
        if self.lambda_min > self.lambda_max {
            return Err(Error::param("lambda_min", "exceeds lambda_max"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

/// Synthesizes a network mimicking the survey-derived construction: education
/// drives reliability, each prejudice-group membership halves (by default)
/// credibility, and proximity decides who listens to whom.
///
/// Pure function of `(cfg, seed)`.
pub fn generate_synthetic_network(
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<(InfluenceNetwork, CredibilityProfile)> {
    cfg.check()?;
    let n = cfg.n_agents;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let dist = |a: usize, b: usize| {
        let (dx, dy) = (pos[a].0 - pos[b].0, pos[a].1 - pos[b].1);
        (dx * dx + dy * dy).sqrt()
    };
    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    for a in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| dist(a, x).total_cmp(&dist(a, y)).then(x.cmp(&y)));
        for (rank, &b) in others.iter().enumerate() {
            if rank < cfg.nearest_neighbors || dist(a, b) <= cfg.radius {
                edges.insert((a, b));
                edges.insert((b, a));
            } else {
                break;
            }
        }
        if cfg.allow_self_loops {
            edges.insert((a, a));
        }
    }

    let total_weight: f64 = cfg.education_levels.iter().map(|l| l.weight).sum();
    let reliability = DVector::from_fn(n, |_, _| {
        let mut pick = rng.random::<f64>() * total_weight;
        for lvl in &cfg.education_levels {
            if pick < lvl.weight {
                return lvl.reliability;
            }
            pick -= lvl.weight;
        }
        cfg.education_levels.last().map(|l| l.reliability).unwrap_or(1.0)
    });
    let penalties: Vec<u32> = (0..n)
        .map(|_| {
            (0..cfg.prejudice_groups)
                .filter(|_| rng.random::<f64>() < cfg.penalty_probability)
                .count() as u32
        })
        .collect();
    let credibility = DVector::from_fn(n, |i, _| {
        reliability[i] * cfg.penalty_factor.powi(penalties[i] as i32)
    });
    let inherent_bias =
        DVector::from_fn(n, |_, _| 1.0 - uniform(&mut rng, cfg.reluctance_min, cfg.reluctance_max));
    let susceptibility = DVector::from_fn(n, |_, _| uniform(&mut rng, cfg.lambda_min, cfg.lambda_max));
    let persistence = DVector::from_element(n, cfg.persistence);

    let net = InfluenceNetwork::from_credibility(
        edges,
        credibility.clone(),
        susceptibility,
        inherent_bias,
        persistence,
    )?;
    let report = validate_network(&net);
    if !report.passed() {
        return Err(Error::InvalidNetwork(report.to_string()));
    }
    Ok((
        net,
        CredibilityProfile {
            reliability,
            prejudice_penalty_count: penalties,
            credibility,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_population_is_valid() {
        let (net, profile) = generate_synthetic_network(&GeneratorConfig::default(), 2024).unwrap();
        assert_eq!(net.n_agents(), 112);
        assert!(validate_network(&net).passed());
        assert!(profile.credibility.iter().all(|&c| c > 0.0));
        assert!(net.edges().iter().all(|&(a, b)| a != b));
    }

    #[test]
    fn same_seed_same_network() {
        let cfg = GeneratorConfig::default();
        let (a, pa) = generate_synthetic_network(&cfg, 7).unwrap();
        let (b, pb) = generate_synthetic_network(&cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        let (c, _) = generate_synthetic_network(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_agent_with_self_loop() {
        let cfg = GeneratorConfig {
            n_agents: 1,
            allow_self_loops: true,
            ..Default::default()
        };
        let (net, _) = generate_synthetic_network(&cfg, 1).unwrap();
        assert_eq!(net.influence()[(0, 0)], 1.0);
        assert!(net.susceptibility()[0] < 1.0);
        assert!(validate_network(&net).passed());
    }

    #[test]
    fn too_sparse_is_an_error() {
        let cfg = GeneratorConfig {
            n_agents: 30,
            nearest_neighbors: 0,
            radius: 0.0,
            ..Default::default()
        };
        let err = generate_synthetic_network(&cfg, 3).unwrap_err();
        assert!(matches!(err, Error::IsolatedListener { .. }), "{err}");
    }

    #[test]
    fn credibility_follows_penalties() {
        let (_, p) = generate_synthetic_network(&GeneratorConfig::default(), 11).unwrap();
        for i in 0..p.credibility.len() {
            let expect = p.reliability[i] * 0.5_f64.powi(p.prejudice_penalty_count[i] as i32);
            assert_eq!(p.credibility[i], expect);
        }
    }
}
