//! Influence networks: construction, structural checks and spectral radius.

mod generator;
mod io;

pub use generator::{generate_synthetic_network, EducationLevel, GeneratorConfig};
pub use io::{read_network, read_network_file, write_network, write_network_file};

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

pub const ROW_SUM_TOL: f64 = 1e-10;

/// A directed edge `(listener, source)`: `source` influences `listener`.
pub type Edge = (usize, usize);

/// Social influence network with the per-agent parameters of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceNetwork {
    edges: BTreeSet<Edge>,
    influence: Mat,
    susceptibility: Vector,
    inherent_bias: Vector,
    persistence: Vector,
    credibility: Option<Vector>,
}

impl InfluenceNetwork {
    /// Assembles a network from explicit parts. Only dimensions are checked
    /// here; use [`validate_network`] for the structural invariants.
    pub fn new(
        edges: impl IntoIterator<Item = Edge>,
        influence: Mat,
        susceptibility: Vector,
        inherent_bias: Vector,
        persistence: Vector,
    ) -> Result<Self> {
        let n = influence.nrows();
        if influence.ncols() != n {
            return Err(Error::Dimension {
                context: "influence matrix columns",
                expected: n,
                got: influence.ncols(),
            });
        }
        for (ctx, v) in [
            ("susceptibility", &susceptibility),
            ("inherent bias", &inherent_bias),
            ("persistence", &persistence),
        ] {
            if v.len() != n {
                return Err(Error::Dimension {
                    context: ctx,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        if let Some(&(w, v)) = edges.iter().find(|&&(w, v)| w >= n || v >= n) {
            return Err(Error::EdgeOutOfRange {
                listener: w,
                speaker: v,
                n,
            });
        }
        Ok(Self {
            edges,
            influence,
            susceptibility,
            inherent_bias,
            persistence,
            credibility: None,
        })
    }

    /// Builds `P` from adjacency and credibility, then assembles the network.
    pub fn from_credibility(
        edges: impl IntoIterator<Item = Edge>,
        credibility: Vector,
        susceptibility: Vector,
        inherent_bias: Vector,
        persistence: Vector,
    ) -> Result<Self> {
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        let p = build_influence_matrix(credibility.len(), &edges, &credibility)?;
        let mut net = Self::new(edges, p, susceptibility, inherent_bias, persistence)?;
        net.credibility = Some(credibility);
        Ok(net)
    }

    pub fn n_agents(&self) -> usize {
        self.influence.nrows()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    /// Row-stochastic influence matrix `P`.
    pub fn influence(&self) -> &Mat {
        &self.influence
    }

    /// Diagonal of `Λ`.
    pub fn susceptibility(&self) -> &Vector {
        &self.susceptibility
    }

    /// Persistent bias `u°`.
    pub fn inherent_bias(&self) -> &Vector {
        &self.inherent_bias
    }

    /// Persistence weights `ρ`.
    pub fn persistence(&self) -> &Vector {
        &self.persistence
    }

    pub fn credibility(&self) -> Option<&Vector> {
        self.credibility.as_ref()
    }

    /// `ΛP`.
    pub fn lambda_p(&self) -> Mat {
        crate::linalg::scale_rows(&self.susceptibility, &self.influence)
    }

    /// Diagonal of `I − Λ`.
    pub fn receptivity(&self) -> Vector {
        self.susceptibility.map(|l| 1.0 - l)
    }

    /// Copy of the network with a different persistence vector.
    pub fn with_persistence(&self, rho: Vector) -> Result<Self> {
        if rho.len() != self.n_agents() {
            return Err(Error::Dimension {
                context: "persistence",
                expected: self.n_agents(),
                got: rho.len(),
            });
        }
        let mut out = self.clone();
        out.persistence = rho;
        Ok(out)
    }
}

/// Profile the influence weights are derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibilityProfile {
    pub reliability: Vector,
    pub prejudice_penalty_count: Vec<u32>,
    pub credibility: Vector,
}

/// Masks credibility by adjacency and row-normalizes.
///
/// Row `w` gets `P[w,v] = c_v / Σ_{(w,v')∈E} c_v'` for every edge `(w,v)`
/// and zero elsewhere.
pub fn build_influence_matrix(n: usize, edges: &BTreeSet<Edge>, credibility: &Vector) -> Result<Mat> {
    if credibility.len() != n {
        return Err(Error::Dimension {
            context: "credibility",
            expected: n,
            got: credibility.len(),
        });
    }
    if let Some((agent, &value)) = credibility
        .iter()
        .enumerate()
        .find(|(_, c)| !(**c > 0.0) || !c.is_finite())
    {
        return Err(Error::NonPositiveCredibility { agent, value });
    }
    let mut p = DMatrix::zeros(n, n);
    let mut row_sum = vec![0.0; n];
    for &(w, v) in edges {
        if w >= n || v >= n {
            return Err(Error::EdgeOutOfRange {
                listener: w,
                speaker: v,
                n,
            });
        }
        p[(w, v)] = credibility[v];
        row_sum[w] += credibility[v];
    }
    for (w, s) in row_sum.iter().enumerate() {
        if *s == 0.0 {
            return Err(Error::IsolatedListener { agent: w });
        }
    }
    for (w, mut row) in p.row_iter_mut().enumerate() {
        row /= row_sum[w];
    }
    Ok(p)
}

/// One violated structural invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { row: usize, sum: f64 },
    NegativeEntry { row: usize, col: usize, value: f64 },
    OutsideAdjacency { row: usize, col: usize, value: f64 },
    OutOfUnitRange { field: &'static str, agent: usize, value: f64 },
    /// Agents with no directed path to an agent of susceptibility below one.
    Unreachable { unreachable: Vec<usize> },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RowSum { row, sum } => {
                write!(f, "row-stochasticity: row {row} sums to {sum}")
            }
            Violation::NegativeEntry { row, col, value } => {
                write!(f, "nonnegativity: P[{row},{col}] = {value}")
            }
            Violation::OutsideAdjacency { row, col, value } => {
                write!(f, "support: P[{row},{col}] = {value} without edge")
            }
            Violation::OutOfUnitRange {
                field,
                agent,
                value,
            } => write!(f, "range: {field}[{agent}] = {value} outside [0,1]"),
            Violation::Unreachable { unreachable } => write!(
                f,
                "reachability: {} agent(s) cannot reach an agent with λ < 1 (first: {:?})",
                unreachable.len(),
                unreachable.iter().take(5).collect::<Vec<_>>()
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            return write!(f, "pass");
        }
        write!(f, "fail")?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

pub fn validate_network(net: &InfluenceNetwork) -> ValidationReport {
    let mut violations = Vec::new();
    let n = net.n_agents();
    let p = net.influence();
    for w in 0..n {
        let mut sum = 0.0;
        for v in 0..n {
            let val = p[(w, v)];
            sum += val;
            if val < 0.0 {
                violations.push(Violation::NegativeEntry {
                    row: w,
                    col: v,
                    value: val,
                });
            } else if val > 0.0 && !net.edges.contains(&(w, v)) {
                violations.push(Violation::OutsideAdjacency {
                    row: w,
                    col: v,
                    value: val,
                });
            }
        }
        if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
            violations.push(Violation::RowSum { row: w, sum });
        }
    }
    for (field, vec) in [
        ("lambda", net.susceptibility()),
        ("u_o", net.inherent_bias()),
        ("rho", net.persistence()),
    ] {
        for (agent, &value) in vec.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                violations.push(Violation::OutOfUnitRange {
                    field,
                    agent,
                    value,
                });
            }
        }
    }
    let unreachable = agents_without_open_path(net);
    if !unreachable.is_empty() {
        violations.push(Violation::Unreachable { unreachable });
    }
    ValidationReport { violations }
}

/// Reverse BFS from `{v : λ_v < 1}` along edges `(w, v)`.
fn agents_without_open_path(net: &InfluenceNetwork) -> Vec<usize> {
    let n = net.n_agents();
    let mut listeners_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(w, v) in net.edges() {
        listeners_of[v].push(w);
    }
    let mut reached = vec![false; n];
    let mut queue = VecDeque::new();
    for (v, &l) in net.susceptibility().iter().enumerate() {
        if l < 1.0 {
            reached[v] = true;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &listeners_of[v] {
            if !reached[w] {
                reached[w] = true;
                queue.push_back(w);
            }
        }
    }
    (0..n).filter(|&i| !reached[i]).collect()
}

pub const SPECTRAL_TOL: f64 = 1e-10;
pub const SPECTRAL_MAX_ITER: usize = 10_000;
const SPECTRAL_SEED: u64 = 0x0005_eed0_fa11;

/// Largest eigenvalue magnitude by power iteration.
///
/// Entrywise nonnegative matrices are iterated with the shift `M + I`, whose
/// Perron root strictly dominates every other eigenvalue in modulus even for
/// periodic (e.g. bipartite) graphs. Other matrices use the two-step ratio
/// `sqrt(‖M²v‖/‖v‖)`, which also settles for `±r` eigenvalue pairs.
pub fn spectral_radius(m: &Mat, tol: f64, max_iter: usize) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension {
            context: "spectral radius (square matrix)",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SPECTRAL_SEED);
    let mut v = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
    v /= v.norm();
    let nonneg = m.iter().all(|&x| x >= 0.0);
    let mut last = f64::NAN;
    for _ in 0..max_iter {
        let est;
        if nonneg {
            let w = m * &v + &v;
            let nw = w.norm();
            est = nw - 1.0;
            if nw == 0.0 {
                return Ok(0.0);
            }
            v = w / nw;
        } else {
            let w1 = m * &v;
            let w2 = m * &w1;
            let n2 = w2.norm();
            est = n2.sqrt();
            if n2 == 0.0 {
                return Ok(0.0);
            }
            v = w2 / n2;
        }
        if (est - last).abs() <= tol {
            return Ok(est.max(0.0));
        }
        last = est;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_estimate: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(list: &[(usize, usize)]) -> BTreeSet<Edge> {
        list.iter().copied().collect()
    }

    fn two_node() -> InfluenceNetwork {
        InfluenceNetwork::from_credibility(
            [(0, 1), (1, 0)],
            DVector::from_vec(vec![2.0, 1.0]),
            DVector::from_vec(vec![0.5, 0.5]),
            DVector::from_vec(vec![0.3, 0.6]),
            DVector::from_vec(vec![0.7, 0.7]),
        )
        .unwrap()
    }

    #[test]
    fn mutual_pair_forces_unit_weights() {
        let p = build_influence_matrix(2, &edges(&[(0, 1), (1, 0)]), &DVector::from_vec(vec![2.0, 1.0]))
            .unwrap();
        assert_eq!(p, Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn complete_triangle_normalizes_masked_credibility() {
        let e = edges(&[(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        let p = build_influence_matrix(3, &e, &DVector::from_vec(vec![1.0, 1.0, 2.0])).unwrap();
        assert!((p[(0, 0)]).abs() < 1e-15);
        assert!((p[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[(0, 2)] - 2.0 / 3.0).abs() < 1e-15);
        for r in p.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn isolated_listener_is_named() {
        let err = build_influence_matrix(3, &edges(&[(0, 1), (1, 0)]), &DVector::from_element(3, 1.0))
            .unwrap_err();
        assert!(matches!(err, Error::IsolatedListener { agent: 2 }));
    }

    #[test]
    fn nonpositive_credibility_rejected() {
        let err = build_influence_matrix(2, &edges(&[(0, 1), (1, 0)]), &DVector::from_vec(vec![1.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::NonPositiveCredibility { agent: 1, .. }));
    }

    #[test]
    fn valid_pair_passes() {
        assert!(validate_network(&two_node()).passed());
    }

    #[test]
    fn all_stubborn_peers_fail_assumption_1() {
        let net = two_node();
        let net = InfluenceNetwork::new(
            net.edges().iter().copied(),
            net.influence().clone(),
            DVector::from_element(2, 1.0),
            net.inherent_bias().clone(),
            net.persistence().clone(),
        )
        .unwrap();
        let report = validate_network(&net);
        assert!(!report.passed());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Unreachable { unreachable } if unreachable.len() == 2)));
    }

    #[test]
    fn short_row_fails_row_stochasticity() {
        let net = two_node();
        let mut p = net.influence().clone();
        p[(0, 1)] = 0.9;
        let bad = InfluenceNetwork::new(
            net.edges().iter().copied(),
            p,
            net.susceptibility().clone(),
            net.inherent_bias().clone(),
            net.persistence().clone(),
        )
        .unwrap();
        let report = validate_network(&bad);
        assert_eq!(report.violations, vec![Violation::RowSum { row: 0, sum: 0.9 }]);
    }

    #[test]
    fn assumption_1_follows_paths() {
        // 0 -> 1 -> 2, only agent 2 is open to its bias
        let e = edges(&[(0, 1), (1, 2), (2, 1)]);
        let p = build_influence_matrix(3, &e, &DVector::from_element(3, 1.0)).unwrap();
        let net = InfluenceNetwork::new(
            e,
            p,
            DVector::from_vec(vec![1.0, 1.0, 0.5]),
            DVector::from_element(3, 0.5),
            DVector::from_element(3, 0.5),
        )
        .unwrap();
        assert!(validate_network(&net).passed());
    }

    #[test]
    fn spectral_radius_examples() {
        let tol = SPECTRAL_TOL;
        let r = spectral_radius(&Mat::identity(3, 3), tol, SPECTRAL_MAX_ITER).unwrap();
        assert!((r - 1.0).abs() < 1e-9);
        let r = spectral_radius(&Mat::zeros(3, 3), tol, SPECTRAL_MAX_ITER).unwrap();
        assert!(r.abs() < 1e-12);
        let m = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.25, 0.0]);
        let r = spectral_radius(&m, tol, SPECTRAL_MAX_ITER).unwrap();
        assert!((r - 0.5).abs() < 1e-8, "{r}");
    }

    #[test]
    fn spectral_radius_signed_matrix() {
        // eigenvalues ±0.6 plus 0.1
        let m = Mat::from_row_slice(3, 3, &[0.0, -0.6, 0.0, -0.6, 0.0, 0.0, 0.0, 0.0, 0.1]);
        let r = spectral_radius(&m, 1e-12, SPECTRAL_MAX_ITER).unwrap();
        assert!((r - 0.6).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_reports_non_convergence() {
        // eigenvalues e^{±iπ/3} of a non-normal matrix: the estimate keeps oscillating
        let m = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 1.0]);
        match spectral_radius(&m, 1e-14, 50) {
            Err(Error::NoConvergence { iterations, last_estimate }) => {
                assert_eq!(iterations, 50);
                assert!(last_estimate.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
