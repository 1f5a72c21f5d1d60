//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use fjmem::linalg::{Mat, Vector};
use fjmem::network::{generate_synthetic_network, GeneratorConfig, InfluenceNetwork};
use fjmem::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strictly convex QP that is feasible by construction: an interior
/// point `z0` of the box satisfies `G z0 ≤ h`, some rows with equality.
pub fn random_qp(seed: u64, max_d: usize, max_m: usize) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=max_d);
    let m = rng.random_range(0..=max_m);
    let root = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let h = root.transpose() * &root + DMatrix::identity(d, d) * 0.1;
    let g = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    let lower = DVector::from_fn(d, |_, _| rng.random_range(-2.0..0.0));
    let upper = DVector::from_fn(d, |i, _| lower[i] + rng.random_range(0.5..3.0));
    let z0 = DVector::from_fn(d, |i, _| rng.random_range(lower[i]..upper[i]));
    let gm = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
    let gz0 = &gm * &z0;
    let hb = DVector::from_fn(m, |j, _| {
        if rng.random_bool(0.2) {
            gz0[j]
        } else {
            gz0[j] + rng.random_range(0.0..0.5)
        }
    });
    QpProblem::new(h, g, gm, hb, lower, upper).unwrap()
}

pub struct OracleResult {
    pub z: Vector,
    pub objective: f64,
    pub dual_bound: f64,
    pub violation: f64,
    pub iterations: usize,
}

/// Accelerated projected-gradient ascent on the dual of a strictly convex QP.
///
/// All constraints, box included, are dualized: `A = [G; I; -I]`,
/// `b = [h; u; -l]`, `z(λ) = -H⁻¹(g + Aᵀλ)`. Runs up to `max_iter`
/// iterations with gradient-based restarts, stopping early once `z(λ)` is
/// feasible and complementary to 1e-12.
pub fn dual_projected_gradient(p: &QpProblem, max_iter: usize) -> OracleResult {
    let d = p.dim();
    let m = p.n_ineq();
    let k = m + 2 * d;
    let mut a = DMatrix::zeros(k, d);
    let mut b = DVector::zeros(k);
    a.view_mut((0, 0), (m, d)).copy_from(&p.ineq_matrix);
    b.rows_mut(0, m).copy_from(&p.ineq_bound);
    for i in 0..d {
        a[(m + i, i)] = 1.0;
        b[m + i] = p.upper[i];
        a[(m + d + i, i)] = -1.0;
        b[m + d + i] = -p.lower[i];
    }
    let h_inv = p.hessian.clone().try_inverse().expect("oracle needs H ≻ 0");
    let h_inv = (&h_inv + h_inv.transpose()) * 0.5;
    let w = &a * &h_inv * a.transpose();
    let lip = w.clone().symmetric_eigen().eigenvalues.max().max(1e-12);
    let z_of = |lam: &Vector| -(&h_inv * (&p.linear + a.transpose() * lam));
    let dual = |lam: &Vector| {
        let v = &p.linear + a.transpose() * lam;
        -0.5 * v.dot(&(&h_inv * &v)) - b.dot(lam)
    };

    let mut lam = DVector::zeros(k);
    let mut mom = lam.clone();
    let mut t = 1.0_f64;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let z = z_of(&mom);
        let grad = &a * &z - &b;
        let next = (&mom + grad / lip).map(|v| v.max(0.0));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        // restart momentum when it points against the ascent step
        if (&next - &lam).dot(&(&next - &mom)) < 0.0 {
            t = 1.0;
            mom = next.clone();
        } else {
            mom = &next + (&next - &lam) * ((t - 1.0) / t_next);
            t = t_next;
        }
        lam = next;
        if it % 50 == 0 {
            let z = z_of(&lam);
            let slack = &a * &z - &b;
            let viol = slack.iter().fold(0.0_f64, |acc, &s| acc.max(s));
            let comp = (0..k).fold(0.0_f64, |acc, j| acc.max((lam[j] * slack[j]).abs()));
            if viol <= 1e-12 && comp <= 1e-12 {
                break;
            }
        }
    }
    let z = z_of(&lam);
    let slack = &a * &z - &b;
    OracleResult {
        objective: p.objective(&z),
        dual_bound: dual(&lam),
        violation: slack.iter().fold(0.0_f64, |acc, &s| acc.max(s)),
        z,
        iterations,
    }
}

/// Small synthetic network for property tests.
pub fn small_network(seed: u64, n: usize) -> InfluenceNetwork {
    let cfg = GeneratorConfig {
        n_agents: n,
        nearest_neighbors: 3.min(n.saturating_sub(1)).max(1),
        allow_self_loops: n == 1,
        ..Default::default()
    };
    generate_synthetic_network(&cfg, seed).unwrap().0
}

/// `(I - ΛP)⁻¹ (I - Λ) u` by an explicit inverse, independent of the
/// library's solver.
pub fn closed_form_equilibrium(net: &InfluenceNetwork, u: &Vector) -> Vector {
    let n = net.n_agents();
    let lam = net.susceptibility();
    let m = Mat::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - lam[i] * net.influence()[(i, j)]
    });
    let rhs = Vector::from_fn(n, |i, _| (1.0 - lam[i]) * u[i]);
    m.try_inverse().unwrap() * rhs
}
