mod common;

use common::{dual_projected_gradient, random_qp};
use fjmem::qp::{kkt_residuals, solve_qp, AdmmSolver, QpSettings, QpStatus};
use proptest::prelude::*;

#[test]
fn oracle_agrees_on_random_problems() {
    let mut worst_gap = 0.0_f64;
    for seed in 0..200 {
        let p = random_qp(seed, 8, 12);
        let sol = solve_qp(&p, 1e-8, 1e-8, 50_000).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "seed {seed}");
        let oracle = dual_projected_gradient(&p, 1_000_000);
        assert!(oracle.violation <= 1e-9, "seed {seed}: oracle violation {}", oracle.violation);
        let gap = (sol.objective - oracle.objective).abs();
        worst_gap = worst_gap.max(gap);
        assert!(gap <= 1e-6, "seed {seed}: gap {gap}");
        // weak duality brackets the solver's objective
        assert!(sol.objective >= oracle.dual_bound - 1e-6, "seed {seed}");
        let kkt = kkt_residuals(&p, &sol.z_star, &sol.y_ineq).unwrap();
        assert!(kkt.max() <= 1e-6, "seed {seed}: {kkt:?}");
    }
    eprintln!("worst objective gap {worst_gap:e}");
}

#[test]
fn best_objective_is_monotone() {
    for seed in 0..20 {
        let p = random_qp(1000 + seed, 8, 12);
        let mut solver = AdmmSolver::new(&p.hessian, &p.ineq_matrix, QpSettings::default()).unwrap();
        let mut seen = Vec::new();
        solver
            .solve_with_callback(&p.linear, &p.ineq_bound, &p.lower, &p.upper, &mut |info| {
                seen.push(info.best_objective)
            })
            .unwrap();
        let vals: Vec<f64> = seen.into_iter().flatten().collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn minimizer_is_scale_invariant(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let p = random_qp(seed, 6, 8);
        let mut scaled = p.clone();
        scaled.hessian *= scale;
        scaled.linear *= scale;
        // the dual residual scales with the objective, the primal one does not
        let a = solve_qp(&p, 1e-10, 1e-10, 500_000).unwrap();
        let b = solve_qp(&scaled, 1e-10, 1e-10 * scale, 500_000).unwrap();
        prop_assert_eq!(a.status, QpStatus::Optimal);
        prop_assert_eq!(b.status, QpStatus::Optimal);
        prop_assert!((a.z_star - b.z_star).amax() <= 1e-8);
    }

    #[test]
    fn optimal_solutions_respect_the_box_exactly(seed in 0u64..10_000) {
        let p = random_qp(seed, 8, 12);
        let s = solve_qp(&p, 1e-8, 1e-8, 50_000).unwrap();
        for i in 0..p.dim() {
            prop_assert!(s.z_star[i] >= p.lower[i] && s.z_star[i] <= p.upper[i]);
        }
    }
}
