mod common;

use common::{closed_form_equilibrium, small_network};
use fjmem::budget::BudgetLedger;
use fjmem::dynamics::{
    assemble_augmented, simulate_trajectory, step, AugmentedModel, EstimatorKind, IncentiveInput, MemoryKernel,
    SimState, Trajectory, TrajectoryStep, ZeroPolicy,
};
use fjmem::linalg::{Mat, Vector};
use fjmem::network::{generate_synthetic_network, GeneratorConfig, InfluenceNetwork};
use fjmem::policy::{
    assemble_mpc_qp, mpc_step, naive_policy, run_naive, run_receding_horizon, summarize_run, terminal_cost,
    terminal_value, MpcConfig, MpcController, MpcModel, RunSetup,
};
use fjmem::qp::{QpSettings, QpStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight_config(n: usize, horizon: usize) -> MpcConfig {
    let mut cfg = MpcConfig::standard(n);
    cfg.horizon = horizon;
    cfg.solver = QpSettings {
        tol_p: 1e-9,
        tol_d: 1e-9,
        max_iter: 200_000,
        ..QpSettings::default()
    };
    cfg
}

fn two_agents() -> InfluenceNetwork {
    InfluenceNetwork::new(
        [(0, 1), (1, 0)],
        Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        Vector::from_vec(vec![0.5, 0.5]),
        Vector::from_vec(vec![0.2, 0.5]),
        Vector::from_vec(vec![0.7, 1.0]),
    )
    .unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, t: usize) -> SimState {
    SimState {
        t,
        x: Vector::from_fn(n, |_, _| rng.random_range(0.0..1.0)),
        u_mem: Vector::from_fn(n, |_, _| rng.random_range(0.0..0.1)),
    }
}

#[test]
fn naive_allocation_on_the_synthetic_network() {
    let (net, _) = generate_synthetic_network(&GeneratorConfig::default(), 1).unwrap();
    let (u_s, u_l) = naive_policy(&net, 200.0, 11).unwrap();
    let u_bar: f64 = 200.0 / 1232.0;
    assert!((u_bar - 0.162338).abs() < 1e-6);
    assert!(u_l.iter().all(|&v| (v - u_bar).abs() < 1e-15));
    assert!(u_s.iter().all(|&v| v <= u_bar + 1e-15 && v >= 0.0));
}

#[test]
fn naive_saturation_and_caps() {
    let net = two_agents();
    let (u_s, u_l) = naive_policy(&net, 1e6, 3).unwrap();
    assert_eq!(u_l, Vector::from_vec(vec![1.0, 1.0]));
    assert!((u_s[0] - 0.1 / 0.3).abs() < 1e-12);
    assert_eq!(u_s[1], 0.0);
    let (u_s, u_l) = naive_policy(&net, 3.0, 3).unwrap();
    assert!((u_l[0] - 0.5).abs() < 1e-15);
    assert!((u_s[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!(naive_policy(&net, 1.0, 0).is_err());
    assert!(naive_policy(&net, -1.0, 2).is_err());
}

#[test]
fn terminal_value_matches_the_stacked_form() {
    let net = small_network(5, 6);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let aug = assemble_augmented(&net, &kernel).unwrap();
    let cert = terminal_cost(&aug, &Mat::identity(12, 12)).unwrap();
    assert!(cert.residual <= 1e-10);
    let ones = Vector::from_element(6, 1.0);
    assert_eq!(terminal_value(&cert, &ones, &Vector::zeros(6)), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let x = Vector::from_fn(6, |_, _| rng.random_range(0.0..1.0));
        let m = Vector::from_fn(6, |_, _| rng.random_range(0.0..1.0));
        let dev = AugmentedModel::stack(&(&ones - &x), &m);
        let full = dev.dot(&(&cert.p_matrix * &dev));
        let blocks = terminal_value(&cert, &x, &m);
        assert!((full - blocks).abs() <= 1e-12 * full.max(1.0), "{full} vs {blocks}");
    }
}

#[test]
fn terminal_cost_decreases_along_the_unforced_dynamics() {
    let net = small_network(8, 7);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let aug = assemble_augmented(&net, &kernel).unwrap();
    let q = Mat::identity(14, 14) * 0.5;
    let cert = terminal_cost(&aug, &q).unwrap();
    let p = &cert.p_matrix;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let z = Vector::from_fn(14, |_, _| rng.random_range(-1.0..1.0));
        let next = &aug.a_aug * &z;
        let lhs = next.dot(&(p * &next));
        let rhs = z.dot(&(p * &z)) - z.dot(&(&q * &z));
        assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }
}

#[test]
fn nilpotent_augmented_matrix_needs_few_doublings() {
    let n = 3;
    let mut a_aug = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        a_aug[(i, n + i)] = 0.4;
    }
    let aug = AugmentedModel {
        a_aug,
        b_s: Mat::zeros(2 * n, n),
        b_l: Mat::zeros(2 * n, n),
        b_o: Mat::zeros(2 * n, n),
    };
    let cert = terminal_cost(&aug, &Mat::identity(2 * n, 2 * n)).unwrap();
    assert!(cert.doubling_steps <= 3);
    assert!(cert.residual <= 1e-10);
}

#[test]
fn condensed_prediction_matches_stepping() {
    let n = 6;
    let net = small_network(3, n);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let cfg = tight_config(n, 5);
    let model = MpcModel::new(&net, &kernel, &cfg, 0.4).unwrap();
    assert_eq!(model.dim(), 2 * n * 5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let s0 = SimState {
            t: 0,
            x: Vector::from_fn(n, |_, _| rng.random_range(0.0..1.0)),
            u_mem: Vector::from_fn(n, |_, _| rng.random_range(0.0..0.05)),
        };
        let z = Vector::from_fn(model.dim(), |_, _| rng.random_range(0.0..0.05));
        let predicted = model.predict(&s0, &z).unwrap();
        let schedule = model.schedule(&s0, &z).unwrap();
        let mut s = s0.clone();
        for h in 0..5 {
            let input = IncentiveInput::new(
                schedule.u_s_plan.row(h).transpose(),
                schedule.u_l_plan.row(h).transpose(),
            );
            s = step(&net, &kernel, &s, &input).unwrap();
            let stacked = AugmentedModel::stack(&s.x, &s.u_mem);
            assert!((&stacked - &predicted[h + 1]).amax() <= 1e-10);
        }
    }
}

#[test]
fn condensed_cost_matches_the_qp_objective() {
    let n = 5;
    let net = small_network(11, n);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let cfg = tight_config(n, 4);
    let model = MpcModel::new(&net, &kernel, &cfg, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let state = random_state(&mut rng, n, 0);
    let p = model.problem(&state, 10.0).unwrap();
    let offset = model.cost_offset(&state).unwrap();
    for _ in 0..10 {
        let z = Vector::from_fn(model.dim(), |_, _| rng.random_range(0.0..1.0));
        let direct = model.cost(&state, &z).unwrap();
        let qp = p.objective(&z) + offset;
        assert!((direct - qp).abs() <= 1e-9 * direct.abs().max(1.0), "{direct} vs {qp}");
    }
}

#[test]
fn pure_effort_penalty_gives_a_zero_plan() {
    let n = 5;
    let net = small_network(6, n);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let mut cfg = tight_config(n, 4);
    cfg.q_weight = Mat::identity(n, n) * 1e-12;
    cfg.q_terminal = Mat::identity(2 * n, 2 * n) * 1e-12;
    cfg.r1_weight = Mat::identity(n, n);
    cfg.r2_weight = Mat::identity(n, n);
    let ledger = BudgetLedger::new(100.0, 0.5).unwrap();
    let state = SimState::new(net.inherent_bias().clone());
    let out = mpc_step(&state, &net, &kernel, &cfg, &ledger, 0.5).unwrap();
    assert!(out.schedule.u_s_plan.amax() < 1e-9);
    assert!(out.schedule.u_l_plan.amax() < 1e-9);
}

#[test]
fn empty_budget_applies_nothing() {
    let n = 6;
    let net = small_network(2, n);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let cfg = MpcConfig {
        horizon: 4,
        ..MpcConfig::standard(n)
    };
    let ledger = BudgetLedger::new(0.0, 0.5).unwrap();
    let state = SimState::new(net.inherent_bias().clone());
    let p = assemble_mpc_qp(&state, &net, &kernel, &cfg, 0.0, 0.5).unwrap();
    assert!(p.ineq_bound.rows(n * 4, 4).iter().all(|&v| v == 0.0));
    let out = mpc_step(&state, &net, &kernel, &cfg, &ledger, 0.5).unwrap();
    assert_eq!(out.applied, IncentiveInput::zeros(n));
}

#[test]
fn plan_dominates_zero_and_naive_plans() {
    let n = 6;
    let horizon = 4;
    let net = small_network(13, n);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let cfg = tight_config(n, horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut naive_checked = 0;
    for (k, remaining) in [0.5, 2.0, 8.0, 40.0].into_iter().enumerate() {
        let mut ctrl = MpcController::new(&net, &kernel, &cfg, 0.5).unwrap();
        let state = random_state(&mut rng, n, k);
        let out = ctrl.plan(&state, remaining).unwrap();
        assert_eq!(out.diagnostics.status, QpStatus::Optimal);
        let model = ctrl.model();
        let zero = model.cost(&state, &Vector::zeros(model.dim())).unwrap();
        assert!(out.diagnostics.objective <= zero + 1e-9);
        let (u_s, u_l) = naive_policy(&net, remaining, horizon).unwrap();
        let plan = model.constant_plan(&u_s, &u_l);
        let p = model.problem(&state, remaining).unwrap();
        let slack = &p.ineq_bound - &p.ineq_matrix * &plan;
        if slack.min() >= 0.0 {
            naive_checked += 1;
            let naive = model.cost(&state, &plan).unwrap();
            assert!(out.diagnostics.objective <= naive + 1e-9, "{} > {naive}", out.diagnostics.objective);
        }
    }
    assert!(naive_checked > 0);
}

#[test]
fn first_stage_reproduces_the_prediction() {
    let n = 6;
    let net = small_network(17, n);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let cfg = tight_config(n, 5);
    let mut ctrl = MpcController::new(&net, &kernel, &cfg, 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let state = random_state(&mut rng, n, 0);
    let out = ctrl.plan(&state, 5.0).unwrap();
    let first = IncentiveInput::new(out.schedule.u_s_plan.row(0).transpose(), out.schedule.u_l_plan.row(0).transpose());
    let next = step(&net, &kernel, &state, &first).unwrap();
    assert!((&next.x - out.schedule.predicted_x.row(1).transpose()).amax() <= 1e-8);
    assert!((&next.u_mem - out.schedule.predicted_u_mem.row(1).transpose()).amax() <= 1e-8);
    assert!((&out.applied.u_s - &first.u_s).amax() <= 1e-8);
}

#[test]
fn zero_budget_run_is_the_open_loop() {
    let n = 6;
    let net = small_network(23, n);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let cfg = MpcConfig {
        horizon: 3,
        ..MpcConfig::standard(n)
    };
    let setup = RunSetup {
        beta: 0.0,
        alpha: 0.5,
        run_length: 200,
        seed: 4,
        estimator: EstimatorKind::RunningMean,
    };
    let rh = run_receding_horizon(&net, &kernel, &cfg, &setup, None).unwrap();
    let mut ledger = BudgetLedger::new(0.0, 0.5).unwrap();
    let open = simulate_trajectory(
        &net,
        &kernel,
        &mut ZeroPolicy,
        200,
        &mut ledger,
        4,
        EstimatorKind::RunningMean,
        net.inherent_bias(),
    )
    .unwrap();
    for (a, b) in rh.trajectory.steps.iter().zip(&open.steps) {
        assert_eq!(a.x, b.x);
    }
    let eq = closed_form_equilibrium(&net, net.inherent_bias());
    assert!((&rh.trajectory.final_state().unwrap().x - eq).amax() < 1e-6);
    assert_eq!(rh.summary.residual_budget, 0.0);
}

#[test]
fn closed_loop_respects_boxes_and_budget() {
    let n = 8;
    let net = small_network(31, n);
    let kernel = MemoryKernel::iir(3.0).unwrap();
    let cfg = MpcConfig {
        horizon: 5,
        ..MpcConfig::standard(n)
    };
    for (alpha, beta) in [(0.2, 10.0), (0.8, 30.0)] {
        let setup = RunSetup {
            beta,
            alpha,
            run_length: 11,
            seed: 12,
            estimator: EstimatorKind::RunningMean,
        };
        for run in [
            run_receding_horizon(&net, &kernel, &cfg, &setup, None).unwrap(),
            run_naive(&net, &kernel, &setup).unwrap(),
        ] {
            let mut last = f64::INFINITY;
            for s in &run.trajectory.steps {
                for v in [&s.x, &s.input.u_s, &s.input.u_l, &s.u_effective] {
                    assert!(v.iter().all(|&e| (0.0..=1.0).contains(&e)));
                }
                assert!(s.remaining >= 0.0 && s.remaining <= last);
                last = s.remaining;
            }
            assert!(run.ledger.spend_history().iter().all(|&c| c >= 0.0));
            assert!(run.summary.residual_budget >= -1e-9);
        }
    }
}

fn hand_step(t: usize, x: &[f64], u_s: &[f64], u_l: &[f64]) -> TrajectoryStep {
    let v = |s: &[f64]| Vector::from_row_slice(s);
    TrajectoryStep {
        t,
        x: v(x),
        u_mem: Vector::zeros(x.len()),
        y: Vector::zeros(x.len()),
        mu: v(x),
        input: IncentiveInput::new(v(u_s), v(u_l)),
        u_effective: v(x),
        spend: 0.0,
        remaining: 0.0,
    }
}

#[test]
fn summary_of_a_hand_built_run() {
    let steps = vec![
        hand_step(0, &[0.5, 0.5], &[0.2, 0.0], &[0.1, 0.3]),
        hand_step(1, &[0.6, 0.4], &[0.4, 0.2], &[0.0, 0.2]),
        hand_step(2, &[0.9, 0.3], &[0.0, 0.0], &[0.0, 0.0]),
    ];
    let mut ledger = BudgetLedger::new(5.0, 0.5).unwrap();
    for s in &steps[..2] {
        ledger.charge(&s.input).unwrap();
    }
    let traj = Trajectory {
        policy: "hand".into(),
        alpha: 0.5,
        beta: 5.0,
        steps,
    };
    let s = summarize_run(&traj, &ledger).unwrap();
    assert!((s.x_bar_t - 0.6).abs() < 1e-15);
    assert!((s.sigma_x_t - 0.3).abs() < 1e-15);
    assert!((s.u_s_mean - 0.2).abs() < 1e-15);
    assert!((s.u_l_mean - 0.15).abs() < 1e-15);
    // spend = 0.5 (0.2 + 0.6) + 0.5 (0.4 + 0.2)
    assert!((s.residual_budget - (5.0 - 0.7)).abs() < 1e-12);
    assert_eq!(s.beta, 5.0);
}

#[test]
fn summary_of_constant_and_idle_runs() {
    let zeros = [0.0, 0.0, 0.0];
    let steps: Vec<_> = (0..4).map(|t| hand_step(t, &[0.3, 0.3, 0.3], &zeros, &zeros)).collect();
    let ledger = BudgetLedger::new(7.0, 0.5).unwrap();
    let traj = Trajectory {
        policy: "idle".into(),
        alpha: 0.5,
        beta: 7.0,
        steps,
    };
    let s = summarize_run(&traj, &ledger).unwrap();
    assert!((s.x_bar_t - 0.3).abs() < 1e-15);
    assert!(s.sigma_x_t.abs() < 1e-15);
    assert_eq!((s.u_s_mean, s.u_l_mean, s.residual_budget), (0.0, 0.0, 7.0));
    let empty = Trajectory {
        policy: "none".into(),
        alpha: 0.5,
        beta: 7.0,
        steps: Vec::new(),
    };
    assert!(summarize_run(&empty, &ledger).is_err());
}
