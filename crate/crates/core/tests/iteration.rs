//! The iteration, its stopping rules and the Monte Carlo layer.

use nalgebra::DVector;

use sdbli::data_driven::{build_all, generate_training};
use sdbli::diagnostics::{monte_carlo, noise_sweep, run_replications};
use sdbli::forward::{dense_laplacian, solve_forward};
use sdbli::solver::{
    a_priori_stop, check_admissibility, run_sdbli, run_sdbli_stream, sdbli_step, validate_trace,
    Problem, SolverConfig, StopReason,
};
use sdbli::system::{
    estimate_constants, make_partition, synthesize_truth, ExactData, NoisyData, PartitionScheme,
    SamplingRegion, TruthKind,
};
use sdbli::{Experiment, ExperimentConfig, GridFunction, GridSpec, NewtonConfig};

fn experiment(extra_solver: &str, p: usize, delta: f64) -> Experiment {
    let text = format!(
        r#"{{"grid": {{"n": 6}}, "system": {{"P": {p}, "scheme": "stripes"}},
            "truth": {{"kind": "random_fourier", "seed": 4}},
            "noise": {{"delta_total": {delta}, "seed": 2}},
            "training": {{"N": 4, "seed": 5}},
            "estimation": {{"n_samples": 4, "seed": 1}},
            "solver": {{"seed": 3 {extra_solver}}}}}"#
    );
    Experiment::build(&ExperimentConfig::from_json(&text).unwrap()).unwrap()
}

fn linear_problem(spec: GridSpec, u_true: &GridFunction, operators: bool) -> Problem {
    let cfg = NewtonConfig::default();
    let part = make_partition(spec, 1, PartitionScheme::Stripes).unwrap();
    let exact = ExactData::new(u_true.clone(), &part, &cfg).unwrap();
    let ops = if operators {
        let ts = generate_training(&part, 3, TruthKind::GaussianBumps, 1, &cfg, None).unwrap();
        build_all(&ts, 1, 1e-12).unwrap()
    } else {
        Vec::new()
    };
    Problem {
        partition: part,
        newton: cfg,
        data: NoisyData::exact(&exact),
        operators: ops,
        truth: Some(u_true.clone()),
    }
}

#[test]
fn pure_landweber_step_matches_dense_computation() {
    let spec = GridSpec::new(5).unwrap();
    let u_true = GridFunction::from_fn(spec, |x, y| -50.0 - 10.0 * x * y);
    let u_k = GridFunction::constant(spec, -80.0);
    let problem = linear_problem(spec, &u_true, true);
    let cfg = SolverConfig { c_lambda: 0.0, omega_bar: 2.0, omega_min: 1.0, omega_max: 3.0, ..Default::default() };
    let state = solve_forward(&u_k, &problem.newton).unwrap();
    assert!(state.y.values().iter().all(|v| *v < 0.0));
    let out = sdbli_step(0, &u_k, 0, state, &problem, &cfg).unwrap();
    assert_eq!(out.record.lambda_k, 0.0);
    assert_eq!(out.record.omega_k, 2.0);

    let chol = dense_laplacian(spec).cholesky().unwrap();
    let u = DVector::from_column_slice(u_k.values());
    let y = DVector::from_column_slice(problem.data.y_delta_parts[0].values());
    let want = &u - 2.0 * chol.solve(&(chol.solve(&u) - y));
    let got = DVector::from_column_slice(out.u_next.values());
    assert!((got - &want).norm() <= 1e-10 * want.norm());
}

#[test]
fn closed_gate_leaves_only_the_data_driven_term() {
    let spec = GridSpec::new(5).unwrap();
    let u_true = synthesize_truth(spec, TruthKind::GaussianBumps, 3);
    let mut problem = linear_problem(spec, &u_true, true);
    problem.data.deltas = vec![1e6];
    let cfg = SolverConfig { c_lambda: 0.5, lambda_max: 10.0, ..Default::default() };
    let u_k = GridFunction::zeros(spec);
    let state = solve_forward(&u_k, &problem.newton).unwrap();
    let out = sdbli_step(0, &u_k, 0, state, &problem, &cfg).unwrap();
    assert_eq!(out.record.omega_k, 0.0);
    assert!(out.record.lambda_k > 0.0);
    let op = &problem.operators[0];
    let mis = op.apply(&u_k).unwrap().sub(&problem.data.y_delta_parts[0]).unwrap();
    let want = u_k.axpy(-out.record.lambda_k, &op.apply_adjoint(&mis).unwrap()).unwrap();
    assert_eq!(out.u_next, want);
}

#[test]
fn truth_is_a_fixed_point_and_the_run_freezes() {
    let spec = GridSpec::new(5).unwrap();
    let u_true = synthesize_truth(spec, TruthKind::RandomFourier, 8);
    let problem = linear_problem(spec, &u_true, true);
    let cfg = SolverConfig { max_iters: 50, ..Default::default() };
    let state = solve_forward(&u_true, &problem.newton).unwrap();
    let out = sdbli_step(0, &u_true, 0, state, &problem, &cfg).unwrap();
    assert_eq!((out.record.omega_k, out.record.lambda_k), (0.0, 0.0));
    assert_eq!(out.u_next, u_true);

    let trace = run_sdbli(&u_true, &problem, &cfg, 0.0).unwrap();
    assert_eq!(trace.stop_reason, StopReason::Frozen);
    assert_eq!(trace.k_stop, cfg.freeze_period(1));
    assert!(trace.records.iter().all(|r| r.omega_k == 0.0 && r.lambda_k == 0.0));
    assert_eq!(trace.final_u, u_true);
    assert!(validate_trace(&trace, &problem.data.deltas, &cfg).is_ok());
}

#[test]
fn noisy_runs_stop_at_the_a_priori_index() {
    let ex = experiment(r#", "K0": 0.5, "max_iters": 1000"#, 2, 0.05);
    let cfg = ex.solver_config();
    let trace = run_sdbli(&ex.u0, &ex.problem(), &cfg, ex.delta_total()).unwrap();
    assert_eq!(trace.stop_reason, StopReason::APriori);
    assert_eq!(trace.k_stop, 10);
    assert_eq!(trace.k_stop, a_priori_stop(0.05, &cfg).unwrap());
    assert!(validate_trace(&trace, &ex.problem().data.deltas, &cfg).is_ok());

    let budget = SolverConfig { max_iters: 7, ..cfg };
    let t = run_sdbli(&ex.u0, &ex.problem(), &budget, ex.delta_total()).unwrap();
    assert_eq!((t.stop_reason, t.k_stop), (StopReason::Budget, 7));
}

#[test]
fn same_seed_same_trace() {
    let ex = experiment(r#", "max_iters": 60"#, 3, 0.0);
    let cfg = ex.solver_config();
    let a = run_sdbli_stream(&ex.u0, &ex.problem(), &cfg, 0.0, 5).unwrap();
    let b = run_sdbli_stream(&ex.u0, &ex.problem(), &cfg, 0.0, 5).unwrap();
    assert_eq!(a.records, b.records);
    assert!(a.final_u.values().iter().zip(b.final_u.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let c = run_sdbli_stream(&ex.u0, &ex.problem(), &cfg, 0.0, 6).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn monte_carlo_edge_cases() {
    // starting at the truth with exact data: nothing moves
    let ex = experiment(r#", "max_iters": 30"#, 2, 0.0);
    let cfg = ex.solver_config();
    let s = monte_carlo(ex.truth(), &ex.problem(), &cfg, 0.0, 3, 1).unwrap();
    assert!(s.mean_sq_err.iter().all(|m| *m == 0.0));
    assert!(s.contract_violations.is_empty());

    // one equation: every replication is the same run
    let ex = experiment(r#", "max_iters": 30"#, 1, 0.01);
    let cfg = ex.solver_config();
    let s = monte_carlo(&ex.u0, &ex.problem(), &cfg, ex.delta_total(), 4, 5).unwrap();
    assert!(s.stderr_err.iter().chain(&s.stderr_residual).all(|v| *v == 0.0));
    assert!(s.mean_sq_err[0] > *s.mean_sq_err.last().unwrap());
}

#[test]
fn more_replications_reuse_the_first_streams() {
    let ex = experiment(r#", "max_iters": 25"#, 3, 0.0);
    let cfg = ex.solver_config();
    let few = run_replications(&ex.u0, &ex.problem(), &cfg, 0.0, 2).unwrap();
    let many = run_replications(&ex.u0, &ex.problem(), &cfg, 0.0, 4).unwrap();
    for (a, b) in few.iter().zip(&many) {
        assert_eq!(a.records, b.records);
    }
}

#[test]
fn sweep_rows_echo_the_stopping_index() {
    let ex = experiment(r#", "K0": 2.0"#, 2, 0.0);
    let cfg = ex.solver_config();
    let one = noise_sweep(&ex.u0, |d| ex.problem_with_noise(d), &cfg, &[0.1], 2, 5).unwrap();
    assert_eq!(one.rows.len(), 1);
    assert!(one.violations.is_empty());
    let t = noise_sweep(&ex.u0, |d| ex.problem_with_noise(d), &cfg, &[0.2, 0.1], 2, 5).unwrap();
    for row in &t.rows {
        assert_eq!(row.k_delta, a_priori_stop(row.delta, &cfg).unwrap());
        assert_eq!(row.k_delta, (2.0 / row.delta).ceil() as usize);
        assert!(row.k_stop_max <= row.k_delta);
    }
    assert!(t.contract_violations.is_empty());
    assert!(noise_sweep(&ex.u0, |d| ex.problem_with_noise(d), &cfg, &[0.1, 0.2], 2, 5).is_err());
}

#[test]
fn linear_region_constants_admit_pure_landweber() {
    let spec = GridSpec::new(6).unwrap();
    let u_true = GridFunction::constant(spec, -150.0);
    let problem = linear_problem(spec, &u_true, true);
    let exact = ExactData::new(u_true.clone(), &problem.partition, &problem.newton).unwrap();
    let region = SamplingRegion { center: u_true, radius: 10.0, kind: TruthKind::GaussianBumps };
    let consts = estimate_constants(
        &problem.partition, &region, 6, 2, &problem.newton, &problem.operators, &exact, &problem.data,
    )
    .unwrap();
    let cfg = SolverConfig { c_lambda: 0.0, tau: 1e9, ..Default::default() };
    let report = check_admissibility(&consts, &cfg, Some(10.0));
    assert!(report.step_condition_holds && report.exact_condition_holds);
    assert!(report.step_condition_slack > 0.0 && report.c_tilde_f > 0.0);
    assert_eq!(report.data_driven_penalty, 0.0);
}
