//! End-to-end solver runs on the benchmark problems, with history audits.

mod common;

use rarc_core::problems::{self, ProblemInstance};
use rarc_core::solver::{
    audit_history, run, GradientVariant, HessianVariant, RunStatus, SolverConfig,
};
use rarc_core::Manifold;

fn exact_config(seed: u64) -> SolverConfig {
    SolverConfig {
        gradient_variant: GradientVariant::Exact,
        hessian_variant: HessianVariant::Exact,
        seed,
        ..SolverConfig::default()
    }
}

fn assert_recovers_optimum(inst: &ProblemInstance, config: &SolverConfig) {
    let res = run(&inst.objective, &inst.manifold, config, None).unwrap();
    assert!(
        res.status.converged(),
        "{}: run ended {:?}",
        inst.name,
        res.status
    );
    let oracle = inst.optimum_oracle.expect("oracle available");
    assert!(
        (res.final_f - oracle).abs() <= 1e-6,
        "{}: final {} vs oracle {}",
        inst.name,
        res.final_f,
        oracle
    );
    assert!(res.final_g_norm() <= config.eps_g);
    audit_history(&res, config).unwrap();
}

#[test]
fn exact_mode_recovers_optima() {
    assert_recovers_optimum(
        &problems::make_top_eigenvalue(50, 1).unwrap(),
        &exact_config(11),
    );
    assert_recovers_optimum(
        &problems::make_dominant_subspace(12, 4, 2).unwrap(),
        &exact_config(12),
    );
    assert_recovers_optimum(
        &problems::make_truncated_svd(14, 10, 4, 3).unwrap(),
        &exact_config(13),
    );
}

#[test]
fn derivative_free_pullback_recovers_optima() {
    let config = SolverConfig {
        seed: 21,
        ..SolverConfig::default()
    };
    assert_recovers_optimum(&problems::make_top_eigenvalue(20, 4).unwrap(), &config);
    assert_recovers_optimum(&problems::make_truncated_svd(8, 6, 3, 5).unwrap(), &config);
}

#[test]
fn transport_variant_runs_on_grassmann() {
    let inst = problems::make_dominant_subspace(8, 2, 6).unwrap();
    let config = SolverConfig {
        hessian_variant: HessianVariant::Transport,
        seed: 22,
        ..SolverConfig::default()
    };
    assert_recovers_optimum(&inst, &config);
}

#[test]
fn gradcall_variant_runs_on_sphere() {
    let inst = problems::make_top_eigenvalue(15, 7).unwrap();
    let config = SolverConfig {
        hessian_variant: HessianVariant::GradCalls,
        gradient_variant: GradientVariant::Exact,
        seed: 23,
        ..SolverConfig::default()
    };
    assert_recovers_optimum(&inst, &config);
}

#[test]
fn second_order_mode_on_elliptope() {
    let inst = problems::make_elliptope(8, 3, 8).unwrap();
    let config = SolverConfig {
        second_order_mode: true,
        eps_h: Some(1e-4),
        seed: 24,
        ..SolverConfig::default()
    };
    let res = run(&inst.objective, &inst.manifold, &config, None).unwrap();
    assert_eq!(res.status, RunStatus::SecondOrderConverged);
    let last = res.history.last().unwrap();
    assert!(last.g_norm <= config.eps_g);
    assert!(last.lambda_min_b.unwrap() >= -1e-4);
    audit_history(&res, &config).unwrap();
    // final stationarity against the analytic gradient
    let g = inst.objective.grad(&res.final_point).unwrap();
    assert!(
        g.norm() <= 1e-7,
        "analytic gradient {} at the end",
        g.norm()
    );
}

#[test]
fn swish_composite_run_reaches_small_gradient() {
    let inst = problems::make_swish_composite((10, 20, 18, 16), 9).unwrap();
    let config = SolverConfig {
        eps_g: 1e-6,
        seed: 25,
        ..SolverConfig::default()
    };
    let res = run(&inst.objective, &inst.manifold, &config, None).unwrap();
    assert!(res.status.converged(), "status {:?}", res.status);
    assert!(res.final_g_norm() <= 1e-6);
    audit_history(&res, &config).unwrap();
}

#[test]
fn elliptope_first_order_run_is_stationary() {
    let inst = problems::make_elliptope(20, 6, 10).unwrap();
    let config = SolverConfig {
        seed: 26,
        ..SolverConfig::default()
    };
    let res = run(&inst.objective, &inst.manifold, &config, None).unwrap();
    assert!(res.status.converged());
    audit_history(&res, &config).unwrap();
    let g = inst.objective.grad(&res.final_point).unwrap();
    assert!(g.norm() <= 1e-7, "analytic gradient {}", g.norm());
}

#[test]
fn max_iters_truncates_with_audit_clean_history() {
    let inst = problems::make_top_eigenvalue(30, 11).unwrap();
    let config = SolverConfig {
        max_outer_iters: 2,
        seed: 27,
        ..SolverConfig::default()
    };
    let res = run(&inst.objective, &inst.manifold, &config, None).unwrap();
    assert_eq!(res.status, RunStatus::MaxIters);
    assert_eq!(res.history.len(), 2);
    audit_history(&res, &config).unwrap();
}

#[test]
fn alpha_overflow_on_absurd_regularization() {
    // a linear objective with a vanishing cubic weight produces enormous
    // trial steps that can never pass the acceptance test
    let m = Manifold::sphere(3).unwrap();
    let obj = rarc_core::fdapprox::Objective::new(|p: &rarc_core::Point| p.coords[(0, 0)]);
    let config = SolverConfig {
        sigma1: 1e-12,
        max_alpha: 3,
        seed: 28,
        ..SolverConfig::default()
    };
    let res = run(&obj, &m, &config, None).unwrap();
    assert_eq!(res.status, RunStatus::AlphaOverflow);
}

#[test]
fn run_count_matches_objective_counter() {
    let inst = problems::make_top_eigenvalue(10, 12).unwrap();
    let config = SolverConfig {
        seed: 29,
        ..SolverConfig::default()
    };
    let res = run(&inst.objective, &inst.manifold, &config, None).unwrap();
    assert!(res.status.converged());
    let last = res.history.last().unwrap();
    assert_eq!(last.f_evals_cum, inst.objective.f_evals());
}
