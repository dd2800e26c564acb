//! End-to-end behaviour of the three solver layers on built-in instances.

use conmm_core::bounds::{alm_bounds, alm_k};
use conmm_core::model::Instrumented;
use conmm_core::oracle::ObjectiveOracle;
use conmm_core::*;

#[test]
fn scc_from_the_saddle_takes_one_outer_iteration() {
    let inst = registry("quad_saddle_1d").unwrap();
    let data = inst.scc.unwrap();
    let counted = Instrumented::new(&inst.problem);
    let prob = SccProblem::new(ObjectiveOracle::new(&counted), data.sigma_x, data.sigma_y, data.l_grad).unwrap();
    let mut opts = SccOptions::new(1e-6);
    opts.start = Some((vec![0.0], vec![0.0]));
    let out = solve_scc(&prob, &opts).unwrap();
    assert_eq!(out.outer_iterations(), 1);
    assert_eq!(out.residual, 0.0);
    assert_eq!(out.trace(1e-6).rows.len(), 1);
}

#[test]
fn alm_outer_count_matches_reported_k() {
    let inst = registry("constrained_toy").unwrap();
    let cfg = AlmConfig::new(1e-2, 0.5, 1.0, inst.default_lambda_cap, inst.default_start.clone());
    let out = solve_alm(&inst.problem, &cfg).unwrap();
    // ε₀τᵏ ≤ 1e-2 first at k = 7 (0.5⁷ = 0.0078).
    assert_eq!(alm_k(1.0, 0.5, 1e-2), 7);
    assert_eq!(out.k_final, 7);
    assert_eq!(out.outer_iterations(), 8);
    let b = alm_bounds(&BoundInputs {
        constants: inst.problem.constants.clone(),
        eps: Some(1e-2),
        eps_0: Some(1.0),
        tau: Some(0.5),
        lambda_cap: Some(inst.default_lambda_cap),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(b.k, out.k_final);
    assert!(out.trace.counters_monotone());
    assert_eq!(out.trace.rows_for(Phase::Alm).count(), 8);
    assert!(out.residuals.max() <= 3e-2, "{:?}", out.residuals);
}

#[test]
fn alm_reports_partial_trace_on_cap() {
    let inst = registry("constrained_toy").unwrap();
    let mut cfg = AlmConfig::new(1e-2, 0.5, 1.0, inst.default_lambda_cap, inst.default_start.clone());
    cfg.scc_limits.max_outer = 1;
    match solve_alm(&inst.problem, &cfg) {
        Err(Error::IterationLimitExceeded { best, .. }) => {
            assert_eq!(best.x.len(), 1);
        }
        other => panic!("expected an iteration limit, got {other:?}"),
    }
}

#[test]
fn alm_rejects_bad_schedule() {
    let inst = registry("constrained_toy").unwrap();
    let cfg = AlmConfig::new(1e-2, 0.5, 1.5, 10.0, inst.default_start.clone());
    let msg = solve_alm(&inst.problem, &cfg).unwrap_err().to_string();
    assert!(msg.contains("epsilon_0"), "{msg}");
}

#[test]
fn ncc_rejects_large_initial_tolerance() {
    let inst = registry("ncc_toy").unwrap();
    let data = inst.ncc.unwrap();
    let counted = Instrumented::new(&inst.problem);
    let prob = NccProblem::new(ObjectiveOracle::new(&counted), data.l_grad, 2.0).unwrap();
    let cfg = NccConfig::new(1e-2, 6e-3);
    let msg = solve_ncc(&prob, &cfg, (&[0.0], &[0.0])).unwrap_err().to_string();
    assert!(msg.contains("epsilon_hat_0"), "{msg}");
}

#[test]
fn ncc_output_is_a_listed_stationary_point() {
    let inst = registry("ncc_toy").unwrap();
    let data = inst.ncc.unwrap();
    for start in [-0.5, 0.3, 0.9] {
        let counted = Instrumented::new(&inst.problem);
        let prob = NccProblem::new(ObjectiveOracle::new(&counted), data.l_grad, 2.0).unwrap();
        let out = solve_ncc(&prob, &NccConfig::new(1e-3, 5e-4), (&[start], &[0.0])).unwrap();
        let near = inst
            .references
            .iter()
            .any(|r| (r.x[0] - out.x[0]).abs() <= 1e-2);
        assert!(near, "start {start}: x = {}", out.x[0]);
    }
}
