//! Shared fixtures for the solver benchmarks.

use conmm_core::model::Instrumented;
use conmm_core::oracle::ObjectiveOracle;
use conmm_core::*;

/// Runs the strongly convex-concave layer on `quad_saddle_box` from its default start.
pub fn scc_quad_box(eps_bar: f64) -> SccOutput {
    let inst = registry("quad_saddle_box").expect("builtin");
    let data = inst.scc.expect("scc data");
    let counted = Instrumented::new(&inst.problem);
    let prob = SccProblem::new(ObjectiveOracle::new(&counted), data.sigma_x, data.sigma_y, data.l_grad)
        .expect("valid parameters");
    solve_scc(&prob, &SccOptions::new(eps_bar)).expect("converges")
}

/// Runs the nonconvex-concave layer on `ncc_toy` from `x0`.
pub fn ncc_toy(eps: f64, x0: f64) -> NccOutput {
    let inst = registry("ncc_toy").expect("builtin");
    let data = inst.ncc.expect("ncc data");
    let counted = Instrumented::new(&inst.problem);
    let prob = NccProblem::new(ObjectiveOracle::new(&counted), data.l_grad, 2.0).expect("valid parameters");
    solve_ncc(&prob, &NccConfig::new(eps, eps / 2.0), (&[x0], &[0.0])).expect("converges")
}

/// Runs the augmented Lagrangian layer on `constrained_toy`.
pub fn alm_toy(eps: f64) -> AlmOutput {
    let inst = registry("constrained_toy").expect("builtin");
    let cfg = AlmConfig::new(eps, 0.5, 1.0, inst.default_lambda_cap, inst.default_start.clone());
    solve_alm(&inst.problem, &cfg).expect("converges")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_run() {
        assert!(scc_quad_box(1e-6).residual <= 1e-6);
        assert!(ncc_toy(1e-2, 0.3).x[0].abs() <= 1.0);
        assert_eq!(alm_toy(1e-1).k_final, 4);
    }
}
