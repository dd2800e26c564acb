//! Inexact proximal point method for nonconvex-concave problems
//!
//! ```text
//! min_x max_y  h(x,y) + p(x) − q(y)
//! ```
//!
//! Each step perturbs `h` into
//! `h_k(x,y) = h(x,y) − ε‖y − ŷ⁰‖²/(4D_y) + L‖x − x^k‖²`, which is
//! `L`-strongly convex in `x`, `ε/(2D_y)`-strongly concave in `y` and
//! `(3L + ε/(2D_y))`-smooth, and hands it to the SCC solver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, PartialSolution, Result};
use crate::kkt::certify_stationarity;
use crate::linalg::{dist, scale};
use crate::model::OracleCounters;
use crate::oracle::SaddleOracle;
use crate::prox::ProxOracle;
use crate::scc::{solve_scc, SafeguardLimits, SccOptions, SccProblem};
use crate::trace::{Phase, SolveTrace, TraceRow};

/// Problem data of the nonconvex-concave layer.
pub struct NccProblem<O> {
    pub oracle: O,
    pub l_grad: f64,
    pub d_y: f64,
}

impl<O: SaddleOracle> NccProblem<O> {
    pub fn new(oracle: O, l_grad: f64, d_y: f64) -> Result<Self> {
        if !(l_grad > 0.0) || !l_grad.is_finite() {
            return Err(Error::InvalidParameter(format!("L must be positive, got {l_grad}")));
        }
        if !(d_y > 0.0) || !d_y.is_finite() {
            return Err(Error::InvalidParameter(format!("D_y must be positive, got {d_y}")));
        }
        Ok(Self { oracle, l_grad, d_y })
    }
}

#[derive(Debug, Clone)]
pub struct NccConfig {
    pub eps: f64,
    pub eps_hat_0: f64,
    /// Anchor `ŷ⁰`; defaults to the start `y`.
    pub anchor: Option<Vec<f64>>,
    pub max_outer: usize,
    pub scc_limits: SafeguardLimits,
    /// Re-certify each subproblem output with an extra FBS step. The extra
    /// evaluations go through the oracle and show up in its counters.
    pub verify_subproblems: bool,
}

impl NccConfig {
    pub fn new(eps: f64, eps_hat_0: f64) -> Self {
        Self {
            eps,
            eps_hat_0,
            anchor: None,
            max_outer: 100_000,
            scc_limits: SafeguardLimits::default(),
            verify_subproblems: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.eps)));
        }
        if !(self.eps_hat_0 > 0.0 && self.eps_hat_0 <= self.eps / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_hat_0 = {} must lie in (0, epsilon/2 = {}]",
                self.eps_hat_0,
                self.eps / 2.0
            )));
        }
        Ok(())
    }

    /// `ε̂_k = ε̂₀/(k+1)`.
    pub fn eps_hat(&self, k: usize) -> f64 {
        self.eps_hat_0 / (k as f64 + 1.0)
    }
}

/// Gradient of the perturbed function `h_k`.
pub struct PerturbedOracle<'a, O> {
    base: &'a O,
    x_k: Vec<f64>,
    y_hat: Vec<f64>,
    l_grad: f64,
    /// `ε/(2D_y)`
    mu: f64,
}

impl<O: SaddleOracle> SaddleOracle for PerturbedOracle<'_, O> {
    fn dims(&self) -> (usize, usize) {
        self.base.dims()
    }
    fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut gx, mut gy) = (vec![0.0; x.len()], vec![0.0; y.len()]);
        self.gradient_into(x, y, &mut gx, &mut gy)?;
        Ok((gx, gy))
    }
    fn gradient_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) -> Result<()> {
        self.base.gradient_into(x, y, gx, gy)?;
        for i in 0..gx.len() {
            gx[i] += 2.0 * self.l_grad * (x[i] - self.x_k[i]);
        }
        for j in 0..gy.len() {
            gy[j] -= self.mu * (y[j] - self.y_hat[j]);
        }
        Ok(())
    }
    fn prox_p(&self, gamma: f64, x: &[f64]) -> Vec<f64> {
        self.base.prox_p(gamma, x)
    }
    fn prox_q(&self, gamma: f64, y: &[f64]) -> Vec<f64> {
        self.base.prox_q(gamma, y)
    }
    fn prox_p_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) {
        self.base.prox_p_into(gamma, x, out)
    }
    fn prox_q_into(&self, gamma: f64, y: &[f64], out: &mut [f64]) {
        self.base.prox_q_into(gamma, y, out)
    }
    fn p(&self) -> &dyn ProxOracle {
        self.base.p()
    }
    fn q(&self) -> &dyn ProxOracle {
        self.base.q()
    }
    fn counters(&self) -> OracleCounters {
        self.base.counters()
    }
}

/// The SCC instance for proximal center `x_k`, anchor `ŷ⁰` and target `ε`:
/// `σ_x = L`, `σ_y = ε/(2D_y)`, `L̄ = 3L + ε/(2D_y)`.
pub fn build_subproblem<'a, O: SaddleOracle>(
    prob: &'a NccProblem<O>,
    x_k: &[f64],
    y_hat: &[f64],
    eps: f64,
) -> Result<SccProblem<PerturbedOracle<'a, O>>> {
    let mu = eps / (2.0 * prob.d_y);
    let oracle = PerturbedOracle {
        base: &prob.oracle,
        x_k: x_k.to_vec(),
        y_hat: y_hat.to_vec(),
        l_grad: prob.l_grad,
        mu,
    };
    SccProblem::new(oracle, prob.l_grad, mu, 3.0 * prob.l_grad + mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NccIteration {
    pub eps_hat: f64,
    pub scc_outer: usize,
    pub scc_grad_evals: u64,
    /// `‖x^{k+1} − x^k‖`
    pub displacement: f64,
    /// SCC termination residual on the subproblem.
    pub scc_residual: f64,
    /// `ε̂_k + 2L‖x^{k+1} − x^k‖`
    pub res_x_bound: f64,
    /// `ε̂_k + ε‖y^{k+1} − ŷ⁰‖/(2D_y)`
    pub res_y_bound: f64,
    /// Extra FBS certificate of the subproblem at the output, when requested.
    pub subproblem_cert: Option<f64>,
    pub counters: OracleCounters,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct NccOutput {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: Vec<NccIteration>,
}

impl NccOutput {
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn last(&self) -> &NccIteration {
        self.iterations.last().expect("at least one iteration")
    }

    pub fn trace(&self) -> SolveTrace {
        let rows = self
            .iterations
            .iter()
            .enumerate()
            .map(|(k, it)| TraceRow {
                phase: Phase::Ncc,
                outer_iter: k,
                inner_iter: it.scc_outer,
                eps_k: it.eps_hat,
                rho_k: None,
                residual_cert: it.displacement,
                feas_c: None,
                feas_d: None,
                comp_c: None,
                comp_d: None,
                counters: it.counters,
                wall_ms: it.wall_ms,
            })
            .collect();
        SolveTrace { rows }
    }
}

/// Run the proximal point loop from `(x̂⁰, ŷ⁰)` until
/// `‖x^{k+1} − x^k‖ ≤ ε/(4L)`.
pub fn solve_ncc<O: SaddleOracle>(
    prob: &NccProblem<O>,
    cfg: &NccConfig,
    start: (&[f64], &[f64]),
) -> Result<NccOutput> {
    cfg.validate()?;
    let (n, m) = prob.oracle.dims();
    let (x0, y0) = start;
    if x0.len() != n || y0.len() != m {
        return Err(Error::InvalidInput("start dimension mismatch".into()));
    }
    if !prob.oracle.p().contains(x0, 1e-9) || !prob.oracle.q().contains(y0, 1e-9) {
        return Err(Error::InvalidInput("start is not in dom p × dom q".into()));
    }
    let y_hat = cfg.anchor.clone().unwrap_or_else(|| y0.to_vec());
    if y_hat.len() != m || !prob.oracle.q().contains(&y_hat, 1e-9) {
        return Err(Error::InvalidInput("anchor is not in dom q".into()));
    }

    let clock = Instant::now();
    let l = prob.l_grad;
    let threshold = cfg.eps / (4.0 * l);
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut iterations = Vec::new();

    for k in 0..cfg.max_outer {
        let eps_hat = cfg.eps_hat(k);
        let sub = build_subproblem(prob, &x, &y_hat, cfg.eps)?;
        let mut opts = SccOptions::new(eps_hat);
        opts.start = Some((scale(-sub.sigma_x, &x), y.clone()));
        opts.limits = cfg.scc_limits;
        let out = solve_scc(&sub, &opts)?;

        let displacement = dist(&out.x, &x);
        let subproblem_cert = if cfg.verify_subproblems {
            let cert = certify_stationarity(
                |a: &[f64], b: &[f64]| sub.oracle.gradient(a, b),
                sub.oracle.p(),
                sub.oracle.q(),
                sub.l_grad,
                Some((sub.sigma_x, sub.sigma_y)),
                &out.x,
                &out.y,
            )?;
            Some(cert.residual)
        } else {
            None
        };
        iterations.push(NccIteration {
            eps_hat,
            scc_outer: out.outer_iterations(),
            scc_grad_evals: out.total_grad_evals(),
            displacement,
            scc_residual: out.residual,
            res_x_bound: eps_hat + 2.0 * l * displacement,
            res_y_bound: eps_hat + cfg.eps * dist(&out.y, &y_hat) / (2.0 * prob.d_y),
            subproblem_cert,
            counters: prob.oracle.counters(),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        x = out.x;
        y = out.y;
        if displacement <= threshold {
            return Ok(NccOutput { x, y, iterations });
        }
    }
    Err(Error::IterationLimitExceeded {
        layer: "ncc",
        best: Box::new(PartialSolution {
            residual: iterations.last().map_or(f64::INFINITY, |i| i.displacement),
            iterations: iterations.len(),
            x,
            y,
            ..Default::default()
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::FnOracle;
    use crate::prox::BoxIndicator;
    use std::sync::Arc;

    fn boxed(r: f64) -> Arc<dyn ProxOracle> {
        Arc::new(BoxIndicator::symmetric(1, r).unwrap())
    }

    #[test]
    fn schedule_and_validation() {
        let cfg = NccConfig::new(0.1, 0.05);
        assert!((cfg.eps_hat(4) - 0.01).abs() < 1e-17);
        assert!(cfg.validate().is_ok());
        let bad = NccConfig::new(0.1, 0.06);
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("epsilon_hat_0"), "{msg}");
        assert!(NccConfig::new(0.1, 0.0).validate().is_err());
    }

    #[test]
    fn subproblem_mapping() {
        let oracle = FnOracle::new(1, 1, |x, y| (vec![x[0] + y[0]], vec![x[0]]), boxed(1.0), boxed(0.5));
        let prob = NccProblem::new(oracle, 1.0, 1.0).unwrap();
        let sub = build_subproblem(&prob, &[0.3], &[-0.2], 0.1).unwrap();
        assert_eq!((sub.sigma_x, sub.sigma_y), (1.0, 0.05));
        assert!((sub.l_grad - 3.05).abs() < 1e-15);
        let base = prob.oracle.gradient(&[0.3], &[-0.2]).unwrap();
        let pert = sub.oracle.gradient(&[0.3], &[-0.2]).unwrap();
        assert_eq!(base, pert);
        let pert = sub.oracle.gradient(&[0.5], &[0.2]).unwrap();
        assert!((pert.0[0] - (0.5 + 0.2 + 2.0 * 0.2)).abs() < 1e-15);
        assert!((pert.1[0] - (0.5 - 0.05 * 0.4)).abs() < 1e-15);
    }

    #[test]
    fn stationary_start_stops_after_one_step() {
        let oracle = FnOracle::new(1, 1, |x, y| (vec![x[0] + y[0]], vec![x[0] - y[0]]), boxed(10.0), boxed(10.0));
        let prob = NccProblem::new(oracle, 2f64.sqrt(), 20.0).unwrap();
        let cfg = NccConfig::new(1e-3, 5e-4);
        let out = solve_ncc(&prob, &cfg, (&[0.0], &[0.0])).unwrap();
        assert_eq!(out.outer_iterations(), 1);
        assert_eq!(out.last().displacement, 0.0);
    }

    #[test]
    fn toy_reaches_stationary_point() {
        // h = −(x − 0.5)² + 0.1xy on [−1,1]².
        let oracle = FnOracle::new(
            1,
            1,
            |x, y| (vec![-2.0 * (x[0] - 0.5) + 0.1 * y[0]], vec![0.1 * x[0]]),
            boxed(1.0),
            boxed(1.0),
        );
        let l = 1.0 + 1.01f64.sqrt();
        let prob = NccProblem::new(oracle, l, 2.0).unwrap();
        let mut cfg = NccConfig::new(1e-2, 5e-3);
        cfg.verify_subproblems = true;
        let out = solve_ncc(&prob, &cfg, (&[0.0], &[0.0])).unwrap();
        let last = out.last();
        assert!(last.displacement <= 1e-2 / (4.0 * l));
        assert!(last.res_x_bound <= 1e-2 && last.res_y_bound <= 1e-2);
        for it in &out.iterations {
            assert!(it.subproblem_cert.unwrap() <= 3.0 * it.eps_hat, "{it:?}");
        }
        let cert = certify_stationarity(
            |a: &[f64], b: &[f64]| prob.oracle.gradient(a, b),
            prob.oracle.p(),
            prob.oracle.q(),
            l,
            None,
            &out.x,
            &out.y,
        )
        .unwrap();
        assert!(cert.residual <= 3e-2, "{cert:?}");
    }

    #[test]
    fn outer_cap() {
        let oracle = FnOracle::new(
            1,
            1,
            |x, y| (vec![-2.0 * (x[0] - 0.5) + 0.1 * y[0]], vec![0.1 * x[0]]),
            boxed(1.0),
            boxed(1.0),
        );
        let prob = NccProblem::new(oracle, 2.01, 2.0).unwrap();
        let mut cfg = NccConfig::new(1e-3, 5e-4);
        cfg.max_outer = 1;
        assert!(matches!(
            solve_ncc(&prob, &cfg, (&[0.0], &[0.0])),
            Err(Error::IterationLimitExceeded { layer: "ncc", .. })
        ));
    }
}
