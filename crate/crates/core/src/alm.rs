//! First-order augmented Lagrangian method for
//!
//! ```text
//! min_x max_y { F(x,y) | c(x) ≤ 0, d(x,y) ≤ 0 }
//! ```
//!
//! Each outer iteration approximately solves `min_x max_y L(x,y,λ;ρ_k)` with
//! the NCC layer, then updates a safeguarded `λ_x` and a plain `λ_y`.

use std::cell::RefCell;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, PartialSolution, Result};
use crate::kkt::{kkt_residuals, KktResiduals};
use crate::linalg::norm;
use crate::model::{
    complementarity, eval_al_x, positive_norm, ConstrainedMinimaxProblem, Instrumented, MultiplierPair,
    OracleCounters, ProblemConstants,
};
use crate::ncc::{solve_ncc, NccConfig, NccProblem};
use crate::oracle::SaddleOracle;
use crate::problems::find_near_feasible;
use crate::prox::{positive_part, project_nonneg_ball, ProxOracle};
use crate::scc::SafeguardLimits;
use crate::trace::{Phase, SolveTrace, TraceRow};

/// `ε_k = ε₀τᵏ`, evaluated as `ε_k = ε_{k−1}·τ`. Every layer derives the
/// schedule from this function. `powi` is avoided because its rounding
/// differs between constant folding and runtime evaluation.
pub fn schedule_eps(eps_0: f64, tau: f64, k: usize) -> f64 {
    (0..k).fold(eps_0, |e, _| e * tau)
}

/// `ρ_k = 1/ε_k`, taking the neighbouring double of the rounded reciprocal
/// when that one makes `ρ_k·ε_k == 1` hold exactly. Some `ε_k` admit no such
/// double; those keep the rounded reciprocal.
pub fn schedule_rho(eps_k: f64) -> f64 {
    let r = 1.0 / eps_k;
    [r, r.next_up(), r.next_down()]
        .into_iter()
        .find(|c| c * eps_k == 1.0)
        .unwrap_or(r)
}

#[derive(Debug, Clone)]
pub struct AlmConfig {
    pub eps: f64,
    pub tau: f64,
    pub eps_0: f64,
    /// Dual safeguard radius `Λ`.
    pub lambda_cap: f64,
    pub lambda0: Option<MultiplierPair>,
    pub start: (Vec<f64>, Vec<f64>),
    /// Nearly feasible point; searched from `start.0` when absent.
    pub x_nf: Option<Vec<f64>>,
    pub max_ncc_outer: usize,
    pub scc_limits: SafeguardLimits,
}

impl AlmConfig {
    pub fn new(eps: f64, tau: f64, eps_0: f64, lambda_cap: f64, start: (Vec<f64>, Vec<f64>)) -> Self {
        Self {
            eps,
            tau,
            eps_0,
            lambda_cap,
            lambda0: None,
            start,
            x_nf: None,
            max_ncc_outer: 100_000,
            scc_limits: SafeguardLimits::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        open_unit("epsilon", self.eps)?;
        open_unit("tau", self.tau)?;
        if !(self.eps_0 > self.tau * self.eps && self.eps_0 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_0 = {} must lie in (tau*epsilon, 1] = ({}, 1]",
                self.eps_0,
                self.tau * self.eps
            )));
        }
        if !(self.lambda_cap > 0.0) || !self.lambda_cap.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Lambda must be positive, got {}",
                self.lambda_cap
            )));
        }
        if let Some(l0) = &self.lambda0 {
            if l0.lambda_x.iter().chain(&l0.lambda_y).any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidInput("initial multipliers must be nonnegative".into()));
            }
            if norm(&l0.lambda_x) > self.lambda_cap {
                return Err(Error::InvalidInput(format!(
                    "‖lambda_x^0‖ = {} exceeds Lambda = {}",
                    norm(&l0.lambda_x),
                    self.lambda_cap
                )));
            }
        }
        Ok(())
    }

    /// `K = ⌈(log ε − log ε₀)/log τ⌉₊`, the index of the last iteration.
    pub fn k_final(&self) -> usize {
        crate::bounds::alm_k(self.eps_0, self.tau, self.eps)
    }
}

/// Warm-start rule: `x_k` unless `x_nf` has strictly smaller x-AL value.
/// Returns the chosen point and whether it was `x_nf`.
pub fn choose_init(
    prob: &ConstrainedMinimaxProblem,
    x_k: &[f64],
    x_nf: &[f64],
    y_k: &[f64],
    lambda_x: &[f64],
    rho: f64,
) -> Result<(Vec<f64>, bool)> {
    let at_k = eval_al_x(prob, x_k, y_k, lambda_x, rho)?;
    let at_nf = eval_al_x(prob, x_nf, y_k, lambda_x, rho)?;
    if at_k <= at_nf {
        Ok((x_k.to_vec(), false))
    } else {
        Ok((x_nf.to_vec(), true))
    }
}

/// Constraint-side constant, allowed to be absent when the block is empty.
fn block_constant(v: Option<f64>, block: usize, sym: &'static str) -> Result<f64> {
    match (v, block) {
        (Some(v), _) => Ok(v),
        (None, 0) => Ok(0.0),
        (None, _) => Err(Error::MissingConstant(sym)),
    }
}

/// Smoothness of the AL subproblem:
/// `L_∇f + ρL_c² + ρc_hi L_∇c + ‖λ_x‖L_∇c + ρL_d² + ρd_hi L_∇d + ‖λ_y‖L_∇d`.
pub fn lipschitz_lk(k: &ProblemConstants, rho: f64, norm_lx: f64, norm_ly: f64) -> Result<f64> {
    let lf = k.l_grad_f.ok_or(Error::MissingConstant("L_grad_f"))?;
    let lc = k.l_c.unwrap_or(0.0);
    let lgc = k.l_grad_c.unwrap_or(0.0);
    let chi = k.c_hi.unwrap_or(0.0);
    let ld = k.l_d.unwrap_or(0.0);
    let lgd = k.l_grad_d.unwrap_or(0.0);
    let dhi = k.d_hi.unwrap_or(0.0);
    Ok(lf + rho * lc * lc + rho * chi * lgc + norm_lx * lgc + rho * ld * ld + rho * dhi * lgd + norm_ly * lgd)
}

fn check_constraint_constants(prob: &ConstrainedMinimaxProblem) -> Result<()> {
    let k = &prob.constants;
    let (nc, nd) = (prob.dims.n_c, prob.dims.n_d);
    block_constant(k.l_c, nc, "L_c")?;
    block_constant(k.l_grad_c, nc, "L_grad_c")?;
    block_constant(k.c_hi, nc, "c_hi")?;
    block_constant(k.l_d, nd, "L_d")?;
    block_constant(k.l_grad_d, nd, "L_grad_d")?;
    block_constant(k.d_hi, nd, "d_hi")?;
    Ok(())
}

/// `λ_x⁺ = Π_{B⁺_Λ}(λ_x + ρc)`, `λ_y⁺ = [λ_y + ρd]₊`.
pub fn update_multipliers(
    lambda_x: &[f64],
    lambda_y: &[f64],
    c_val: &[f64],
    d_val: &[f64],
    rho: f64,
    cap: f64,
) -> Result<MultiplierPair> {
    let sx: Vec<f64> = lambda_x.iter().zip(c_val).map(|(l, c)| l + rho * c).collect();
    let sy: Vec<f64> = lambda_y.iter().zip(d_val).map(|(l, d)| l + rho * d).collect();
    if sx.iter().chain(&sy).any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite multiplier update".into()));
    }
    Ok(MultiplierPair {
        lambda_x: project_nonneg_ball(&sx, cap)?,
        lambda_y: positive_part(&sy),
    })
}

/// Gradient oracle of the smooth part of the AL function at fixed
/// multipliers and penalty. One evaluation costs one `∇f`, one `∇c`
/// product and one `∇d` product (the latter two only when the block is
/// nonempty).
pub struct AlSubproblemOracle<'a, 'p> {
    inst: &'a Instrumented<'p>,
    lambda_x: Vec<f64>,
    lambda_y: Vec<f64>,
    rho: f64,
    scratch: RefCell<Scratch>,
}

#[derive(Default)]
struct Scratch {
    w_c: Vec<f64>,
    w_d: Vec<f64>,
    jx: Vec<f64>,
    jy: Vec<f64>,
}

impl<'a, 'p> AlSubproblemOracle<'a, 'p> {
    pub fn new(inst: &'a Instrumented<'p>, lambda_x: Vec<f64>, lambda_y: Vec<f64>, rho: f64) -> Self {
        let d = inst.problem().dims;
        let scratch = Scratch {
            w_c: vec![0.0; lambda_x.len()],
            w_d: vec![0.0; lambda_y.len()],
            jx: vec![0.0; d.n],
            jy: vec![0.0; d.m],
        };
        Self {
            inst,
            lambda_x,
            lambda_y,
            rho,
            scratch: RefCell::new(scratch),
        }
    }
}

impl SaddleOracle for AlSubproblemOracle<'_, '_> {
    fn dims(&self) -> (usize, usize) {
        let d = self.inst.problem().dims;
        (d.n, d.m)
    }

    fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut gx, mut gy) = (vec![0.0; x.len()], vec![0.0; y.len()]);
        self.gradient_into(x, y, &mut gx, &mut gy)?;
        Ok((gx, gy))
    }

    fn gradient_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) -> Result<()> {
        self.inst.grad_f_into(x, y, gx, gy)?;
        let mut guard = self.scratch.borrow_mut();
        let Scratch { w_c, w_d, jx, jy } = &mut *guard;
        if !self.lambda_x.is_empty() {
            self.inst.c_into(x, w_c)?;
            w_c.iter_mut().zip(&self.lambda_x).for_each(|(c, l)| *c = (l + self.rho * *c).max(0.0));
            self.inst.jac_c_t_apply_into(x, w_c, jx)?;
            gx.iter_mut().zip(jx.iter()).for_each(|(g, v)| *g += v);
        }
        if !self.lambda_y.is_empty() {
            self.inst.d_into(x, y, w_d)?;
            w_d.iter_mut().zip(&self.lambda_y).for_each(|(d, l)| *d = (l + self.rho * *d).max(0.0));
            self.inst.jac_d_t_apply_into(x, y, w_d, jx, jy)?;
            gx.iter_mut().zip(jx.iter()).for_each(|(g, v)| *g -= v);
            gy.iter_mut().zip(jy.iter()).for_each(|(g, v)| *g -= v);
        }
        Ok(())
    }

    fn prox_p_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) {
        self.inst.prox_p_into(gamma, x, out)
    }
    fn prox_q_into(&self, gamma: f64, y: &[f64], out: &mut [f64]) {
        self.inst.prox_q_into(gamma, y, out)
    }
    fn prox_p(&self, gamma: f64, x: &[f64]) -> Vec<f64> {
        self.inst.prox_p(gamma, x)
    }
    fn prox_q(&self, gamma: f64, y: &[f64]) -> Vec<f64> {
        self.inst.prox_q(gamma, y)
    }
    fn p(&self) -> &dyn ProxOracle {
        self.inst.problem().prox_p.as_ref()
    }
    fn q(&self) -> &dyn ProxOracle {
        self.inst.problem().prox_q.as_ref()
    }
    fn counters(&self) -> OracleCounters {
        self.inst.counters()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmIteration {
    pub k: usize,
    pub eps_k: f64,
    pub rho_k: f64,
    pub l_k: f64,
    pub x_init_from_nf: bool,
    pub ncc_outer: usize,
    /// Multipliers entering this iteration.
    pub lambda_x_norm: f64,
    pub lambda_y_min: f64,
    /// Stationarity bound of the subproblem output (larger of the x and y
    /// bounds logged by the NCC layer).
    pub subproblem_residual: f64,
    pub feas_c: f64,
    pub feas_d: f64,
    pub counters: OracleCounters,
}

#[derive(Debug, Clone)]
pub struct AlmOutput {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Safeguarded `λ_x^{K+1}` and `λ_y^{K+1}`.
    pub multipliers: MultiplierPair,
    /// Certificate multiplier `λ̃_x = [λ_x^K + ρ_K c(x^{K+1})]₊`.
    pub lambda_x_tilde: Vec<f64>,
    /// Residuals at `(x^{K+1}, y^{K+1})` with `(λ̃_x, λ_y^{K+1})`.
    pub residuals: KktResiduals,
    pub k_final: usize,
    pub x_nf: Vec<f64>,
    pub iterations: Vec<AlmIteration>,
    /// Multipliers after every update, including the initial pair.
    pub multiplier_history: Vec<MultiplierPair>,
    pub counters: OracleCounters,
    pub trace: SolveTrace,
}

impl AlmOutput {
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len()
    }
}

pub fn solve_alm(prob: &ConstrainedMinimaxProblem, cfg: &AlmConfig) -> Result<AlmOutput> {
    cfg.validate()?;
    check_constraint_constants(prob)?;
    let dims = prob.dims;
    let (x0, y0) = (&cfg.start.0, &cfg.start.1);
    prob.check_point(x0, y0)?;
    if !prob.prox_p.contains(x0, 1e-9) || !prob.prox_q.contains(y0, 1e-9) {
        return Err(Error::InvalidInput("start is not in dom p × dom q".into()));
    }
    let d_y = match (prob.constants.d_y, prob.prox_q.diameter()) {
        (Some(d), _) | (None, Some(d)) => d,
        (None, None) => return Err(Error::MissingConstant("D_y")),
    };
    let lambda0 = cfg.lambda0.clone().unwrap_or_else(|| MultiplierPair::zeros(dims));
    if lambda0.lambda_x.len() != dims.n_c || lambda0.lambda_y.len() != dims.n_d {
        return Err(Error::InvalidInput("initial multiplier dimension mismatch".into()));
    }

    let sqrt_eps = cfg.eps.sqrt();
    let x_nf = match &cfg.x_nf {
        Some(x) => x.clone(),
        None if dims.n_c == 0 => x0.clone(),
        None => find_near_feasible(prob, sqrt_eps.min(1.0), x0)?,
    };
    if x_nf.len() != dims.n || !prob.prox_p.contains(&x_nf, 1e-9) {
        return Err(Error::InvalidInput("x_nf is not in dom p".into()));
    }
    let viol = positive_norm(&prob.model.c(&x_nf));
    if !(viol <= sqrt_eps) {
        return Err(Error::InvalidInput(format!(
            "x_nf violates ‖[c(x_nf)]₊‖ ≤ √ε: {viol} > {sqrt_eps}"
        )));
    }

    let clock = Instant::now();
    let inst = Instrumented::new(prob);
    let k_final = cfg.k_final();
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut lam = lambda0;
    let mut history = vec![lam.clone()];
    let mut iterations = Vec::new();
    let mut trace = SolveTrace::default();

    for k in 0.. {
        let eps_k = schedule_eps(cfg.eps_0, cfg.tau, k);
        let rho_k = schedule_rho(eps_k);
        let (x_init, from_nf) = choose_init(prob, &x, &x_nf, &y, &lam.lambda_x, rho_k)?;
        let l_k = lipschitz_lk(&prob.constants, rho_k, norm(&lam.lambda_x), norm(&lam.lambda_y))?;

        let oracle = AlSubproblemOracle::new(&inst, lam.lambda_x.clone(), lam.lambda_y.clone(), rho_k);
        let sub = NccProblem::new(oracle, l_k, d_y)?;
        let mut ncc_cfg = NccConfig::new(eps_k, eps_k / (2.0 * rho_k.sqrt()));
        ncc_cfg.max_outer = cfg.max_ncc_outer;
        ncc_cfg.scc_limits = cfg.scc_limits;
        let out = match solve_ncc(&sub, &ncc_cfg, (&x_init, &y)) {
            Ok(out) => out,
            Err(Error::IterationLimitExceeded { layer, mut best }) => {
                best.trace = trace;
                return Err(Error::IterationLimitExceeded { layer, best });
            }
            Err(e) => return Err(e),
        };

        let c_val = inst.c(&out.x)?;
        let d_val = inst.d(&out.x, &out.y)?;
        let lambda_x_tilde = positive_part(
            &lam.lambda_x
                .iter()
                .zip(&c_val)
                .map(|(l, c)| l + rho_k * c)
                .collect::<Vec<_>>(),
        );
        let next = update_multipliers(&lam.lambda_x, &lam.lambda_y, &c_val, &d_val, rho_k, cfg.lambda_cap)?;

        let last = out.last();
        let record = AlmIteration {
            k,
            eps_k,
            rho_k,
            l_k,
            x_init_from_nf: from_nf,
            ncc_outer: out.outer_iterations(),
            lambda_x_norm: norm(&lam.lambda_x),
            lambda_y_min: lam.lambda_y.iter().copied().fold(f64::INFINITY, f64::min),
            subproblem_residual: last.res_x_bound.max(last.res_y_bound),
            feas_c: positive_norm(&c_val),
            feas_d: positive_norm(&d_val),
            counters: inst.counters(),
        };
        trace.extend(out.trace());
        let mut row = TraceRow::new(
            Phase::Alm,
            k,
            record.ncc_outer,
            eps_k,
            record.subproblem_residual,
            record.counters,
            &clock,
        );
        row.rho_k = Some(rho_k);
        row.feas_c = Some(record.feas_c);
        row.feas_d = Some(record.feas_d);
        row.comp_c = Some(complementarity(&lambda_x_tilde, &c_val));
        row.comp_d = Some(complementarity(&next.lambda_y, &d_val));
        trace.push(row);
        iterations.push(record);

        x = out.x;
        y = out.y;
        lam = next;
        history.push(lam.clone());

        if eps_k <= cfg.eps {
            let residuals = kkt_residuals(prob, &x, &y, &lambda_x_tilde, &lam.lambda_y)?;
            return Ok(AlmOutput {
                x,
                y,
                multipliers: lam,
                lambda_x_tilde,
                residuals,
                k_final,
                x_nf,
                iterations,
                multiplier_history: history,
                counters: inst.counters(),
                trace,
            });
        }
        if k > k_final + 1 {
            // The schedule test and K disagree; never expected.
            return Err(Error::IterationLimitExceeded {
                layer: "alm",
                best: Box::new(PartialSolution {
                    x,
                    y,
                    residual: f64::INFINITY,
                    iterations: k + 1,
                    trace,
                }),
            });
        }
    }
    unreachable!("the outer loop only exits by returning")
}
