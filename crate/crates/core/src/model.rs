//! Problem model for
//!
//! ```text
//! min_{c(x) ≤ 0} max_{d(x,y) ≤ 0}  F(x,y) = f(x,y) + p(x) − q(y)
//! ```
//!
//! The smooth data (`f`, `c`, `d` and their derivative products) comes from a
//! [`SmoothModel`]; `p` and `q` enter only through [`ProxOracle`]s. Every
//! solver reaches the oracles through an [`Instrumented`] view that counts
//! invocations.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::prox::{positive_part, ProxOracle};

/// Smooth oracles of a constrained minimax problem.
///
/// Constraint Jacobians are only ever applied, never formed:
/// `jac_c_t_apply(x, v) = ∇c(x)·v ∈ ℝⁿ` and
/// `jac_d_t_apply(x, y, v) = (∇_x d(x,y)·v, ∇_y d(x,y)·v)`.
///
/// Implementations must be side-effect free; one model may back many
/// concurrent solves.
pub trait SmoothModel: Send + Sync {
    fn f(&self, x: &[f64], y: &[f64]) -> f64;
    fn grad_f(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>);
    fn c(&self, x: &[f64]) -> Vec<f64>;
    fn jac_c_t_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64>;
    fn d(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
    fn jac_d_t_apply(&self, x: &[f64], y: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>);

    // Buffer-writing forms used on solver hot paths. The defaults forward to
    // the allocating methods; a result of the wrong length is written as NaN
    // so the finiteness check downstream reports it.

    fn grad_f_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        let (a, b) = self.grad_f(x, y);
        copy_or_nan(gx, &a);
        copy_or_nan(gy, &b);
    }
    fn c_into(&self, x: &[f64], out: &mut [f64]) {
        copy_or_nan(out, &self.c(x));
    }
    fn jac_c_t_apply_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        copy_or_nan(out, &self.jac_c_t_apply(x, v));
    }
    fn d_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        copy_or_nan(out, &self.d(x, y));
    }
    fn jac_d_t_apply_into(&self, x: &[f64], y: &[f64], v: &[f64], ox: &mut [f64], oy: &mut [f64]) {
        let (a, b) = self.jac_d_t_apply(x, y, v);
        copy_or_nan(ox, &a);
        copy_or_nan(oy, &b);
    }
}

fn copy_or_nan(dst: &mut [f64], src: &[f64]) {
    if dst.len() == src.len() {
        dst.copy_from_slice(src);
    } else {
        dst.fill(f64::NAN);
    }
}

/// Dimensions `(n, m, ñ, m̃)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    /// Number of constraints on `x`.
    pub n_c: usize,
    /// Number of constraints coupling `x` and `y`.
    pub n_d: usize,
}

/// User-declared smoothness, geometry and constraint-qualification
/// constants. None of these are certified; absent values are `None` and
/// surface as [`Error::MissingConstant`] when a bound needs them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Lipschitz constant of `F` on `dom p × dom q`.
    pub l_f: Option<f64>,
    pub l_grad_f: Option<f64>,
    pub l_c: Option<f64>,
    pub l_grad_c: Option<f64>,
    pub l_d: Option<f64>,
    pub l_grad_d: Option<f64>,
    /// Diameters of `dom p` and `dom q`.
    pub d_x: Option<f64>,
    pub d_y: Option<f64>,
    /// `max ‖c(x)‖` over `dom p`, `max ‖d(x,y)‖` over `dom p × dom q`.
    pub c_hi: Option<f64>,
    pub d_hi: Option<f64>,
    pub delta_c: Option<f64>,
    pub theta_a: Option<f64>,
    pub theta_f: Option<f64>,
    pub delta_d: Option<f64>,
    pub f_hi: Option<f64>,
    pub f_low: Option<f64>,
    pub f_star_low: Option<f64>,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("L_F", self.l_f),
            ("L_grad_f", self.l_grad_f),
            ("L_c", self.l_c),
            ("L_grad_c", self.l_grad_c),
            ("L_d", self.l_d),
            ("L_grad_d", self.l_grad_d),
            ("D_x", self.d_x),
            ("D_y", self.d_y),
            ("c_hi", self.c_hi),
            ("d_hi", self.d_hi),
        ];
        for (name, v) in nonneg {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be finite and nonnegative, got {v}"
                    )));
                }
            }
        }
        let positive = [
            ("delta_c", self.delta_c),
            ("theta_a", self.theta_a),
            ("theta_f", self.theta_f),
            ("delta_d", self.delta_d),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be positive, got {v}"
                    )));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.f_low, self.f_hi) {
            if lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "F_low = {lo} exceeds F_hi = {hi}"
                )));
            }
        }
        if let (Some(lo), Some(hi)) = (self.f_star_low, self.f_hi) {
            if lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "f*_low = {lo} exceeds F_hi = {hi}"
                )));
            }
        }
        Ok(())
    }
}

/// A constrained minimax instance: smooth oracles, prox oracles and declared
/// constants. Cheap to clone; shared read-only across solves.
#[derive(Clone)]
pub struct ConstrainedMinimaxProblem {
    pub dims: Dims,
    pub model: Arc<dyn SmoothModel>,
    pub prox_p: Arc<dyn ProxOracle>,
    pub prox_q: Arc<dyn ProxOracle>,
    pub constants: ProblemConstants,
}

impl fmt::Debug for ConstrainedMinimaxProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstrainedMinimaxProblem")
            .field("dims", &self.dims)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

impl ConstrainedMinimaxProblem {
    pub fn new(
        dims: Dims,
        model: Arc<dyn SmoothModel>,
        prox_p: Arc<dyn ProxOracle>,
        prox_q: Arc<dyn ProxOracle>,
        constants: ProblemConstants,
    ) -> Result<Self> {
        constants.validate()?;
        Ok(Self {
            dims,
            model,
            prox_p,
            prox_q,
            constants,
        })
    }

    pub(crate) fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dims.n || y.len() != self.dims.m {
            return Err(Error::InvalidInput(format!(
                "point has dims ({}, {}), problem expects ({}, {})",
                x.len(),
                y.len(),
                self.dims.n,
                self.dims.m
            )));
        }
        Ok(())
    }
}

/// Dual estimates `(λ_x, λ_y)`, both componentwise nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPair {
    pub lambda_x: Vec<f64>,
    pub lambda_y: Vec<f64>,
}

impl MultiplierPair {
    pub fn new(lambda_x: Vec<f64>, lambda_y: Vec<f64>) -> Result<Self> {
        if lambda_x.iter().chain(&lambda_y).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput(
                "multipliers must be componentwise nonnegative".into(),
            ));
        }
        Ok(Self { lambda_x, lambda_y })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            lambda_x: vec![0.0; dims.n_c],
            lambda_y: vec![0.0; dims.n_d],
        }
    }
}

/// Snapshot of oracle evaluation counts. A prox evaluation with any `γ > 0`
/// counts once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounters {
    pub n_grad_f: u64,
    pub n_grad_c: u64,
    pub n_grad_d: u64,
    pub n_prox_p: u64,
    pub n_prox_q: u64,
}

impl OracleCounters {
    /// Componentwise `self − earlier`.
    pub fn since(&self, earlier: &OracleCounters) -> OracleCounters {
        OracleCounters {
            n_grad_f: self.n_grad_f - earlier.n_grad_f,
            n_grad_c: self.n_grad_c - earlier.n_grad_c,
            n_grad_d: self.n_grad_d - earlier.n_grad_d,
            n_prox_p: self.n_prox_p - earlier.n_prox_p,
            n_prox_q: self.n_prox_q - earlier.n_prox_q,
        }
    }

    /// True when every field of `self` is `≥` the matching field of `other`.
    pub fn dominates(&self, other: &OracleCounters) -> bool {
        self.n_grad_f >= other.n_grad_f
            && self.n_grad_c >= other.n_grad_c
            && self.n_grad_d >= other.n_grad_d
            && self.n_prox_p >= other.n_prox_p
            && self.n_prox_q >= other.n_prox_q
    }
}

#[derive(Default)]
struct Tally {
    grad_f: Cell<u64>,
    grad_c: Cell<u64>,
    grad_d: Cell<u64>,
    prox_p: Cell<u64>,
    prox_q: Cell<u64>,
}

fn bump(c: &Cell<u64>) {
    c.set(c.get() + 1);
}

/// Counting view of a problem. Owned by one solve; not `Sync`.
pub struct Instrumented<'p> {
    problem: &'p ConstrainedMinimaxProblem,
    tally: Tally,
}

impl<'p> Instrumented<'p> {
    pub fn new(problem: &'p ConstrainedMinimaxProblem) -> Self {
        Self {
            problem,
            tally: Tally::default(),
        }
    }

    pub fn problem(&self) -> &'p ConstrainedMinimaxProblem {
        self.problem
    }

    pub fn counters(&self) -> OracleCounters {
        OracleCounters {
            n_grad_f: self.tally.grad_f.get(),
            n_grad_c: self.tally.grad_c.get(),
            n_grad_d: self.tally.grad_d.get(),
            n_prox_p: self.tally.prox_p.get(),
            n_prox_q: self.tally.prox_q.get(),
        }
    }

    pub fn grad_f(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        bump(&self.tally.grad_f);
        let (gx, gy) = self.problem.model.grad_f(x, y);
        ensure_finite("grad_f", &gx)?;
        ensure_finite("grad_f", &gy)?;
        Ok((gx, gy))
    }

    /// Constraint values are not a counted operation.
    pub fn c(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = self.problem.model.c(x);
        ensure_finite("c(x)", &v)?;
        Ok(v)
    }

    pub fn d(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let v = self.problem.model.d(x, y);
        ensure_finite("d(x,y)", &v)?;
        Ok(v)
    }

    pub fn jac_c_t_apply(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        bump(&self.tally.grad_c);
        let out = self.problem.model.jac_c_t_apply(x, v);
        ensure_finite("jac_c_t_apply", &out)?;
        Ok(out)
    }

    pub fn jac_d_t_apply(&self, x: &[f64], y: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        bump(&self.tally.grad_d);
        let (ox, oy) = self.problem.model.jac_d_t_apply(x, y, v);
        ensure_finite("jac_d_t_apply", &ox)?;
        ensure_finite("jac_d_t_apply", &oy)?;
        Ok((ox, oy))
    }

    pub fn grad_f_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) -> Result<()> {
        bump(&self.tally.grad_f);
        self.problem.model.grad_f_into(x, y, gx, gy);
        ensure_finite("grad_f", gx)?;
        ensure_finite("grad_f", gy)
    }

    pub fn c_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.problem.model.c_into(x, out);
        ensure_finite("c(x)", out)
    }

    pub fn d_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        self.problem.model.d_into(x, y, out);
        ensure_finite("d(x,y)", out)
    }

    pub fn jac_c_t_apply_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        bump(&self.tally.grad_c);
        self.problem.model.jac_c_t_apply_into(x, v, out);
        ensure_finite("jac_c_t_apply", out)
    }

    pub fn jac_d_t_apply_into(
        &self,
        x: &[f64],
        y: &[f64],
        v: &[f64],
        ox: &mut [f64],
        oy: &mut [f64],
    ) -> Result<()> {
        bump(&self.tally.grad_d);
        self.problem.model.jac_d_t_apply_into(x, y, v, ox, oy);
        ensure_finite("jac_d_t_apply", ox)?;
        ensure_finite("jac_d_t_apply", oy)
    }

    pub fn prox_p(&self, gamma: f64, x: &[f64]) -> Vec<f64> {
        bump(&self.tally.prox_p);
        self.problem.prox_p.apply(gamma, x)
    }

    pub fn prox_q(&self, gamma: f64, y: &[f64]) -> Vec<f64> {
        bump(&self.tally.prox_q);
        self.problem.prox_q.apply(gamma, y)
    }

    pub fn prox_p_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) {
        bump(&self.tally.prox_p);
        self.problem.prox_p.apply_into(gamma, x, out)
    }

    pub fn prox_q_into(&self, gamma: f64, y: &[f64], out: &mut [f64]) {
        bump(&self.tally.prox_q);
        self.problem.prox_q.apply_into(gamma, y, out)
    }
}

/// Objective value together with a flag telling whether `p(x) − q(y)` was
/// included (it is only when both prox oracles expose values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub smooth_only: bool,
}

pub fn eval_objective(prob: &ConstrainedMinimaxProblem, x: &[f64], y: &[f64]) -> Result<ObjectiveValue> {
    prob.check_point(x, y)?;
    let fv = prob.model.f(x, y);
    if !fv.is_finite() {
        return Err(Error::NumericalFailure("non-finite f(x,y)".into()));
    }
    match (prob.prox_p.value(x), prob.prox_q.value(y)) {
        (Some(pv), Some(qv)) => {
            let v = fv + pv - qv;
            if v.is_nan() {
                return Err(Error::NumericalFailure("F(x,y) is NaN".into()));
            }
            Ok(ObjectiveValue {
                value: v,
                smooth_only: false,
            })
        }
        _ => Ok(ObjectiveValue {
            value: fv,
            smooth_only: true,
        }),
    }
}

/// `(1/2ρ)(‖[λ + ρ·v]₊‖² − ‖λ‖²)`
fn penalty_term(lambda: &[f64], v: &[f64], rho: f64) -> f64 {
    let shifted: Vec<f64> = lambda.iter().zip(v).map(|(l, c)| l + rho * c).collect();
    (norm_sq(&positive_part(&shifted)) - norm_sq(lambda)) / (2.0 * rho)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "penalty parameter must be positive, got {rho}"
        )))
    }
}

/// x-part of the augmented Lagrangian:
/// `F(x,y) + (1/2ρ)(‖[λ_x + ρc(x)]₊‖² − ‖λ_x‖²)`.
pub fn eval_al_x(
    prob: &ConstrainedMinimaxProblem,
    x: &[f64],
    y: &[f64],
    lambda_x: &[f64],
    rho: f64,
) -> Result<f64> {
    check_rho(rho)?;
    let obj = eval_objective(prob, x, y)?;
    let c = prob.model.c(x);
    ensure_finite("c(x)", &c)?;
    Ok(obj.value + penalty_term(lambda_x, &c, rho))
}

/// The augmented Lagrangian
/// `F + (1/2ρ)(‖[λ_x+ρc]₊‖² − ‖λ_x‖²) − (1/2ρ)(‖[λ_y+ρd]₊‖² − ‖λ_y‖²)`.
pub fn eval_al(
    prob: &ConstrainedMinimaxProblem,
    x: &[f64],
    y: &[f64],
    lambda_x: &[f64],
    lambda_y: &[f64],
    rho: f64,
) -> Result<f64> {
    check_rho(rho)?;
    if lambda_x.iter().chain(lambda_y).any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput("multipliers must be nonnegative".into()));
    }
    let lx = eval_al_x(prob, x, y, lambda_x, rho)?;
    let d = prob.model.d(x, y);
    ensure_finite("d(x,y)", &d)?;
    Ok(lx - penalty_term(lambda_y, &d, rho))
}

/// Central-difference gradient of a scalar function of `(x, y)`.
pub fn central_difference<F>(fun: F, x: &[f64], y: &[f64], h: f64) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let mut xp = x.to_vec();
    let mut gx = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = fun(&xp, y);
        xp[i] = x[i] - h;
        let fm = fun(&xp, y);
        xp[i] = x[i];
        gx.push((fp - fm) / (2.0 * h));
    }
    let mut yp = y.to_vec();
    let mut gy = Vec::with_capacity(y.len());
    for j in 0..y.len() {
        yp[j] = y[j] + h;
        let fp = fun(x, &yp);
        yp[j] = y[j] - h;
        let fm = fun(x, &yp);
        yp[j] = y[j];
        gy.push((fp - fm) / (2.0 * h));
    }
    (gx, gy)
}

/// Worst coordinate error `|fd − g| / max(1, |g|)` between two gradients.
pub fn max_relative_error(fd: (&[f64], &[f64]), g: (&[f64], &[f64])) -> f64 {
    fd.0.iter()
        .chain(fd.1)
        .zip(g.0.iter().chain(g.1))
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffReport {
    pub max_rel_error: f64,
    /// False when some `±h` probe left `dom p × dom q`.
    pub reliable: bool,
}

impl FiniteDiffReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.reliable && self.max_rel_error <= tol
    }
}

/// Compare `grad_f` with a central-difference estimate of `f` at `(x, y)`.
pub fn finite_diff_check(
    prob: &ConstrainedMinimaxProblem,
    x: &[f64],
    y: &[f64],
    h: f64,
) -> Result<FiniteDiffReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    prob.check_point(x, y)?;
    let probes_inside = |v: &[f64], dom: &dyn ProxOracle| {
        let mut w = v.to_vec();
        (0..v.len()).all(|i| {
            w[i] = v[i] + h;
            let up = dom.contains(&w, 0.0);
            w[i] = v[i] - h;
            let down = dom.contains(&w, 0.0);
            w[i] = v[i];
            up && down
        })
    };
    let reliable = probes_inside(x, prob.prox_p.as_ref()) && probes_inside(y, prob.prox_q.as_ref());
    let (gx, gy) = prob.model.grad_f(x, y);
    ensure_finite("grad_f", &gx)?;
    ensure_finite("grad_f", &gy)?;
    let (fx, fy) = central_difference(|a, b| prob.model.f(a, b), x, y, h);
    Ok(FiniteDiffReport {
        max_rel_error: max_relative_error((&fx, &fy), (&gx, &gy)),
        reliable,
    })
}

/// `‖[v]₊‖`
pub fn positive_norm(v: &[f64]) -> f64 {
    norm_sq(&positive_part(v)).sqrt()
}

/// `|⟨λ, v⟩|`
pub fn complementarity(lambda: &[f64], v: &[f64]) -> f64 {
    dot(lambda, v).abs()
}
