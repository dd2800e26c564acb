//! Optimal first-order method for strongly-convex–strongly-concave problems
//!
//! ```text
//! min_x max_y  h̄(x,y) + p(x) − q(y)
//! ```
//!
//! with a forward-backward termination test that yields a verifiable
//! stationarity certificate. The x-variable is carried in the dual-scaled
//! form `z = −σ_x·x`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, PartialSolution, Result};
use crate::kkt::{certificate_from_gradient, StationarityCertificate};
use crate::linalg::{dist_sq, norm, norm_sq};
use crate::model::OracleCounters;
use crate::oracle::SaddleOracle;
use crate::trace::{Phase, SolveTrace, TraceRow};

pub const DEFAULT_MAX_OUTER: usize = 100_000;

/// Smooth saddle function through its oracle plus curvature data.
pub struct SccProblem<O> {
    pub oracle: O,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub l_grad: f64,
}

impl<O: SaddleOracle> SccProblem<O> {
    pub fn new(oracle: O, sigma_x: f64, sigma_y: f64, l_grad: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_y > 0.0) || !sigma_x.is_finite() || !sigma_y.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "moduli must be positive, got σ_x = {sigma_x}, σ_y = {sigma_y}"
            )));
        }
        if !(l_grad >= sigma_x.max(sigma_y)) || !l_grad.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "smoothness {l_grad} is below max(σ_x, σ_y)"
            )));
        }
        Ok(Self {
            oracle,
            sigma_x,
            sigma_y,
            l_grad,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SccParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub alpha_bar: f64,
    pub eta_z: f64,
    pub eta_y: f64,
    pub zeta: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub zeta_bar: f64,
}

impl SccParams {
    pub fn new(sigma_x: f64, sigma_y: f64, l_grad: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_y > 0.0 && l_grad > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "moduli and smoothness must be positive, got ({sigma_x}, {sigma_y}, {l_grad})"
            )));
        }
        let alpha_bar = (8.0 * sigma_y / sigma_x).sqrt().min(1.0);
        Ok(Self {
            sigma_x,
            sigma_y,
            alpha_bar,
            eta_z: sigma_x / 2.0,
            eta_y: (1.0 / (2.0 * sigma_y)).min(4.0 / (alpha_bar * sigma_x)),
            zeta: 1.0 / (2.0 * 5f64.sqrt() * (1.0 + 8.0 * l_grad / sigma_x)),
            gamma_x: 8.0 / sigma_x,
            gamma_y: 8.0 / sigma_x,
            zeta_bar: sigma_x.min(sigma_y) / (l_grad * l_grad),
        })
    }

    /// Extrapolation weight `β_t = 2/(t+3)`.
    pub fn beta(t: usize) -> f64 {
        2.0 / (t as f64 + 3.0)
    }

    /// Default inner-loop cap `10·⌈96√2(1 + 8L/σ_x)⌉`.
    pub fn default_max_inner(sigma_x: f64, l_grad: f64) -> usize {
        10 * (96.0 * 2f64.sqrt() * (1.0 + 8.0 * l_grad / sigma_x)).ceil() as usize
    }
}

/// Field `a^k(x,y)` of the inner monotone inclusion, given `∇h̄(x,y)`.
///
/// `a_x = ∇_x ĥ + σ_x(x − z_g/σ_x)/2`, `a_y = −∇_y ĥ + σ_y·y + σ_x(y − y_g)/8`
/// with `∇ĥ = ∇h̄ − (σ_x·x, −σ_y·y)`.
#[allow(clippy::too_many_arguments)]
pub fn a_field(
    params: &SccParams,
    gx: &[f64],
    gy: &[f64],
    x: &[f64],
    y: &[f64],
    z_g: &[f64],
    y_g: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (mut ax, mut ay) = (vec![0.0; x.len()], vec![0.0; y.len()]);
    a_field_into(params, gx, gy, x, y, z_g, y_g, &mut ax, &mut ay);
    (ax, ay)
}

/// [`a_field`] writing into caller buffers.
#[allow(clippy::too_many_arguments)]
pub fn a_field_into(
    params: &SccParams,
    gx: &[f64],
    gy: &[f64],
    x: &[f64],
    y: &[f64],
    z_g: &[f64],
    y_g: &[f64],
    ax: &mut [f64],
    ay: &mut [f64],
) {
    let (sx, sy) = (params.sigma_x, params.sigma_y);
    for i in 0..x.len() {
        let hat = gx[i] - sx * x[i];
        ax[i] = hat + sx * (x[i] - z_g[i] / sx) / 2.0;
    }
    for j in 0..y.len() {
        let hat = gy[j] + sy * y[j];
        ay[j] = -hat + sy * y[j] + sx * (y[j] - y_g[j]) / 8.0;
    }
}

/// Exit test of the inner loop: true when
/// `γ_x‖a_x+b_x‖² + γ_y‖a_y+b_y‖² ≤ γ_x⁻¹‖x_t − x_{−1}‖² + γ_y⁻¹‖y_t − y_{−1}‖² + slack`.
///
/// `slack` absorbs rounding in `a + b`, which is exactly zero at a fixed
/// point but not in floating point. Without it a start that is already
/// the subproblem solution (`x_t = x_{−1}`) never exits.
pub fn inner_loop_done(params: &SccParams, abx: &[f64], aby: &[f64], dx_sq: f64, dy_sq: f64, slack: f64) -> bool {
    let lhs = params.gamma_x * norm_sq(abx) + params.gamma_y * norm_sq(aby);
    let rhs = dx_sq / params.gamma_x + dy_sq / params.gamma_y;
    !(lhs > rhs + slack)
}

/// Rounding allowance for the exit test. `scale_*` bounds the magnitude of
/// the terms summed into `a + b`.
pub fn rounding_slack(params: &SccParams, scale_x: f64, scale_y: f64) -> f64 {
    let rx = 8.0 * f64::EPSILON * scale_x;
    let ry = 8.0 * f64::EPSILON * scale_y;
    params.gamma_x * rx * rx + params.gamma_y * ry * ry
}

/// Outer-loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct SccState {
    pub k: usize,
    pub z: Vec<f64>,
    pub z_f: Vec<f64>,
    pub y: Vec<f64>,
    pub y_f: Vec<f64>,
    /// `x = −z/σ_x`.
    pub x: Vec<f64>,
}

/// Bookkeeping for one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SccIteration {
    /// Inner-loop length `T`.
    pub inner: usize,
    /// Gradient and prox evaluations spent in this iteration, including the
    /// termination test.
    pub grad_evals: u64,
    pub prox_p_evals: u64,
    pub prox_q_evals: u64,
    pub residual: f64,
    /// Cumulative counters of the underlying oracle after the iteration.
    pub counters: OracleCounters,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafeguardLimits {
    pub max_outer: usize,
    /// `None` selects the default cap from the problem constants.
    pub max_inner: Option<usize>,
}

impl Default for SafeguardLimits {
    fn default() -> Self {
        Self {
            max_outer: DEFAULT_MAX_OUTER,
            max_inner: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SccOptions {
    pub eps_bar: f64,
    /// `(z̄⁰, ȳ⁰)` with `z̄⁰ ∈ −σ_x·dom p`, `ȳ⁰ ∈ dom q`.
    pub start: Option<(Vec<f64>, Vec<f64>)>,
    pub limits: SafeguardLimits,
}

impl SccOptions {
    pub fn new(eps_bar: f64) -> Self {
        Self {
            eps_bar,
            start: None,
            limits: SafeguardLimits::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SccOutput {
    /// The certified point `(x̃, ỹ)`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residual: f64,
    /// The last iterate `(x^{k+1}, y^{k+1})` the certificate started from.
    pub x_last: Vec<f64>,
    pub y_last: Vec<f64>,
    pub params: SccParams,
    pub iterations: Vec<SccIteration>,
}

impl SccOutput {
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn total_grad_evals(&self) -> u64 {
        self.iterations.iter().map(|i| i.grad_evals).sum()
    }

    pub fn trace(&self, eps_bar: f64) -> SolveTrace {
        let rows = self
            .iterations
            .iter()
            .enumerate()
            .map(|(k, it)| TraceRow {
                phase: Phase::Scc,
                outer_iter: k,
                inner_iter: it.inner,
                eps_k: eps_bar,
                rho_k: None,
                residual_cert: it.residual,
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

struct CachedGradient {
    x: Vec<f64>,
    y: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

/// Stepwise driver; [`solve_scc`] is the usual entry point.
pub struct SccSolver<'a, O> {
    prob: &'a SccProblem<O>,
    pub params: SccParams,
    max_inner: usize,
    // Gradient at the last termination-test point. With ᾱ = 1 the next
    // anchor point coincides with it bit for bit.
    cache: Option<CachedGradient>,
    grads: u64,
    prox_p: u64,
    prox_q: u64,
}

impl<'a, O: SaddleOracle> SccSolver<'a, O> {
    pub fn new(prob: &'a SccProblem<O>, max_inner: Option<usize>) -> Result<Self> {
        let params = SccParams::new(prob.sigma_x, prob.sigma_y, prob.l_grad)?;
        Ok(Self {
            prob,
            params,
            max_inner: max_inner.unwrap_or_else(|| SccParams::default_max_inner(prob.sigma_x, prob.l_grad)),
            cache: None,
            grads: 0,
            prox_p: 0,
            prox_q: 0,
        })
    }

    fn grad(&mut self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if let Some(c) = &self.cache {
            if c.x == x && c.y == y {
                return Ok((c.gx.clone(), c.gy.clone()));
            }
        }
        self.grads += 1;
        self.prob.oracle.gradient(x, y)
    }

    fn grad_into(&mut self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) -> Result<()> {
        if let Some(c) = &self.cache {
            if c.x == x && c.y == y {
                gx.copy_from_slice(&c.gx);
                gy.copy_from_slice(&c.gy);
                return Ok(());
            }
        }
        self.grads += 1;
        self.prob.oracle.gradient_into(x, y, gx, gy)
    }

    fn prox_p_into(&mut self, gamma: f64, v: &[f64], out: &mut [f64]) {
        self.prox_p += 1;
        self.prob.oracle.prox_p_into(gamma, v, out)
    }

    fn prox_q_into(&mut self, gamma: f64, v: &[f64], out: &mut [f64]) {
        self.prox_q += 1;
        self.prob.oracle.prox_q_into(gamma, v, out)
    }

    fn prox_p(&mut self, gamma: f64, v: &[f64]) -> Vec<f64> {
        self.prox_p += 1;
        self.prob.oracle.prox_p(gamma, v)
    }

    fn prox_q(&mut self, gamma: f64, v: &[f64]) -> Vec<f64> {
        self.prox_q += 1;
        self.prob.oracle.prox_q(gamma, v)
    }

    /// Local evaluation counts `(grad, prox_p, prox_q)` so far.
    pub fn evals(&self) -> (u64, u64, u64) {
        (self.grads, self.prox_p, self.prox_q)
    }

    /// State from `(z̄⁰, ȳ⁰)`, or the default `(−σ_x·prox_p(1,0), prox_q(1,0))`.
    pub fn initial_state(&mut self, start: Option<(Vec<f64>, Vec<f64>)>) -> Result<SccState> {
        let (n, m) = self.prob.oracle.dims();
        let sx = self.params.sigma_x;
        let (z, y) = match start {
            Some((z, y)) => {
                if z.len() != n || y.len() != m {
                    return Err(Error::InvalidInput(format!(
                        "start has dims ({}, {}), expected ({n}, {m})",
                        z.len(),
                        y.len()
                    )));
                }
                let x: Vec<f64> = z.iter().map(|v| -v / sx).collect();
                if !self.prob.oracle.p().contains(&x, 1e-9) {
                    return Err(Error::InvalidInput("z̄⁰ is not in −σ_x·dom p".into()));
                }
                if !self.prob.oracle.q().contains(&y, 1e-9) {
                    return Err(Error::InvalidInput("ȳ⁰ is not in dom q".into()));
                }
                (z, y)
            }
            None => {
                let x0 = self.prox_p(1.0, &vec![0.0; n]);
                let y0 = self.prox_q(1.0, &vec![0.0; m]);
                (x0.iter().map(|v| -sx * v).collect(), y0)
            }
        };
        if z.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite start".into()));
        }
        let x = z.iter().map(|v| -v / sx).collect();
        Ok(SccState {
            k: 0,
            z_f: z.clone(),
            z,
            y_f: y.clone(),
            y,
            x,
        })
    }

    /// One outer iteration (extrapolation, inner loop, momentum update).
    /// Returns the inner-loop length `T`.
    pub fn outer_step(&mut self, s: &mut SccState) -> Result<usize> {
        let p = self.params;
        let (ab, sx, sy) = (p.alpha_bar, p.sigma_x, p.sigma_y);
        let z_g: Vec<f64> = s.z.iter().zip(&s.z_f).map(|(z, zf)| ab * z + (1.0 - ab) * zf).collect();
        let y_g: Vec<f64> = s.y.iter().zip(&s.y_f).map(|(y, yf)| ab * y + (1.0 - ab) * yf).collect();
        let x_m1: Vec<f64> = z_g.iter().map(|v| -v / sx).collect();
        let y_m1 = y_g.clone();

        let step_x = p.zeta * p.gamma_x;
        let step_y = p.zeta * p.gamma_y;

        let (n, m) = (x_m1.len(), y_m1.len());
        let (mut ax, mut ay) = (vec![0.0; n], vec![0.0; m]);
        let (gx, gy) = self.grad(&x_m1, &y_m1)?;
        a_field_into(&p, &gx, &gy, &x_m1, &y_m1, &z_g, &y_g, &mut ax, &mut ay);
        let mut ux: Vec<f64> = x_m1.iter().zip(&ax).map(|(x, a)| x - step_x * a).collect();
        let mut uy: Vec<f64> = y_m1.iter().zip(&ay).map(|(y, a)| y - step_y * a).collect();
        let x0 = self.prox_p(step_x, &ux);
        let y0 = self.prox_q(step_y, &uy);
        let mut bx: Vec<f64> = ux.iter().zip(&x0).map(|(u, v)| (u - v) / step_x).collect();
        let mut by: Vec<f64> = uy.iter().zip(&y0).map(|(u, v)| (u - v) / step_y).collect();
        let mut b_scale = ((norm(&ux) + norm(&x0)) / step_x, (norm(&uy) + norm(&y0)) / step_y);

        let (mut abx, mut aby) = (vec![0.0; n], vec![0.0; m]);
        let (mut base_x, mut base_y) = (vec![0.0; n], vec![0.0; m]);
        let (mut xh, mut yh) = (vec![0.0; n], vec![0.0; m]);
        let (mut gxt, mut gyt) = (vec![0.0; n], vec![0.0; m]);
        let (mut gxh, mut gyh) = (vec![0.0; n], vec![0.0; m]);
        let mut xt = x0.clone();
        let mut yt = y0.clone();
        let mut t = 0usize;
        loop {
            self.grad_into(&xt, &yt, &mut gxt, &mut gyt)?;
            a_field_into(&p, &gxt, &gyt, &xt, &yt, &z_g, &y_g, &mut ax, &mut ay);
            for i in 0..n {
                abx[i] = ax[i] + bx[i];
            }
            for j in 0..m {
                aby[j] = ay[j] + by[j];
            }
            let slack = rounding_slack(&p, b_scale.0 + norm(&ax), b_scale.1 + norm(&ay));
            if inner_loop_done(&p, &abx, &aby, dist_sq(&xt, &x_m1), dist_sq(&yt, &y_m1), slack) {
                break;
            }
            if t >= self.max_inner {
                return Err(Error::IterationLimitExceeded {
                    layer: "scc inner loop",
                    best: Box::new(PartialSolution {
                        x: xt,
                        y: yt,
                        residual: f64::INFINITY,
                        iterations: s.k,
                        ..Default::default()
                    }),
                });
            }
            let beta = SccParams::beta(t);
            for i in 0..n {
                base_x[i] = xt[i] + beta * (x0[i] - xt[i]);
                xh[i] = base_x[i] - step_x * abx[i];
            }
            for j in 0..m {
                base_y[j] = yt[j] + beta * (y0[j] - yt[j]);
                yh[j] = base_y[j] - step_y * aby[j];
            }
            self.grad_into(&xh, &yh, &mut gxh, &mut gyh)?;
            a_field_into(&p, &gxh, &gyh, &xh, &yh, &z_g, &y_g, &mut ax, &mut ay);
            for i in 0..n {
                ux[i] = base_x[i] - step_x * ax[i];
            }
            for j in 0..m {
                uy[j] = base_y[j] - step_y * ay[j];
            }
            self.prox_p_into(step_x, &ux, &mut xt);
            self.prox_q_into(step_y, &uy, &mut yt);
            for i in 0..n {
                bx[i] = (ux[i] - xt[i]) / step_x;
            }
            for j in 0..m {
                by[j] = (uy[j] - yt[j]) / step_y;
            }
            b_scale = ((norm(&ux) + norm(&xt)) / step_x, (norm(&uy) + norm(&yt)) / step_y);
            t += 1;
        }

        // f-points and their dual images, reusing the exit-test gradient.
        let z_f: Vec<f64> = (0..xt.len()).map(|i| (gxt[i] - sx * xt[i]) + bx[i]).collect();
        let w_f: Vec<f64> = (0..yt.len()).map(|j| -(gyt[j] + sy * yt[j]) + by[j]).collect();

        let (ez, ey) = (p.eta_z, p.eta_y);
        for i in 0..s.z.len() {
            s.z[i] = s.z[i] + ez / sx * (z_f[i] - s.z[i]) - ez * (xt[i] + z_f[i] / sx);
        }
        for j in 0..s.y.len() {
            s.y[j] = s.y[j] + ey * sy * (yt[j] - s.y[j]) - ey * (w_f[j] + sy * yt[j]);
        }
        s.z_f = z_f;
        s.y_f = yt;
        s.x = s.z.iter().map(|v| -v / sx).collect();
        s.k += 1;
        Ok(t)
    }

    /// FBS termination test at `(x^{k+1}, y^{k+1})`.
    pub fn certificate(&mut self, s: &SccState) -> Result<StationarityCertificate> {
        let (gx, gy) = self.grad(&s.x, &s.y)?;
        let zb = self.params.zeta_bar;
        let oracle = &self.prob.oracle;
        let mut extra = 0u64;
        let cert = certificate_from_gradient(
            |a: &[f64], b: &[f64]| {
                extra += 1;
                oracle.gradient(a, b)
            },
            |g, v| oracle.prox_p(g, v),
            |g, v| oracle.prox_q(g, v),
            zb,
            &s.x,
            &s.y,
            &gx,
            &gy,
        )?;
        self.grads += extra;
        self.prox_p += 1;
        self.prox_q += 1;
        self.cache = Some(CachedGradient {
            x: s.x.clone(),
            y: s.y.clone(),
            gx,
            gy,
        });
        Ok(cert)
    }
}

pub fn solve_scc<O: SaddleOracle>(prob: &SccProblem<O>, opts: &SccOptions) -> Result<SccOutput> {
    if !(opts.eps_bar > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            opts.eps_bar
        )));
    }
    let clock = Instant::now();
    let mut solver = SccSolver::new(prob, opts.limits.max_inner)?;
    let mut state = solver.initial_state(opts.start.clone())?;
    let mut iterations = Vec::new();
    let mut best: Option<StationarityCertificate> = None;

    while state.k < opts.limits.max_outer {
        let before = solver.evals();
        let inner = solver.outer_step(&mut state)?;
        let cert = solver.certificate(&state)?;
        let after = solver.evals();
        iterations.push(SccIteration {
            inner,
            grad_evals: after.0 - before.0,
            prox_p_evals: after.1 - before.1,
            prox_q_evals: after.2 - before.2,
            residual: cert.residual,
            counters: prob.oracle.counters(),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        if cert.residual <= opts.eps_bar {
            return Ok(SccOutput {
                x: cert.x,
                y: cert.y,
                residual: cert.residual,
                x_last: state.x,
                y_last: state.y,
                params: solver.params,
                iterations,
            });
        }
        if best.as_ref().map_or(true, |b| cert.residual < b.residual) {
            best = Some(cert);
        }
    }
    let best = best.map_or_else(
        || PartialSolution {
            x: state.x.clone(),
            y: state.y.clone(),
            residual: f64::INFINITY,
            iterations: state.k,
            ..Default::default()
        },
        |b| PartialSolution {
            x: b.x,
            y: b.y,
            residual: b.residual,
            iterations: state.k,
            ..Default::default()
        },
    );
    Err(Error::IterationLimitExceeded {
        layer: "scc",
        best: Box::new(best),
    })
}
