//! Built-in instances on boxes with constants known in closed form, and a
//! projected-gradient search for nearly feasible points.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{positive_norm, ConstrainedMinimaxProblem, Dims, ProblemConstants, SmoothModel};
use crate::prox::{positive_part, BoxIndicator, ProxOracle};

pub const INSTANCE_NAMES: [&str; 4] = ["quad_saddle_1d", "quad_saddle_box", "ncc_toy", "constrained_toy"];

/// Overrides accepted by [`registry_with`]. Fields an instance does not use
/// are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceOptions {
    pub box_radius: Option<f64>,
    pub coupling: Option<f64>,
    pub dim: Option<usize>,
}

/// A known solution and the tolerance it is stated to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda_x: Vec<f64>,
    pub lambda_y: Vec<f64>,
    pub tolerance: f64,
    pub note: &'static str,
}

/// Data needed to run the SCC layer directly on `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SccData {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub l_grad: f64,
    /// Saddle value `H̄*` and a lower bound on `H̄` over the domain.
    pub h_star: f64,
    pub h_low: f64,
}

/// Data needed by the NCC layer and its bounds.
#[derive(Debug, Clone, Copy)]
pub struct NccData {
    pub l_grad: f64,
    pub h_star: f64,
    pub h_low: f64,
    /// Closed-form `max_y H(x, y)`.
    pub max_y: fn(&[f64]) -> f64,
}

#[derive(Clone)]
pub struct BuiltinInstance {
    pub name: &'static str,
    pub problem: ConstrainedMinimaxProblem,
    /// Every listed point is a reference solution (stationary set for
    /// nonconvex instances; the first entry is the minimax solution).
    pub references: Vec<Reference>,
    pub scc: Option<SccData>,
    pub ncc: Option<NccData>,
    /// Default starting point used by the cli when none is given.
    pub default_start: (Vec<f64>, Vec<f64>),
    /// Suggested dual safeguard radius.
    pub default_lambda_cap: f64,
}

impl std::fmt::Debug for BuiltinInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltinInstance")
            .field("name", &self.name)
            .field("problem", &self.problem)
            .finish_non_exhaustive()
    }
}

pub fn registry(name: &str) -> Result<BuiltinInstance> {
    registry_with(name, &InstanceOptions::default())
}

pub fn registry_with(name: &str, opts: &InstanceOptions) -> Result<BuiltinInstance> {
    if let Some(r) = opts.box_radius {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("box radius must be nonnegative, got {r}")));
        }
    }
    match name {
        "quad_saddle_1d" => quad_saddle_1d(opts.box_radius.unwrap_or(10.0), opts.coupling.unwrap_or(1.0)),
        "quad_saddle_box" => quad_saddle_box(
            opts.dim.unwrap_or(2),
            opts.box_radius.unwrap_or(3.0),
            opts.coupling.unwrap_or(1.0),
        ),
        "ncc_toy" => ncc_toy(opts.coupling.unwrap_or(0.1)),
        "constrained_toy" => constrained_toy(),
        other => Err(Error::NotFound(other.to_string())),
    }
}

fn symmetric_box(dim: usize, r: f64) -> Result<Arc<dyn ProxOracle>> {
    Ok(Arc::new(BoxIndicator::symmetric(dim, r)?))
}

fn unconstrained(n: usize, m: usize) -> Dims {
    Dims { n, m, n_c: 0, n_d: 0 }
}

/// `½a‖x‖² + b·xᵀQy − ½c‖y‖²` with `Q` block-diagonal of planar rotations
/// by `θ` (a trailing odd coordinate gets the identity).
struct CoupledQuadratic {
    a: f64,
    b: f64,
    c: f64,
    cos: f64,
    sin: f64,
}

impl CoupledQuadratic {
    fn q_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = y.to_vec();
        let mut i = 0;
        while i + 1 < y.len() {
            out[i] = self.cos * y[i] - self.sin * y[i + 1];
            out[i + 1] = self.sin * y[i] + self.cos * y[i + 1];
            i += 2;
        }
        out
    }
}

impl SmoothModel for CoupledQuadratic {
    fn f(&self, x: &[f64], y: &[f64]) -> f64 {
        let qy = self.q_apply(y);
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let xqy: f64 = x.iter().zip(&qy).map(|(a, b)| a * b).sum();
        0.5 * self.a * xx + self.b * xqy - 0.5 * self.c * yy
    }
    fn grad_f(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut gx, mut gy) = (vec![0.0; x.len()], vec![0.0; y.len()]);
        self.grad_f_into(x, y, &mut gx, &mut gy);
        (gx, gy)
    }
    fn grad_f_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        let (a, b, c, cs, sn) = (self.a, self.b, self.c, self.cos, self.sin);
        let mut i = 0;
        while i + 1 < x.len() {
            gx[i] = a * x[i] + b * (cs * y[i] - sn * y[i + 1]);
            gx[i + 1] = a * x[i + 1] + b * (sn * y[i] + cs * y[i + 1]);
            gy[i] = b * (cs * x[i] + sn * x[i + 1]) - c * y[i];
            gy[i + 1] = b * (-sn * x[i] + cs * x[i + 1]) - c * y[i + 1];
            i += 2;
        }
        if i < x.len() {
            gx[i] = a * x[i] + b * y[i];
            gy[i] = b * x[i] - c * y[i];
        }
    }
    fn c_into(&self, _x: &[f64], _out: &mut [f64]) {}
    fn d_into(&self, _x: &[f64], _y: &[f64], _out: &mut [f64]) {}
    fn c(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }
    fn jac_c_t_apply(&self, x: &[f64], _v: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
    fn d(&self, _x: &[f64], _y: &[f64]) -> Vec<f64> {
        Vec::new()
    }
    fn jac_d_t_apply(&self, x: &[f64], y: &[f64], _v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; x.len()], vec![0.0; y.len()])
    }
}

/// Constants of a coupled quadratic on `[−r, r]^dim × [−r, r]^dim`.
fn coupled_instance(
    name: &'static str,
    model: CoupledQuadratic,
    dim: usize,
    r: f64,
) -> Result<BuiltinInstance> {
    let (a, b, c) = (model.a, model.b, model.c);
    // Q is orthogonal, so the Hessian spectrum is that of [[a, b], [b, −c]].
    let l = ((a - c).abs() + ((a + c) * (a + c) + 4.0 * b * b).sqrt()) / 2.0;
    let l = l.max(a).max(c);
    let diam = 2.0 * r * (dim as f64).sqrt();
    let rr = dim as f64 * r * r;
    // Unconstrained inner optima give valid outer bounds on the box.
    let h_low = -(b * b / (2.0 * a) + c / 2.0) * rr;
    let h_hi = (a / 2.0 + b * b / (2.0 * c)) * rr;
    let constants = ProblemConstants {
        l_f: Some(l * (2.0 * rr).sqrt()),
        l_grad_f: Some(l),
        l_c: Some(0.0),
        l_grad_c: Some(0.0),
        l_d: Some(0.0),
        l_grad_d: Some(0.0),
        d_x: Some(diam),
        d_y: Some(diam),
        c_hi: Some(0.0),
        d_hi: Some(0.0),
        f_hi: Some(h_hi),
        f_low: Some(h_low),
        f_star_low: Some(0.0),
        ..Default::default()
    };
    let problem = ConstrainedMinimaxProblem::new(
        unconstrained(dim, dim),
        Arc::new(model),
        symmetric_box(dim, r)?,
        symmetric_box(dim, r)?,
        constants,
    )?;
    let start_x = vec![(0.6 * r).min(r); dim];
    let start_y = (0..dim).map(|i| if i % 2 == 0 { -0.4 * r } else { 0.7 * r }).collect();
    Ok(BuiltinInstance {
        name,
        problem,
        references: vec![Reference {
            x: vec![0.0; dim],
            y: vec![0.0; dim],
            lambda_x: vec![],
            lambda_y: vec![],
            tolerance: 0.0,
            note: "saddle of a strongly-convex-strongly-concave quadratic at the origin",
        }],
        scc: Some(SccData {
            sigma_x: a,
            sigma_y: c,
            l_grad: l,
            h_star: 0.0,
            h_low,
        }),
        ncc: None,
        default_start: (start_x, start_y),
        default_lambda_cap: 1.0,
    })
}

fn quad_saddle_1d(r: f64, b: f64) -> Result<BuiltinInstance> {
    let model = CoupledQuadratic {
        a: 1.0,
        b,
        c: 1.0,
        cos: 1.0,
        sin: 0.0,
    };
    coupled_instance("quad_saddle_1d", model, 1, r)
}

fn quad_saddle_box(dim: usize, r: f64, b: f64) -> Result<BuiltinInstance> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dim must be positive".into()));
    }
    let theta = std::f64::consts::PI / 6.0;
    let model = CoupledQuadratic {
        a: 2.0,
        b,
        c: 1.0,
        cos: theta.cos(),
        sin: theta.sin(),
    };
    coupled_instance("quad_saddle_box", model, dim, r)
}

/// `−(x − 0.5)² + κ·xy` on `[−1, 1]²`.
struct NccToy {
    kappa: f64,
}

impl SmoothModel for NccToy {
    fn f(&self, x: &[f64], y: &[f64]) -> f64 {
        -(x[0] - 0.5).powi(2) + self.kappa * x[0] * y[0]
    }
    fn grad_f(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![-2.0 * (x[0] - 0.5) + self.kappa * y[0]], vec![self.kappa * x[0]])
    }
    fn grad_f_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        gx[0] = -2.0 * (x[0] - 0.5) + self.kappa * y[0];
        gy[0] = self.kappa * x[0];
    }
    fn c(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }
    fn jac_c_t_apply(&self, _x: &[f64], _v: &[f64]) -> Vec<f64> {
        vec![0.0]
    }
    fn d(&self, _x: &[f64], _y: &[f64]) -> Vec<f64> {
        Vec::new()
    }
    fn jac_d_t_apply(&self, _x: &[f64], _y: &[f64], _v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![0.0])
    }
}

fn ncc_toy(kappa: f64) -> Result<BuiltinInstance> {
    if kappa != 0.1 {
        return Err(Error::InvalidParameter(
            "ncc_toy references are tabulated for coupling 0.1 only".into(),
        ));
    }
    // Hessian [[−2, κ], [κ, 0]] has eigenvalues −1 ± √(1 + κ²).
    let l = 1.0 + (1.0 + kappa * kappa).sqrt();
    let constants = ProblemConstants {
        l_f: Some((3.1f64 * 3.1 + 0.01).sqrt()),
        l_grad_f: Some(l),
        d_x: Some(2.0),
        d_y: Some(2.0),
        f_hi: Some(0.0525),
        f_low: Some(-2.35),
        f_star_low: Some(-2.15),
        ..Default::default()
    };
    let problem = ConstrainedMinimaxProblem::new(
        unconstrained(1, 1),
        Arc::new(NccToy { kappa }),
        symmetric_box(1, 1.0)?,
        symmetric_box(1, 1.0)?,
        constants,
    )?;
    let point = |x: f64, y: f64, note| Reference {
        x: vec![x],
        y: vec![y],
        lambda_x: vec![],
        lambda_y: vec![],
        tolerance: 1e-12,
        note,
    };
    Ok(BuiltinInstance {
        name: "ncc_toy",
        problem,
        references: vec![
            point(-1.0, -1.0, "minimax solution: argmin of −(x−0.5)² + 0.1|x| on [−1,1]"),
            point(1.0, 1.0, "stationary: boundary point with y at the upper vertex"),
            point(0.55, 1.0, "stationary: interior critical point of −(x−0.5)² + 0.1x"),
        ],
        scc: None,
        ncc: Some(NccData {
            l_grad: l,
            h_star: -2.15,
            h_low: -2.35,
            max_y: |x| -(x[0] - 0.5).powi(2) + 0.1 * x[0].abs(),
        }),
        default_start: (vec![0.0], vec![0.0]),
        default_lambda_cap: 1.0,
    })
}

/// `f = (x−1)² + xy − y²`, `c = x² − 1`, `d = x + y − 1` on `[−2, 2]²`.
struct ConstrainedToy;

impl SmoothModel for ConstrainedToy {
    fn f(&self, x: &[f64], y: &[f64]) -> f64 {
        (x[0] - 1.0).powi(2) + x[0] * y[0] - y[0] * y[0]
    }
    fn grad_f(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![2.0 * (x[0] - 1.0) + y[0]], vec![x[0] - 2.0 * y[0]])
    }
    fn c(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0] * x[0] - 1.0]
    }
    fn jac_c_t_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        vec![2.0 * x[0] * v[0]]
    }
    fn d(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        vec![x[0] + y[0] - 1.0]
    }
    fn jac_d_t_apply(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![v[0]], vec![v[0]])
    }
    fn grad_f_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        gx[0] = 2.0 * (x[0] - 1.0) + y[0];
        gy[0] = x[0] - 2.0 * y[0];
    }
    fn c_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0] - 1.0;
    }
    fn jac_c_t_apply_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0] * v[0];
    }
    fn d_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = x[0] + y[0] - 1.0;
    }
    fn jac_d_t_apply_into(&self, _x: &[f64], _y: &[f64], v: &[f64], ox: &mut [f64], oy: &mut [f64]) {
        ox[0] = v[0];
        oy[0] = v[0];
    }
}

fn constrained_toy() -> Result<BuiltinInstance> {
    let constants = ProblemConstants {
        l_f: Some(68f64.sqrt()),
        l_grad_f: Some(5f64.sqrt()),
        l_c: Some(4.0),
        l_grad_c: Some(2.0),
        l_d: Some(2f64.sqrt()),
        l_grad_d: Some(0.0),
        d_x: Some(4.0),
        d_y: Some(4.0),
        c_hi: Some(3.0),
        d_hi: Some(5.0),
        delta_c: Some(1.0),
        theta_a: Some(0.75),
        theta_f: Some(1.0),
        delta_d: Some(1.0),
        f_hi: Some(10.0),
        f_low: Some(-7.0),
        f_star_low: Some(-2.0),
    };
    let problem = ConstrainedMinimaxProblem::new(
        Dims { n: 1, m: 1, n_c: 1, n_d: 1 },
        Arc::new(ConstrainedToy),
        symmetric_box(1, 2.0)?,
        symmetric_box(1, 2.0)?,
        constants,
    )?;
    Ok(BuiltinInstance {
        name: "constrained_toy",
        problem,
        references: vec![Reference {
            x: vec![1.0],
            y: vec![0.0],
            lambda_x: vec![0.5],
            lambda_y: vec![1.0],
            tolerance: 1e-12,
            note: "both constraints active; multipliers from the 2x2 active-set system",
        }],
        scc: None,
        ncc: None,
        default_start: (vec![0.0], vec![0.0]),
        default_lambda_cap: 10.0,
    })
}

pub const NEAR_FEASIBLE_MAX_ITER: usize = 100_000;

/// Projected gradient on `φ(x) = ‖[c(x)]₊‖²` from `x0` with step
/// `1/(2(L_c² + c_hi·L_∇c))`, projecting with `prox_p`. Stops once
/// `‖[c(x)]₊‖ ≤ η`. Evaluations here are preprocessing and are not counted.
pub fn find_near_feasible(prob: &ConstrainedMinimaxProblem, eta: f64, x0: &[f64]) -> Result<Vec<f64>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")));
    }
    if x0.len() != prob.dims.n {
        return Err(Error::InvalidInput("start dimension mismatch".into()));
    }
    let k = &prob.constants;
    let l_c = k.l_c.ok_or(Error::MissingConstant("L_c"))?;
    let c_hi = k.c_hi.ok_or(Error::MissingConstant("c_hi"))?;
    let l_gc = k.l_grad_c.ok_or(Error::MissingConstant("L_grad_c"))?;
    let curvature = 2.0 * (l_c * l_c + c_hi * l_gc);
    let step = if curvature > 0.0 { 1.0 / curvature } else { 1.0 };

    let model = &prob.model;
    let mut x = x0.to_vec();
    let mut best = (f64::INFINITY, x.clone());
    for _ in 0..NEAR_FEASIBLE_MAX_ITER {
        let c = model.c(&x);
        let viol = positive_norm(&c);
        if !viol.is_finite() {
            return Err(Error::NumericalFailure("non-finite c(x)".into()));
        }
        if viol * viol < best.0 {
            best = (viol * viol, x.clone());
        }
        if viol <= eta {
            return Ok(x);
        }
        // ∇φ = 2∇c(x)[c(x)]₊
        let g = model.jac_c_t_apply(&x, &positive_part(&c));
        let u: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - step * 2.0 * g).collect();
        x = prob.prox_p.apply(step, &u);
    }
    Err(Error::FeasibilityNotFound {
        best_phi: best.0,
        x: best.1,
    })
}

/// Midpoint concavity gap `(f(x,y₁) + f(x,y₂))/2 − f(x,(y₁+y₂)/2)`. A
/// positive value refutes concavity of `f(x,·)` on the segment.
pub fn midpoint_concavity_gap(model: &dyn SmoothModel, x: &[f64], y1: &[f64], y2: &[f64]) -> f64 {
    let mid: Vec<f64> = y1.iter().zip(y2).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * (model.f(x, y1) + model.f(x, y2)) - model.f(x, &mid)
}
