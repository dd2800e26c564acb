//! Computable stationarity certificates and the KKT residual bundle.
//!
//! For a smooth `h` with proxes of `p` and `q`, one forward-backward step
//! `(x̃, ỹ)` from `(x, y)` with step `γ` gives
//!
//! ```text
//! r = ‖γ⁻¹(x − x̃, ỹ − y) − (∇h(x,y) − ∇h(x̃,ỹ))‖
//! ```
//!
//! whose x-block lies in `∂_x H(x̃,ỹ)` and whose y-block lies in
//! `∂_y H(x̃,ỹ)`. Each block norm therefore bounds the corresponding
//! subdifferential distance at `(x̃, ỹ)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{norm, norm_pair};
use crate::model::{complementarity, positive_norm, ConstrainedMinimaxProblem};
use crate::prox::{fbs_step_from_gradient, ProxOracle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityCertificate {
    /// The FBS point `(x̃, ỹ)` at which the bounds hold.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub res_x: f64,
    pub res_y: f64,
    /// Norm of the stacked residual.
    pub residual: f64,
    pub gamma: f64,
}

/// Certificate when `∇h(x,y) = (gx, gy)` is already known. `grad` is called
/// once, at the FBS point.
#[allow(clippy::too_many_arguments)]
pub fn certificate_from_gradient<G, P, Q>(
    grad: G,
    prox_p: P,
    prox_q: Q,
    gamma: f64,
    x: &[f64],
    y: &[f64],
    gx: &[f64],
    gy: &[f64],
) -> Result<StationarityCertificate>
where
    G: FnOnce(&[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
    P: FnOnce(f64, &[f64]) -> Vec<f64>,
    Q: FnOnce(f64, &[f64]) -> Vec<f64>,
{
    let (xt, yt) = fbs_step_from_gradient(prox_p, prox_q, gamma, x, y, gx, gy)?;
    let (gxt, gyt) = grad(&xt, &yt)?;
    ensure_finite("gradient at FBS point", &gxt)?;
    ensure_finite("gradient at FBS point", &gyt)?;
    let inv = 1.0 / gamma;
    let rx: Vec<f64> = (0..x.len())
        .map(|i| inv * (x[i] - xt[i]) - (gx[i] - gxt[i]))
        .collect();
    let ry: Vec<f64> = (0..y.len())
        .map(|j| inv * (yt[j] - y[j]) - (gy[j] - gyt[j]))
        .collect();
    let residual = norm_pair(&rx, &ry);
    if !residual.is_finite() {
        return Err(Error::NumericalFailure("non-finite stationarity residual".into()));
    }
    Ok(StationarityCertificate {
        x: xt,
        y: yt,
        res_x: norm(&rx),
        res_y: norm(&ry),
        residual,
        gamma,
    })
}

/// Step size used by [`certify_stationarity`]: `min(σ_x, σ_y)/L²` when moduli
/// are known, else `1/L`.
pub fn certificate_step(l: f64, sigma: Option<(f64, f64)>) -> Result<f64> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothness constant must be positive, got {l}"
        )));
    }
    match sigma {
        Some((sx, sy)) if sx > 0.0 && sy > 0.0 => Ok(sx.min(sy) / (l * l)),
        Some((sx, sy)) => Err(Error::InvalidParameter(format!(
            "moduli must be positive, got ({sx}, {sy})"
        ))),
        None => Ok(1.0 / l),
    }
}

/// One FBS step from `(x, y)` and the resulting certificate.
pub fn certify_stationarity<G>(
    grad: G,
    prox_p: &dyn ProxOracle,
    prox_q: &dyn ProxOracle,
    l: f64,
    sigma: Option<(f64, f64)>,
    x: &[f64],
    y: &[f64],
) -> Result<StationarityCertificate>
where
    G: Fn(&[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let gamma = certificate_step(l, sigma)?;
    let (gx, gy) = grad(x, y)?;
    certificate_from_gradient(
        &grad,
        |g, v| prox_p.apply(g, v),
        |g, v| prox_q.apply(g, v),
        gamma,
        x,
        y,
        &gx,
        &gy,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub r_stat_x: f64,
    pub r_stat_y: f64,
    pub r_feas_c: f64,
    pub r_feas_d: f64,
    pub r_comp_c: f64,
    pub r_comp_d: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.r_stat_x,
            self.r_stat_y,
            self.r_feas_c,
            self.r_feas_d,
            self.r_comp_c,
            self.r_comp_d,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Gradient of the fixed-multiplier Lagrangian smooth part
/// `(∇_x f + ∇c·λ_x − ∇_x d·λ_y, ∇_y f − ∇_y d·λ_y)`.
pub fn lagrangian_gradient(
    prob: &ConstrainedMinimaxProblem,
    x: &[f64],
    y: &[f64],
    lambda_x: &[f64],
    lambda_y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = &prob.model;
    let (mut gx, mut gy) = m.grad_f(x, y);
    if !lambda_x.is_empty() {
        let jc = m.jac_c_t_apply(x, lambda_x);
        gx.iter_mut().zip(&jc).for_each(|(g, v)| *g += v);
    }
    if !lambda_y.is_empty() {
        let (jx, jy) = m.jac_d_t_apply(x, y, lambda_y);
        gx.iter_mut().zip(&jx).for_each(|(g, v)| *g -= v);
        gy.iter_mut().zip(&jy).for_each(|(g, v)| *g -= v);
    }
    ensure_finite("Lagrangian gradient", &gx)?;
    ensure_finite("Lagrangian gradient", &gy)?;
    Ok((gx, gy))
}

/// `L_∇f + ‖λ_x‖L_∇c + ‖λ_y‖L_∇d`. Constraint constants may be absent when
/// the matching constraint block is empty.
pub fn lagrangian_smoothness(
    prob: &ConstrainedMinimaxProblem,
    lambda_x: &[f64],
    lambda_y: &[f64],
) -> Result<f64> {
    let k = &prob.constants;
    let lf = k.l_grad_f.ok_or(Error::MissingConstant("L_grad_f"))?;
    let lc = match (k.l_grad_c, prob.dims.n_c) {
        (Some(v), _) => v,
        (None, 0) => 0.0,
        (None, _) => return Err(Error::MissingConstant("L_grad_c")),
    };
    let ld = match (k.l_grad_d, prob.dims.n_d) {
        (Some(v), _) => v,
        (None, 0) => 0.0,
        (None, _) => return Err(Error::MissingConstant("L_grad_d")),
    };
    Ok(lf + norm(lambda_x) * lc + norm(lambda_y) * ld)
}

/// The six residuals of an approximate KKT point. Stationarity rows are
/// certificates of the fixed-multiplier Lagrangian from `(x, y)`.
pub fn kkt_residuals(
    prob: &ConstrainedMinimaxProblem,
    x: &[f64],
    y: &[f64],
    lambda_x: &[f64],
    lambda_y: &[f64],
) -> Result<KktResiduals> {
    prob.check_point(x, y)?;
    if lambda_x.len() != prob.dims.n_c || lambda_y.len() != prob.dims.n_d {
        return Err(Error::InvalidInput("multiplier dimension mismatch".into()));
    }
    if lambda_x.iter().chain(lambda_y).any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput(
            "multipliers must be componentwise nonnegative".into(),
        ));
    }
    let c = prob.model.c(x);
    let d = prob.model.d(x, y);
    ensure_finite("c(x)", &c)?;
    ensure_finite("d(x,y)", &d)?;
    let l = lagrangian_smoothness(prob, lambda_x, lambda_y)?;
    let cert = certify_stationarity(
        |a: &[f64], b: &[f64]| lagrangian_gradient(prob, a, b, lambda_x, lambda_y),
        prob.prox_p.as_ref(),
        prob.prox_q.as_ref(),
        l,
        None,
        x,
        y,
    )?;
    Ok(KktResiduals {
        r_stat_x: cert.res_x,
        r_stat_y: cert.res_y,
        r_feas_c: positive_norm(&c),
        r_feas_d: positive_norm(&d),
        r_comp_c: complementarity(lambda_x, &c),
        r_comp_d: complementarity(lambda_y, &d),
    })
}
