//! Closed-form complexity constants for the three solver layers.
//!
//! Counts are returned as integer-valued `f64` because the operation bounds
//! of the outer method overflow `u64` for moderate tolerances. Logarithms
//! are natural; the log of a nonpositive argument is `−∞` and is clamped
//! to zero by `⌈·⌉₊`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ProblemConstants;

/// `⌈v⌉₊`, with NaN and `−∞` mapped to zero.
pub fn ceil_plus(v: f64) -> f64 {
    if v > 0.0 {
        v.ceil()
    } else {
        0.0
    }
}

/// `(v)₊`, with NaN mapped to zero.
pub fn pos(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Natural log that sends nonpositive arguments to `−∞`.
pub fn log_or_neg_inf(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Index of the last outer iteration: the smallest `k ≥ 0` with
/// `ε₀τᵏ ≤ ε`. Starts from `⌈(log ε − log ε₀)/log τ⌉₊` and corrects by
/// whole steps so that rounding in the logs cannot disagree with the
/// schedule the solver actually runs.
pub fn alm_k(eps_0: f64, tau: f64, eps: f64) -> usize {
    use crate::alm::schedule_eps;
    let guess = ceil_plus((eps.ln() - eps_0.ln()) / tau.ln());
    let mut k = if guess.is_finite() { guess as usize } else { 0 };
    while k > 0 && schedule_eps(eps_0, tau, k - 1) <= eps {
        k -= 1;
    }
    while schedule_eps(eps_0, tau, k) > eps {
        k += 1;
    }
    k
}

/// Every quantity any bound may need. Unset fields only matter for the
/// bounds that use them.
#[derive(Debug, Clone, Default)]
pub struct BoundInputs {
    pub constants: ProblemConstants,
    pub sigma_x: Option<f64>,
    pub sigma_y: Option<f64>,
    /// Smoothness of the strongly-convex-strongly-concave problem.
    pub l_grad_bar: Option<f64>,
    pub eps_bar: Option<f64>,
    /// Smoothness of the nonconvex-concave problem.
    pub l_grad_h: Option<f64>,
    pub eps: Option<f64>,
    pub eps_hat_0: Option<f64>,
    pub eps_0: Option<f64>,
    pub tau: Option<f64>,
    pub lambda_cap: Option<f64>,
    pub lambda_y0_norm: Option<f64>,
    pub h_bar_star: Option<f64>,
    pub h_bar_low: Option<f64>,
    pub h_star: Option<f64>,
    pub h_low: Option<f64>,
    /// `max_y H(x̂⁰, y)`.
    pub max_h_at_start: Option<f64>,
}

fn req(v: Option<f64>, sym: &'static str) -> Result<f64> {
    match v {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(Error::MissingConstant(sym)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SccBounds {
    pub alpha_bar: f64,
    pub delta_bar: f64,
    pub theta0_bound: f64,
    pub k_bar: f64,
    pub n_bar: f64,
}

pub fn scc_bounds(inp: &BoundInputs) -> Result<SccBounds> {
    let sx = req(inp.sigma_x, "sigma_x")?;
    let sy = req(inp.sigma_y, "sigma_y")?;
    let l = req(inp.l_grad_bar, "L_grad_hbar")?;
    let eb = req(inp.eps_bar, "epsilon_bar")?;
    let dx = req(inp.constants.d_x, "D_x")?;
    let dy = req(inp.constants.d_y, "D_y")?;
    let hs = req(inp.h_bar_star, "Hbar_star")?;
    let hl = req(inp.h_bar_low, "Hbar_low")?;

    let alpha = 1f64.min((8.0 * sy / sx).sqrt());
    let eta_z = sx / 2.0;
    let eta_y = (1.0 / (2.0 * sy)).min(4.0 / (alpha * sx));
    let zeta_bar = sx.min(sy) / (l * l);

    let delta_bar = (2.0 + 1.0 / alpha) * sx * dx * dx + (2.0 * sy).max(alpha * sx / 4.0) * dy * dy;
    let theta0 = delta_bar + 2.0 / alpha * (hs - hl);

    let k_arg = 4.0 * (eta_z / (sx * sx)).max(eta_y) * theta0 * (1.0 / zeta_bar + l).powi(2) / (eb * eb);
    let k_bar = ceil_plus((2.0 / alpha).max(alpha * sx / (4.0 * sy)) * log_or_neg_inf(k_arg));

    let n_arg = 4.0 * (1.0 / (2.0 * sx)).max((1.0 / (2.0 * sy)).min(4.0 / (alpha * sx))) * theta0
        * (l * l / sx.min(sy) + l).powi(2)
        / (eb * eb);
    let n_outer = ceil_plus(2f64.max((sx / (2.0 * sy)).sqrt()) * log_or_neg_inf(n_arg));
    let n_bar = n_outer * ((96.0 * 2f64.sqrt() * (1.0 + 8.0 * l / sx)).ceil() + 2.0);

    Ok(SccBounds {
        alpha_bar: alpha,
        delta_bar,
        theta0_bound: theta0,
        k_bar,
        n_bar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NccBounds {
    pub alpha_hat: f64,
    pub delta_hat: f64,
    pub t_hat: f64,
    pub n_hat: f64,
}

pub fn ncc_bounds(inp: &BoundInputs) -> Result<NccBounds> {
    let l = req(inp.l_grad_h, "L_grad_h")?;
    let eps = req(inp.eps, "epsilon")?;
    let e0 = req(inp.eps_hat_0, "epsilon_hat_0")?;
    let dx = req(inp.constants.d_x, "D_x")?;
    let dy = req(inp.constants.d_y, "D_y")?;
    let hs = req(inp.h_star, "H_star")?;
    let hl = req(inp.h_low, "H_low")?;
    let h0 = req(inp.max_h_at_start, "max_y H(x0,y)")?;

    let alpha = 1f64.min((4.0 * eps / (dy * l)).sqrt());
    let delta = (2.0 + 1.0 / alpha) * l * dx * dx + (eps / dy).max(alpha * l / 4.0) * dy * dy;
    let t_hat = ceil_plus(
        16.0 * (h0 - hs + eps * dy / 4.0) * l / (eps * eps)
            + 32.0 * e0 * e0 * (1.0 + 4.0 * dy * dy * l * l / (eps * eps)) / (eps * eps)
            - 1.0,
    );

    let mu = eps / (2.0 * dy);
    let inner = (96.0 * 2f64.sqrt() * (1.0 + (24.0 * l + 4.0 * eps / dy) / l)).ceil() + 2.0;
    let per_outer = 2f64.max((dy * l / eps).sqrt());
    let cond = (3.0 * l + mu).powi(2) / l.min(mu) + 3.0 * l + mu;
    let arg = 4.0 * (1.0 / (2.0 * l)).max((dy / eps).min(4.0 / (alpha * l)))
        * (delta + 2.0 / alpha * (hs - hl + eps * dy / 4.0 + l * dx * dx))
        * cond
        * cond
        / (e0 * e0);
    let n_hat = (inner
        * per_outer
        * ((t_hat + 1.0) * pos(log_or_neg_inf(arg)) + t_hat + 1.0 + 2.0 * t_hat * (t_hat + 1.0).ln()))
    .ceil();

    Ok(NccBounds {
        alpha_hat: alpha,
        delta_hat: delta,
        t_hat,
        n_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlmBounds {
    pub l: f64,
    pub alpha: f64,
    pub delta: f64,
    /// `M` with the `d_hi²` coefficient used in the proof.
    pub m: f64,
    /// `M` with the stated `ρ_k d_hi²` coefficient, evaluated at `ρ_K`.
    pub m_paper_literal: f64,
    pub t: f64,
    pub k: usize,
    pub n: f64,
    pub r: f64,
}

/// Feasibility and complementarity guarantees at the output point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlmThresholds {
    pub feas_c: f64,
    pub comp_c: f64,
    pub feas_d: f64,
    pub comp_d: f64,
}

struct AlmCommon {
    eps: f64,
    eps_0: f64,
    tau: f64,
    cap: f64,
    ly0: f64,
    dy: f64,
    f_gap: f64,
}

fn alm_common(inp: &BoundInputs) -> Result<AlmCommon> {
    let k = &inp.constants;
    let eps_0 = req(inp.eps_0, "epsilon_0")?;
    let tau = req(inp.tau, "tau")?;
    let dy = req(k.d_y, "D_y")?;
    let f_hi = req(k.f_hi, "F_hi")?;
    let fs = req(k.f_star_low, "f_star_low")?;
    Ok(AlmCommon {
        eps: req(inp.eps, "epsilon")?,
        eps_0,
        tau,
        cap: req(inp.lambda_cap, "Lambda")?,
        ly0: inp.lambda_y0_norm.unwrap_or(0.0),
        dy,
        // (F_hi − f*_low + D_y ε₀)/(1 − τ)
        f_gap: (f_hi - fs + dy * eps_0) / (1.0 - tau),
    })
}

fn alm_l(inp: &BoundInputs, c: &AlmCommon) -> Result<f64> {
    let k = &inp.constants;
    let lgf = req(k.l_grad_f, "L_grad_f")?;
    let lc = req(k.l_c, "L_c")?;
    let chi = req(k.c_hi, "c_hi")?;
    let lgc = req(k.l_grad_c, "L_grad_c")?;
    let ld = req(k.l_d, "L_d")?;
    let dhi = req(k.d_hi, "d_hi")?;
    let lgd = req(k.l_grad_d, "L_grad_d")?;
    Ok(lgf + lc * lc + chi * lgc + c.cap * lgc + ld * ld + dhi * lgd + lgd * (c.ly0 * c.ly0 + 2.0 * c.f_gap).sqrt())
}

pub fn alm_bounds(inp: &BoundInputs) -> Result<AlmBounds> {
    let k = &inp.constants;
    let c = alm_common(inp)?;
    let l = alm_l(inp, &c)?;
    let lc = req(k.l_c, "L_c")?;
    let lf = req(k.l_f, "L_F")?;
    let dx = req(k.d_x, "D_x")?;
    let dhi = req(k.d_hi, "d_hi")?;
    let f_hi = req(k.f_hi, "F_hi")?;
    let f_low = req(k.f_low, "F_low")?;
    let fs = req(k.f_star_low, "f_star_low")?;
    let delta_d = req(k.delta_d, "delta_d")?;
    let dy = c.dy;
    let lc2 = lc * lc;

    let alpha = 1f64.min((4.0 / (dy * l)).sqrt());
    let delta = (2.0 + 1.0 / alpha) * l * dx * dx + (1.0 / dy).max(l / 4.0) * dy * dy;
    let kk = alm_k(c.eps_0, c.tau, c.eps);
    let rho_k_final = 1.0 / crate::alm::schedule_eps(c.eps_0, c.tau, kk);

    let mu = 1.0 / (2.0 * dy);
    let cond = (3.0 * l + mu).powi(2) / lc2.min(mu) + 3.0 * l + mu;
    let m_with = |dhi_term: f64| {
        16.0 * (1.0 / (2.0 * lc2)).max(4.0 / (alpha * lc2))
            * cond
            * cond
            * (delta
                + 2.0 / alpha
                    * (f_hi - f_low + c.cap * c.cap / 2.0 + 1.5 * c.ly0 * c.ly0 + 3.0 * c.f_gap + dhi_term
                        + dy / 4.0
                        + l * dx * dx))
    };
    let m = m_with(dhi * dhi);
    let m_paper_literal = m_with(rho_k_final * dhi * dhi);

    let t = ceil_plus(
        16.0 * (lf * dy + f_hi - fs + c.cap + 0.5 * (1.0 / c.tau + c.ly0 * c.ly0) + c.f_gap + c.cap * c.cap / 2.0
            + dy / 4.0)
            * l
            + 8.0 * (1.0 + 4.0 * dy * dy * l * l),
    );

    let n = ((96.0 * 2f64.sqrt() * (1.0 + (24.0 * l + 4.0 / dy) / lc2)).ceil() + 2.0)
        * 2f64.max((dy * l).sqrt())
        * t
        / (1.0 - c.tau.powi(4))
        * (c.tau * c.eps).powi(-4)
        * (28.0 * kk as f64 * (1.0 / c.tau).ln()
            + 28.0 * (1.0 / c.eps_0).ln()
            + 2.0 * pos(log_or_neg_inf(m))
            + 2.0
            + 2.0 * (2.0 * t).ln());

    Ok(AlmBounds {
        l,
        alpha,
        delta,
        m,
        m_paper_literal,
        t,
        k: kk,
        n: ceil_plus(n),
        r: 2.0 / delta_d * (c.eps_0 + lf) * dy,
    })
}

pub fn alm_thresholds(inp: &BoundInputs) -> Result<AlmThresholds> {
    let k = &inp.constants;
    let eps = req(inp.eps, "epsilon")?;
    let eps_0 = req(inp.eps_0, "epsilon_0")?;
    let cap = req(inp.lambda_cap, "Lambda")?;
    let ly0 = inp.lambda_y0_norm.unwrap_or(0.0);
    let lf = req(k.l_f, "L_F")?;
    let ld = req(k.l_d, "L_d")?;
    let dy = req(k.d_y, "D_y")?;
    let delta_c = req(k.delta_c, "delta_c")?;
    let delta_d = req(k.delta_d, "delta_d")?;

    let r = 2.0 / delta_d * (eps_0 + lf) * dy;
    let bc = (lf + ld * r + eps_0) / delta_c;
    Ok(AlmThresholds {
        feas_c: eps * bc,
        comp_c: eps * bc * bc.max(cap),
        feas_d: eps * r,
        comp_d: eps * r * r.max(ly0),
    })
}

/// Whether `ε` is small enough for the output guarantees to apply.
pub fn check_eps_condition(inp: &BoundInputs) -> Result<bool> {
    let k = &inp.constants;
    let c = alm_common(inp)?;
    let l = alm_l(inp, &c)?;
    let theta_a = req(k.theta_a, "theta_a")?;
    let theta_f = req(k.theta_f, "theta_f")?;
    let lf = req(k.l_f, "L_F")?;
    let lc = req(k.l_c, "L_c")?;
    let f_hi = req(k.f_hi, "F_hi")?;
    let fs = req(k.f_star_low, "f_star_low")?;
    let delta_d = req(k.delta_d, "delta_d")?;
    let dy = c.dy;

    let bracket = 2.0 * lf * dy + 2.0 * f_hi - 2.0 * fs + 2.0 * c.cap + 1.0 / c.tau + c.ly0 * c.ly0
        + 2.0 * c.f_gap
        + c.eps_0 * dy / 2.0
        + 1.0 / (lc * lc)
        + 4.0 * dy * dy * l
        + c.cap * c.cap;
    let dd = delta_d * delta_d * c.tau;
    let rhs = [
        1.0,
        c.cap / theta_a,
        bracket / (theta_f * theta_f),
        4.0 * c.ly0 * c.ly0 / dd + 8.0 * c.f_gap / dd,
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);
    Ok(1.0 / c.eps >= rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scc_inputs(sx: f64, sy: f64, eb: f64) -> BoundInputs {
        BoundInputs {
            constants: ProblemConstants {
                d_x: Some(2.0),
                d_y: Some(2.0),
                ..Default::default()
            },
            sigma_x: Some(sx),
            sigma_y: Some(sy),
            l_grad_bar: Some(3.0 * sx.max(sy)),
            eps_bar: Some(eb),
            h_bar_star: Some(1.0),
            h_bar_low: Some(-1.0),
            ..Default::default()
        }
    }

    #[test]
    fn alm_k_examples() {
        assert_eq!(alm_k(1.0, 0.5, 0.1), 4);
        assert_eq!(alm_k(0.3, 0.5, 0.3), 0);
        assert_eq!(alm_k(0.8, 0.5, 0.1), 3);
        assert_eq!(alm_k(0.5, 0.5, 0.25), 1);
    }

    #[test]
    fn alm_k_is_the_first_index_below_eps() {
        for &e0 in &[1.0, 0.8, 0.5] {
            for &tau in &[0.3, 0.5, 0.9] {
                for &eps in &[0.1, 0.01, 0.001] {
                    let k = alm_k(e0, tau, eps);
                    assert!(e0 * tau.powi(k as i32) <= eps);
                    assert!(k == 0 || e0 * tau.powi(k as i32 - 1) > eps);
                }
            }
        }
    }

    #[test]
    fn degenerate_domain_clamps_to_zero() {
        let mut inp = scc_inputs(1.0, 1.0, 1e-3);
        inp.constants.d_x = Some(0.0);
        inp.constants.d_y = Some(0.0);
        inp.h_bar_low = Some(1.0);
        let b = scc_bounds(&inp).unwrap();
        assert_eq!((b.delta_bar, b.theta0_bound, b.k_bar, b.n_bar), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn alpha_identity() {
        for &(sx, sy) in &[(1.0, 1.0), (100.0, 0.01), (0.5, 3.0), (8.0, 1.0)] {
            let b = scc_bounds(&scc_inputs(sx, sy, 1e-3)).unwrap();
            let lhs = 2.0 / b.alpha_bar;
            let rhs = 2f64.max((sx / (2.0 * sy)).sqrt());
            assert!((lhs - rhs).abs() <= 1e-12 * rhs, "{sx} {sy}");
        }
    }

    #[test]
    fn k_bar_monotone_in_eps_bar() {
        let mut prev = 0.0;
        for i in 0..30 {
            let eb = 10f64.powf(-(i as f64) / 3.0);
            let k = scc_bounds(&scc_inputs(2.0, 0.1, eb)).unwrap().k_bar;
            assert!(k >= prev);
            prev = k;
        }
        assert!(prev > 0.0);
    }

    #[test]
    fn missing_constant_is_named() {
        let mut inp = scc_inputs(1.0, 1.0, 1e-3);
        inp.h_bar_star = None;
        assert!(matches!(scc_bounds(&inp), Err(Error::MissingConstant("Hbar_star"))));
        assert!(matches!(ncc_bounds(&inp), Err(Error::MissingConstant(_))));
    }

    fn ncc_inputs(eps: f64, l: f64, dy: f64) -> BoundInputs {
        BoundInputs {
            constants: ProblemConstants {
                d_x: Some(1.0),
                d_y: Some(dy),
                ..Default::default()
            },
            l_grad_h: Some(l),
            eps: Some(eps),
            eps_hat_0: Some(eps / 4.0),
            h_star: Some(-1.0),
            h_low: Some(-2.0),
            max_h_at_start: Some(0.0),
            ..Default::default()
        }
    }

    #[test]
    fn alpha_hat_branch_boundary() {
        let b = ncc_bounds(&ncc_inputs(2.0 * 3.0 / 4.0, 3.0, 2.0)).unwrap();
        assert_eq!(b.alpha_hat, 1.0);
        let b = ncc_bounds(&ncc_inputs(0.01, 3.0, 2.0)).unwrap();
        assert!(b.alpha_hat < 1.0);
    }

    #[test]
    fn t_hat_term_dropping() {
        let mut inp = ncc_inputs(0.01, 3.0, 2.0);
        inp.max_h_at_start = inp.h_star;
        inp.eps_hat_0 = Some(0.0);
        let b = ncc_bounds(&inp).unwrap();
        let expect = (16.0 * (0.01 * 2.0 / 4.0) * 3.0 / 1e-4 - 1.0_f64).ceil();
        assert_eq!(b.t_hat, expect);
    }

    #[test]
    fn t_hat_scales_like_inverse_square() {
        let mut prev = ncc_bounds(&ncc_inputs(0.1, 3.0, 2.0)).unwrap().t_hat;
        for i in 1..8 {
            let eps = 0.1 / 2f64.powi(i);
            let t = ncc_bounds(&ncc_inputs(eps, 3.0, 2.0)).unwrap().t_hat;
            assert!(t >= prev && t <= 4.0 * prev + 4.0, "{prev} -> {t}");
            prev = t;
        }
    }

    fn alm_inputs(eps: f64) -> BoundInputs {
        BoundInputs {
            constants: ProblemConstants {
                l_f: Some(1.0),
                l_grad_f: Some(1.0),
                l_c: Some(1.0),
                l_grad_c: Some(1.0),
                l_d: Some(1.0),
                l_grad_d: Some(1.0),
                d_x: Some(1.0),
                d_y: Some(1.0),
                c_hi: Some(1.0),
                d_hi: Some(1.0),
                delta_c: Some(1.0),
                theta_a: Some(1.0),
                theta_f: Some(1.0),
                delta_d: Some(2.0),
                f_hi: Some(1.0),
                f_low: Some(-1.0),
                f_star_low: Some(-1.0),
            },
            eps: Some(eps),
            eps_0: Some(1.0),
            tau: Some(0.5),
            lambda_cap: Some(1.0),
            lambda_y0_norm: Some(0.0),
            ..Default::default()
        }
    }

    #[test]
    fn alm_examples() {
        let b = alm_bounds(&alm_inputs(0.1)).unwrap();
        assert_eq!(b.k, 4);
        assert_eq!(alm_bounds(&alm_inputs(1.0)).unwrap().k, 0);
        let mut inp = alm_inputs(0.1);
        inp.constants.l_f = Some(3.0);
        assert_eq!(alm_bounds(&inp).unwrap().r, 4.0);
        // ρ_K = 16 > 1, so the literal form is strictly larger.
        assert!(b.m_paper_literal > b.m);
        assert!(b.n.is_finite() && b.n > 0.0 && b.t > 0.0);
    }

    #[test]
    fn threshold_example() {
        let th = alm_thresholds(&alm_inputs(0.01)).unwrap();
        assert!((th.feas_c - 0.04).abs() < 1e-15);
        assert!((th.comp_c - 0.04 * 4.0).abs() < 1e-14);
        assert!((th.feas_d - 0.02).abs() < 1e-15);
    }

    #[test]
    fn eps_condition_flips() {
        assert!(!check_eps_condition(&alm_inputs(0.5)).unwrap());
        assert!(check_eps_condition(&alm_inputs(1e-6)).unwrap());
    }

    #[test]
    fn clamps() {
        assert_eq!(ceil_plus(-3.2), 0.0);
        assert_eq!(ceil_plus(f64::NEG_INFINITY), 0.0);
        assert_eq!(ceil_plus(f64::NAN), 0.0);
        assert_eq!(ceil_plus(2.1), 3.0);
        assert_eq!(log_or_neg_inf(0.0), f64::NEG_INFINITY);
    }
}
