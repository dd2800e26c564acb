//! Proximal operators, the nonnegative-ball projection used by the multiplier
//! safeguard, and the forward-backward splitting (FBS) step.
//!
//! `prox_{γφ}(v) = argmin_u { ½‖u − v‖² + γ·φ(u) }` for a proper closed
//! convex `φ`. Solvers only ever touch `p` and `q` through these maps.

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{axpy, norm};

/// A proximal map of a proper closed convex function.
pub trait ProxOracle: Send + Sync {
    /// `prox_{γφ}(v)` for `γ > 0`.
    fn apply(&self, gamma: f64, v: &[f64]) -> Vec<f64>;

    /// [`ProxOracle::apply`] into a caller buffer of the same length.
    fn apply_into(&self, gamma: f64, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.apply(gamma, v));
    }

    /// Pointwise value `φ(v)`, when the instance can provide it. Only used for
    /// diagnostics.
    fn value(&self, _v: &[f64]) -> Option<f64> {
        None
    }

    /// Membership in `dom φ` (up to `tol` per coordinate).
    fn contains(&self, _v: &[f64], _tol: f64) -> bool {
        true
    }

    /// True when `φ` is the indicator of a closed convex set, i.e. the prox
    /// is a Euclidean projection independent of `γ`.
    fn is_indicator(&self) -> bool {
        false
    }

    /// `max{‖u − v‖ : u, v ∈ dom φ}` when known in closed form.
    fn diameter(&self) -> Option<f64> {
        None
    }
}

/// `φ ≡ 0`; the prox is the identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProxZero;

impl ProxOracle for ProxZero {
    fn apply(&self, _gamma: f64, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn value(&self, _v: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

/// Indicator of the box `[lo, hi]`; the prox is a componentwise clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxIndicator {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxIndicator {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidParameter(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = lo.iter().zip(&hi).position(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter(format!(
                "box lower bound exceeds upper bound at index {i}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[−r, r]^dim`.
    pub fn symmetric(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![-radius; dim], vec![radius; dim])
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn clamp(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| x.max(*l).min(*h))
            .collect()
    }

    /// All `2^dim` vertices; only sensible for small `dim`.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let dim = self.lo.len();
        (0..1usize << dim)
            .map(|mask| {
                (0..dim)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect()
            })
            .collect()
    }
}

impl ProxOracle for BoxIndicator {
    fn apply(&self, _gamma: f64, v: &[f64]) -> Vec<f64> {
        self.clamp(v)
    }

    fn apply_into(&self, _gamma: f64, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = v[i].max(self.lo[i]).min(self.hi[i]);
        }
    }

    fn value(&self, v: &[f64]) -> Option<f64> {
        Some(if self.contains(v, 0.0) { 0.0 } else { f64::INFINITY })
    }

    fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }

    fn is_indicator(&self) -> bool {
        true
    }

    fn diameter(&self) -> Option<f64> {
        Some(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| (h - l) * (h - l))
                .sum::<f64>()
                .sqrt(),
        )
    }
}

/// Weighted ℓ1 norm `Σ wᵢ|vᵢ|`; the prox is soft-thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Norm {
    weights: Vec<f64>,
}

impl L1Norm {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "l1 weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn uniform(dim: usize, weight: f64) -> Result<Self> {
        Self::new(vec![weight; dim])
    }
}

impl ProxOracle for L1Norm {
    fn apply(&self, gamma: f64, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.weights)
            .map(|(x, w)| x.signum() * (x.abs() - gamma * w).max(0.0))
            .collect()
    }

    fn value(&self, v: &[f64]) -> Option<f64> {
        Some(v.iter().zip(&self.weights).map(|(x, w)| w * x.abs()).sum())
    }
}

/// `(v₊)ᵢ = max{vᵢ, 0}`.
pub fn positive_part(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

/// Euclidean projection onto `B⁺_Λ = {u ≥ 0 : ‖u‖ ≤ Λ}`.
///
/// The orthant is a cone and the ball is centred at the origin, so clipping
/// to the orthant and then scaling radially gives the exact projection.
pub fn project_nonneg_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ball radius must be positive, got {radius}"
        )));
    }
    let w = positive_part(v);
    let nw = norm(&w);
    if nw <= radius {
        return Ok(w);
    }
    let s = radius / nw;
    Ok(w.into_iter().map(|e| e * s).collect())
}

/// FBS step from an already-evaluated gradient `(g_x, g_y)` at `(x, y)`:
/// descent in `x`, ascent in `y`.
pub fn fbs_step_from_gradient<P, Q>(
    prox_p: P,
    prox_q: Q,
    gamma: f64,
    x: &[f64],
    y: &[f64],
    gx: &[f64],
    gy: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)>
where
    P: FnOnce(f64, &[f64]) -> Vec<f64>,
    Q: FnOnce(f64, &[f64]) -> Vec<f64>,
{
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fbs step size must be positive, got {gamma}"
        )));
    }
    ensure_finite("gradient in fbs step", gx)?;
    ensure_finite("gradient in fbs step", gy)?;
    let xt = prox_p(gamma, &axpy(x, -gamma, gx));
    let yt = prox_q(gamma, &axpy(y, gamma, gy));
    Ok((xt, yt))
}

/// `x̃ = prox_p(γ, x − γ·∇_x h)`, `ỹ = prox_q(γ, y + γ·∇_y h)`.
pub fn fbs_step<G, P, Q>(
    grad: G,
    prox_p: P,
    prox_q: Q,
    gamma: f64,
    x: &[f64],
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)>
where
    G: FnOnce(&[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
    P: FnOnce(f64, &[f64]) -> Vec<f64>,
    Q: FnOnce(f64, &[f64]) -> Vec<f64>,
{
    let (gx, gy) = grad(x, y)?;
    fbs_step_from_gradient(prox_p, prox_q, gamma, x, y, &gx, &gy)
}
