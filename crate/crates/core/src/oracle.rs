//! First-order oracle of a smooth saddle function plus its two proxes.
//!
//! The SCC and NCC layers only see this trait. Concrete oracles decide what
//! one gradient evaluation costs in terms of the underlying counters.

use std::cell::Cell;
use std::sync::Arc;

use crate::error::{ensure_finite, Error, Result};
use crate::model::{Instrumented, OracleCounters};
use crate::prox::ProxOracle;

pub trait SaddleOracle {
    fn dims(&self) -> (usize, usize);
    fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    fn prox_p(&self, gamma: f64, x: &[f64]) -> Vec<f64>;
    fn prox_q(&self, gamma: f64, y: &[f64]) -> Vec<f64>;
    fn p(&self) -> &dyn ProxOracle;
    fn q(&self) -> &dyn ProxOracle;
    /// Cumulative counters of the underlying problem.
    fn counters(&self) -> OracleCounters;

    /// [`SaddleOracle::gradient`] into caller buffers; same counting.
    fn gradient_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) -> Result<()> {
        let (a, b) = self.gradient(x, y)?;
        if a.len() != gx.len() || b.len() != gy.len() {
            return Err(Error::NumericalFailure("gradient has the wrong dimension".into()));
        }
        gx.copy_from_slice(&a);
        gy.copy_from_slice(&b);
        Ok(())
    }
    fn prox_p_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) {
        let v = self.prox_p(gamma, x);
        out.copy_from_slice(&v);
    }
    fn prox_q_into(&self, gamma: f64, y: &[f64], out: &mut [f64]) {
        let v = self.prox_q(gamma, y);
        out.copy_from_slice(&v);
    }
}

impl<T: SaddleOracle + ?Sized> SaddleOracle for &T {
    fn dims(&self) -> (usize, usize) {
        (**self).dims()
    }
    fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        (**self).gradient(x, y)
    }
    fn prox_p(&self, gamma: f64, x: &[f64]) -> Vec<f64> {
        (**self).prox_p(gamma, x)
    }
    fn prox_q(&self, gamma: f64, y: &[f64]) -> Vec<f64> {
        (**self).prox_q(gamma, y)
    }
    fn p(&self) -> &dyn ProxOracle {
        (**self).p()
    }
    fn q(&self) -> &dyn ProxOracle {
        (**self).q()
    }
    fn counters(&self) -> OracleCounters {
        (**self).counters()
    }
    fn gradient_into(&self, x: &[f64], y: &[f64], gx: &mut [f64], gy: &mut [f64]) -> Result<()> {
        (**self).gradient_into(x, y, gx, gy)
    }
    fn prox_p_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) {
        (**self).prox_p_into(gamma, x, out)
    }
    fn prox_q_into(&self, gamma: f64, y: &[f64], out: &mut [f64]) {
        (**self).prox_q_into(gamma, y, out)
    }
}

/// The smooth part `f` of a problem, ignoring `c` and `d`.
pub struct ObjectiveOracle<'a, 'p> {
    inst: &'a Instrumented<'p>,
}

impl<'a, 'p> ObjectiveOracle<'a, 'p> {
    pub fn new(inst: &'a Instrumented<'p>) -> Self {
        Self { inst }
    }
}

impl SaddleOracle for ObjectiveOracle<'_, '_> {
    fn dims(&self) -> (usize, usize) {
        let d = self.inst.problem().dims;
        (d.n, d.m)
    }
    fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.inst.grad_f(x, y)
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

type GradFn = dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync;

/// Oracle built from a gradient closure. Counts gradients as `n_grad_f`.
pub struct FnOracle {
    n: usize,
    m: usize,
    grad: Box<GradFn>,
    p: Arc<dyn ProxOracle>,
    q: Arc<dyn ProxOracle>,
    grads: Cell<u64>,
    proxes_p: Cell<u64>,
    proxes_q: Cell<u64>,
}

impl FnOracle {
    pub fn new<G>(n: usize, m: usize, grad: G, p: Arc<dyn ProxOracle>, q: Arc<dyn ProxOracle>) -> Self
    where
        G: Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    {
        Self {
            n,
            m,
            grad: Box::new(grad),
            p,
            q,
            grads: Cell::new(0),
            proxes_p: Cell::new(0),
            proxes_q: Cell::new(0),
        }
    }
}

impl SaddleOracle for FnOracle {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }
    fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.grads.set(self.grads.get() + 1);
        let (gx, gy) = (self.grad)(x, y);
        ensure_finite("gradient", &gx)?;
        ensure_finite("gradient", &gy)?;
        Ok((gx, gy))
    }
    fn prox_p(&self, gamma: f64, x: &[f64]) -> Vec<f64> {
        self.proxes_p.set(self.proxes_p.get() + 1);
        self.p.apply(gamma, x)
    }
    fn prox_q(&self, gamma: f64, y: &[f64]) -> Vec<f64> {
        self.proxes_q.set(self.proxes_q.get() + 1);
        self.q.apply(gamma, y)
    }
    fn p(&self) -> &dyn ProxOracle {
        self.p.as_ref()
    }
    fn q(&self) -> &dyn ProxOracle {
        self.q.as_ref()
    }
    fn counters(&self) -> OracleCounters {
        OracleCounters {
            n_grad_f: self.grads.get(),
            n_prox_p: self.proxes_p.get(),
            n_prox_q: self.proxes_q.get(),
            ..Default::default()
        }
    }
}
