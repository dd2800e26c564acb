//! Per-iteration records shared by all solver layers.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::model::OracleCounters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Scc,
    Ncc,
    Alm,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Scc => "scc",
            Phase::Ncc => "ncc",
            Phase::Alm => "alm",
        }
    }
}

/// One row of a solve trace. Counters are cumulative over the whole solve.
///
/// Field meaning by phase:
/// * `scc`: `inner_iter` is the inner-loop length `T`, `eps_k` the target
///   tolerance, `residual_cert` the termination residual of that iteration.
/// * `ncc`: `outer_iter` is the proximal-point index, `inner_iter` the SCC
///   iterations spent on the subproblem, `eps_k` the subproblem tolerance,
///   `residual_cert` the displacement `‖x^{k+1} − x^k‖`.
/// * `alm`: `eps_k`, `rho_k` are the schedule values, `inner_iter` the NCC
///   iterations, `residual_cert` the larger stationarity certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub phase: Phase,
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub eps_k: f64,
    pub rho_k: Option<f64>,
    pub residual_cert: f64,
    pub feas_c: Option<f64>,
    pub feas_d: Option<f64>,
    pub comp_c: Option<f64>,
    pub comp_d: Option<f64>,
    pub counters: OracleCounters,
    pub wall_ms: f64,
}

impl TraceRow {
    pub(crate) fn new(
        phase: Phase,
        outer_iter: usize,
        inner_iter: usize,
        eps_k: f64,
        residual_cert: f64,
        counters: OracleCounters,
        clock: &Instant,
    ) -> Self {
        Self {
            phase,
            outer_iter,
            inner_iter,
            eps_k,
            rho_k: None,
            residual_cert,
            feas_c: None,
            feas_d: None,
            comp_c: None,
            comp_d: None,
            counters,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        }
    }

    /// Row equality ignoring `wall_ms`.
    pub fn same_except_timing(&self, other: &TraceRow) -> bool {
        let mut a = self.clone();
        a.wall_ms = other.wall_ms;
        a == *other
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
}

impl SolveTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: SolveTrace) {
        self.rows.extend(other.rows);
    }

    pub fn rows_for(&self, phase: Phase) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    pub fn same_except_timing(&self, other: &SolveTrace) -> bool {
        self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.same_except_timing(b))
    }

    /// True when every counter is nondecreasing from row to row.
    pub fn counters_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].counters.dominates(&w[0].counters))
    }
}
