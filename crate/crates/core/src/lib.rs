//! First-order augmented Lagrangian method for nonconvex-concave minimax
//! problems with coupled nonlinear inequality constraints.

pub mod alm;
pub mod bounds;
pub mod error;
pub mod kkt;
pub mod linalg;
pub mod model;
pub mod ncc;
pub mod oracle;
pub mod problems;
pub mod prox;
pub mod scc;
pub mod trace;

pub use error::{Error, PartialSolution, Result};
pub use model::{ConstrainedMinimaxProblem, Dims, MultiplierPair, OracleCounters, ProblemConstants, SmoothModel};
pub use prox::{BoxIndicator, L1Norm, ProxOracle, ProxZero};
pub use trace::{Phase, SolveTrace, TraceRow};
pub use alm::{solve_alm, AlmConfig, AlmOutput};
pub use bounds::BoundInputs;
pub use kkt::{kkt_residuals, KktResiduals, StationarityCertificate};
pub use ncc::{solve_ncc, NccConfig, NccOutput, NccProblem};
pub use problems::{registry, registry_with, BuiltinInstance, InstanceOptions};
pub use scc::{solve_scc, SafeguardLimits, SccOptions, SccOutput, SccProblem};
