//! Ground-truth engines used by tests, baselines and the summary report.

mod barrier;
mod central;
mod lagrange;
mod maxflow;

use thiserror::Error;

pub use central::{
    mutualcast_catalog, simulcast_catalog, solve_mp_central, solve_restricted, two_hop_catalog,
    CentralSolution, Instance,
};
pub use lagrange::{
    lagrangian, loss_penalty, session_rates, track_convergence, ConvergenceDiagnostics, Saddle,
    StepSizes, TrajectoryPoint,
};
pub use maxflow::max_flow;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("averaged Lagrangian gap {gap} at k = {k} outside [{low}, {high}]")]
    BoundViolation { k: usize, gap: f64, low: f64, high: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
}
