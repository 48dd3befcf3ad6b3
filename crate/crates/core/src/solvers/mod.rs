//! Small dense optimization backends.

pub mod lp;
pub mod sdp;

use crate::numerics::Vector;

pub use lp::{LpProblem, LpSolution, RowKind};
pub use sdp::{Affine, BlockTerm, LmiBlock, SdpOptions, SdpProblem, SocConstraint, SymVar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// A strictly feasible point was found; optimization stopped early by request.
    Feasible,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, Self::Optimal | Self::Feasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub y: Vector,
    pub objective: f64,
    /// Largest constraint violation at `y`.
    pub residual: f64,
    pub iterations: usize,
}
