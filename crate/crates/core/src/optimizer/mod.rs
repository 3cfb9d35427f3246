//! Finite-dimensional minimax weight programs and their solution.
//!
//! [`build_dual`] is the workhorse; [`build_primal`] exists for small
//! instances and for cross-checking. Both represent the curvature class on the
//! same lattice, so at matched discretization they have the same optimum.

mod dual;
pub mod moments;
mod primal;
pub mod qp;
mod recover;
pub mod solver;

pub use dual::build_dual;
pub use moments::{MomentRow, MomentSystem, RowStatus};
pub use primal::{build_primal, PRIMAL_MAX_OBSERVATIONS};
pub use qp::{LinearRow, ProgramKind, QuadraticProgram, VarBlock, VarCatalog};
pub use recover::{
    primal_weights, recover_weights, solve_dual, solve_primal, Certificate, DualSolution, Multipliers,
    OracleKind, PrimalSolution, SolverDiagnostics, WeightSolution,
};
pub use solver::{solve_qp, QpStatus, RawSolution, SolverSettings};

use crate::discretization::{
    build_lattice, default_spacing, direction_set, DirectionSet, Grid,
};
use crate::error::{Error, Result};
use crate::extensions::{add_balance_constraints, BalanceSpec};
use crate::model::DesignProblem;

/// Lattice and direction set from the problem's discretization controls.
pub fn discretize(problem: &DesignProblem) -> Result<(Grid, DirectionSet)> {
    let h = problem
        .discretization
        .spacing
        .unwrap_or_else(|| default_spacing(problem));
    let grid = build_lattice(problem, h)?;
    let dirs = direction_set(problem.k(), problem.discretization.level);
    Ok((grid, dirs))
}

/// Builds and solves the dual on the default lattice, adds balance rows when
/// the problem asks for them, and recovers certified weights.
///
/// When the variance and bias scales are far apart the dual's `G` is a small
/// difference of large terms and the recovered weights can miss the moment
/// identities. Small problems then fall back to the primal.
pub fn solve_minimax(problem: &DesignProblem, settings: &SolverSettings) -> Result<WeightSolution> {
    let (grid, dirs) = discretize(problem)?;
    let balance = BalanceSpec::from_problem(problem);
    let mut qp = build_dual(problem, &grid, &dirs)?;
    if let Some(balance) = &balance {
        qp = add_balance_constraints(qp, balance)?;
    }
    let dual = solve_dual(qp, grid.clone(), dirs.clone(), settings)
        .and_then(|sol| recover_weights(problem, &sol));
    match dual {
        Err(Error::SolverQuality(_) | Error::Solver(_)) if problem.len() <= PRIMAL_MAX_OBSERVATIONS => {
            let mut qp = build_primal(problem, &grid, &dirs)?;
            if let Some(balance) = &balance {
                qp = add_balance_constraints(qp, balance)?;
            }
            primal_weights(problem, &qp, &grid, &dirs, settings).or(dual)
        }
        other => other,
    }
}

pub(crate) fn num_arms(problem: &DesignProblem) -> usize {
    if problem.estimand.is_pointwise() {
        2
    } else {
        1
    }
}

/// Grid function arm of observation `i`: treated (1) or control (0) for the
/// pointwise estimand, a single arm otherwise.
pub(crate) fn arm_of(problem: &DesignProblem, i: usize) -> usize {
    if problem.estimand.is_pointwise() && problem.treatment()[i] {
        1
    } else {
        0
    }
}

/// Local variable index of every non-anchor node, and their count.
pub(crate) fn free_nodes(grid: &Grid) -> (Vec<Option<usize>>, usize) {
    let anchors = grid.anchors();
    let mut next = 0;
    let map = (0..grid.len())
        .map(|node| {
            if anchors.contains(&node) {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect();
    (map, next)
}

/// Programs are assembled in units of `κ = σ̄·B·R²` (R the data radius
/// around `c`), the geometric mean of the variance and squared-bias scales,
/// so neither term dominates the solver's view of the objective.
pub(crate) fn variance_scale(problem: &DesignProblem, sigma_sq: &[f64]) -> f64 {
    let mean = sigma_sq.iter().sum::<f64>() / sigma_sq.len().max(1) as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return 1.0;
    }
    let radius_sq = (0..problem.len())
        .map(|i| problem.offset(i).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let bias_scale = problem.bound * radius_sq;
    if bias_scale > 0.0 && bias_scale.is_finite() {
        mean.sqrt() * bias_scale
    } else {
        mean
    }
}
