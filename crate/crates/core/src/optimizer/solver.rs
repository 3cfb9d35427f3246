//! Thin adapter from [`QuadraticProgram`] to the Clarabel conic solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use super::qp::QuadraticProgram;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: u32,
    /// Ruiz equilibration of the constraint matrix.
    pub scaling: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_iter: 500,
            scaling: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    /// Converged to the solver's relaxed tolerances only.
    Inaccurate,
    MaxIterations,
    Infeasible,
    Unbounded,
    NumericalError,
}

impl QpStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, QpStatus::Optimal | QpStatus::Inaccurate)
    }
}

#[derive(Clone, Debug)]
pub struct RawSolution {
    pub x: Vec<f64>,
    /// Multipliers of the equality rows.
    pub eq_duals: Vec<f64>,
    /// Multipliers of the inequality rows (nonnegative).
    pub ineq_duals: Vec<f64>,
    pub status: QpStatus,
    pub iterations: u32,
    pub objective: f64,
    /// `|primal objective − dual objective|` reported by the solver.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

pub fn solve_qp(qp: &QuadraticProgram, settings: &SolverSettings) -> Result<RawSolution> {
    if !qp.check_dimensions() {
        return Err(Error::Solver("malformed quadratic program".into()));
    }
    if !(settings.abs_tol > 0.0 && settings.rel_tol > 0.0) {
        return Err(Error::Solver("solver tolerances must be positive".into()));
    }
    let n = qp.num_vars();
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for &(i, j, v) in &qp.quad {
        pi.push(i);
        pj.push(j);
        pv.push(v);
    }
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

    let m_eq = qp.eq.len();
    let m = m_eq + qp.ineq.len();
    let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::with_capacity(m);
    for (r, row) in qp.eq.iter().chain(&qp.ineq).enumerate() {
        for &(j, v) in &row.terms {
            if v != 0.0 {
                ai.push(r);
                aj.push(j);
                av.push(v);
            }
        }
        b.push(row.rhs);
    }
    let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);

    let mut cones = Vec::new();
    if m_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(m_eq));
    }
    if !qp.ineq.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(qp.ineq.len()));
    }

    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.abs_tol)
        .tol_gap_rel(settings.rel_tol)
        .tol_feas(settings.rel_tol)
        .equilibrate_enable(settings.scaling)
        .build()
        .map_err(|e| Error::Solver(format!("invalid settings: {e}")))?;

    let mut solver = DefaultSolver::new(&p, &qp.linear, &a, &b, &cones, clarabel_settings)
        .map_err(|e| Error::Solver(format!("setup failed: {e}")))?;
    solver.solve();
    let sol = &solver.solution;

    let status = match sol.status {
        SolverStatus::Solved => QpStatus::Optimal,
        SolverStatus::AlmostSolved => QpStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            QpStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => QpStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => QpStatus::MaxIterations,
        _ => QpStatus::NumericalError,
    };

    Ok(RawSolution {
        x: sol.x.clone(),
        eq_duals: sol.z[..m_eq].to_vec(),
        ineq_duals: sol.z[m_eq..].to_vec(),
        status,
        iterations: sol.iterations,
        objective: sol.obj_val + qp.constant,
        gap: (sol.obj_val - sol.obj_val_dual).abs(),
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
    })
}
