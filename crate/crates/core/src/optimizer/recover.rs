use serde::Serialize;

use super::qp::{ProgramKind, QuadraticProgram};
use super::solver::{solve_qp, QpStatus, RawSolution, SolverSettings};
use super::{build_primal, moments};
use crate::bias_oracle::{grid_worst_case_bias, univariate_worst_case_bias};
use crate::discretization::{alpha_squared, DirectionSet, Grid};
use crate::error::{Error, Result};
use crate::model::DesignProblem;

/// Relative tolerance on the moment identities of recovered weights.
pub const MOMENT_TOLERANCE: f64 = 1e-6;

/// Dual multipliers in the problem's units, so `t = λ₁/(2λB²)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Multipliers {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: Vec<f64>,
    /// Empty for the weighted estimand.
    pub lambda5: Vec<f64>,
    /// Balance-row multipliers, if any.
    pub balance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub status: QpStatus,
    pub iterations: u32,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest relative residual of the moment identities.
    pub moment_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Closed-form worst-case bias over the continuous class.
    Exact,
    /// Linear program over lattice functions.
    GridLp,
}

/// Independent re-evaluation of the recovered weights' worst-case bias.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub oracle: OracleKind,
    pub oracle_bias: f64,
    pub spacing: f64,
    pub alpha_sq: f64,
    pub grid_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightSolution {
    pub gamma: Vec<f64>,
    /// Worst-case absolute bias `B·t`, the quantity that widens intervals.
    pub max_bias: f64,
    /// Bias bound for a unit curvature bound; `max_bias = B·unit_bias`.
    pub unit_bias: f64,
    /// `Σ γᵢ² σᵢ²`.
    pub v_hat_sq: f64,
    /// `v̂² + λ·max_bias²`.
    pub worst_case_objective: f64,
    pub multipliers: Multipliers,
    pub diagnostics: SolverDiagnostics,
    pub certificate: Certificate,
}

/// A solved dual together with the discretization it was built on.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub program: QuadraticProgram,
    pub raw: RawSolution,
    pub grid: Grid,
    pub dirs: DirectionSet,
}

pub fn solve_dual(
    program: QuadraticProgram,
    grid: Grid,
    dirs: DirectionSet,
    settings: &SolverSettings,
) -> Result<DualSolution> {
    let raw = solve_qp(&program, settings)?;
    check_status(&raw)?;
    Ok(DualSolution {
        program,
        raw,
        grid,
        dirs,
    })
}

fn check_status(raw: &RawSolution) -> Result<()> {
    match raw.status {
        QpStatus::Optimal | QpStatus::Inaccurate => Ok(()),
        QpStatus::Infeasible | QpStatus::Unbounded => Err(Error::infeasible(
            "moment identities (solver reported infeasibility)",
        )),
        QpStatus::MaxIterations => Err(Error::Solver(format!(
            "iteration limit reached after {} iterations (primal residual {:.2e}, dual residual {:.2e})",
            raw.iterations, raw.primal_residual, raw.dual_residual
        ))),
        QpStatus::NumericalError => Err(Error::Solver("numerical error in the interior-point iteration".into())),
    }
}

fn block<'a>(program: &QuadraticProgram, x: &'a [f64], name: &str) -> &'a [f64] {
    program
        .catalog
        .get(name)
        .map(|b| &x[b.range()])
        .unwrap_or(&[])
}

fn scalar(program: &QuadraticProgram, x: &[f64], name: &str) -> f64 {
    block(program, x, name).first().copied().unwrap_or(0.0)
}

/// `γᵢ = −Gᵢ/(2σᵢ²)`, `t = λ₁/(2λB²)`; verifies the moment identities and
/// re-evaluates the worst-case bias with an independent oracle.
pub fn recover_weights(problem: &DesignProblem, sol: &DualSolution) -> Result<WeightSolution> {
    if !matches!(sol.program.kind, ProgramKind::Dual { .. }) {
        return Err(Error::Solver("weights can only be recovered from the dual program".into()));
    }
    check_status(&sol.raw)?;
    let sigma_sq = problem.sigma_sq()?;
    let x = &sol.raw.x;
    let g = block(&sol.program, x, "g");
    if g.len() != problem.len() {
        return Err(Error::Solver("dual solution does not match the problem".into()));
    }
    let kappa = sol.program.objective_scale;
    let gamma: Vec<f64> = g.iter().zip(&sigma_sq).map(|(g, s2)| -g * kappa / (2.0 * s2)).collect();

    let lambda1 = tight_lambda1(&sol.program, x);
    let unit_bias = if problem.bound > 0.0 {
        lambda1 * kappa / (2.0 * problem.ci_length_lambda * problem.bound.powi(2))
    } else {
        0.0
    };
    finish(
        problem,
        gamma,
        unit_bias,
        &sol.program,
        &sol.raw,
        &sol.grid,
        &sol.dirs,
        &sigma_sq,
    )
}

/// Smallest `λ₁` the solved grid functions allow. `λ₁` appears only in the
/// curvature rows and the objective, so lowering it to the tightest row keeps
/// the point feasible and improves it; interior-point iterates otherwise
/// leave `λ₁` about `√μ` above a zero optimum.
fn tight_lambda1(program: &QuadraticProgram, x: &[f64]) -> f64 {
    let Some(l1) = program.catalog.get("lambda1").map(|b| b.start) else {
        return 0.0;
    };
    program
        .ineq
        .iter()
        .filter_map(|row| {
            let scale = -row.terms.iter().find(|(v, _)| *v == l1)?.1;
            let rest: f64 = row.terms.iter().filter(|(v, _)| *v != l1).map(|(v, a)| a * x[*v]).sum();
            (scale > 0.0 && row.terms.len() > 1).then(|| rest / scale)
        })
        .fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &DesignProblem,
    gamma: Vec<f64>,
    unit_bias: f64,
    program: &QuadraticProgram,
    raw: &RawSolution,
    grid: &Grid,
    dirs: &DirectionSet,
    sigma_sq: &[f64],
) -> Result<WeightSolution> {
    let (moment_residual, worst) = moments::worst_residual(program.moments.rows(), &gamma);
    if moment_residual > MOMENT_TOLERANCE {
        return Err(Error::SolverQuality(format!(
            "recovered weights violate `{}` by {moment_residual:.2e} (relative)",
            worst.unwrap_or("?")
        )));
    }
    let max_bias = problem.bound * unit_bias;
    let v_hat_sq: f64 = gamma.iter().zip(sigma_sq).map(|(g, s2)| g * g * s2).sum();

    let (oracle, eval) = if problem.k() == 1 {
        (OracleKind::Exact, univariate_worst_case_bias(&gamma, problem)?)
    } else {
        (OracleKind::GridLp, grid_worst_case_bias(&gamma, problem, grid, dirs)?)
    };

    // back to the problem's units
    let kappa = program.objective_scale;
    let scaled = |name: &str| -> Vec<f64> { block(program, &raw.x, name).iter().map(|v| v * kappa).collect() };
    let multipliers = Multipliers {
        lambda1: tight_lambda1(program, &raw.x) * kappa,
        lambda2: scalar(program, &raw.x, "lambda2") * kappa,
        lambda3: scalar(program, &raw.x, "lambda3") * kappa,
        lambda4: scaled("lambda4"),
        lambda5: scaled("lambda5"),
        balance: scaled("lambda_z"),
    };

    Ok(WeightSolution {
        worst_case_objective: v_hat_sq + problem.ci_length_lambda * max_bias * max_bias,
        gamma,
        max_bias,
        unit_bias,
        v_hat_sq,
        multipliers,
        diagnostics: SolverDiagnostics {
            status: raw.status,
            iterations: raw.iterations,
            gap: raw.gap,
            primal_residual: raw.primal_residual,
            dual_residual: raw.dual_residual,
            moment_residual,
        },
        certificate: Certificate {
            oracle,
            oracle_bias: eval.value,
            spacing: grid.spacing(),
            alpha_sq: alpha_squared(dirs),
            grid_points: grid.len(),
        },
    })
}

/// Solves a primal program (possibly with balance rows) and certifies its
/// weights like [`recover_weights`] does. Multipliers are left at zero.
pub fn primal_weights(
    problem: &DesignProblem,
    program: &QuadraticProgram,
    grid: &Grid,
    dirs: &DirectionSet,
    settings: &SolverSettings,
) -> Result<WeightSolution> {
    if program.kind != ProgramKind::Primal {
        return Err(Error::Solver("expected the primal program".into()));
    }
    let sigma_sq = problem.sigma_sq()?;
    let raw = solve_qp(program, settings)?;
    check_status(&raw)?;
    let gamma = block(program, &raw.x, "gamma").to_vec();
    let unit_bias = scalar(program, &raw.x, "t").max(0.0);
    let mut sol = finish(problem, gamma, unit_bias, program, &raw, grid, dirs, &sigma_sq)?;
    sol.multipliers = Multipliers::default();
    Ok(sol)
}

/// Weights read directly from the primal program.
#[derive(Clone, Debug)]
pub struct PrimalSolution {
    pub gamma: Vec<f64>,
    pub unit_bias: f64,
    pub max_bias: f64,
    /// `Σ γᵢ²σᵢ² + λ B² t²` at the solution.
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: u32,
}

pub fn solve_primal(
    problem: &DesignProblem,
    grid: &Grid,
    dirs: &DirectionSet,
    settings: &SolverSettings,
) -> Result<PrimalSolution> {
    let program = build_primal(problem, grid, dirs)?;
    let raw = solve_qp(&program, settings)?;
    check_status(&raw)?;
    let gamma = block(&program, &raw.x, "gamma").to_vec();
    let unit_bias = scalar(&program, &raw.x, "t").max(0.0);
    Ok(PrimalSolution {
        gamma,
        unit_bias,
        max_bias: problem.bound * unit_bias,
        objective: raw.objective * program.objective_scale,
        status: raw.status,
        iterations: raw.iterations,
    })
}
