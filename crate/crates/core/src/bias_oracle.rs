//! Worst-case conditional bias `I_B(γ)` of a linear estimator `Σ γᵢ Yᵢ`.
//!
//! Writing each response surface by its Taylor expansion around `c`, the
//! bias of a weight vector that satisfies the estimand's moment identities
//! is a linear functional of the second derivatives alone. For `k = 1` it is
//! `∫ K(t) μ″(c + t) dt` on each side of `c`, with
//!
//! ```text
//! K(t) = Σ_{Δᵢ > t} γᵢ (Δᵢ − t),   Δᵢ = Xᵢ − c
//! ```
//!
//! (mirrored on the left), so the supremum over `|μ″| ≤ B` is `B ∫ |K|`.
//! [`univariate_worst_case_bias`] integrates that exactly;
//! [`grid_worst_case_bias`] solves the lattice linear program instead and
//! works for `k = 2`.

use serde::Serialize;

use crate::discretization::{curvature_constraints, DirectionSet, Grid};
use crate::error::{Error, Result};
use crate::model::DesignProblem;
use crate::optimizer::moments::{worst_residual, MomentSystem};
use crate::optimizer::qp::{LinearRow, ProgramKind, QuadraticProgram, VarCatalog};
use crate::optimizer::solver::{solve_qp, QpStatus, SolverSettings};
use crate::optimizer::{arm_of, free_nodes, num_arms};

/// Relative tolerance beyond which a violated moment identity makes the
/// bias unbounded.
pub const MOMENT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasEvaluation {
    /// `I_B(γ)`; `+∞` when a moment identity fails.
    pub value: f64,
    pub witness: Witness,
}

/// One interval on which the extremal second derivative has constant sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignSegment {
    /// 1 for the treated surface, 0 for the control (or only) surface.
    pub arm: usize,
    pub from: f64,
    pub to: f64,
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    None,
    /// Sign of `μ″` for the extremal surfaces (`k = 1`).
    SignPattern(Vec<SignSegment>),
    /// Extremal lattice function values, one vector per arm.
    GridFunction(Vec<Vec<f64>>),
}

impl BiasEvaluation {
    fn infinite() -> Self {
        BiasEvaluation {
            value: f64::INFINITY,
            witness: Witness::None,
        }
    }

    fn zero() -> Self {
        BiasEvaluation {
            value: 0.0,
            witness: Witness::None,
        }
    }
}

fn check_inputs(gamma: &[f64], problem: &DesignProblem) -> Result<bool> {
    if gamma.len() != problem.len() {
        return Err(Error::Design(format!(
            "{} weights for {} observations",
            gamma.len(),
            problem.len()
        )));
    }
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::Design("weights must be finite".into()));
    }
    let rows = MomentSystem::rows_for(problem);
    Ok(worst_residual(&rows, gamma).0 <= MOMENT_TOLERANCE)
}

/// Exact `I_B(γ)` for a univariate running variable.
pub fn univariate_worst_case_bias(gamma: &[f64], problem: &DesignProblem) -> Result<BiasEvaluation> {
    if problem.k() != 1 {
        return Err(Error::UnsupportedDimension(problem.k()));
    }
    if !check_inputs(gamma, problem)? {
        return Ok(BiasEvaluation::infinite());
    }
    if problem.bound == 0.0 {
        return Ok(BiasEvaluation::zero());
    }
    let c = problem.focal_point[0];
    let mut total = 0.0;
    let mut segments = Vec::new();
    for arm in 0..num_arms(problem) {
        for side in [1.0, -1.0] {
            let pts: Vec<(f64, f64)> = (0..problem.len())
                .filter(|&i| arm_of(problem, i) == arm)
                .map(|i| (side * (problem.x(i)[0] - c), gamma[i]))
                .filter(|&(d, g)| d > 0.0 && g != 0.0)
                .collect();
            let (integral, pieces) = abs_kernel_integral(pts);
            total += integral;
            segments.extend(pieces.into_iter().map(|(a, b, sign)| {
                let (x0, x1) = if side > 0.0 { (c + a, c + b) } else { (c - b, c - a) };
                SignSegment {
                    arm,
                    from: x0,
                    to: x1,
                    sign,
                }
            }));
        }
    }
    segments.sort_by(|a, b| (a.arm, a.from).partial_cmp(&(b.arm, b.from)).unwrap());
    Ok(BiasEvaluation {
        value: problem.bound * total,
        witness: Witness::SignPattern(segments),
    })
}

/// `∫₀^∞ |K(t)| dt` for `K(t) = Σ_{dᵢ > t} γᵢ (dᵢ − t)`, together with the
/// maximal intervals `(from, to, sign)` where `K ≠ 0`.
fn abs_kernel_integral(mut pts: Vec<(f64, f64)>) -> (f64, Vec<(f64, f64, i8)>) {
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut total = 0.0;
    let mut pieces: Vec<(f64, f64, i8)> = Vec::new();
    let mut push = |lo: f64, hi: f64, sign: i8| {
        if hi <= lo || sign == 0 {
            return;
        }
        match pieces.last_mut() {
            // pieces arrive from right to left
            Some(last) if last.2 == sign && (last.0 - hi).abs() <= 1e-12 * hi.abs().max(1.0) => {
                last.0 = lo;
            }
            _ => pieces.push((lo, hi, sign)),
        }
    };
    let (mut s0, mut s1) = (0.0, 0.0);
    let mut j = 0;
    while j < pts.len() {
        let hi = pts[j].0;
        while j < pts.len() && pts[j].0 == hi {
            s0 += pts[j].1;
            s1 += pts[j].1 * pts[j].0;
            j += 1;
        }
        let lo = if j < pts.len() { pts[j].0 } else { 0.0 };
        // K is linear on [lo, hi]
        let k_hi = s1 - hi * s0;
        let k_lo = s1 - lo * s0;
        let sgn = |v: f64| -> i8 {
            if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        };
        if k_hi * k_lo >= 0.0 {
            total += 0.5 * (k_hi.abs() + k_lo.abs()) * (hi - lo);
            push(lo, hi, sgn(k_hi + k_lo));
        } else {
            let root = s1 / s0;
            total += 0.5 * k_hi.abs() * (hi - root) + 0.5 * k_lo.abs() * (root - lo);
            push(root, hi, sgn(k_hi));
            push(lo, root, sgn(k_lo));
        }
    }
    pieces.reverse();
    (total, pieces)
}

/// `I_B(γ)` over lattice functions: per arm, maximize `Σ γᵢ f(Xᵢ)`
/// subject to the curvature rows with bound `B` and the anchors.
pub fn grid_worst_case_bias(
    gamma: &[f64],
    problem: &DesignProblem,
    grid: &Grid,
    dirs: &DirectionSet,
) -> Result<BiasEvaluation> {
    if grid.observation_nodes().len() != problem.len() || grid.k() != problem.k() {
        return Err(Error::Resolution(
            "lattice was not built for this problem's observations".into(),
        ));
    }
    if !check_inputs(gamma, problem)? {
        return Ok(BiasEvaluation::infinite());
    }
    if problem.bound == 0.0 {
        return Ok(BiasEvaluation::zero());
    }
    let (node_var, free) = free_nodes(grid);
    let cons = curvature_constraints(grid, dirs);
    let rows: Vec<LinearRow> = cons
        .rows()
        .filter_map(|row| {
            let terms: Vec<(usize, f64)> = row
                .terms
                .iter()
                .filter_map(|&(node, a)| node_var[node].map(|v| (v, a / row.scale)))
                .collect();
            (!terms.is_empty()).then(|| LinearRow::new(terms, 1.0))
        })
        .collect();

    let mut total = 0.0;
    let mut witness = Vec::new();
    for arm in 0..num_arms(problem) {
        let mut agg = vec![0.0; free];
        for (i, stencil) in grid.observation_stencils().iter().enumerate() {
            if arm_of(problem, i) == arm {
                for &(node, a) in stencil {
                    if let Some(v) = node_var[node] {
                        agg[v] += gamma[i] * a;
                    }
                }
            }
        }
        let mut values = vec![0.0; grid.len()];
        if agg.iter().any(|&a| a != 0.0) {
            let mut catalog = VarCatalog::default();
            catalog.push("f", free);
            let lp = QuadraticProgram {
                kind: ProgramKind::Primal,
                catalog,
                quad: Vec::new(),
                linear: agg.iter().map(|a| -a).collect(),
                constant: 0.0,
                objective_scale: 1.0,
                eq: Vec::new(),
                ineq: rows.clone(),
                moments: MomentSystem::default(),
            };
            let sol = solve_qp(&lp, &SolverSettings::default())?;
            match sol.status {
                QpStatus::Optimal | QpStatus::Inaccurate => {}
                QpStatus::Unbounded => return Ok(BiasEvaluation::infinite()),
                other => {
                    return Err(Error::Solver(format!("bias linear program ended with status {other:?}")))
                }
            }
            total += -sol.objective;
            for (node, v) in node_var.iter().enumerate() {
                if let Some(v) = v {
                    values[node] = problem.bound * sol.x[*v];
                }
            }
        }
        witness.push(values);
    }
    Ok(BiasEvaluation {
        value: problem.bound * total.max(0.0),
        witness: Witness::GridFunction(witness),
    })
}
